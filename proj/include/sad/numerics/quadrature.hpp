#pragma once

#include <cstddef>
#include <vector>

namespace sad {

/// Nodes and weights of a quadrature rule for an expectation; weights sum to 1.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Hermite rule for E[f(g)], g ~ N(0, 1) (Golub-Welsch).
Quadrature gauss_hermite(std::size_t n);

/// n-point generalized Gauss-Laguerre rule for E[f(q)], q ~ chi^2 with
/// `dof` degrees of freedom (dof >= 1).
Quadrature gauss_chi_squared(std::size_t dof, std::size_t n);

}  // namespace sad
