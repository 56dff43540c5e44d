#include "sad/numerics/quadrature.hpp"

#include <cmath>

#include "sad/error.hpp"
#include "sad/numerics/sym_eig.hpp"

namespace sad {

namespace {

// Golub-Welsch: eigenvalues of the Jacobi matrix are the nodes, squared first
// eigenvector components the (normalized) weights.
Quadrature golub_welsch(const std::vector<double>& diag, const std::vector<double>& off) {
  const std::size_t n = diag.size();
  Matrix j(n, n);
  for (std::size_t i = 0; i < n; ++i) j(i, i) = diag[i];
  for (std::size_t i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = off[i];
  JacobiOptions opt;
  opt.off_diagonal_tol = 1e-15;
  opt.max_sweeps = 200;
  const SymEig eig = sym_eig(j, opt);
  Quadrature q;
  double total = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    q.nodes.push_back(eig.values[k]);
    const double v = eig.vectors(0, k);
    q.weights.push_back(v * v);
    total += v * v;
  }
  for (double& w : q.weights) w /= total;
  return q;
}

}  // namespace

Quadrature gauss_hermite(std::size_t n) {
  if (n == 0) throw PreconditionError("gauss_hermite: need at least one node");
  std::vector<double> diag(n, 0.0);
  std::vector<double> off(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) off[i] = std::sqrt(static_cast<double>(i + 1));
  return golub_welsch(diag, off);
}

Quadrature gauss_chi_squared(std::size_t dof, std::size_t n) {
  if (n == 0 || dof == 0) throw PreconditionError("gauss_chi_squared: need dof >= 1 and at least one node");
  // chi^2_k = 2 y with y ~ Gamma(k / 2, 1): Laguerre weight y^a e^{-y}, a = k/2 - 1.
  const double a = 0.5 * static_cast<double>(dof) - 1.0;
  std::vector<double> diag(n);
  std::vector<double> off(n - 1);
  for (std::size_t i = 0; i < n; ++i) diag[i] = 2.0 * static_cast<double>(i) + a + 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double k = static_cast<double>(i + 1);
    off[i] = std::sqrt(k * (k + a));
  }
  Quadrature q = golub_welsch(diag, off);
  for (double& x : q.nodes) x *= 2.0;
  return q;
}

}  // namespace sad
