#pragma once

#include <vector>

#include "sad/numerics/matrix.hpp"

namespace sad {

/// Eigendecomposition of a real symmetric matrix.
///
/// `values` are sorted descending and `vectors` holds the matching unit
/// eigenvectors as columns. Each eigenvector is sign-normalized so that its
/// largest-magnitude entry is positive (lowest index wins a magnitude tie).
struct SymEig {
  std::vector<double> values;
  Matrix vectors;
};

struct JacobiOptions {
  int max_sweeps = 100;
  /// Stop once the off-diagonal Frobenius norm falls below tol * ||A||_F.
  double off_diagonal_tol = 1e-12;
  /// Accepted asymmetry, relative to max |a_ij|.
  double symmetry_tol = 1e-10;
};

/// Cyclic Jacobi eigensolver.
///
/// Throws DimensionError for non-square input, SymmetryError for asymmetric
/// input and ConvergenceError when the sweep cap is hit.
SymEig sym_eig(const Matrix& a, const JacobiOptions& options = {});

enum class EigenOrder { descending, ascending };

/// Sorts eigenpairs by value. Inside a cluster of eigenvalues that agree to
/// `cluster_rel_tol` (relative to the largest |value|), vectors are ordered by
/// descending lexicographic comparison of their absolute entries, so that an
/// isotropic spectrum yields the canonical basis.
void order_eigenpairs(std::vector<double>& values, Matrix& vectors, EigenOrder order,
                      double cluster_rel_tol = 1e-8);

/// Flip the sign of each column so its largest-magnitude entry is positive.
void normalize_signs(Matrix& vectors);

/// Reconstruct U diag(values) U^T.
Matrix reconstruct(const SymEig& eig);

}  // namespace sad
