#include "sad/numerics/sym_eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sad/error.hpp"

namespace sad {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += 2.0 * a(i, j) * a(i, j);
  return std::sqrt(s);
}

// Rotate rows/columns p and q of the symmetric matrix a (both triangles) and
// accumulate the rotation into v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double app = a(p, p);
  const double aqq = a(q, q);
  const double theta = (aqq - app) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();

  for (std::size_t k = 0; k < n; ++k) {
    if (k == p || k == q) continue;
    const double akp = a(k, p);
    const double akq = a(k, q);
    const double nkp = c * akp - s * akq;
    const double nkq = s * akp + c * akq;
    a(k, p) = nkp;
    a(p, k) = nkp;
    a(k, q) = nkq;
    a(q, k) = nkq;
  }
  a(p, p) = app - t * apq;
  a(q, q) = aqq + t * apq;
  a(p, q) = 0.0;
  a(q, p) = 0.0;

  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

// Lexicographic comparison of |u| and |w| entries, larger first.
bool abs_lex_greater(const Matrix& vecs, std::size_t a, std::size_t b) {
  constexpr double tol = 1e-9;
  for (std::size_t r = 0; r < vecs.rows(); ++r) {
    const double x = std::abs(vecs(r, a));
    const double y = std::abs(vecs(r, b));
    if (x > y + tol) return true;
    if (y > x + tol) return false;
  }
  return false;
}

}  // namespace

void normalize_signs(Matrix& vectors) {
  for (std::size_t c = 0; c < vectors.cols(); ++c) {
    double best = 0.0;
    for (std::size_t r = 0; r < vectors.rows(); ++r) best = std::max(best, std::abs(vectors(r, c)));
    const double tol = 1e-9 * best;
    for (std::size_t r = 0; r < vectors.rows(); ++r) {
      if (std::abs(vectors(r, c)) >= best - tol) {
        if (vectors(r, c) < 0.0)
          for (std::size_t k = 0; k < vectors.rows(); ++k) vectors(k, c) = -vectors(k, c);
        break;
      }
    }
  }
}

void order_eigenpairs(std::vector<double>& values, Matrix& vectors, EigenOrder order,
                      double cluster_rel_tol) {
  const std::size_t n = values.size();
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  const double tol = cluster_rel_tol * scale;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Sort by value first, then refine inside clusters.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return order == EigenOrder::descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && std::abs(values[idx[end]] - values[idx[end - 1]]) <= tol) ++end;
    std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return abs_lex_greater(vectors, a, b); });
    start = end;
  }

  std::vector<double> sorted_values(n);
  Matrix sorted_vectors(vectors.rows(), n);
  for (std::size_t k = 0; k < n; ++k) {
    sorted_values[k] = values[idx[k]];
    for (std::size_t r = 0; r < vectors.rows(); ++r) sorted_vectors(r, k) = vectors(r, idx[k]);
  }
  values = std::move(sorted_values);
  vectors = std::move(sorted_vectors);
}

SymEig sym_eig(const Matrix& a, const JacobiOptions& options) {
  if (!a.is_square()) {
    throw DimensionError("sym_eig: matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square");
  }
  if (!a.all_finite()) throw PreconditionError("sym_eig: non-finite entries");
  if (!is_symmetric(a, options.symmetry_tol)) throw SymmetryError("sym_eig: matrix is not symmetric");

  const std::size_t n = a.rows();
  Matrix work(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) work(i, j) = 0.5 * (a(i, j) + a(j, i));
  Matrix v = Matrix::identity(n);

  const double target = options.off_diagonal_tol * work.frobenius_norm();
  int sweep = 0;
  while (off_diagonal_norm(work) > target) {
    if (sweep++ >= options.max_sweeps) {
      throw ConvergenceError("sym_eig: no convergence after " + std::to_string(options.max_sweeps) +
                             " sweeps");
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(work, v, p, q);
  }

  SymEig out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = work(i, i);
  normalize_signs(v);
  out.vectors = std::move(v);
  order_eigenpairs(out.values, out.vectors, EigenOrder::descending);
  return out;
}

Matrix reconstruct(const SymEig& eig) {
  const std::size_t n = eig.vectors.rows();
  Matrix scaled = eig.vectors;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < eig.values.size(); ++c) scaled(r, c) *= eig.values[c];
  return matmul_transposed(scaled, eig.vectors);
}

}  // namespace sad
