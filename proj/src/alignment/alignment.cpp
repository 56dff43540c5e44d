#include "sad/alignment/alignment.hpp"

#include <cmath>
#include <cstdio>

#include "sad/error.hpp"
#include "sad/numerics/sym_eig.hpp"

namespace sad {

namespace {

void require_square(const Matrix& m, std::size_t d, const char* what) {
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError(std::string("alpha: ") + what + " is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected " + std::to_string(d) + "x" + std::to_string(d));
  }
}

SymEig psd_eig(const Matrix& a, const char* what) {
  SymEig e = sym_eig(a);
  const double top = e.values.empty() ? 0.0 : std::max(0.0, e.values.front());
  if (!e.values.empty() && e.values.back() < -1e-8 * std::max(top, 1e-300)) {
    throw PreconditionError(std::string("extremal_transforms: ") + what + " is not positive semidefinite");
  }
  return e;
}

bool has_ties(const std::vector<double>& values) {
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 1; i < values.size(); ++i)
    if (std::abs(values[i] - values[i - 1]) <= 1e-8 * scale) return true;
  return false;
}

}  // namespace

Matrix second_moment(const Matrix& samples) {
  if (samples.rows() == 0) throw PreconditionError("second_moment: empty dataset");
  Matrix c = transposed_matmul(samples, samples);
  c *= 1.0 / static_cast<double>(samples.rows());
  // Mirror to remove rounding asymmetry.
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = i + 1; j < c.cols(); ++j) c(j, i) = c(i, j);
  return c;
}

Matrix second_moment(const Dataset& dataset) { return second_moment(dataset.samples); }

double alpha(const Matrix& w, const Matrix& g, const Matrix& c) {
  const std::size_t d = w.rows();
  require_square(w, d, "W");
  require_square(g, d, "G");
  require_square(c, d, "C");
  if (orthogonality_defect(w) > 1e-6) throw PreconditionError("alpha: W is not orthogonal");
  // tr(W^T G W C) = sum_ij (G W)_ij (W C)_ij since C is symmetric.
  const Matrix gw = g * w;
  const Matrix wc = w * c;
  double s = 0.0;
  for (std::size_t i = 0; i < gw.size(); ++i) s += gw.data()[i] * wc.data()[i];
  return s;
}

double alpha(const OrthoTransform& w, const Matrix& g, const Matrix& c) { return alpha(w.matrix, g, c); }

double alpha_spectral(const Matrix& w, const Matrix& g, const Matrix& c) {
  const SymEig eg = sym_eig(g);
  const SymEig ec = sym_eig(c);
  const Matrix q = transposed_matmul(eg.vectors, w * ec.vectors);
  double s = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t j = 0; j < q.cols(); ++j) s += eg.values[i] * ec.values[j] * q(i, j) * q(i, j);
  return s;
}

ExtremalTransforms extremal_transforms(const Matrix& g, const Matrix& c) {
  if (!g.is_square() || g.rows() != c.rows() || !c.is_square())
    throw DimensionError("extremal_transforms: shape mismatch");
  const SymEig eg = psd_eig(g, "G");
  const SymEig ec = psd_eig(c, "C");
  const std::size_t d = g.rows();
  ExtremalTransforms out;
  out.w_min = make_transform(eg.vectors * exchange_matrix(d) * ec.vectors.transpose(), BasisKind::w_min);
  out.w_max = make_transform(matmul_transposed(eg.vectors, ec.vectors), BasisKind::w_max);
  out.geometry_tied = has_ties(eg.values);
  out.moment_tied = has_ties(ec.values);
  return out;
}

std::uint64_t matrix_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::uint64_t shape[2] = {m.rows(), m.cols()};
  mix(shape, sizeof(shape));
  mix(m.data().data(), m.size() * sizeof(double));
  return h;
}

nlohmann::json AlignmentReport::to_json() const {
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(geometry_hash));
  return {{"alpha", alpha}, {"transform", to_string(transform)}, {"geometry_hash", hash},
          {"dataset", dataset_provenance}};
}

AlignmentReport make_alignment_report(const OrthoTransform& w, const Matrix& g, const Dataset& dataset) {
  AlignmentReport r;
  r.alpha = alpha(w, g, second_moment(dataset));
  r.transform = w.provenance;
  r.geometry_hash = matrix_hash(g);
  r.dataset_provenance = dataset.provenance;
  return r;
}

}  // namespace sad
