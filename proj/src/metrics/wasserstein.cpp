#include "sad/metrics/wasserstein.hpp"

#include <algorithm>
#include <cmath>

#include "sad/error.hpp"
#include "sad/numerics/parallel.hpp"

namespace sad {

namespace {

// Linear interpolation of the empirical quantile function with knots at the
// plotting positions (i + 1/2) / n, clamped outside the first/last knot.
double quantile(std::span<const double> sorted, double p) {
  const double n = static_cast<double>(sorted.size());
  const double pos = p * n - 0.5;
  if (pos <= 0.0) return sorted.front();
  if (pos >= n - 1.0) return sorted.back();
  const auto i = static_cast<std::size_t>(pos);
  const double t = pos - static_cast<double>(i);
  return sorted[i] + t * (sorted[i + 1] - sorted[i]);
}

void require_same_dim(const Matrix& x, const Matrix& y, std::size_t d, const char* op) {
  if (x.cols() != d || y.cols() != d) {
    throw DimensionError(std::string(op) + ": dimensions " + std::to_string(x.cols()) + ", " +
                         std::to_string(y.cols()) + " vs projections " + std::to_string(d));
  }
}

}  // namespace

double w2_1d_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw PreconditionError("w2_1d: empty input");
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
  }
  std::vector<double> positions;
  positions.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) positions.push_back((i + 0.5) / static_cast<double>(a.size()));
  for (std::size_t i = 0; i < b.size(); ++i) positions.push_back((i + 0.5) / static_cast<double>(b.size()));
  double s = 0.0;
  for (double p : positions) {
    const double d = quantile(a, p) - quantile(b, p);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(positions.size()));
}

double w2_1d(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return w2_1d_sorted(sa, sb);
}

ProjectionSet make_projection_set(std::size_t dim, std::size_t l, RngStream& stream) {
  if (dim == 0 || l == 0) throw PreconditionError("make_projection_set: need dim >= 1 and l >= 1");
  ProjectionSet set;
  set.seed = stream.stream_id();
  set.directions = Matrix(l, dim);
  for (std::size_t i = 0; i < l; ++i) {
    const Vector u = random_unit_vector(stream, dim);
    std::copy(u.begin(), u.end(), set.directions.row(i).begin());
  }
  return set;
}

std::vector<double> projected_w2(const Matrix& x, const Matrix& y, const ProjectionSet& projections,
                                 std::size_t workers) {
  require_same_dim(x, y, projections.dim(), "projected_w2");
  if (x.rows() == 0 || y.rows() == 0) throw PreconditionError("projected_w2: empty dataset");
  const std::size_t l = projections.size();
  std::vector<double> out(l);
  // Directions are processed in blocks so each block is one matrix product.
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (l + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(l, lo + kBlock);
    Matrix dirs(hi - lo, projections.dim());
    for (std::size_t k = lo; k < hi; ++k)
      std::copy(projections.directions.row(k).begin(), projections.directions.row(k).end(), dirs.row(k - lo).begin());
    const Matrix px = matmul_transposed(dirs, x);  // (hi-lo) x n
    const Matrix py = matmul_transposed(dirs, y);
    std::vector<double> a(x.rows()), c(y.rows());
    for (std::size_t k = lo; k < hi; ++k) {
      std::copy(px.row(k - lo).begin(), px.row(k - lo).end(), a.begin());
      std::copy(py.row(k - lo).begin(), py.row(k - lo).end(), c.begin());
      std::sort(a.begin(), a.end());
      std::sort(c.begin(), c.end());
      out[k] = w2_1d_sorted(a, c);
    }
  });
  return out;
}

SlicedDistances sliced_distances(const Matrix& x, const Matrix& y, const ProjectionSet& projections,
                                 std::size_t workers) {
  const std::vector<double> d = projected_w2(x, y, projections, workers);
  SlicedDistances r;
  r.l = d.size();
  for (double v : d) r.msw2 = std::max(r.msw2, v);
  if (r.msw2 == 0.0) return r;
  // Scaling by the maximum keeps every term <= 1, so rounding cannot lift
  // the root mean square above msw2.
  double s = 0.0;
  for (double v : d) s += (v / r.msw2) * (v / r.msw2);
  r.sw2 = r.msw2 * std::sqrt(s / static_cast<double>(d.size()));
  return r;
}

double sw2(const Matrix& x, const Matrix& y, const ProjectionSet& projections, std::size_t workers) {
  return sliced_distances(x, y, projections, workers).sw2;
}

double msw2(const Matrix& x, const Matrix& y, const ProjectionSet& projections, std::size_t workers) {
  return sliced_distances(x, y, projections, workers).msw2;
}

double sw2(const Dataset& x, const Dataset& y, std::size_t l, RngStream& stream, std::size_t workers) {
  if (x.dim() != y.dim()) throw DimensionError("sw2: dataset dimensions differ");
  return sw2(x.samples, y.samples, make_projection_set(x.dim(), l, stream), workers);
}

double msw2(const Dataset& x, const Dataset& y, std::size_t l, RngStream& stream, std::size_t workers) {
  if (x.dim() != y.dim()) throw DimensionError("msw2: dataset dimensions differ");
  return msw2(x.samples, y.samples, make_projection_set(x.dim(), l, stream), workers);
}

}  // namespace sad
