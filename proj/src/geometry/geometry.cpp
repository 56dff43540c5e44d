#include "sad/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sad/error.hpp"
#include "sad/numerics/parallel.hpp"
#include "sad/numerics/sym_eig.hpp"

namespace sad {

namespace {

constexpr std::size_t kUnitsPerChunk = 64;

// Per-entry running moments of the packed upper triangle.
struct PackedMoments {
  double count = 0.0;
  Vector mean;
  Vector m2;

  explicit PackedMoments(std::size_t n = 0) : mean(n, 0.0), m2(n, 0.0) {}

  void add(std::span<const double> x) {
    count += 1.0;
    const double inv = 1.0 / count;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean[i];
      mean[i] += delta * inv;
      m2[i] += delta * (x[i] - mean[i]);
    }
  }

  void merge(const PackedMoments& o) {
    if (o.count == 0.0) return;
    if (count == 0.0) {
      *this = o;
      return;
    }
    const double n = count + o.count;
    const double f = count * o.count / n;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double delta = o.mean[i] - mean[i];
      mean[i] += delta * o.count / n;
      m2[i] += o.m2[i] + delta * delta * f;
    }
    count = n;
  }
};

struct ChunkResult {
  PackedMoments moments;
  std::size_t rejected = 0;
};

}  // namespace

nlohmann::json GeometryEstimate::to_json() const {
  double mean_se = 0.0;
  for (double v : standard_error.data()) mean_se += v;
  if (!standard_error.empty()) mean_se /= static_cast<double>(standard_error.size());
  return {{"dim", g.rows()},
          {"n_samples", n_samples},
          {"n_draws", n_draws},
          {"rejected", rejected},
          {"probe", probe.to_json()},
          {"family", family},
          {"max_standard_error", max_standard_error()},
          {"mean_standard_error", mean_se},
          {"trace", g.empty() ? 0.0 : g.trace()}};
}

GeometryEstimate estimate_geometry(const NetworkFamily& family, const ProbeDistribution& probe, std::size_t n_samples,
                                   const RngStream& stream, const GeometryOptions& options) {
  if (n_samples == 0) throw PreconditionError("estimate_geometry: n_samples must be at least 1");
  if (options.probes_per_draw == 0) throw PreconditionError("estimate_geometry: probes_per_draw must be at least 1");
  probe.validate();
  const std::size_t d = family.dim();
  const std::size_t m = options.probes_per_draw;
  const std::size_t units = (n_samples + m - 1) / m;
  const std::size_t packed = d * (d + 1) / 2;
  const std::size_t chunks = (units + kUnitsPerChunk - 1) / kUnitsPerChunk;

  std::vector<ChunkResult> results(chunks);
  parallel_for(chunks, options.workers, [&](std::size_t chunk) {
    ChunkResult& out = results[chunk];
    out.moments = PackedMoments(packed);
    Matrix x(m, d);
    Vector sigma;
    Vector unit(packed);
    const std::size_t end = std::min(units, (chunk + 1) * kUnitsPerChunk);
    for (std::size_t u = chunk * kUnitsPerChunk; u < end; ++u) {
      RngStream s = stream.split(u);
      const ParamSet params = sample_params(family, s);
      probe.draw(s, x, sigma);
      const Matrix y = forward_batch(family, params, x, sigma);
      if (!y.all_finite()) {
        ++out.rejected;
        continue;
      }
      const Matrix outer_sum = transposed_matmul(y, y);
      const double inv = 1.0 / static_cast<double>(m);
      std::size_t k = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) unit[k++] = outer_sum(i, j) * inv;
      out.moments.add(unit);
    }
  });

  PackedMoments total(packed);
  std::size_t rejected = 0;
  for (const ChunkResult& r : results) {
    total.merge(r.moments);
    rejected += r.rejected;
  }
  if (static_cast<double>(rejected) > options.max_rejected_fraction * static_cast<double>(units) ||
      total.count == 0.0) {
    throw EstimationError("estimate_geometry: " + std::to_string(rejected) + " of " + std::to_string(units) +
                          " draws produced non-finite outputs");
  }

  GeometryEstimate est;
  est.g = Matrix(d, d);
  est.standard_error = Matrix(d, d);
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j, ++k) {
      est.g(i, j) = est.g(j, i) = total.mean[k];
      const double var = total.count > 1.0 ? total.m2[k] / (total.count - 1.0) : 0.0;
      est.standard_error(i, j) = est.standard_error(j, i) = std::sqrt(var / total.count);
    }
  est.n_draws = static_cast<std::size_t>(total.count);
  est.n_samples = est.n_draws * m;
  est.rejected = rejected;
  est.probe = probe;
  est.family = family.describe();
  return est;
}

SadBasis extract_sads(const Matrix& g) {
  SymEig eig = sym_eig(g);
  double top = 0.0;
  for (double v : eig.values) top = std::max(top, std::abs(v));
  for (double& v : eig.values) {
    if (v >= 0.0) continue;
    if (v < -kPsdFloor * top)
      throw PreconditionError("extract_sads: geometry is not positive semidefinite (eigenvalue " +
                              std::to_string(v) + ")");
    v = 0.0;
  }
  order_eigenpairs(eig.values, eig.vectors, EigenOrder::ascending);
  return SadBasis{std::move(eig.vectors), std::move(eig.values)};
}

SadBasis extract_sads(const GeometryEstimate& g) { return extract_sads(g.g); }

double markov_bound(std::span<const double> v, const Matrix& g, double eta) {
  if (v.size() != g.rows() || !g.is_square()) throw DimensionError("markov_bound: dimension mismatch");
  if (std::abs(norm2(v) - 1.0) > 1e-8) throw PreconditionError("markov_bound: direction is not a unit vector");
  if (!(eta > 0.0)) throw PreconditionError("markov_bound: eta must be positive");
  return dot(v, matvec(g, v)) / (eta * eta);
}

std::size_t distinct_eigenvalue_count(std::span<const double> eigenvalues, double rel_tol) {
  if (eigenvalues.empty()) return 0;
  std::vector<double> v(eigenvalues.begin(), eigenvalues.end());
  std::sort(v.begin(), v.end());
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  const double tol = rel_tol * scale;
  std::size_t clusters = 1;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] - v[i - 1] > tol) ++clusters;
  return clusters;
}

void write_geometry(const std::string& csv_path, const GeometryEstimate& estimate) {
  write_csv(csv_path, estimate.g);
  std::ofstream os(csv_path + ".json");
  if (!os) throw Error("write_geometry: cannot open " + csv_path + ".json");
  os << estimate.to_json().dump(2) << '\n';
}

void write_pgm(const std::string& path, const Matrix& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_pgm: cannot open " + path);
  double lo = image.empty() ? 0.0 : image.data()[0];
  double hi = lo;
  for (double v : image.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  os << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  for (double v : image.data()) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 128.0 / 255.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

}  // namespace sad
