#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "sad/geometry/probe.hpp"
#include "sad/networks/family.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

struct GeometryOptions {
  /// Probe points evaluated per parameter draw. Each draw contributes the mean
  /// of its outer products as one iid unit for the standard error.
  std::size_t probes_per_draw = 1;
  std::size_t workers = 1;
  /// Fraction of rejected (non-finite) draws above which estimation fails.
  double max_rejected_fraction = 1e-3;
};

/// Monte Carlo average geometry E[F F^T].
struct GeometryEstimate {
  Matrix g;
  /// Per-entry standard error of g.
  Matrix standard_error;
  std::size_t n_samples = 0;
  std::size_t n_draws = 0;
  std::size_t rejected = 0;
  ProbeDistribution probe;
  nlohmann::json family;

  double max_standard_error() const { return standard_error.max_abs(); }
  nlohmann::json to_json() const;
};

/// Draws fresh parameters for every unit; unit k uses stream.split(k), so the
/// result does not depend on the number of workers.
GeometryEstimate estimate_geometry(const NetworkFamily& family, const ProbeDistribution& probe,
                                   std::size_t n_samples, const RngStream& stream,
                                   const GeometryOptions& options = {});

/// Orthonormal directions (columns) with ascending eigenvalues.
struct SadBasis {
  Matrix directions;
  std::vector<double> eigenvalues;

  std::size_t dim() const noexcept { return eigenvalues.size(); }
  Vector direction(std::size_t k) const { return directions.col(k); }
};

/// Clamps eigenvalues in [-floor * max, 0) to zero; anything more negative is
/// a PreconditionError.
inline constexpr double kPsdFloor = 1e-8;

SadBasis extract_sads(const Matrix& g);
SadBasis extract_sads(const GeometryEstimate& g);

/// v^T G v / eta^2.
double markov_bound(std::span<const double> v, const Matrix& g, double eta);

/// Clusters of sorted eigenvalues under single linkage: neighbours merge when
/// their gap is at most rel_tol * max |value|.
std::size_t distinct_eigenvalue_count(std::span<const double> eigenvalues, double rel_tol);

/// CSV of g plus a JSON sidecar at `csv_path + ".json"`.
void write_geometry(const std::string& csv_path, const GeometryEstimate& estimate);

/// 8-bit binary PGM of an image, min-max normalized (a constant image maps to 128).
void write_pgm(const std::string& path, const Matrix& image);

}  // namespace sad
