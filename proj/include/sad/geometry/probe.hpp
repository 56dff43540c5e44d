#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

enum class ProbeKind { delta_zero, isotropic_gaussian, around_sample };

std::string_view to_string(ProbeKind k);
ProbeKind parse_probe_kind(std::string_view label);

/// Law of the (x, sigma) pairs fed to random networks. sigma is uniform over
/// `sigma_levels`; x is 0, N(0, sigma_p^2 I), or a forward-diffused data point
/// (x0 + sigma eps) / sqrt(1 + sigma^2) with x0 uniform over `data` rows.
struct ProbeDistribution {
  ProbeKind kind = ProbeKind::delta_zero;
  std::vector<double> sigma_levels;
  double sigma_p = 1.0;
  std::shared_ptr<const Matrix> data;
  std::string data_label;

  static ProbeDistribution delta_zero(std::vector<double> sigma_levels);
  static ProbeDistribution isotropic(double sigma_p, std::vector<double> sigma_levels);
  static ProbeDistribution around_sample(std::shared_ptr<const Matrix> data, std::vector<double> sigma_levels,
                                         std::string data_label = {});

  /// Throws PreconditionError on empty or non-positive sigma levels, or missing data.
  void validate() const;

  /// Fills `x` (rows = number of draws, cols = dim) and `sigma` with iid probe draws.
  void draw(RngStream& stream, Matrix& x, Vector& sigma) const;

  /// E[x x^T] under the probe.
  Matrix second_moment(std::size_t dim) const;

  nlohmann::json to_json() const;
};

}  // namespace sad
