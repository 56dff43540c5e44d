#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace sad {

/// Discrete variance-preserving schedule. Step t = 1..n_steps is stored at
/// index t - 1.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  /// sqrt((1 - alpha_bar) / alpha_bar): the equivalent variance-exploding level.
  std::vector<double> sigmas;

  std::size_t n_steps() const noexcept { return betas.size(); }
  double sigma_min() const { return sigmas.front(); }
  double sigma_max() const { return sigmas.back(); }
  /// Geometric mid-point of the noise range.
  double sigma_mid() const;

  /// `count` steps spread evenly over 1..n_steps (1-based, ascending, always
  /// containing the last step). count = 0 or >= n_steps selects every step.
  std::vector<std::size_t> respaced_steps(std::size_t count) const;
  /// sigma at `count` evenly spaced steps.
  std::vector<double> sigma_levels(std::size_t count) const;

  nlohmann::json to_json() const;
};

/// Linear betas from beta_min to beta_max. PreconditionError unless
/// 0 < beta_min < beta_max < 1 and n_steps >= 2.
NoiseSchedule make_schedule(std::size_t n_steps = 1000, double beta_min = 1e-4, double beta_max = 0.02);

}  // namespace sad
