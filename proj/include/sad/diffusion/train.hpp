#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sad/data/dataset.hpp"
#include "sad/diffusion/schedule.hpp"
#include "sad/error.hpp"
#include "sad/networks/family.hpp"
#include "sad/networks/params.hpp"

namespace sad {

enum class Optimizer { sgd, adam };

std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view label);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t iterations = 1000;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  /// Window of the loss moving average (smoothing 2 / (window + 1)).
  std::size_t ema_window = 500;
  /// Train at a single noise level instead of drawing steps from the
  /// schedule. Required for score-output families (linear).
  std::optional<double> fixed_sigma;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Divergence threshold on the per-step loss.
  double max_loss = 1e6;

  /// Throws ConfigError on non-positive sizes or rates.
  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainTrace {
  /// Logged steps (1-based) with the mean loss over the preceding log window
  /// and the moving average at that step.
  std::vector<std::size_t> steps;
  std::vector<double> losses;
  std::vector<double> ema;
  ParamSet params;
  double seconds = 0.0;

  /// True when the logged moving average never increases up to `until_step`.
  bool ema_monotone(std::size_t until_step) const;
  void write_csv(const std::string& path) const;
};

/// Training stopped on a loss above TrainConfig::max_loss or a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainTrace partial) : Error(what), partial_(std::move(partial)) {}
  const TrainTrace& partial() const noexcept { return partial_; }

 private:
  TrainTrace partial_;
};

struct DsmLoss {
  double loss = 0.0;
  /// Gradient of the loss with respect to each network output row.
  Matrix cotangent;
  /// The noise levels used per row.
  Vector sigma;
};

/// Denoising score matching on a batch of clean rows.
///
/// Noise-prediction families see x_t = sqrt(abar) x + sqrt(1 - abar) eps at a
/// uniformly drawn step and the loss is the batch mean of ||F - eps||^2. A
/// score-output family (linear) sees y = x + sigma eps at the fixed level and
/// the loss is the batch mean of ||F(y) + eps / sigma||^2. Throws
/// NonFiniteError naming the offending row.
DsmLoss dsm_loss(const NetworkFamily& family, const ParamSet& params, const Matrix& batch,
                 const NoiseSchedule& schedule, RngStream& stream, std::optional<double> fixed_sigma = std::nullopt);

/// Minibatch training. Parameters are drawn from RngStream(config.seed, 0)
/// unless `initial` is given; step k draws from RngStream(config.seed, 1).split(k).
TrainTrace train(const NetworkFamily& family, const Dataset& dataset, const TrainConfig& config,
                 const NoiseSchedule& schedule, std::optional<ParamSet> initial = std::nullopt);

}  // namespace sad
