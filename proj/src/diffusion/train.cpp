#include "sad/diffusion/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace sad {

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view label) {
  if (label == "sgd") return Optimizer::sgd;
  if (label == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(label) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (log_every == 0) throw ConfigError("train: log_every must be positive");
  if (ema_window == 0) throw ConfigError("train: ema_window must be positive");
  if (fixed_sigma && !(*fixed_sigma > 0.0)) throw ConfigError("train: fixed_sigma must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"batch_size", batch_size},   {"iterations", iterations}, {"learning_rate", learning_rate},
                      {"optimizer", to_string(optimizer)}, {"seed", seed},       {"log_every", log_every},
                      {"ema_window", ema_window}};
  if (fixed_sigma) j["fixed_sigma"] = *fixed_sigma;
  return j;
}

bool TrainTrace::ema_monotone(std::size_t until_step) const {
  for (std::size_t i = 1; i < steps.size() && steps[i] <= until_step; ++i)
    if (ema[i] > ema[i - 1]) return false;
  return true;
}

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("TrainTrace::write_csv: cannot open " + path);
  os << "step,loss,ema\n";
  char buf[96];
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", steps[i], losses[i], ema[i]);
    os << buf;
  }
}

namespace {

struct NoisyBatch {
  Matrix input;
  Matrix eps;
  Vector sigma;
};

NoisyBatch make_noisy_batch(const NetworkFamily& family, const Matrix& batch, const NoiseSchedule& schedule,
                            RngStream& stream, std::optional<double> fixed_sigma) {
  if (batch.rows() == 0) throw PreconditionError("dsm_loss: empty batch");
  if (family.outputs_score() && !fixed_sigma)
    throw PreconditionError("dsm_loss: the " + std::string(family.kind()) + " family needs a fixed noise level");
  const std::size_t b = batch.rows();
  const std::size_t d = batch.cols();
  NoisyBatch nb{Matrix(b, d), Matrix(b, d), Vector(b)};
  for (std::size_t r = 0; r < b; ++r) {
    double a = 0.0;  // input = a x + c eps
    double c = 0.0;
    if (family.outputs_score()) {
      nb.sigma[r] = *fixed_sigma;
      a = 1.0;
      c = *fixed_sigma;
    } else if (fixed_sigma) {
      nb.sigma[r] = *fixed_sigma;
      a = 1.0 / std::sqrt(1.0 + *fixed_sigma * *fixed_sigma);
      c = *fixed_sigma * a;
    } else {
      const std::size_t t = stream.uniform_index(schedule.n_steps());
      nb.sigma[r] = schedule.sigmas[t];
      a = std::sqrt(schedule.alpha_bars[t]);
      c = std::sqrt(1.0 - schedule.alpha_bars[t]);
    }
    stream.fill_normal(nb.eps.row(r));
    const auto x = batch.row(r);
    auto in = nb.input.row(r);
    const auto e = nb.eps.row(r);
    for (std::size_t k = 0; k < d; ++k) in[k] = a * x[k] + c * e[k];
  }
  return nb;
}

DsmLoss loss_from_output(const NetworkFamily& family, const Matrix& y, const NoisyBatch& nb) {
  const std::size_t b = y.rows();
  const std::size_t d = y.cols();
  DsmLoss out;
  out.sigma = nb.sigma;
  out.cotangent = Matrix(b, d);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r) {
    const double target_scale = family.outputs_score() ? -1.0 / nb.sigma[r] : 1.0;
    double row_loss = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = y(r, k) - target_scale * nb.eps(r, k);
      row_loss += diff * diff;
      out.cotangent(r, k) = 2.0 * diff * inv_b;
    }
    if (!std::isfinite(row_loss)) throw NonFiniteError("dsm_loss: non-finite loss", nb.sigma[r], r);
    total += row_loss;
  }
  out.loss = total * inv_b;
  return out;
}

}  // namespace

DsmLoss dsm_loss(const NetworkFamily& family, const ParamSet& params, const Matrix& batch,
                 const NoiseSchedule& schedule, RngStream& stream, std::optional<double> fixed_sigma) {
  const NoisyBatch nb = make_noisy_batch(family, batch, schedule, stream, fixed_sigma);
  return loss_from_output(family, forward_batch(family, params, nb.input, nb.sigma), nb);
}

TrainTrace train(const NetworkFamily& family, const Dataset& dataset, const TrainConfig& config,
                 const NoiseSchedule& schedule, std::optional<ParamSet> initial) {
  config.validate();
  if (dataset.dim() != family.dim())
    throw DimensionError("train: dataset dimension " + std::to_string(dataset.dim()) + " does not match family " +
                         std::to_string(family.dim()));
  if (dataset.size() == 0) throw PreconditionError("train: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();

  TrainTrace trace;
  if (initial) {
    trace.params = std::move(*initial);
  } else {
    RngStream init(config.seed, 0);
    trace.params = sample_params(family, init);
  }
  ParamSet& params = trace.params;
  ParamSet m1 = params.zeros_like();
  ParamSet m2 = params.zeros_like();
  const RngStream steps_root(config.seed, 1);
  const double smoothing = 2.0 / (static_cast<double>(config.ema_window) + 1.0);
  double ema = 0.0;
  double window_sum = 0.0;
  std::size_t window_count = 0;
  const std::size_t d = dataset.dim();
  Matrix batch(config.batch_size, d);

  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  for (std::size_t step = 1; step <= config.iterations; ++step) {
    RngStream s = steps_root.split(step);
    for (std::size_t r = 0; r < config.batch_size; ++r) {
      const auto src = dataset.sample(s.uniform_index(dataset.size()));
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    DsmLoss loss;
    ParamSet grad;
    try {
      const NoisyBatch nb = make_noisy_batch(family, batch, schedule, s, config.fixed_sigma);
      grad = forward_backward(family, params, nb.input, nb.sigma, [&](const Matrix& y) {
        loss = loss_from_output(family, y, nb);
        return loss.cotangent;
      });
    } catch (const NonFiniteError& e) {
      trace.seconds = elapsed();
      throw DivergenceError("train: " + std::string(e.what()) + " at step " + std::to_string(step), std::move(trace));
    }
    if (!(loss.loss <= config.max_loss)) {
      trace.seconds = elapsed();
      throw DivergenceError("train: loss " + std::to_string(loss.loss) + " at step " + std::to_string(step),
                            std::move(trace));
    }

    if (config.optimizer == Optimizer::sgd) {
      params.axpy(-config.learning_rate, grad);
    } else {
      const double b1 = config.adam_beta1;
      const double b2 = config.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t t = 0; t < params.tensors().size(); ++t) {
        auto& p = params.tensors()[t].values;
        auto& mm = m1.tensors()[t].values;
        auto& vv = m2.tensors()[t].values;
        const auto& g = grad.tensors()[t].values;
        for (std::size_t i = 0; i < p.size(); ++i) {
          mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
          vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
          p[i] -= config.learning_rate * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + config.adam_epsilon);
        }
      }
    }

    ema = step == 1 ? loss.loss : ema + smoothing * (loss.loss - ema);
    window_sum += loss.loss;
    ++window_count;
    if (step % config.log_every == 0 || step == config.iterations) {
      trace.steps.push_back(step);
      trace.losses.push_back(window_sum / static_cast<double>(window_count));
      trace.ema.push_back(ema);
      window_sum = 0.0;
      window_count = 0;
    }
  }
  trace.seconds = elapsed();
  return trace;
}

}  // namespace sad
