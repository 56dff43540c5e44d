#include "sad/diffusion/schedule.hpp"

#include <cmath>

#include "sad/error.hpp"

namespace sad {

NoiseSchedule make_schedule(std::size_t n_steps, double beta_min, double beta_max) {
  if (n_steps < 2) throw PreconditionError("make_schedule: need at least two steps");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw PreconditionError("make_schedule: need 0 < beta_min < beta_max < 1");
  NoiseSchedule s;
  double prod = 1.0;
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double beta = beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(n_steps - 1);
    prod *= 1.0 - beta;
    s.betas.push_back(beta);
    s.alpha_bars.push_back(prod);
    s.sigmas.push_back(std::sqrt((1.0 - prod) / prod));
  }
  return s;
}

double NoiseSchedule::sigma_mid() const { return std::sqrt(sigma_min() * sigma_max()); }

std::vector<std::size_t> NoiseSchedule::respaced_steps(std::size_t count) const {
  const std::size_t n = n_steps();
  std::vector<std::size_t> steps;
  if (count == 0 || count >= n) {
    for (std::size_t t = 1; t <= n; ++t) steps.push_back(t);
    return steps;
  }
  // Evenly spaced, ending at n: t_i = round(1 + i (n - 1) / (count - 1)).
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? static_cast<double>(n)
                                : 1.0 + static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(count - 1);
    steps.push_back(static_cast<std::size_t>(std::lround(t)));
  }
  return steps;
}

std::vector<double> NoiseSchedule::sigma_levels(std::size_t count) const {
  std::vector<double> out;
  for (std::size_t t : respaced_steps(count)) out.push_back(sigmas[t - 1]);
  return out;
}

nlohmann::json NoiseSchedule::to_json() const {
  return {{"n_steps", n_steps()},
          {"beta_min", betas.front()},
          {"beta_max", betas.back()},
          {"sigma_min", sigma_min()},
          {"sigma_max", sigma_max()},
          {"alpha_bar_final", alpha_bars.back()}};
}

}  // namespace sad
