#include "sad/diffusion/sampler.hpp"

#include <cmath>
#include <string>

#include "sad/error.hpp"
#include "sad/numerics/parallel.hpp"

namespace sad {

Matrix sample_ancestral(const EpsPredictor& eps, std::size_t dim, const NoiseSchedule& schedule, std::size_t n,
                        const RngStream& stream, const AncestralOptions& options) {
  Matrix out(n, dim);
  if (n == 0) return out;
  if (options.block == 0) throw PreconditionError("sample_ancestral: block must be positive");
  const std::vector<std::size_t> steps = schedule.respaced_steps(options.steps);
  std::vector<double> beta(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double prev = i == 0 ? 1.0 : schedule.alpha_bars[steps[i - 1] - 1];
    beta[i] = 1.0 - schedule.alpha_bars[steps[i] - 1] / prev;
  }
  const std::size_t blocks = (n + options.block - 1) / options.block;
  parallel_for(blocks, options.workers, [&](std::size_t blk) {
    RngStream s = stream.split(blk);
    const std::size_t r0 = blk * options.block;
    const std::size_t rows = std::min(options.block, n - r0);
    Matrix x(rows, dim);
    s.fill_normal(x.data());
    Matrix e(rows, dim);
    Vector z(dim);
    for (std::size_t i = steps.size(); i-- > 0;) {
      const std::size_t t = steps[i];
      const double abar = schedule.alpha_bars[t - 1];
      eps(x, t, schedule.sigmas[t - 1], e);
      const double coef = beta[i] / std::sqrt(1.0 - abar);
      const double scale = 1.0 / std::sqrt(1.0 - beta[i]);
      const double noise = i > 0 ? std::sqrt(beta[i]) : 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        auto xr = x.row(r);
        const auto er = e.row(r);
        if (noise > 0.0) s.fill_normal(z);
        for (std::size_t k = 0; k < dim; ++k) {
          xr[k] = scale * (xr[k] - coef * er[k]) + (noise > 0.0 ? noise * z[k] : 0.0);
          if (!std::isfinite(xr[k]))
            throw NonFiniteError("sample_ancestral: non-finite state at step " + std::to_string(t),
                                 schedule.sigmas[t - 1], r0 + r);
        }
      }
    }
    for (std::size_t r = 0; r < rows; ++r) std::copy(x.row(r).begin(), x.row(r).end(), out.row(r0 + r).begin());
  });
  return out;
}

Dataset sample_ancestral(const NetworkFamily& family, const ParamSet& params, const NoiseSchedule& schedule,
                         std::size_t n, const RngStream& stream, const AncestralOptions& options) {
  if (family.outputs_score())
    throw PreconditionError("sample_ancestral: the " + std::string(family.kind()) +
                            " family outputs a fixed-level score; use Langevin sampling");
  const EpsPredictor eps = [&](const Matrix& x, std::size_t, double sigma, Matrix& out) {
    const Vector sig(x.rows(), sigma);
    out = forward_batch(family, params, x, sig);
  };
  Dataset ds;
  ds.samples = sample_ancestral(eps, family.dim(), schedule, n, stream, options);
  ds.image = family.image();
  ds.provenance = {{"source", "sample_ancestral"},
                   {"family", family.describe()},
                   {"steps", schedule.respaced_steps(options.steps).size()},
                   {"master_seed", stream.master_seed()},
                   {"stream_id", stream.stream_id()}};
  return ds;
}

std::vector<Matrix> sample_langevin(const ScoreFn& score, const Matrix& x0, double eta, std::size_t k,
                                    RngStream& stream, std::size_t record_every) {
  if (!(eta > 0.0)) throw PreconditionError("sample_langevin: eta must be positive");
  if (k == 0) throw PreconditionError("sample_langevin: need at least one step");
  std::vector<Matrix> states;
  Matrix x = x0;
  if (record_every > 0) states.push_back(x);
  Matrix s(x.rows(), x.cols());
  Vector z(x.cols());
  const double half = 0.5 * eta;
  const double root = std::sqrt(eta);
  for (std::size_t step = 1; step <= k; ++step) {
    score(x, s);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      stream.fill_normal(z);
      auto xr = x.row(r);
      const auto sr = s.row(r);
      for (std::size_t c = 0; c < x.cols(); ++c) {
        xr[c] += half * sr[c] + root * z[c];
        if (!std::isfinite(xr[c]))
          throw NonFiniteError("sample_langevin: non-finite iterate at step " + std::to_string(step), eta, r);
      }
    }
    if (record_every > 0 && step % record_every == 0) states.push_back(x);
  }
  if (record_every == 0) states.push_back(std::move(x));
  return states;
}

EpsPredictor standard_normal_oracle(const NoiseSchedule& schedule) {
  return [&schedule](const Matrix& x, std::size_t step, double, Matrix& out) {
    out = x * std::sqrt(1.0 - schedule.alpha_bars[step - 1]);
  };
}

EpsPredictor rank_one_oracle(const NoiseSchedule& schedule, std::span<const double> v, double d) {
  if (std::abs(norm2(v) - 1.0) > 1e-8) throw PreconditionError("rank_one_oracle: v must be a unit vector");
  return [&schedule, v = Vector(v.begin(), v.end()), d](const Matrix& x, std::size_t step, double, Matrix& out) {
    const double abar = schedule.alpha_bars[step - 1];
    const double c = abar * d / (abar * d + 1.0 - abar);
    const double scale = 1.0 / std::sqrt(1.0 - abar);
    out = Matrix(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto xr = x.row(r);
      const double proj = c * dot(xr, v);
      auto o = out.row(r);
      for (std::size_t k = 0; k < x.cols(); ++k) o[k] = scale * (xr[k] - proj * v[k]);
    }
  };
}

ScoreFn family_score(const NetworkFamily& family, const ParamSet& params, double sigma) {
  if (!(sigma > 0.0)) throw PreconditionError("family_score: sigma must be positive");
  return [&family, &params, sigma](const Matrix& y, Matrix& out) {
    const Vector sig(y.rows(), sigma);
    if (family.outputs_score()) {
      out = forward_batch(family, params, y, sig);
      return;
    }
    out = forward_batch(family, params, y * (1.0 / std::sqrt(1.0 + sigma * sigma)), sig);
    out *= -1.0 / sigma;
  };
}

}  // namespace sad
