#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sad/data/dataset.hpp"
#include "sad/diffusion/schedule.hpp"
#include "sad/networks/family.hpp"
#include "sad/networks/params.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

/// Batched noise predictor: out = eps_hat(x_t) at schedule step t (1-based)
/// with equivalent level sigma.
using EpsPredictor = std::function<void(const Matrix& x, std::size_t step, double sigma, Matrix& out)>;
/// Batched score: out = grad log p(x).
using ScoreFn = std::function<void(const Matrix& x, Matrix& out)>;

struct AncestralOptions {
  /// Number of respaced steps; 0 runs every schedule step.
  std::size_t steps = 0;
  /// Chains per independent block; block k draws from stream.split(k).
  std::size_t block = 256;
  std::size_t workers = 1;
};

/// DDPM ancestral chain from N(0, I) with variance beta_t, on the respaced
/// steps s_1 < ... < s_K using beta'_i = 1 - abar(s_i) / abar(s_{i-1}).
/// Throws NonFiniteError carrying the step on a non-finite state.
Matrix sample_ancestral(const EpsPredictor& eps, std::size_t dim, const NoiseSchedule& schedule, std::size_t n,
                        const RngStream& stream, const AncestralOptions& options = {});

/// Same chain driven by a trained noise-prediction family.
Dataset sample_ancestral(const NetworkFamily& family, const ParamSet& params, const NoiseSchedule& schedule,
                         std::size_t n, const RngStream& stream, const AncestralOptions& options = {});

/// Unadjusted Langevin chains x <- x + (eta / 2) score(x) + sqrt(eta) z, one
/// chain per row of x0. Returns the states after every `record_every` steps
/// (the initial state first); record_every = 0 keeps only the final state.
std::vector<Matrix> sample_langevin(const ScoreFn& score, const Matrix& x0, double eta, std::size_t k,
                                    RngStream& stream, std::size_t record_every = 0);

/// Exact noise predictor for N(0, I) data: sqrt(1 - abar) x_t.
EpsPredictor standard_normal_oracle(const NoiseSchedule& schedule);

/// Exact noise predictor for N(0, d v v^T) data:
/// (I - c v v^T) x_t / sqrt(1 - abar), c = abar d / (abar d + 1 - abar).
EpsPredictor rank_one_oracle(const NoiseSchedule& schedule, std::span<const double> v, double d);

/// Score at noise level sigma (variance-exploding coordinates y = x + sigma eps)
/// from a family: -F(y / sqrt(1 + sigma^2), sigma) / sigma for noise
/// predictors, F(y) for score-output families.
ScoreFn family_score(const NetworkFamily& family, const ParamSet& params, double sigma);

}  // namespace sad
