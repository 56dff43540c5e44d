#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

/// Linear score model Omega = Phi Theta trained by denoising score matching on
/// x = g v, g ~ N(0, 1), at a single noise level sigma.
struct LinearDsmConfig {
  enum class Mode { gd_mean, sgd };

  Matrix phi;
  Vector v;
  double sigma = 1.0;
  double eta = 1e-3;
  std::size_t steps = 20000;
  Mode mode = Mode::gd_mean;
  /// Samples per SGD step; 0 means the exact population gradient.
  std::size_t batch = 1;
  /// Standard deviation of the iid initial Theta entries (SGD only).
  double init_std = 1e-2;
  /// Fraction of SGD steps discarded before stationary statistics.
  double burn_in = 0.8;
};

/// Omega* = (1/sigma^2) (v v^T / (sigma^2 + 1) - I), the score of
/// N(0, v v^T + sigma^2 I). Throws PreconditionError for non-unit v or sigma <= 0.
Matrix optimal_score(std::span<const double> v, double sigma);

/// Population DSM gradient 2 Phi^T [Phi Theta (v v^T + sigma^2 I) + I].
Matrix population_gradient(const Matrix& phi, const Matrix& theta, std::span<const double> v, double sigma);

/// E[W^T X W] = s2 tr(X) I for W with iid zero-mean entries of variance s2.
Matrix iid_quadratic_expectation(const Matrix& x, double s2);

/// rho_i = min[(sigma^2 + 1) lambda_i, sigma^2 min_{j != i} lambda_j] with
/// 1-based i and eigenvalues sorted descending. Requires positive eigenvalues
/// and lambda_{D-1} > lambda_D.
double predicted_rate(std::span<const double> eigvals, std::size_t i, double sigma);

struct ErrorTrace {
  /// ||E_t||_F for t = 0..steps.
  std::vector<double> error;
  /// Least-squares slope of log ||E_t|| over [fit_begin, fit_end).
  double fitted_log_slope = 0.0;
  std::size_t fit_begin = 0;
  std::size_t fit_end = 0;
  /// (1 - exp(slope)) / (2 eta): the decay constant the fit implies.
  double fitted_rho = 0.0;

  double fitted_factor() const;
};

/// Deterministic mean-error recursion E_t = E_{t-1} - 2 eta Phi Phi^T E_{t-1} (v v^T + sigma^2 I)
/// from E_0 = -Omega*. The fit uses the final third of the window that ends
/// when ||E_t|| first drops below 1e-12 ||E_0|| (or at the last step).
/// Throws ConvergenceError when the iteration operator is not contractive.
ErrorTrace gd_mean_trace(const LinearDsmConfig& config);

/// Same recursion from an arbitrary initial error.
ErrorTrace gd_error_recursion(const LinearDsmConfig& config, const Matrix& e0);

struct SgdResult {
  ErrorTrace trace;
  /// Mean ||E_t||_F over the post-burn-in steps.
  double stationary_error = 0.0;
  /// Mean over post-burn-in steps of the per-sample stochastic gradient
  /// covariance trace at the current iterate.
  double grad_cov_trace = 0.0;
};

/// Simulates (stochastic) gradient descent on Theta. With batch = 0 every
/// step uses the exact gradient. Throws ConvergenceError on divergence.
SgdResult sgd_simulate(const LinearDsmConfig& config, RngStream& stream);

struct CovarianceTraceEstimate {
  double monte_carlo = 0.0;
  double standard_error = 0.0;
  double closed_form = 0.0;
  std::size_t n_samples = 0;
};

/// Monte Carlo trace of Cov[vec(grad_Theta J_hat)] at the optimum, alongside
/// the closed form (4 / (sigma^2 (sigma^2 + 1))) (1 + sigma^2 D) v^T Phi Phi^T v.
CovarianceTraceEstimate stochastic_grad_covariance(const Matrix& phi, std::span<const double> v, double sigma,
                                                   std::size_t n_samples, RngStream& stream);

/// Closed-form gradient covariance at the optimum. Rows of Theta are
/// stacked (index a * D + b for Theta_ab), which puts the Phi factor first:
/// (4 / (sigma^2 (sigma^2 + 1))) (Phi^T v v^T Phi) kron (v v^T + sigma^2 I).
Matrix stochastic_grad_covariance_closed_form(const Matrix& phi, std::span<const double> v, double sigma);

}  // namespace sad
