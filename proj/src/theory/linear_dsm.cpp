#include "sad/theory/linear_dsm.hpp"

#include <algorithm>
#include <cmath>

#include "sad/error.hpp"
#include "sad/numerics/stats.hpp"
#include "sad/numerics/sym_eig.hpp"

namespace sad {

namespace {

void require_unit(std::span<const double> v, const char* op) {
  if (v.empty() || std::abs(norm2(v) - 1.0) > 1e-8)
    throw PreconditionError(std::string(op) + ": v is not a unit vector");
}

// v v^T + sigma^2 I
Matrix noisy_covariance(std::span<const double> v, double sigma) {
  Matrix m = outer(v, v);
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += sigma * sigma;
  return m;
}

void validate(const LinearDsmConfig& c) {
  if (!c.phi.is_square()) throw DimensionError("linear dsm: Phi must be square");
  if (c.phi.rows() != c.v.size()) throw DimensionError("linear dsm: Phi and v dimensions differ");
  require_unit(c.v, "linear dsm");
  if (!(c.sigma > 0.0) || !(c.eta > 0.0)) throw PreconditionError("linear dsm: sigma and eta must be positive");
}

void fit_tail(ErrorTrace& trace, double eta) {
  const double e0 = trace.error.front();
  std::size_t end = trace.error.size();
  if (e0 == 0.0) {
    trace.fit_begin = trace.fit_end = 0;
    return;
  }
  for (std::size_t t = 0; t < trace.error.size(); ++t) {
    if (trace.error[t] <= 1e-12 * e0) {
      end = t;
      break;
    }
  }
  const std::size_t begin = end - end / 3;
  if (end - begin < 2) return;
  std::vector<double> x, y;
  x.reserve(end - begin);
  y.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    x.push_back(static_cast<double>(t));
    y.push_back(std::log(trace.error[t]));
  }
  trace.fitted_log_slope = fit_line(x, y).slope;
  trace.fit_begin = begin;
  trace.fit_end = end;
  trace.fitted_rho = (1.0 - std::exp(trace.fitted_log_slope)) / (2.0 * eta);
}

}  // namespace

double ErrorTrace::fitted_factor() const { return std::exp(fitted_log_slope); }

Matrix optimal_score(std::span<const double> v, double sigma) {
  require_unit(v, "optimal_score");
  if (!(sigma > 0.0)) throw PreconditionError("optimal_score: sigma must be positive");
  const double s2 = sigma * sigma;
  Matrix omega = outer(v, v);
  omega *= 1.0 / (s2 + 1.0);
  for (std::size_t i = 0; i < omega.rows(); ++i) omega(i, i) -= 1.0;
  omega *= 1.0 / s2;
  return omega;
}

Matrix population_gradient(const Matrix& phi, const Matrix& theta, std::span<const double> v, double sigma) {
  Matrix inner = phi * theta * noisy_covariance(v, sigma);
  for (std::size_t i = 0; i < inner.rows(); ++i) inner(i, i) += 1.0;
  Matrix g = transposed_matmul(phi, inner);
  g *= 2.0;
  return g;
}

Matrix iid_quadratic_expectation(const Matrix& x, double s2) {
  if (!x.is_square()) throw DimensionError("iid_quadratic_expectation: X must be square");
  Matrix m = Matrix::identity(x.rows());
  m *= s2 * x.trace();
  return m;
}

double predicted_rate(std::span<const double> eigvals, std::size_t i, double sigma) {
  const std::size_t d = eigvals.size();
  if (i < 1 || i > d) {
    throw DimensionError("predicted_rate: index " + std::to_string(i) + " outside 1.." + std::to_string(d));
  }
  if (d < 2) throw PreconditionError("predicted_rate: need at least two eigenvalues");
  for (std::size_t k = 0; k < d; ++k) {
    if (!(eigvals[k] > 0.0)) throw PreconditionError("predicted_rate: eigenvalues must be positive");
    if (k > 0 && eigvals[k] > eigvals[k - 1]) throw PreconditionError("predicted_rate: eigenvalues must be sorted descending");
  }
  if (!(eigvals[d - 2] > eigvals[d - 1])) {
    throw PreconditionError("predicted_rate: requires lambda_{D-1} > lambda_D");
  }
  const double s2 = sigma * sigma;
  double other = INFINITY;
  for (std::size_t j = 0; j < d; ++j)
    if (j != i - 1) other = std::min(other, eigvals[j]);
  return std::min((s2 + 1.0) * eigvals[i - 1], s2 * other);
}

ErrorTrace gd_error_recursion(const LinearDsmConfig& config, const Matrix& e0) {
  validate(config);
  const Matrix m = noisy_covariance(config.v, config.sigma);
  const Matrix k = matmul_transposed(config.phi, config.phi);
  // The operator E -> E - 2 eta K E M has eigenvalues 1 - 2 eta kappa_a mu_b.
  const double kmax = sym_eig(k).values.front();
  const double mmax = sym_eig(m).values.front();
  if (2.0 * config.eta * kmax * mmax >= 2.0) {
    throw ConvergenceError("gd_mean_trace: eta too large, iteration operator is not contractive");
  }
  ErrorTrace trace;
  trace.error.reserve(config.steps + 1);
  Matrix e = e0;
  trace.error.push_back(e.frobenius_norm());
  for (std::size_t t = 0; t < config.steps; ++t) {
    Matrix step = k * e * m;
    step *= 2.0 * config.eta;
    e -= step;
    trace.error.push_back(e.frobenius_norm());
  }
  fit_tail(trace, config.eta);
  return trace;
}

ErrorTrace gd_mean_trace(const LinearDsmConfig& config) {
  validate(config);
  Matrix e0 = optimal_score(config.v, config.sigma);
  e0 *= -1.0;
  return gd_error_recursion(config, e0);
}

SgdResult sgd_simulate(const LinearDsmConfig& config, RngStream& stream) {
  validate(config);
  const std::size_t d = config.v.size();
  const Matrix& phi = config.phi;
  const Matrix omega_star = optimal_score(config.v, config.sigma);
  const double inv_sigma = 1.0 / config.sigma;

  Matrix theta = gaussian_matrix(stream, d, d, config.init_std);
  if (config.init_std == 0.0) theta = Matrix(d, d);
  auto error_of = [&](const Matrix& th) { return (phi * th - omega_star).frobenius_norm(); };

  SgdResult result;
  result.trace.error.reserve(config.steps + 1);
  result.trace.error.push_back(error_of(theta));
  const auto burn = static_cast<std::size_t>(config.burn_in * static_cast<double>(config.steps));
  RunningMoments stationary, cov_trace;

  Vector q(d), eps(d), r(d);
  Matrix grad(d, d);
  for (std::size_t t = 0; t < config.steps; ++t) {
    const bool record = t >= burn;
    const Matrix omega = phi * theta;
    Matrix exact;
    if (config.batch == 0 || record) exact = population_gradient(phi, theta, config.v, config.sigma);
    if (config.batch == 0) {
      grad = exact;
    } else {
      grad = Matrix(d, d);
      for (std::size_t b = 0; b < config.batch; ++b) {
        const double g = stream.normal();
        stream.fill_normal(eps);
        for (std::size_t i = 0; i < d; ++i) q[i] = g * config.v[i] + config.sigma * eps[i];
        // r = Omega q + eps / sigma, per-sample gradient 2 Phi^T r q^T
        const Vector oq = matvec(omega, q);
        for (std::size_t i = 0; i < d; ++i) r[i] = oq[i] + eps[i] * inv_sigma;
        const Vector p = matvec_transposed(phi, r);
        double dev = 0.0;
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t c = 0; c < d; ++c) {
            const double gac = 2.0 * p[a] * q[c];
            grad(a, c) += gac;
            if (record) dev += (gac - exact(a, c)) * (gac - exact(a, c));
          }
        if (record) cov_trace.add(dev);
      }
      grad *= 1.0 / static_cast<double>(config.batch);
    }
    grad *= config.eta;
    theta -= grad;
    const double err = error_of(theta);
    if (!std::isfinite(err) || err > 1e6) {
      throw ConvergenceError("sgd_simulate: diverged at step " + std::to_string(t + 1));
    }
    result.trace.error.push_back(err);
    if (record) stationary.add(err);
  }
  fit_tail(result.trace, config.eta);
  result.stationary_error = stationary.mean;
  result.grad_cov_trace = cov_trace.mean;
  return result;
}

Matrix stochastic_grad_covariance_closed_form(const Matrix& phi, std::span<const double> v, double sigma) {
  require_unit(v, "stochastic_grad_covariance");
  const Vector phit_v = matvec_transposed(phi, v);
  const double s2 = sigma * sigma;
  Matrix c = kron(outer(phit_v, phit_v), noisy_covariance(v, sigma));
  c *= 4.0 / (s2 * (s2 + 1.0));
  return c;
}

CovarianceTraceEstimate stochastic_grad_covariance(const Matrix& phi, std::span<const double> v, double sigma,
                                                   std::size_t n_samples, RngStream& stream) {
  require_unit(v, "stochastic_grad_covariance");
  if (phi.rows() != v.size() || !phi.is_square()) throw DimensionError("stochastic_grad_covariance: shape mismatch");
  if (n_samples < 2) throw PreconditionError("stochastic_grad_covariance: need at least two samples");
  const std::size_t d = v.size();
  const Matrix omega_star = optimal_score(v, sigma);
  const double s2 = sigma * sigma;

  // Per-sample gradient 2 p q^T, p = Phi^T (Omega* q + eps / sigma), q = x + sigma eps.
  Matrix sum(d, d);
  RunningMoments sq_norm;
  Vector q(d), eps(d), r(d);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double g = stream.normal();
    stream.fill_normal(eps);
    for (std::size_t i = 0; i < d; ++i) q[i] = g * v[i] + sigma * eps[i];
    const Vector oq = matvec(omega_star, q);
    for (std::size_t i = 0; i < d; ++i) r[i] = oq[i] + eps[i] / sigma;
    const Vector p = matvec_transposed(phi, r);
    double n2 = 0.0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t c = 0; c < d; ++c) {
        const double gac = 2.0 * p[a] * q[c];
        sum(a, c) += gac;
        n2 += gac * gac;
      }
    sq_norm.add(n2);
  }
  const double n = static_cast<double>(n_samples);
  double mean_sq = 0.0;
  for (double x : sum.data()) mean_sq += (x / n) * (x / n);

  CovarianceTraceEstimate est;
  est.n_samples = n_samples;
  // Unbiased trace: n/(n-1) (E||g||^2 - ||mean g||^2).
  est.monte_carlo = n / (n - 1.0) * (sq_norm.mean - mean_sq);
  est.standard_error = std::sqrt(sq_norm.variance() / n);
  const Vector phit_v = matvec_transposed(phi, v);
  est.closed_form = 4.0 / (s2 * (s2 + 1.0)) * (1.0 + s2 * static_cast<double>(d)) * dot(phit_v, phit_v);
  return est;
}

}  // namespace sad
