#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sad/error.hpp"
#include "sad/numerics/stats.hpp"
#include "sad/numerics/sym_eig.hpp"
#include "sad/theory/linear_dsm.hpp"

using namespace sad;

namespace {

Matrix spectrum_phi() {
  return Matrix::diagonal(Vector{std::sqrt(5.0), 2.0, std::sqrt(3.0), std::sqrt(2.0), 1.0});
}

Vector unit(std::size_t d, std::size_t i) {
  Vector v(d, 0.0);
  v[i] = 1.0;
  return v;
}

LinearDsmConfig spectrum_config(std::size_t direction) {
  LinearDsmConfig c;
  c.phi = spectrum_phi();
  c.v = unit(5, direction);
  c.sigma = 1.0;
  c.eta = 1e-3;
  c.steps = 20000;
  return c;
}

}  // namespace

TEST(OptimalScore, DirectSubstitution) {
  const Matrix o = optimal_score(Vector{1, 0}, 1.0);
  EXPECT_DOUBLE_EQ(o(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(o(1, 1), -1.0);
  EXPECT_DOUBLE_EQ(o(0, 1), 0.0);
}

TEST(OptimalScore, StationarityAndInverseOracle) {
  RngStream rng(9, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(16);
    const Vector v = random_unit_vector(rng, d);
    const double sigma = 0.1 + 3.0 * rng.uniform();
    const Matrix o = optimal_score(v, sigma);
    Matrix m = outer(v, v);
    for (std::size_t i = 0; i < d; ++i) m(i, i) += sigma * sigma;
    Matrix residual = o * m;
    residual += Matrix::identity(d);
    EXPECT_LE(residual.max_abs(), 1e-12);
    Matrix neg_inv = oracle::inverse(m);
    neg_inv *= -1.0;
    EXPECT_LE(max_abs_diff(o, neg_inv), 1e-10);
  }
}

TEST(OptimalScore, Errors) {
  EXPECT_THROW(optimal_score(Vector{1, 1}, 1.0), PreconditionError);
  EXPECT_THROW(optimal_score(Vector{1, 0}, 0.0), PreconditionError);
}

TEST(PopulationGradient, VanishesAtOptimum) {
  RngStream rng(9, 2);
  const std::size_t d = 6;
  const Matrix phi = gaussian_matrix(rng, d, d);
  const Vector v = random_unit_vector(rng, d);
  const Matrix theta_star = oracle::inverse(phi) * optimal_score(v, 0.7);
  EXPECT_LE(population_gradient(phi, theta_star, v, 0.7).max_abs(), 1e-10);
}

TEST(IidQuadratic, MonteCarloMatchesClosedForm) {
  RngStream rng(9, 3);
  const Matrix x = oracle::random_symmetric(rng, 3);
  const double s2 = 0.5;
  Matrix acc(3, 3);
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const Matrix w = gaussian_matrix(rng, 3, 3, std::sqrt(s2));
    acc += transposed_matmul(w, x * w);
  }
  acc *= 1.0 / n;
  const Matrix ref = iid_quadratic_expectation(x, s2);
  // Entry standard deviation is O(s2 ||X||_F); 5 / sqrt(n) bounds the error comfortably.
  EXPECT_LE(max_abs_diff(acc, ref), 5.0 * s2 * x.frobenius_norm() * 2.0 / std::sqrt(double(n)));
}

TEST(PredictedRate, Examples) {
  const Vector lambda{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(predicted_rate(lambda, 1, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(predicted_rate(lambda, 5, 1.0), 2.0);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LT(predicted_rate(lambda, i, 1.0), predicted_rate(lambda, 5, 1.0));
  EXPECT_THROW(predicted_rate(Vector{2, 2}, 1, 1.0), PreconditionError);
  EXPECT_THROW(predicted_rate(lambda, 0, 1.0), DimensionError);
  EXPECT_THROW(predicted_rate(lambda, 6, 1.0), DimensionError);
}

TEST(GdMeanTrace, ZeroInitialErrorStaysZero) {
  const ErrorTrace t = gd_error_recursion(spectrum_config(0), Matrix(5, 5));
  for (double e : t.error) EXPECT_EQ(e, 0.0);
}

TEST(GdMeanTrace, FittedRatesFollowRateLaw) {
  const Vector lambda{5, 4, 3, 2, 1};
  for (std::size_t i : {0u, 4u}) {
    const ErrorTrace t = gd_mean_trace(spectrum_config(i));
    const double rho = predicted_rate(lambda, i + 1, 1.0);
    EXPECT_NEAR(t.fitted_rho, rho, 0.02 * rho) << "direction " << i + 1;
    EXPECT_NEAR(t.fitted_factor(), 1.0 - 2e-3 * rho, 0.02 * (1.0 - 2e-3 * rho));
  }
}

TEST(GdMeanTrace, RejectsNonContractiveStep) {
  LinearDsmConfig c = spectrum_config(0);
  c.eta = 0.2;
  EXPECT_THROW(gd_mean_trace(c), ConvergenceError);
}

TEST(Sgd, ExactGradientReducesToRecursion) {
  LinearDsmConfig c = spectrum_config(2);
  c.mode = LinearDsmConfig::Mode::sgd;
  c.batch = 0;
  c.init_std = 0.0;
  c.steps = 3000;
  RngStream rng(9, 4);
  const SgdResult s = sgd_simulate(c, rng);
  const ErrorTrace g = gd_mean_trace(c);
  ASSERT_EQ(s.trace.error.size(), g.error.size());
  for (std::size_t t = 0; t < g.error.size(); ++t) EXPECT_NEAR(s.trace.error[t], g.error[t], 1e-8);
}

TEST(Sgd, DeterministicGivenStream) {
  LinearDsmConfig c = spectrum_config(1);
  c.mode = LinearDsmConfig::Mode::sgd;
  c.steps = 500;
  RngStream a(9, 5), b(9, 5);
  EXPECT_EQ(sgd_simulate(c, a).trace.error, sgd_simulate(c, b).trace.error);
}

TEST(Sgd, SmallestEigenvectorHasLowestPlateau) {
  LinearDsmConfig c = spectrum_config(0);
  c.mode = LinearDsmConfig::Mode::sgd;
  c.steps = 40000;
  RngStream rng(9, 6);
  const double top = sgd_simulate(c, rng).stationary_error;
  c.v = unit(5, 4);
  const double bottom = sgd_simulate(c, rng).stationary_error;
  EXPECT_LT(bottom, top);
}

TEST(GradCovariance, MonteCarloMatchesClosedForm) {
  RngStream rng(9, 7);
  const Matrix phi = spectrum_phi();
  for (std::size_t i : {0u, 4u}) {
    const CovarianceTraceEstimate e = stochastic_grad_covariance(phi, unit(5, i), 1.0, 100000, rng);
    const double lambda = 5.0 - i;
    EXPECT_DOUBLE_EQ(e.closed_form, 4.0 / 2.0 * 6.0 * lambda);
    EXPECT_LE(std::abs(e.monte_carlo - e.closed_form), 3.0 * e.standard_error);
  }
}

TEST(GradCovariance, ClosedFormTraceAndRatios) {
  RngStream rng(9, 8);
  const Matrix phi = spectrum_phi();
  const Matrix c1 = stochastic_grad_covariance_closed_form(phi, unit(5, 0), 1.0);
  const Matrix c5 = stochastic_grad_covariance_closed_form(phi, unit(5, 4), 1.0);
  EXPECT_NEAR(c1.trace(), 60.0, 1e-12);
  EXPECT_NEAR(c1.trace() / c5.trace(), 5.0, 1e-12);
  // Large sigma: sigma^2 * trace approaches 4 lambda D sigma^2 / (sigma^2 + 1), which stays finite.
  const double s2 = 1e6;
  const double big = s2 * stochastic_grad_covariance_closed_form(phi, unit(5, 0), 1e3).trace();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big / (4.0 * 5.0 * 5.0 * s2 / (s2 + 1.0)), 1.0, 1e-5);
}

TEST(GradCovariance, ClosedFormMatchesEntrywiseMonteCarlo) {
  RngStream rng(9, 9);
  const std::size_t d = 3;
  const Matrix phi = gaussian_matrix(rng, d, d);
  const Vector v = random_unit_vector(rng, d);
  const double sigma = 0.8;
  const Matrix omega = optimal_score(v, sigma);
  const int n = 200000;
  Matrix acc(d * d, d * d);
  for (int k = 0; k < n; ++k) {
    const double g = rng.normal();
    const Vector eps = gaussian(rng, d);
    Vector q(d), r(d);
    for (std::size_t i = 0; i < d; ++i) q[i] = g * v[i] + sigma * eps[i];
    const Vector oq = matvec(omega, q);
    for (std::size_t i = 0; i < d; ++i) r[i] = oq[i] + eps[i] / sigma;
    const Vector p = matvec_transposed(phi, r);
    Vector vec(d * d);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) vec[a * d + b] = 2.0 * p[a] * q[b];
    acc += outer(vec, vec);
  }
  acc *= 1.0 / n;
  const Matrix ref = stochastic_grad_covariance_closed_form(phi, v, sigma);
  EXPECT_LE(max_abs_diff(acc, ref), 0.05 * ref.max_abs());
}

TEST(Stats, SpearmanAndRanks) {
  EXPECT_DOUBLE_EQ(spearman(Vector{1, 2, 3, 4}, Vector{10, 20, 25, 100}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(Vector{1, 2, 3}, Vector{3, 2, 1}), -1.0);
  EXPECT_EQ(ranks(Vector{5, 1, 5}), (std::vector<double>{2.5, 1.0, 2.5}));
  const LineFit f = fit_line(Vector{0, 1, 2}, Vector{1, 3, 5});
  EXPECT_NEAR(f.slope, 2.0, 1e-15);
  EXPECT_NEAR(f.intercept, 1.0, 1e-15);
}

TEST(Stats, RunningMomentsMergeMatchesSequential) {
  RngStream rng(9, 10);
  const Vector x = gaussian(rng, 1001);
  RunningMoments all, left, right;
  for (std::size_t i = 0; i < x.size(); ++i) {
    all.add(x[i]);
    (i < 400 ? left : right).add(x[i]);
  }
  left.merge(right);
  EXPECT_NEAR(left.mean, all.mean, 1e-14);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-12);
  EXPECT_NEAR(all.variance(), sample_variance(x), 1e-12);
}
