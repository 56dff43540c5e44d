#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sad/error.hpp"
#include "sad/geometry/analytic.hpp"
#include "sad/geometry/geometry.hpp"
#include "sad/numerics/quadrature.hpp"
#include "sad/numerics/sym_eig.hpp"

using namespace sad;

namespace {

// Largest |G_mc - G_ref| measured in per-entry standard errors.
double max_z(const GeometryEstimate& est, const Matrix& ref) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double se = est.standard_error.data()[i];
    const double diff = std::abs(est.g.data()[i] - ref.data()[i]);
    worst = std::max(worst, se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY));
  }
  return worst;
}

const std::vector<double> kLevels{0.1, 1.0, 10.0};

}  // namespace

TEST(Quadrature, HermiteMoments) {
  const Quadrature q = gauss_hermite(20);
  double m2 = 0.0;
  double m4 = 0.0;
  double m6 = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    m2 += q.weights[i] * std::pow(q.nodes[i], 2);
    m4 += q.weights[i] * std::pow(q.nodes[i], 4);
    m6 += q.weights[i] * std::pow(q.nodes[i], 6);
  }
  EXPECT_NEAR(m2, 1.0, 1e-12);
  EXPECT_NEAR(m4, 3.0, 1e-11);
  EXPECT_NEAR(m6, 15.0, 1e-10);
}

TEST(Quadrature, ChiSquaredMoments) {
  for (std::size_t k : {1, 3, 63}) {
    const Quadrature q = gauss_chi_squared(k, 24);
    double m1 = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      m1 += q.weights[i] * q.nodes[i];
      m2 += q.weights[i] * q.nodes[i] * q.nodes[i];
    }
    const double kd = static_cast<double>(k);
    EXPECT_NEAR(m1, kd, 1e-9 * kd);
    EXPECT_NEAR(m2 - m1 * m1, 2.0 * kd, 1e-8 * kd);
  }
}

TEST(Probe, Validation) {
  EXPECT_THROW(ProbeDistribution::delta_zero({}).validate(), PreconditionError);
  EXPECT_THROW(ProbeDistribution::delta_zero({1.0, -1.0}).validate(), PreconditionError);
  EXPECT_THROW(ProbeDistribution::around_sample(nullptr, {1.0}).validate(), PreconditionError);
  EXPECT_EQ(parse_probe_kind("around_sample"), ProbeKind::around_sample);
  EXPECT_THROW(parse_probe_kind("uniform"), ConfigError);
}

TEST(Probe, AroundSampleSecondMoment) {
  auto data = std::make_shared<Matrix>(Matrix{{1.0, 2.0}, {-1.0, 0.5}});
  const auto probe = ProbeDistribution::around_sample(data, {0.5, 2.0});
  const Matrix m = probe.second_moment(2);
  RngStream stream(5, 0);
  Matrix x(200000, 2);
  Vector sigma;
  probe.draw(stream, x, sigma);
  const Matrix emp = transposed_matmul(x, x) * (1.0 / 200000.0);
  EXPECT_LT(max_abs_diff(emp, m), 0.02);
  // (C + s^2 I) / (1 + s^2) averaged over s in {0.5, 2}.
  const double c00 = 1.0;
  EXPECT_NEAR(m(0, 0), 0.5 * ((c00 + 0.25) / 1.25 + (c00 + 4.0) / 5.0), 1e-12);
}

TEST(EstimateGeometry, LinearIsotropicProbe) {
  const NetworkFamily f(LinearSpec{Matrix::diagonal(Vector{2.0, 1.0})});
  const auto probe = ProbeDistribution::isotropic(1.0, {1.0});
  const GeometryEstimate est = estimate_geometry(f, probe, 100000, RngStream(42, 0));
  EXPECT_EQ(est.n_samples, 100000u);
  const Matrix expected = Matrix::diagonal(Vector{8.0, 2.0});
  EXPECT_LT(max_z(est, expected), 3.0);
  EXPECT_LT(max_abs_diff(analytic_family_geometry(f, probe), expected), 1e-12);
}

TEST(EstimateGeometry, LinearDeltaZeroIsExactlyZero) {
  const NetworkFamily f(LinearSpec{Matrix::diagonal(Vector{2.0, 1.0})});
  const GeometryEstimate est = estimate_geometry(f, ProbeDistribution::delta_zero(kLevels), 1000, RngStream(1, 0));
  EXPECT_EQ(est.g.max_abs(), 0.0);
}

TEST(EstimateGeometry, MlpDeltaZeroOffDiagonalsEqual) {
  MlpSpec s;
  s.dim = 4;
  s.width = 16;
  const NetworkFamily f(s);
  const GeometryEstimate est =
      estimate_geometry(f, ProbeDistribution::delta_zero(kLevels), 100000, RngStream(3, 0), {.workers = 2});
  double mean = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) mean += est.g(i, j) / 6.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_LE(std::abs(est.g(i, j) - mean), 3.0 * est.standard_error(i, j));
}

TEST(EstimateGeometry, IndependentOfWorkerCount) {
  const NetworkFamily f(TokenLinearSpec{.image = {1, 4, 4}, .patch = 2, .bias_std = 0.5});
  const auto probe = ProbeDistribution::isotropic(1.0, kLevels);
  const GeometryEstimate a = estimate_geometry(f, probe, 3000, RngStream(9, 2), {.probes_per_draw = 3, .workers = 1});
  const GeometryEstimate b = estimate_geometry(f, probe, 3000, RngStream(9, 2), {.probes_per_draw = 3, .workers = 4});
  EXPECT_EQ(a.g, b.g);
  EXPECT_EQ(a.standard_error, b.standard_error);
  EXPECT_EQ(a.n_draws, 1000u);
}

TEST(EstimateGeometry, IndependentStreamsAgree) {
  const NetworkFamily f(TokenLinearSpec{.image = {1, 4, 4}, .patch = 2, .bias_std = 0.5});
  const auto probe = ProbeDistribution::isotropic(1.0, kLevels);
  const GeometryEstimate a = estimate_geometry(f, probe, 20000, RngStream(1, 0));
  const GeometryEstimate b = estimate_geometry(f, probe, 20000, RngStream(2, 0));
  for (std::size_t i = 0; i < a.g.size(); ++i) {
    const double pooled = std::hypot(a.standard_error.data()[i], b.standard_error.data()[i]);
    EXPECT_LE(std::abs(a.g.data()[i] - b.g.data()[i]), 6.0 * pooled);
  }
}

TEST(EstimateGeometry, RejectsNonFiniteOutputs) {
  const NetworkFamily f(LinearSpec{Matrix::identity(2), 1e300});
  EXPECT_THROW(estimate_geometry(f, ProbeDistribution::isotropic(1e10, {1.0}), 100, RngStream(1, 0)),
               EstimationError);
  EXPECT_THROW(estimate_geometry(f, ProbeDistribution::isotropic(1.0, {1.0}), 0, RngStream(1, 0)),
               PreconditionError);
}

TEST(Sads, Diagonal) {
  const SadBasis b = extract_sads(Matrix::diagonal(Vector{1.0, 3.0}));
  EXPECT_EQ(b.eigenvalues, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(b.direction(0), (Vector{1.0, 0.0}));
  EXPECT_EQ(b.direction(1), (Vector{0.0, 1.0}));
}

TEST(Sads, IsotropyGivesCanonicalBasis) {
  const SadBasis b = extract_sads(Matrix::identity(5));
  EXPECT_EQ(b.directions, Matrix::identity(5));
}

TEST(Sads, RankOneUpdate) {
  const Matrix g = Matrix::identity(3) * 2.0 + Matrix(3, 3, 1.0);
  const SadBasis b = extract_sads(g);
  EXPECT_NEAR(b.eigenvalues[0], 2.0, 1e-12);
  EXPECT_NEAR(b.eigenvalues[1], 2.0, 1e-12);
  EXPECT_NEAR(b.eigenvalues[2], 5.0, 1e-12);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b.directions(i, 2), 1.0 / std::sqrt(3.0), 1e-12);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(dot(b.direction(k), Vector(3, 1.0)), 0.0, 1e-12);
}

TEST(Sads, DiagonalizeAndMarkovIsMonotone) {
  RngStream stream(8, 0);
  const Matrix a = gaussian_matrix(stream, 7, 7);
  const Matrix g = matmul_transposed(a, a);
  const SadBasis b = extract_sads(g);
  EXPECT_LT(orthogonality_defect(b.directions), 1e-10);
  const Matrix d = transposed_matmul(b.directions, g * b.directions);
  double off = 0.0;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      if (i != j) off += d(i, j) * d(i, j);
  EXPECT_LE(off, 1e-8 * g.trace());
  double prev = -1.0;
  for (std::size_t k = 0; k < 7; ++k) {
    const double m = markov_bound(b.direction(k), g, 0.5);
    EXPECT_NEAR(m, b.eigenvalues[k] / 0.25, 1e-9 * g.trace());
    EXPECT_GE(m, prev - 1e-12);
    prev = m;
  }
}

TEST(Sads, PsdClampAndViolation) {
  const SadBasis b = extract_sads(Matrix::diagonal(Vector{-1e-12, 1.0}));
  EXPECT_EQ(b.eigenvalues[0], 0.0);
  EXPECT_THROW(extract_sads(Matrix::diagonal(Vector{-1e-3, 1.0})), PreconditionError);
}

TEST(MarkovBound, Examples) {
  const Matrix g = Matrix::diagonal(Vector{4.0, 1.0});
  EXPECT_DOUBLE_EQ(markov_bound(Vector{1.0, 0.0}, g, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(markov_bound(Vector{0.0, 1.0}, g, 1.0), 1.0);
  EXPECT_THROW(markov_bound(Vector{1.0, 1.0}, g, 1.0), PreconditionError);
}

TEST(DistinctEigenvalues, Examples) {
  EXPECT_EQ(distinct_eigenvalue_count(Vector{5, 5, 2}, 1e-6), 2u);
  EXPECT_EQ(distinct_eigenvalue_count(Vector{1, 1, 1, 1}, 1e-6), 1u);
  EXPECT_EQ(distinct_eigenvalue_count(Vector{}, 1e-6), 0u);
}

TEST(Analytic, TokenPerTokenBiasExample) {
  TokenLinearGeometry t;
  t.token_gram = Matrix::identity(2);
  t.token_length = 2;
  t.weight_var = 1.0;
  t.bias_var = 1.0;
  t.coupling = BiasCoupling::per_token;
  const Matrix g = token_linear_geometry(t);
  EXPECT_EQ(g, Matrix::identity(4) * 2.0);
  const SadBasis b = extract_sads(g);
  EXPECT_EQ(distinct_eigenvalue_count(b.eigenvalues, 1e-6), 1u);
}

TEST(Analytic, MlpIdentityUnitInput) {
  MlpLastLayer m;
  m.dim = 3;
  m.activation = Activation::identity;
  m.weight_std = 1.0;
  m.bias_mean = 1.0;
  m.hidden = hidden_nodes_point(Vector{1.0});
  EXPECT_LT(max_abs_diff(mlp_last_layer_geometry(m), Matrix::identity(3) + Matrix(3, 3, 1.0)), 1e-14);
}

TEST(Analytic, ActivationMomentsMatchQuadrature) {
  // relu closed form against a fine midpoint rule.
  const double mean = 0.3;
  const double sd = 1.7;
  double m1 = 0.0;
  double m2 = 0.0;
  const int n = 400000;
  const double lo = mean - 12 * sd;
  const double h = 24 * sd / n;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double w = std::exp(-0.5 * std::pow((x - mean) / sd, 2)) / (sd * std::sqrt(2 * M_PI)) * h;
    m1 += w * std::max(x, 0.0);
    m2 += w * std::pow(std::max(x, 0.0), 2);
  }
  const auto [a, b] = activation_moments(Activation::relu, mean, sd);
  EXPECT_NEAR(a, m1, 1e-8);
  EXPECT_NEAR(b, m2, 1e-8);
  const auto [t1, t2] = activation_moments(Activation::tanh, 0.0, 1.0);
  EXPECT_NEAR(t1, 0.0, 1e-14);
  EXPECT_NEAR(t2, 0.39429449, 1e-6);
}

TEST(Analytic, ConvZeroMeanHasNoCrossBlock) {
  ConvLastLayer c;
  c.input = {2, 3, 3};
  c.out_channels = 2;
  c.weight_std = 0.5;
  c.bias_std = 0.3;
  c.input_moment = Matrix::identity(18);
  const ConvGeometryBlocks blocks = conv_geometry_blocks(c);
  EXPECT_EQ(blocks.b.max_abs(), 0.0);
  // Centre pixel sees all 9 taps in both channels.
  EXPECT_NEAR(blocks.a(4, 4), 0.25 * 18 + 0.09, 1e-12);
  const Matrix g = conv_last_layer_geometry(c);
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t q = 0; q < 9; ++q) EXPECT_EQ(g(p, 9 + q), 0.0);
}

TEST(Analytic, MonteCarloAgreement) {
  // Unit-test scale; the acceptance suite repeats this at 1e5 draws.
  MlpSpec mlp;
  mlp.dim = 3;
  mlp.hidden_layers = 0;
  mlp.output_activation = Activation::tanh;
  mlp.output_weight_mean = 0.3;
  mlp.bias_mean = 0.4;
  mlp.bias_std = 0.5;
  ConvUnetSpec conv;
  conv.image = {2, 3, 3};
  conv.levels = 0;
  conv.output_activation = Activation::identity;
  conv.bias_mean = 0.6;
  conv.bias_std = 0.2;
  TokenLinearSpec token{.image = {1, 4, 4}, .patch = 2, .bias_std = 0.7};
  const auto probe = ProbeDistribution::isotropic(1.3, kLevels);
  for (const NetworkFamily& f : {NetworkFamily(mlp), NetworkFamily(conv), NetworkFamily(token)}) {
    const GeometryEstimate est = estimate_geometry(f, probe, 20000, RngStream(17, 0));
    EXPECT_LT(max_z(est, analytic_family_geometry(f, probe)), 5.0) << f.kind();
  }
}

TEST(Analytic, TokenGramFromIsotropicMoment) {
  const TokenLinearSpec s{.image = {1, 4, 4}, .patch = 2};
  EXPECT_EQ(token_gram(s, Matrix::identity(16)), Matrix::identity(4) * 4.0);
}

TEST(Analytic, UnsupportedFamilies) {
  MlpSpec deep;
  deep.dim = 3;
  EXPECT_THROW(analytic_family_geometry(NetworkFamily(deep), ProbeDistribution::delta_zero({1.0})),
               PreconditionError);
  EXPECT_EQ(parse_analytic_kind("conv_last_layer"), AnalyticKind::conv_last_layer);
  EXPECT_THROW(parse_analytic_kind("attention"), ConfigError);
}

TEST(Export, GeometryCsvAndPgm) {
  const auto dir = std::filesystem::temp_directory_path() / "sadkit_geometry_test";
  std::filesystem::create_directories(dir);
  const NetworkFamily f(LinearSpec{Matrix::identity(2)});
  const GeometryEstimate est = estimate_geometry(f, ProbeDistribution::isotropic(1.0, {1.0}), 100, RngStream(1, 0));
  write_geometry((dir / "g.csv").string(), est);
  EXPECT_EQ(read_csv((dir / "g.csv").string()), est.g);
  std::ifstream js(dir / "g.csv.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["n_samples"], 100);
  write_pgm((dir / "v.pgm").string(), Matrix{{0.0, 1.0}, {0.5, 1.0}});
  std::ifstream pg(dir / "v.pgm", std::ios::binary);
  std::string body((std::istreambuf_iterator<char>(pg)), {});
  EXPECT_EQ(body.substr(0, 11), "P5\n2 2\n255\n");
  EXPECT_EQ(static_cast<unsigned char>(body[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(body[12]), 255);
  EXPECT_EQ(static_cast<unsigned char>(body[13]), 128);
  std::filesystem::remove_all(dir);
}
