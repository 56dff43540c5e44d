#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "sad/alignment/alignment.hpp"
#include "sad/error.hpp"
#include "sad/numerics/sym_eig.hpp"

using namespace sad;

namespace {

Matrix permutation_matrix(const std::vector<std::size_t>& perm) {
  Matrix p(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) p(i, perm[i]) = 1.0;
  return p;
}

// Naive tr(W^T G W C) with explicit products.
double alpha_naive(const Matrix& w, const Matrix& g, const Matrix& c) {
  return (w.transpose() * g * w * c).trace();
}

}  // namespace

TEST(SecondMoment, Examples) {
  Dataset ds;
  ds.samples = Matrix{{1, 0, 0}, {-1, 0, 0}};
  Matrix expect(3, 3);
  expect(0, 0) = 1.0;
  EXPECT_EQ(second_moment(ds), expect);
  Dataset zero;
  zero.samples = Matrix(1, 4);
  EXPECT_EQ(second_moment(zero), Matrix(4, 4));
}

TEST(SecondMoment, RankOneTopEigenvector) {
  RngStream rng(8, 1);
  const Vector v = normalized(Vector{1, -1, 2, 0, 0.5, 3, 1, 1});
  const SymEig e = sym_eig(second_moment(sample_rank_one(v, 8, 10000, rng)));
  EXPECT_GT(std::abs(dot(e.vectors.col(0), v)), 0.999);
}

TEST(Alpha, TraceArithmetic) {
  const Matrix g = Matrix::diagonal(Vector{3, 1});
  const Matrix c = Matrix::diagonal(Vector{2, 5});
  EXPECT_DOUBLE_EQ(alpha(Matrix::identity(2), g, c), 11.0);
  EXPECT_DOUBLE_EQ(alpha(exchange_matrix(2), g, c), 17.0);
}

TEST(Alpha, IsotropicGeometryGivesTraceOfC) {
  RngStream rng(8, 2);
  const Matrix c = oracle::random_psd(rng, 6);
  for (int i = 0; i < 10; ++i)
    EXPECT_NEAR(alpha(random_orthogonal(6, rng), Matrix::identity(6), c), c.trace(), 1e-10);
}

TEST(Alpha, EqualsEmpiricalQuadraticForm) {
  RngStream rng(8, 3);
  Dataset ds;
  ds.samples = gaussian_matrix(rng, 300, 5);
  const Matrix g = oracle::random_psd(rng, 5);
  const OrthoTransform w = random_orthogonal(5, rng);
  const Dataset z = apply_transform(ds, w);
  double mean = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) mean += dot(z.sample(i), matvec(g, z.sample(i)));
  mean /= static_cast<double>(z.size());
  EXPECT_NEAR(alpha(w, g, second_moment(ds)), mean, 1e-8);
}

TEST(Alpha, SpectralFormMatchesTrace) {
  RngStream rng(8, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.uniform_index(10);
    const Matrix g = oracle::random_psd(rng, d), c = oracle::random_psd(rng, d);
    const Matrix w = random_orthogonal(d, rng).matrix;
    const double a = alpha(w, g, c);
    EXPECT_NEAR(alpha_spectral(w, g, c), a, 1e-10 * std::max(1.0, std::abs(a)));
    EXPECT_NEAR(alpha_naive(w, g, c), a, 1e-10 * std::max(1.0, std::abs(a)));
  }
}

TEST(Alpha, Errors) {
  const Matrix g = Matrix::identity(2);
  EXPECT_THROW(alpha(Matrix::identity(3), g, g), DimensionError);
  EXPECT_THROW(alpha(Matrix{{1, 1}, {0, 1}}, g, g), PreconditionError);
}

TEST(Extremal, DiagonalExample) {
  const Matrix g = Matrix::diagonal(Vector{3, 1});
  const Matrix c = Matrix::diagonal(Vector{2, 5});
  const ExtremalTransforms t = extremal_transforms(g, c);
  EXPECT_LE(max_abs_diff(t.w_min.matrix, Matrix::identity(2)), 1e-15);
  EXPECT_LE(max_abs_diff(t.w_max.matrix, exchange_matrix(2)), 1e-15);
  EXPECT_DOUBLE_EQ(alpha(t.w_min, g, c), 11.0);
  EXPECT_DOUBLE_EQ(alpha(t.w_max, g, c), 17.0);
  // Brute force over all signed 2x2 permutations.
  for (const Matrix& p : {Matrix{{1, 0}, {0, 1}}, Matrix{{-1, 0}, {0, 1}}, Matrix{{1, 0}, {0, -1}},
                          Matrix{{0, 1}, {1, 0}}, Matrix{{0, -1}, {1, 0}}, Matrix{{0, 1}, {-1, 0}}}) {
    EXPECT_GE(alpha(p, g, c), 11.0);
    EXPECT_LE(alpha(p, g, c), 17.0);
  }
}

TEST(Extremal, IsotropicGeometryIsDeterministic) {
  RngStream rng(8, 5);
  const Matrix c = oracle::random_psd(rng, 4);
  const ExtremalTransforms a = extremal_transforms(Matrix::identity(4), c);
  const ExtremalTransforms b = extremal_transforms(Matrix::identity(4), c);
  EXPECT_EQ(a.w_min.matrix, b.w_min.matrix);
  EXPECT_TRUE(a.geometry_tied);
  EXPECT_FALSE(a.moment_tied);
  EXPECT_NEAR(alpha(a.w_min, Matrix::identity(4), c), alpha(a.w_max, Matrix::identity(4), c), 1e-10);
}

TEST(Extremal, PermutationBruteForceDimensionFive) {
  RngStream rng(8, 6);
  const Matrix g = oracle::random_psd(rng, 5), c = oracle::random_psd(rng, 5);
  const ExtremalTransforms t = extremal_transforms(g, c);
  const double lo = alpha(t.w_min, g, c), hi = alpha(t.w_max, g, c);
  const SymEig eg = sym_eig(g), ec = sym_eig(c);
  std::vector<std::size_t> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  int count = 0;
  do {
    const Matrix w = eg.vectors * permutation_matrix(perm) * ec.vectors.transpose();
    const double a = alpha(w, g, c);
    EXPECT_GE(a, lo - 1e-8);
    EXPECT_LE(a, hi + 1e-8);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(count, 120);
}

TEST(Extremal, SandwichOverRandomOrthogonal) {
  RngStream rng(8, 7);
  for (int pair = 0; pair < 5; ++pair) {
    const std::size_t d = 2 + rng.uniform_index(15);
    const Matrix g = oracle::random_psd(rng, d), c = oracle::random_psd(rng, d);
    const ExtremalTransforms t = extremal_transforms(g, c);
    EXPECT_LE(orthogonality_defect(t.w_min.matrix), 1e-10);
    EXPECT_LE(orthogonality_defect(t.w_max.matrix), 1e-10);
    const double lo = alpha(t.w_min, g, c), hi = alpha(t.w_max, g, c);
    for (int i = 0; i < 200; ++i) {
      const double a = alpha(random_orthogonal(d, rng), g, c);
      EXPECT_GE(a, lo - 1e-8);
      EXPECT_LE(a, hi + 1e-8);
    }
  }
}

TEST(Extremal, DependsOnlyOnSquaredCouplings) {
  // Flipping eigenvector signs in V changes W but not Q_ij^2, hence not alpha.
  RngStream rng(8, 8);
  const Matrix g = oracle::random_psd(rng, 4), c = oracle::random_psd(rng, 4);
  const SymEig eg = sym_eig(g), ec = sym_eig(c);
  Matrix v = ec.vectors;
  for (std::size_t r = 0; r < 4; ++r) v(r, 1) = -v(r, 1);
  const Matrix w1 = matmul_transposed(eg.vectors, ec.vectors);
  const Matrix w2 = matmul_transposed(eg.vectors, v);
  EXPECT_GT(max_abs_diff(w1, w2), 1e-3);
  EXPECT_NEAR(alpha(w1, g, c), alpha(w2, g, c), 1e-10);
}

TEST(Extremal, RejectsIndefiniteInput) {
  EXPECT_THROW(extremal_transforms(Matrix::diagonal(Vector{1, -1}), Matrix::identity(2)), PreconditionError);
}

TEST(AlignmentReport, HashAndJson) {
  const Matrix g = Matrix::identity(3);
  Dataset ds;
  ds.samples = Matrix{{1, 0, 0}};
  ds.provenance = {{"source", "unit"}};
  const AlignmentReport r = make_alignment_report(build_basis(BasisKind::canonical, 1, 3), g, ds);
  EXPECT_DOUBLE_EQ(r.alpha, 1.0);
  EXPECT_EQ(r.geometry_hash, matrix_hash(Matrix::identity(3)));
  EXPECT_NE(r.geometry_hash, matrix_hash(Matrix::identity(2)));
  EXPECT_EQ(r.to_json()["transform"], "canonical");
}
