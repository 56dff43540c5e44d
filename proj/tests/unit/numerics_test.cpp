#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sad/error.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"
#include "sad/numerics/sym_eig.hpp"

using namespace sad;

TEST(SymEig, DiagonalMatrix) {
  const SymEig e = sym_eig(Matrix{{2, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(e.values[0], 2.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
  EXPECT_EQ(e.vectors, Matrix::identity(2));
}

TEST(SymEig, SwapMatrix) {
  const SymEig e = sym_eig(Matrix{{0, 1}, {1, 0}});
  EXPECT_NEAR(e.values[0], 1.0, 1e-14);
  EXPECT_NEAR(e.values[1], -1.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(e.vectors(0, 0), r, 1e-14);
  EXPECT_NEAR(e.vectors(1, 0), r, 1e-14);
  EXPECT_NEAR(e.vectors(0, 1), r, 1e-14);
  EXPECT_NEAR(e.vectors(1, 1), -r, 1e-14);
}

TEST(SymEig, RandomEightByEightReconstructs) {
  RngStream rng(7, 1);
  const Matrix a = oracle::random_symmetric(rng, 8);
  const SymEig e = sym_eig(a);
  EXPECT_LE((a - reconstruct(e)).frobenius_norm(), 1e-8 * a.frobenius_norm());
}

TEST(SymEig, RandomSweepOrthonormalAndSorted) {
  RngStream rng(11, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(63);
    const Matrix a = oracle::random_symmetric(rng, n);
    const SymEig e = sym_eig(a);
    ASSERT_LE((a - reconstruct(e)).frobenius_norm(), 1e-8 * a.frobenius_norm()) << "n=" << n;
    ASSERT_LE(orthogonality_defect(e.vectors), 1e-10) << "n=" << n;
    for (std::size_t i = 1; i < n; ++i) ASSERT_GE(e.values[i - 1], e.values[i]);
  }
}

TEST(SymEig, ShiftMovesEigenvalues) {
  RngStream rng(12, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(15);
    const Matrix a = oracle::random_symmetric(rng, n);
    const double c = 10.0 * (rng.uniform() - 0.5);
    const SymEig e = sym_eig(a);
    const SymEig s = sym_eig(a + c * Matrix::identity(n));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s.values[i], e.values[i] + c, 1e-10);
  }
}

TEST(SymEig, SignConventionLargestEntryPositive) {
  RngStream rng(13, 4);
  const SymEig e = sym_eig(oracle::random_symmetric(rng, 10));
  for (std::size_t c = 0; c < 10; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < 10; ++r)
      if (std::abs(e.vectors(r, c)) > std::abs(e.vectors(best, c)) + 1e-12) best = r;
    EXPECT_GT(e.vectors(best, c), 0.0);
  }
}

TEST(SymEig, IsotropicGivesCanonicalBasis) {
  const SymEig e = sym_eig(3.0 * Matrix::identity(5));
  EXPECT_EQ(e.vectors, Matrix::identity(5));
}

TEST(SymEig, Errors) {
  EXPECT_THROW(sym_eig(Matrix(2, 3)), DimensionError);
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {0, 1}}), SymmetryError);
  JacobiOptions opts;
  opts.max_sweeps = 0;
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {2, 1}}, opts), ConvergenceError);
}

TEST(Matrix, CsvRoundTripFullPrecision) {
  RngStream rng(1, 1);
  const Matrix a = gaussian_matrix(rng, 3, 4);
  std::stringstream ss;
  write_csv(ss, a);
  EXPECT_EQ(read_csv(ss), a);
}

TEST(Matrix, CsvRejectsRaggedRows) {
  std::stringstream ss("1,2\n3\n");
  EXPECT_THROW(read_csv(ss), ParseError);
}

TEST(Matrix, KronMatchesDefinition) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0, 1}, {1, 0}};
  const Matrix k = kron(a, b);
  EXPECT_EQ(k(0, 1), 1.0);
  EXPECT_EQ(k(2, 3), 4.0);
  EXPECT_EQ(k(3, 2), 4.0);
  EXPECT_EQ(k(1, 2), 2.0);
  EXPECT_EQ(k(0, 0), 0.0);
  EXPECT_EQ(k(0, 3), 2.0);
}

TEST(Matrix, ProductsAgree) {
  RngStream rng(3, 3);
  const Matrix a = gaussian_matrix(rng, 4, 5);
  const Matrix b = gaussian_matrix(rng, 6, 5);
  EXPECT_LE(max_abs_diff(matmul_transposed(a, b), a * b.transpose()), 1e-12);
  EXPECT_LE(max_abs_diff(transposed_matmul(b, b), b.transpose() * b), 1e-12);
  EXPECT_THROW(a * a, DimensionError);
}

TEST(Rng, PhiloxKnownAnswers) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Rng, GaussianMoments) {
  RngStream rng(2024, 5);
  const Vector x = gaussian(rng, 1'000'000);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size() - 1);
  EXPECT_LE(std::abs(mean), 4.0 / 1000.0);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(Rng, DeterministicInSeedStreamCounter) {
  RngStream a(9, 4, 17);
  RngStream b(9, 4, 17);
  EXPECT_EQ(gaussian(a, 33), gaussian(b, 33));
  EXPECT_EQ(a, b);
}

TEST(Rng, AdvancingCounterGivesFreshVariates) {
  RngStream a(9, 4);
  const Vector first = gaussian(a, 8);
  const Vector second = gaussian(a, 8);
  EXPECT_NE(first, second);
  RngStream skipped(9, 4, a.counter());
  EXPECT_EQ(gaussian(skipped, 4), gaussian(a, 4));
}

TEST(Rng, WordAtMatchesSequentialDraws) {
  RngStream a(5, 6);
  for (std::uint64_t k = 0; k < 9; ++k) EXPECT_EQ(a.word_at(k), a.next_u64());
}

TEST(Rng, StreamsAreDistinct) {
  RngStream a(1, 0);
  RngStream b(1, 1);
  RngStream c(2, 0);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(a.split(0).stream_id(), a.split(1).stream_id());
}

TEST(Rng, ReductionIndependentOfExecutionOrder) {
  // Each "worker" owns a stream id; results are reduced in stream order.
  auto partial = [](std::uint64_t id) {
    RngStream s(77, id);
    double acc = 0.0;
    for (double v : gaussian(s, 1000)) acc += v;
    return acc;
  };
  std::vector<double> forward(8), backward(8);
  for (std::uint64_t i = 0; i < 8; ++i) forward[i] = partial(i);
  for (std::uint64_t i = 8; i-- > 0;) backward[i] = partial(i);
  double f = 0.0, b = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    f += forward[i];
    b += backward[i];
  }
  EXPECT_EQ(f, b);
}

TEST(Rng, UniformIndexInRangeAndCoversValues) {
  RngStream rng(3, 9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}
