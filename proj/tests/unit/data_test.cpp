#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sad/data/dataset.hpp"
#include "sad/error.hpp"
#include "sad/numerics/sym_eig.hpp"

using namespace sad;

namespace {

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, unsigned char fill) {
  std::vector<unsigned char> b;
  for (std::uint32_t v : {0x00000803u, count, rows, cols})
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
  b.insert(b.end(), std::size_t{count} * rows * cols, fill);
  return b;
}

Matrix empirical_second_moment(const Matrix& x) {
  Matrix c = transposed_matmul(x, x);
  c *= 1.0 / static_cast<double>(x.rows());
  return c;
}

}  // namespace

TEST(RankOne, OffAxisCoordinatesExactlyZero) {
  RngStream rng(1, 1);
  const Dataset ds = sample_rank_one(Vector{1, 0, 0, 0}, 4, 100, rng);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(ds.samples(i, k), 0.0);
}

TEST(RankOne, FirstCoordinateVariance) {
  RngStream rng(1, 2);
  const Dataset ds = sample_rank_one(Vector{1, 0, 0, 0}, 4, 100000, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += ds.samples(i, 0) * ds.samples(i, 0);
  EXPECT_NEAR(s / 100000.0, 4.0, 0.03 * 4.0);
}

TEST(RankOne, CovarianceIsRankOne) {
  RngStream rng(1, 3);
  const Vector v = normalized(Vector{1, 2, -2, 0.5, 3});
  const Dataset ds = sample_rank_one(v, 5, 2000, rng);
  const SymEig e = sym_eig(empirical_second_moment(ds.samples));
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LE(std::abs(e.values[k]), 1e-12 * e.values[0]);
  EXPECT_GT(std::abs(dot(e.vectors.col(0), v)), 1.0 - 1e-12);
  EXPECT_THROW(sample_rank_one(Vector{1, 1}, 2, 1, rng), PreconditionError);
}

TEST(Sphere, NormsAndComplementAndMean) {
  RngStream rng(2, 1);
  Matrix basis(6, 3);
  basis(1, 0) = 1.0;
  basis(3, 1) = 1.0;
  basis(5, 2) = 1.0;
  const std::size_t n = 20000;
  const Dataset ds = sphere_dataset(basis, 2.5, n, rng);
  Vector mean(6, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(norm2(ds.sample(i)), 2.5, 1e-10);
    EXPECT_EQ(ds.samples(i, 0), 0.0);
    EXPECT_EQ(ds.samples(i, 2), 0.0);
    EXPECT_EQ(ds.samples(i, 4), 0.0);
    for (std::size_t k = 0; k < 6; ++k) mean[k] += ds.samples(i, k) / n;
  }
  for (double m : mean) EXPECT_LE(std::abs(m), 4.0 * 2.5 / std::sqrt(double(n)));
  basis(0, 0) = 1.0;
  EXPECT_THROW(sphere_dataset(basis, 1.0, 1, rng), PreconditionError);
}

TEST(Idx, AllZeroImageMapsToMinusOne) {
  const Dataset ds = parse_idx_images(idx_images(2, 3, 4, 0));
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 12u);
  for (double v : ds.samples.data()) EXPECT_EQ(v, -1.0);
  const Dataset white = parse_idx_images(idx_images(1, 2, 2, 255));
  for (double v : white.samples.data()) EXPECT_EQ(v, 1.0);
}

TEST(Idx, TruncatedFileNamesByteOffset) {
  auto bytes = idx_images(2, 3, 4, 7);
  bytes.resize(30);
  try {
    parse_idx_images(bytes);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 30u);
    EXPECT_NE(std::string(e.what()).find("byte offset 30"), std::string::npos);
  }
  bytes.resize(10);
  EXPECT_THROW(parse_idx_images(bytes), ParseError);
}

TEST(Idx, BadMagicRejected) {
  auto bytes = idx_images(1, 1, 1, 0);
  bytes[3] = 0x01;
  EXPECT_THROW(parse_idx_images(bytes), ParseError);
}

TEST(Idx, BundledMnistSubset) {
  const std::filesystem::path dir = SADKIT_MNIST_DIR;
  if (!std::filesystem::exists(dir / "images-idx3-ubyte")) GTEST_SKIP() << "MNIST subset not unpacked";
  const Dataset ds = load_idx((dir / "images-idx3-ubyte").string(), (dir / "labels-idx1-ubyte").string());
  EXPECT_EQ(ds.size(), 10000u);
  EXPECT_EQ(ds.dim(), 784u);
  ASSERT_TRUE(ds.image.has_value());
  EXPECT_EQ(ds.image->height, 28u);
  EXPECT_EQ(ds.labels.size(), 10000u);
  double lo = 1.0, hi = -1.0;
  for (double v : ds.samples.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, -1.0);
  EXPECT_LE(hi, 1.0);
}

TEST(Downscale, ConstantAndCheckerboard) {
  Dataset ds;
  ds.samples = Matrix(2, 16, 0.25);
  ds.image = ImageShape{1, 4, 4};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) ds.samples(1, i * 4 + j) = ((i + j) % 2) ? 1.0 : -1.0;
  const Dataset out = downscale(ds, 2);
  EXPECT_EQ(out.dim(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(out.samples(0, k), 0.25);
    EXPECT_EQ(out.samples(1, k), 0.0);
  }
  EXPECT_THROW(downscale(ds, 3), SizeError);
}

TEST(Downscale, EnergyNeverIncreases) {
  RngStream rng(3, 3);
  Dataset ds;
  ds.samples = gaussian_matrix(rng, 50, 36);
  ds.image = ImageShape{1, 6, 6};
  for (std::size_t f : {2u, 3u, 6u}) {
    const Dataset out = downscale(ds, f);
    // Per-pixel energy: mean square of the pooled image is at most that of the input.
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double e_in = dot(ds.sample(i), ds.sample(i)) / 36.0;
      const double e_out = dot(out.sample(i), out.sample(i)) / static_cast<double>(out.dim());
      EXPECT_LE(e_out, e_in + 1e-12);
      EXPECT_LE(norm2(out.sample(i)), norm2(ds.sample(i)) + 1e-12);
    }
  }
}

TEST(Transform, IdentityNormsAndInverse) {
  RngStream rng(4, 4);
  Dataset ds;
  ds.samples = gaussian_matrix(rng, 40, 8);
  const Dataset same = apply_transform(ds, build_basis(BasisKind::identity, 1, 8));
  EXPECT_EQ(same.samples, ds.samples);
  const OrthoTransform w = random_orthogonal(8, rng);
  const Dataset z = apply_transform(ds, w);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(norm2(z.sample(i)), norm2(ds.sample(i)), 1e-10);
  const Dataset back = apply_inverse_transform(z, w);
  EXPECT_LE(max_abs_diff(back.samples, ds.samples), 1e-10);
  // C(WX) = W C(X) W^T
  const Matrix lhs = empirical_second_moment(z.samples);
  const Matrix rhs = w.matrix * empirical_second_moment(ds.samples) * w.matrix.transpose();
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-10);
  EXPECT_THROW(apply_transform(ds, random_orthogonal(4, rng)), DimensionError);
}

TEST(Split, PartitionsRows) {
  RngStream rng(5, 5);
  Dataset ds;
  ds.samples = gaussian_matrix(rng, 10, 3);
  ds.labels = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const DatasetSplit s = split(ds, 7);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
  EXPECT_EQ(s.test.labels.front(), 7);
  EXPECT_EQ(s.test.samples(0, 2), ds.samples(7, 2));
}
