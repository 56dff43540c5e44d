#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

enum class BasisKind {
  canonical,
  dct,
  dst,
  hadamard,
  haar2d,
  random_orthogonal,
  w_min,
  w_max,
  identity,
};

std::string_view to_string(BasisKind kind);
/// Throws ConfigError on an unknown label.
BasisKind parse_basis_kind(std::string_view label);

/// How column indices map onto a 2-D grid.
enum class LayoutKind {
  none,       // no spatial meaning (random, extremal transforms)
  pixel,      // grid cell = pixel location
  frequency,  // grid cell = (vertical, horizontal) frequency or sequency
  wavelet,    // grid cell = position in the standard pyramid layout
};

struct BasisIndex {
  std::size_t grid_row = 0;
  std::size_t grid_col = 0;
  /// Wavelet level (1 = finest); -1 when not a wavelet layout.
  int scale = -1;
  /// Wavelet sub-band: 0 scaling, 1 horizontal detail, 2 vertical, 3 diagonal.
  int channel = -1;
};

/// Orthogonal D x D transform whose columns are basis vectors of an image of
/// size height x width, flattened row-major.
struct OrthoTransform {
  std::size_t dim = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Matrix matrix;
  BasisKind provenance = BasisKind::identity;
  LayoutKind layout = LayoutKind::none;
  std::vector<BasisIndex> index_layout;

  Vector column(std::size_t k) const { return matrix.col(k); }
};

/// Named orthonormal basis for a height x width image.
///
/// DCT and DST are the orthonormal type-II variants, Hadamard is sequency
/// ordered, and Haar is the full multilevel 2-D decomposition. Every 2-D
/// basis is the separable (Kronecker) product of 1-D factors, except Haar.
/// Throws SizeError when the kind does not support the size.
OrthoTransform build_basis(BasisKind kind, std::size_t height, std::size_t width);

/// 1-D orthonormal basis of length n (columns are basis vectors).
Matrix basis_1d(BasisKind kind, std::size_t n);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign
/// of R's diagonal folded into Q.
OrthoTransform random_orthogonal(std::size_t d, RngStream& stream);

/// Wrap an arbitrary orthogonal matrix (checked to 1e-8).
OrthoTransform make_transform(Matrix w, BasisKind provenance);

/// Number of sign changes along a vector (zeros skipped).
std::size_t sign_changes(std::span<const double> v);

nlohmann::json layout_to_json(const OrthoTransform& t);

}  // namespace sad
