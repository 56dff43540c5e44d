#include "sad/bases/basis.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sad/error.hpp"

namespace sad {

namespace {

constexpr std::array<std::pair<BasisKind, std::string_view>, 9> kBasisNames{{
    {BasisKind::canonical, "canonical"},
    {BasisKind::dct, "dct"},
    {BasisKind::dst, "dst"},
    {BasisKind::hadamard, "hadamard"},
    {BasisKind::haar2d, "haar2d"},
    {BasisKind::random_orthogonal, "random_orthogonal"},
    {BasisKind::w_min, "w_min"},
    {BasisKind::w_max, "w_max"},
    {BasisKind::identity, "identity"},
}};

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Matrix dct_1d(std::size_t n) {
  Matrix m(n, n);
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (std::size_t i = 0; i < n; ++i)
      m(i, k) = s * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * nn));
  }
  return m;
}

Matrix dst_1d(std::size_t n) {
  Matrix m(n, n);
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = k + 1 == n ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (std::size_t i = 0; i < n; ++i)
      m(i, k) = s * std::sin(std::numbers::pi * (2.0 * i + 1.0) * (k + 1.0) / (2.0 * nn));
  }
  return m;
}

Matrix hadamard_1d(std::size_t n) {
  if (!is_power_of_two(n)) throw SizeError("hadamard: length " + std::to_string(n) + " is not a power of two");
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  Matrix natural(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      natural(i, j) = (std::popcount(i & j) % 2 == 0) ? s : -s;
  // Reorder columns by sequency; the counts are a permutation of 0..n-1.
  Matrix m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vector c = natural.col(j);
    m.set_col(sign_changes(c), c);
  }
  return m;
}

// In-place multilevel 2-D Haar analysis on a row-major height x width array.
void haar_analysis(std::vector<double>& x, std::size_t height, std::size_t width) {
  const double r = 1.0 / std::numbers::sqrt2;
  std::vector<double> tmp(std::max(height, width));
  std::size_t h = height;
  std::size_t w = width;
  while (h > 1 || w > 1) {
    if (w > 1) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w / 2; ++j) {
          const double a = x[i * width + 2 * j];
          const double b = x[i * width + 2 * j + 1];
          tmp[j] = (a + b) * r;
          tmp[w / 2 + j] = (a - b) * r;
        }
        for (std::size_t j = 0; j < w; ++j) x[i * width + j] = tmp[j];
      }
    }
    if (h > 1) {
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t i = 0; i < h / 2; ++i) {
          const double a = x[(2 * i) * width + j];
          const double b = x[(2 * i + 1) * width + j];
          tmp[i] = (a + b) * r;
          tmp[h / 2 + i] = (a - b) * r;
        }
        for (std::size_t i = 0; i < h; ++i) x[i * width + j] = tmp[i];
      }
    }
    h = h > 1 ? h / 2 : 1;
    w = w > 1 ? w / 2 : 1;
  }
}

BasisIndex haar_index(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  std::size_t h = height;
  std::size_t w = width;
  int level = 0;
  while (h > 1 || w > 1) {
    ++level;
    const std::size_t h2 = h > 1 ? h / 2 : 1;
    const std::size_t w2 = w > 1 ? w / 2 : 1;
    if (row >= h2 || col >= w2) {
      const int channel = (row >= h2 ? 2 : 0) + (col >= w2 ? 1 : 0);
      return {row, col, level, channel};
    }
    h = h2;
    w = w2;
  }
  return {row, col, level, 0};
}

Matrix haar_2d(std::size_t height, std::size_t width) {
  if (!is_power_of_two(height) || !is_power_of_two(width)) {
    throw SizeError("haar2d: " + std::to_string(height) + "x" + std::to_string(width) + " is not dyadic");
  }
  const std::size_t d = height * width;
  // Column i of the analysis operator A is A e_i; the synthesis basis is A^T.
  Matrix a(d, d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) {
    std::fill(x.begin(), x.end(), 0.0);
    x[i] = 1.0;
    haar_analysis(x, height, width);
    a.set_col(i, x);
  }
  return a.transpose();
}

}  // namespace

std::string_view to_string(BasisKind kind) {
  for (const auto& [k, name] : kBasisNames)
    if (k == kind) return name;
  return "unknown";
}

BasisKind parse_basis_kind(std::string_view label) {
  for (const auto& [k, name] : kBasisNames)
    if (name == label) return k;
  throw ConfigError("unknown basis kind '" + std::string(label) + "'");
}

std::size_t sign_changes(std::span<const double> v) {
  std::size_t changes = 0;
  double prev = 0.0;
  for (double x : v) {
    if (x == 0.0) continue;
    if (prev != 0.0 && (x > 0.0) != (prev > 0.0)) ++changes;
    prev = x;
  }
  return changes;
}

Matrix basis_1d(BasisKind kind, std::size_t n) {
  if (n == 0) throw SizeError("basis_1d: empty basis");
  switch (kind) {
    case BasisKind::canonical:
    case BasisKind::identity:
      return Matrix::identity(n);
    case BasisKind::dct:
      return dct_1d(n);
    case BasisKind::dst:
      return dst_1d(n);
    case BasisKind::hadamard:
      return hadamard_1d(n);
    case BasisKind::haar2d:
      return haar_2d(1, n);
    default:
      throw SizeError("basis_1d: kind '" + std::string(to_string(kind)) + "' has no 1-D form");
  }
}

OrthoTransform build_basis(BasisKind kind, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw SizeError("build_basis: empty image");
  OrthoTransform t;
  t.dim = height * width;
  t.height = height;
  t.width = width;
  t.provenance = kind;
  t.index_layout.resize(t.dim);

  switch (kind) {
    case BasisKind::canonical:
    case BasisKind::identity:
      t.matrix = Matrix::identity(t.dim);
      t.layout = LayoutKind::pixel;
      break;
    case BasisKind::dct:
    case BasisKind::dst:
    case BasisKind::hadamard:
      if (kind == BasisKind::hadamard && !is_power_of_two(t.dim)) {
        throw SizeError("hadamard: " + std::to_string(height) + "x" + std::to_string(width) +
                        " has no power-of-two size");
      }
      t.matrix = kron(basis_1d(kind, height), basis_1d(kind, width));
      t.layout = LayoutKind::frequency;
      break;
    case BasisKind::haar2d:
      t.matrix = haar_2d(height, width);
      t.layout = LayoutKind::wavelet;
      break;
    default:
      throw SizeError("build_basis: kind '" + std::string(to_string(kind)) + "' is not a named basis");
  }
  for (std::size_t k = 0; k < t.dim; ++k) {
    const std::size_t r = k / width;
    const std::size_t c = k % width;
    t.index_layout[k] = kind == BasisKind::haar2d ? haar_index(r, c, height, width) : BasisIndex{r, c};
  }
  return t;
}

OrthoTransform random_orthogonal(std::size_t d, RngStream& stream) {
  if (d == 0) throw SizeError("random_orthogonal: d must be positive");
  const Matrix g = gaussian_matrix(stream, d, d);
  // Classical Gram-Schmidt applied twice; R's diagonal is positive by
  // construction, which is the sign correction that makes Q Haar-distributed.
  Matrix q(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    Vector v = g.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < d; ++i) proj += q(i, k) * v[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= proj * q(i, k);
      }
    }
    q.set_col(j, normalized(v));
  }
  OrthoTransform t;
  t.dim = d;
  t.height = 1;
  t.width = d;
  t.matrix = std::move(q);
  t.provenance = BasisKind::random_orthogonal;
  t.layout = LayoutKind::none;
  return t;
}

OrthoTransform make_transform(Matrix w, BasisKind provenance) {
  if (!w.is_square()) throw DimensionError("make_transform: matrix is not square");
  if (orthogonality_defect(w) > 1e-8) throw PreconditionError("make_transform: matrix is not orthogonal");
  OrthoTransform t;
  t.dim = w.rows();
  t.height = 1;
  t.width = t.dim;
  t.matrix = std::move(w);
  t.provenance = provenance;
  t.layout = LayoutKind::none;
  return t;
}

nlohmann::json layout_to_json(const OrthoTransform& t) {
  static constexpr std::array<std::string_view, 4> kLayoutNames{"none", "pixel", "frequency", "wavelet"};
  nlohmann::json j;
  j["kind"] = to_string(t.provenance);
  j["dim"] = t.dim;
  j["height"] = t.height;
  j["width"] = t.width;
  j["layout"] = kLayoutNames[static_cast<std::size_t>(t.layout)];
  nlohmann::json cells = nlohmann::json::array();
  for (const BasisIndex& b : t.index_layout) {
    nlohmann::json c{{"row", b.grid_row}, {"col", b.grid_col}};
    if (b.scale >= 0) {
      c["scale"] = b.scale;
      c["channel"] = b.channel;
    }
    cells.push_back(std::move(c));
  }
  j["index_layout"] = std::move(cells);
  return j;
}

}  // namespace sad
