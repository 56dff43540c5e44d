#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sad/data/dataset.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

/// Exact 1-D Wasserstein-2 distance between two empirical measures.
///
/// Equal sizes use the order-statistic formula sqrt(mean((a_(i) - b_(i))^2)).
/// Unequal sizes compare linearly interpolated quantile functions at the union
/// of both sets of plotting positions (i + 1/2) / n. Throws on empty input.
double w2_1d(std::span<const double> a, std::span<const double> b);

/// Same as w2_1d for inputs already sorted ascending.
double w2_1d_sorted(std::span<const double> a, std::span<const double> b);

/// L random unit directions in R^D (rows of `directions`).
struct ProjectionSet {
  Matrix directions;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return directions.rows(); }
  std::size_t dim() const noexcept { return directions.cols(); }
};

ProjectionSet make_projection_set(std::size_t dim, std::size_t l, RngStream& stream);

/// Default number of directions, 64 D.
inline std::size_t default_projection_count(std::size_t dim) { return 64 * dim; }

/// Projected 1-D W2 distance along every direction of the set.
std::vector<double> projected_w2(const Matrix& x, const Matrix& y, const ProjectionSet& projections,
                                 std::size_t workers = 1);

/// Sliced W2: sqrt of the mean squared projected distance.
double sw2(const Matrix& x, const Matrix& y, const ProjectionSet& projections, std::size_t workers = 1);
/// Max-sliced W2: the largest projected distance over the set.
double msw2(const Matrix& x, const Matrix& y, const ProjectionSet& projections, std::size_t workers = 1);

double sw2(const Dataset& x, const Dataset& y, std::size_t l, RngStream& stream, std::size_t workers = 1);
double msw2(const Dataset& x, const Dataset& y, std::size_t l, RngStream& stream, std::size_t workers = 1);

struct SlicedDistances {
  double sw2 = 0.0;
  double msw2 = 0.0;
  std::size_t l = 0;
};

/// Both estimators from one shared projection set.
SlicedDistances sliced_distances(const Matrix& x, const Matrix& y, const ProjectionSet& projections,
                                 std::size_t workers = 1);

}  // namespace sad
