#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "sad/bases/basis.hpp"
#include "sad/data/dataset.hpp"
#include "sad/numerics/matrix.hpp"

namespace sad {

/// (1/n) sum_i x_i x_i^T.
Matrix second_moment(const Dataset& dataset);
Matrix second_moment(const Matrix& samples);

/// alpha = tr(W^T G W C). Throws DimensionError on shape mismatch and
/// PreconditionError when ||W^T W - I||_F > 1e-6.
double alpha(const Matrix& w, const Matrix& g, const Matrix& c);
double alpha(const OrthoTransform& w, const Matrix& g, const Matrix& c);

/// The same value through the eigenbases: sum_ij lambda_i sigma_j Q_ij^2 with
/// Q = U^T W V.
double alpha_spectral(const Matrix& w, const Matrix& g, const Matrix& c);

struct ExtremalTransforms {
  OrthoTransform w_min;  // U J V^T
  OrthoTransform w_max;  // U V^T
  /// Set when g (or c) has repeated eigenvalues, making the pair non-unique.
  bool geometry_tied = false;
  bool moment_tied = false;
};

/// Orthogonal transforms minimizing and maximizing alpha over the orthogonal
/// group. U and V hold descending-eigenvalue eigenvectors of g and c.
ExtremalTransforms extremal_transforms(const Matrix& g, const Matrix& c);

struct AlignmentReport {
  double alpha = 0.0;
  BasisKind transform = BasisKind::identity;
  std::uint64_t geometry_hash = 0;
  nlohmann::json dataset_provenance;

  nlohmann::json to_json() const;
};

/// FNV-1a over the raw bytes of the matrix shape and entries.
std::uint64_t matrix_hash(const Matrix& m);

AlignmentReport make_alignment_report(const OrthoTransform& w, const Matrix& g, const Dataset& dataset);

}  // namespace sad
