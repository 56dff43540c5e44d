#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sad/bases/basis.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// n x D sample matrix plus layout and provenance.
struct Dataset {
  Matrix samples;
  /// Set for image data; samples are flattened channel-major, then row-major.
  std::optional<ImageShape> image;
  std::vector<int> labels;
  /// Free-form record of how the data was made (source label, parameters, seed).
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const noexcept { return samples.rows(); }
  std::size_t dim() const noexcept { return samples.cols(); }
  std::span<const double> sample(std::size_t i) const { return samples.row(i); }
};

/// n draws of sqrt(d) * g * v with g ~ N(0, 1), i.e. N(0, d v v^T).
Dataset sample_rank_one(std::span<const double> v, std::size_t d, std::size_t n, RngStream& stream);

/// Uniform samples on the 2-sphere of the given radius inside span(basis3).
/// `basis3` is D x 3 with orthonormal columns.
Dataset sphere_dataset(const Matrix& basis3, double radius, std::size_t n, RngStream& stream);

/// Reads IDX images (magic 0x00000803) and optional labels (0x00000801).
/// Pixels are mapped from [0, 255] to [-1, 1].
Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt);

/// Parses an in-memory IDX image file; `source` names it in errors.
Dataset parse_idx_images(std::span<const unsigned char> bytes, const std::string& source = "<memory>");
std::vector<int> parse_idx_labels(std::span<const unsigned char> bytes, const std::string& source = "<memory>");

/// Area-average pooling of image data by an integer factor.
Dataset downscale(const Dataset& dataset, std::size_t factor);

/// x -> W x for every sample.
Dataset apply_transform(const Dataset& dataset, const OrthoTransform& w);
/// x -> W^T x for every sample.
Dataset apply_inverse_transform(const Dataset& dataset, const OrthoTransform& w);

/// Rows [begin, end).
Dataset slice(const Dataset& dataset, std::size_t begin, std::size_t end);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};
/// First `n_train` samples train, the rest test.
DatasetSplit split(const Dataset& dataset, std::size_t n_train);

/// CSV of the samples plus a `<path>.json` provenance sidecar.
void export_dataset(const Dataset& dataset, const std::string& csv_path);

}  // namespace sad
