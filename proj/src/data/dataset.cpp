#include "sad/data/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "sad/error.hpp"

namespace sad {

namespace {

void require_unit(std::span<const double> v, const char* op) {
  if (std::abs(norm2(v) - 1.0) > 1e-8) throw PreconditionError(std::string(op) + ": vector is not unit norm");
}

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset, const std::string& source) {
  if (offset + 4 > bytes.size()) throw ParseError(source + ": truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset sample_rank_one(std::span<const double> v, std::size_t d, std::size_t n, RngStream& stream) {
  if (v.size() != d) throw DimensionError("sample_rank_one: v has dimension " + std::to_string(v.size()));
  require_unit(v, "sample_rank_one");
  Dataset ds;
  ds.samples = Matrix(n, d);
  const double scale = std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = scale * stream.normal();
    auto row = ds.samples.row(i);
    for (std::size_t k = 0; k < d; ++k) row[k] = g * v[k];
  }
  ds.provenance = {{"source", "rank_one"}, {"d", d}, {"n", n}, {"stream", stream.stream_id()}};
  return ds;
}

Dataset sphere_dataset(const Matrix& basis3, double radius, std::size_t n, RngStream& stream) {
  if (basis3.cols() != 3) throw DimensionError("sphere_dataset: basis must have 3 columns");
  if (orthogonality_defect(basis3) > 1e-8) throw PreconditionError("sphere_dataset: basis is not orthonormal");
  if (!(radius > 0.0)) throw PreconditionError("sphere_dataset: radius must be positive");
  const std::size_t d = basis3.rows();
  Dataset ds;
  ds.samples = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector z = random_unit_vector(stream, 3);
    auto row = ds.samples.row(i);
    for (std::size_t k = 0; k < d; ++k)
      row[k] = radius * (basis3(k, 0) * z[0] + basis3(k, 1) * z[1] + basis3(k, 2) * z[2]);
  }
  ds.provenance = {{"source", "sphere"}, {"d", d}, {"n", n}, {"radius", radius}, {"stream", stream.stream_id()}};
  return ds;
}

Dataset parse_idx_images(std::span<const unsigned char> bytes, const std::string& source) {
  const std::uint32_t magic = read_be32(bytes, 0, source);
  if (magic != 0x00000803u) throw ParseError(source + ": bad IDX image magic", 0);
  const std::size_t count = read_be32(bytes, 4, source);
  const std::size_t rows = read_be32(bytes, 8, source);
  const std::size_t cols = read_be32(bytes, 12, source);
  const std::size_t pixels = rows * cols;
  const std::size_t header = 16;
  const std::size_t expected = header + count * pixels;
  if (bytes.size() < expected) {
    throw ParseError(source + ": truncated image data, expected " + std::to_string(expected) + " bytes",
                     bytes.size());
  }
  Dataset ds;
  ds.samples = Matrix(count, pixels);
  auto out = ds.samples.data();
  for (std::size_t i = 0; i < count * pixels; ++i) out[i] = bytes[header + i] / 127.5 - 1.0;
  ds.image = ImageShape{1, rows, cols};
  ds.provenance = {{"source", "idx"}, {"file", source}, {"n", count}, {"height", rows}, {"width", cols},
                   {"scaling", "[0,255] -> [-1,1]"}};
  return ds;
}

std::vector<int> parse_idx_labels(std::span<const unsigned char> bytes, const std::string& source) {
  const std::uint32_t magic = read_be32(bytes, 0, source);
  if (magic != 0x00000801u) throw ParseError(source + ": bad IDX label magic", 0);
  const std::size_t count = read_be32(bytes, 4, source);
  if (bytes.size() < 8 + count) throw ParseError(source + ": truncated label data", bytes.size());
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
}

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  Dataset ds = parse_idx_images(read_file(images_path), images_path);
  if (labels_path) {
    ds.labels = parse_idx_labels(read_file(*labels_path), *labels_path);
    if (ds.labels.size() != ds.size()) {
      throw DimensionError("load_idx: " + std::to_string(ds.labels.size()) + " labels for " +
                           std::to_string(ds.size()) + " images");
    }
  }
  return ds;
}

Dataset downscale(const Dataset& dataset, std::size_t factor) {
  if (!dataset.image) throw SizeError("downscale: dataset has no image layout");
  const ImageShape in = *dataset.image;
  if (factor == 0 || in.height % factor != 0 || in.width % factor != 0) {
    throw SizeError("downscale: " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                    " is not divisible by " + std::to_string(factor));
  }
  const ImageShape out{in.channels, in.height / factor, in.width / factor};
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Dataset ds;
  ds.samples = Matrix(dataset.size(), out.size());
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const auto src = dataset.samples.row(n);
    auto dst = ds.samples.row(n);
    for (std::size_t c = 0; c < in.channels; ++c)
      for (std::size_t i = 0; i < out.height; ++i)
        for (std::size_t j = 0; j < out.width; ++j) {
          double s = 0.0;
          for (std::size_t di = 0; di < factor; ++di)
            for (std::size_t dj = 0; dj < factor; ++dj)
              s += src[(c * in.height + i * factor + di) * in.width + j * factor + dj];
          dst[(c * out.height + i) * out.width + j] = s * inv;
        }
  }
  ds.image = out;
  ds.labels = dataset.labels;
  ds.provenance = dataset.provenance;
  ds.provenance["downscale"] = factor;
  return ds;
}

Dataset apply_transform(const Dataset& dataset, const OrthoTransform& w) {
  if (w.dim != dataset.dim()) {
    throw DimensionError("apply_transform: transform dim " + std::to_string(w.dim) + " vs data dim " +
                         std::to_string(dataset.dim()));
  }
  Dataset ds = dataset;
  ds.samples = matmul_transposed(dataset.samples, w.matrix);  // rows x^T W^T
  ds.provenance["transform"] = to_string(w.provenance);
  return ds;
}

Dataset apply_inverse_transform(const Dataset& dataset, const OrthoTransform& w) {
  if (w.dim != dataset.dim()) throw DimensionError("apply_inverse_transform: dimension mismatch");
  Dataset ds = dataset;
  ds.samples = dataset.samples * w.matrix;  // rows x^T W
  ds.provenance["inverse_transform"] = to_string(w.provenance);
  return ds;
}

Dataset slice(const Dataset& dataset, std::size_t begin, std::size_t end) {
  if (begin > end || end > dataset.size()) throw DimensionError("slice: bad row range");
  Dataset ds;
  const std::size_t d = dataset.dim();
  std::vector<double> rows(dataset.samples.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           dataset.samples.data().begin() + static_cast<std::ptrdiff_t>(end * d));
  ds.samples = Matrix(end - begin, d, std::move(rows));
  ds.image = dataset.image;
  if (!dataset.labels.empty())
    ds.labels.assign(dataset.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                     dataset.labels.begin() + static_cast<std::ptrdiff_t>(end));
  ds.provenance = dataset.provenance;
  ds.provenance["rows"] = {begin, end};
  return ds;
}

DatasetSplit split(const Dataset& dataset, std::size_t n_train) {
  if (n_train > dataset.size()) throw DimensionError("split: more training rows than samples");
  return {slice(dataset, 0, n_train), slice(dataset, n_train, dataset.size())};
}

void export_dataset(const Dataset& dataset, const std::string& csv_path) {
  write_csv(csv_path, dataset.samples);
  std::ofstream side(csv_path + ".json");
  if (!side) throw Error("export_dataset: cannot open " + csv_path + ".json");
  nlohmann::json j = {{"n", dataset.size()}, {"dim", dataset.dim()}, {"provenance", dataset.provenance}};
  if (dataset.image) j["image"] = {dataset.image->channels, dataset.image->height, dataset.image->width};
  side << j.dump(2) << '\n';
}

}  // namespace sad
