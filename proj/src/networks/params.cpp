#include "sad/networks/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sad/error.hpp"

namespace sad {

namespace {

static_assert(std::endian::native == std::endian::little, "parameter blobs assume a little-endian host");

constexpr char kMagic[4] = {'S', 'A', 'D', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, std::uint64_t& offset) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("read_params: truncated blob", offset);
  offset += sizeof(T);
  return v;
}

void require_same_layout(const ParamSet& a, const ParamSet& b) {
  if (a.tensors().size() != b.tensors().size()) throw DimensionError("ParamSet: tensor count mismatch");
  for (std::size_t i = 0; i < a.tensors().size(); ++i)
    if (a.tensors()[i].shape != b.tensors()[i].shape || a.tensors()[i].name != b.tensors()[i].name)
      throw DimensionError("ParamSet: layout mismatch at '" + a.tensors()[i].name + "'");
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

}  // namespace

Tensor& ParamSet::add(std::string name, std::vector<std::size_t> shape, Vector values) {
  if (shape_size(shape) != values.size()) throw DimensionError("ParamSet::add: '" + name + "' shape/size mismatch");
  if (contains(name)) throw DimensionError("ParamSet::add: duplicate tensor '" + name + "'");
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::move(values)});
  return tensors_.back();
}

Tensor& ParamSet::add_zeros(std::string name, std::vector<std::size_t> shape) {
  const std::size_t n = shape_size(shape);
  return add(std::move(name), std::move(shape), Vector(n, 0.0));
}

Tensor& ParamSet::at(std::string_view name) {
  for (Tensor& t : tensors_)
    if (t.name == name) return t;
  throw DimensionError("ParamSet: no tensor named '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const Tensor& t : tensors_)
    if (t.name == name) return t;
  throw DimensionError("ParamSet: no tensor named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const Tensor& t : tensors_)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  z.seed = seed;
  for (const Tensor& t : tensors_) z.add_zeros(t.name, t.shape);
  return z;
}

void ParamSet::axpy(double a, const ParamSet& x) {
  require_same_layout(*this, x);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    Vector& y = tensors_[i].values;
    const Vector& xv = x.tensors_[i].values;
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * xv[k];
  }
}

void ParamSet::scale(double a) {
  for (Tensor& t : tensors_)
    for (double& v : t.values) v *= a;
}

double ParamSet::dot(const ParamSet& other) const {
  require_same_layout(*this, other);
  double s = 0.0;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    for (std::size_t k = 0; k < tensors_[i].values.size(); ++k)
      s += tensors_[i].values[k] * other.tensors_[i].values[k];
  return s;
}

void write_params(std::ostream& os, const ParamSet& params) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.tensors().size()));
  put<std::uint64_t>(os, params.seed);
  for (const Tensor& t : params.tensors()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!os) throw Error("write_params: stream failure");
}

ParamSet read_params(std::istream& is) {
  std::uint64_t offset = 0;
  char magic[4];
  if (!is.read(magic, 4)) throw ParseError("read_params: truncated blob", offset);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("read_params: bad magic", 0);
  offset += 4;
  const auto version = get<std::uint32_t>(is, offset);
  if (version != kVersion) throw ParseError("read_params: unsupported version " + std::to_string(version), 4);
  const auto count = get<std::uint32_t>(is, offset);
  ParamSet p;
  p.seed = get<std::uint64_t>(is, offset);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, offset);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw ParseError("read_params: truncated name", offset);
    offset += name_len;
    const auto rank = get<std::uint32_t>(is, offset);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is, offset);
    Vector values(shape_size(shape));
    const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(double));
    if (!is.read(reinterpret_cast<char*>(values.data()), bytes)) throw ParseError("read_params: truncated data", offset);
    offset += static_cast<std::uint64_t>(bytes);
    p.add(std::move(name), std::move(shape), std::move(values));
  }
  return p;
}

void save_params(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_params: cannot open " + path);
  write_params(os, params);
}

ParamSet load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_params: cannot open " + path);
  return read_params(is);
}

}  // namespace sad
