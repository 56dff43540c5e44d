#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sad/numerics/matrix.hpp"

namespace sad {

/// Named dense tensor stored row-major.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  Vector values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered collection of named parameter tensors. Gradients share the layout
/// of the parameters they differentiate.
class ParamSet {
 public:
  ParamSet() = default;

  Tensor& add(std::string name, std::vector<std::size_t> shape, Vector values);
  Tensor& add_zeros(std::string name, std::vector<std::size_t> shape);

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Tensor>& tensors() noexcept { return tensors_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

  std::size_t total_size() const;
  bool all_finite() const;

  ParamSet zeros_like() const;
  /// this += a * x (layouts must match).
  void axpy(double a, const ParamSet& x);
  void scale(double a);
  double dot(const ParamSet& other) const;

  std::uint64_t seed = 0;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Tensor> tensors_;
};

/// Binary blob, little endian: "SADP", u32 version, u32 tensor count, u64
/// seed, then per tensor u32 name length, name bytes, u32 rank, u64 dims and
/// f64 values.
void write_params(std::ostream& os, const ParamSet& params);
ParamSet read_params(std::istream& is);
void save_params(const std::string& path, const ParamSet& params);
ParamSet load_params(const std::string& path);

}  // namespace sad
