#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include <json.hpp>

#include "sad/data/dataset.hpp"
#include "sad/networks/params.hpp"
#include "sad/numerics/matrix.hpp"
#include "sad/numerics/rng.hpp"

namespace sad {

enum class Activation { identity, silu, relu, tanh };
enum class Resample { nearest, area };
enum class Padding { zero, circular };

std::string_view to_string(Activation a);
std::string_view to_string(Resample r);
std::string_view to_string(Padding p);
Activation parse_activation(std::string_view s);
Resample parse_resample(std::string_view s);
Padding parse_padding(std::string_view s);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

/// Number of sinusoidal features produced by sigma_embedding.
inline constexpr std::size_t kEmbeddingFrequencies = 8;
inline constexpr std::size_t kEmbeddingSize = 2 * kEmbeddingFrequencies;

/// sin / cos of log(sigma) at geometric frequencies 2^(k-4), k = 0..7.
std::array<double, kEmbeddingSize> sigma_embedding(double sigma);

/// Omega = Phi Theta, evaluated at a fixed noise level (sigma is ignored).
/// The output is a score, not a noise prediction.
struct LinearSpec {
  Matrix phi;
  double theta_std = 1.0;
};

/// x -> [hidden layers] -> output layer. With hidden_layers = 0 the network is
/// the single affine layer z = output_activation(W x + b).
struct MlpSpec {
  std::size_t dim = 0;
  std::size_t hidden_layers = 2;
  /// 0 selects 4 * dim.
  std::size_t width = 0;
  Activation activation = Activation::silu;
  Activation output_activation = Activation::identity;
  bool sigma_embedding = true;
  /// Hidden weights ~ N(0, gain^2 / fan_in); the output layer uses gain 1.
  double weight_gain = 1.4142135623730951;
  double output_weight_std = -1.0;  // < 0 selects 1 / sqrt(fan_in)
  double output_weight_mean = 0.0;
  /// Applied to every bias vector.
  double bias_mean = 0.0;
  double bias_std = 0.0;

  std::size_t hidden_width() const noexcept { return width ? width : 4 * dim; }
};

/// Small convolutional U-Net.
///
/// levels = 2: in_conv, sigma affine, act, encoder conv (skip), downsample,
/// middle conv, upsample, add skip, decoder conv, out_conv.
/// levels = 1: same without the resampling pair.
/// levels = 0: a single 3x3 convolution from image channels to image channels
/// followed by output_activation (the minimal convolutional layer).
struct ConvUnetSpec {
  ImageShape image;
  std::size_t channels = 16;
  std::size_t levels = 2;
  Resample resample = Resample::area;
  Padding padding = Padding::zero;
  Activation activation = Activation::silu;
  Activation output_activation = Activation::identity;
  bool sigma_embedding = true;
  /// Replace every kernel with the average of its four flips after sampling.
  bool symmetric_init = false;
  double weight_gain = 1.4142135623730951;
  double output_weight_std = -1.0;  // < 0 selects 1 / sqrt(fan_in)
  double bias_mean = 0.0;
  double bias_std = 0.0;
};

/// Patchify (patch size p), one shared affine map per token, unpatchify.
/// In flat mode the input is a plain vector of image.size() entries cut into
/// contiguous tokens of length `patch`, so Q = I.
struct TokenLinearSpec {
  ImageShape image;
  std::size_t patch = 1;
  bool flat = false;
  double weight_std = -1.0;  // < 0 selects 1 / sqrt(token_length)
  double bias_std = 0.0;
  bool sigma_embedding = false;
  /// Average the per-token map over the four flips of a patch.
  bool symmetric_init = false;

  std::size_t token_length() const noexcept { return flat ? patch : image.channels * patch * patch; }
  std::size_t token_count() const noexcept {
    return flat ? image.size() / patch : (image.height / patch) * (image.width / patch);
  }
};

/// Column t * L + k of Q is the pixel vector of element k of token t.
Matrix token_unpatchify_matrix(const TokenLinearSpec& spec);

using FamilySpec = std::variant<LinearSpec, MlpSpec, ConvUnetSpec, TokenLinearSpec>;

/// A score-network family: architecture plus parameter distribution.
class NetworkFamily {
 public:
  explicit NetworkFamily(FamilySpec spec);

  const FamilySpec& spec() const noexcept { return spec_; }
  std::string_view kind() const;
  std::size_t dim() const noexcept { return dim_; }
  std::optional<ImageShape> image() const;
  /// The linear family outputs a score at a fixed sigma; the others predict noise.
  bool outputs_score() const noexcept { return std::holds_alternative<LinearSpec>(spec_); }

  nlohmann::json describe() const;

 private:
  FamilySpec spec_;
  std::size_t dim_ = 0;
};

/// Parameters drawn from the family's init scheme; deterministic in stream.
ParamSet sample_params(const NetworkFamily& family, RngStream& stream);

/// Batched forward: row b of the result is F(x_b, sigma_b).
Matrix forward_batch(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                     std::span<const double> sigma);

/// Gradient of sum_b <cotangent_b, F(x_b, sigma_b)> with respect to every parameter.
ParamSet backward_batch(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                        std::span<const double> sigma, const Matrix& cotangent);

/// Forward and backward in one pass; `make_cotangent` maps outputs to cotangents.
template <typename Fn>
ParamSet forward_backward(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                          std::span<const double> sigma, Fn&& make_cotangent);

Vector forward(const NetworkFamily& family, const ParamSet& params, std::span<const double> x, double sigma);
ParamSet backward(const NetworkFamily& family, const ParamSet& params, std::span<const double> x, double sigma,
                  std::span<const double> cotangent);

struct ImpulseResponse {
  Matrix image;  // channel 0 of the response, height x width
  Vector response;
  double asymmetry = 0.0;
};

/// Response to a unit impulse at (row, col) in every channel, evaluated at
/// sigma. asymmetry = ||r - flip_h r|| + ||r - flip_v r|| over all channels.
ImpulseResponse impulse_response(const NetworkFamily& family, const ParamSet& params, std::size_t row,
                                 std::size_t col, double sigma);

namespace detail {

/// Per-family forward state retained for the backward pass.
struct ForwardCache {
  virtual ~ForwardCache() = default;
};

Matrix forward_cached(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                      std::span<const double> sigma, std::unique_ptr<ForwardCache>& cache);
ParamSet backward_cached(const NetworkFamily& family, const ParamSet& params, const ForwardCache& cache,
                         const Matrix& cotangent);

}  // namespace detail

template <typename Fn>
ParamSet forward_backward(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                          std::span<const double> sigma, Fn&& make_cotangent) {
  std::unique_ptr<detail::ForwardCache> cache;
  const Matrix out = detail::forward_cached(family, params, x, sigma, cache);
  const Matrix cot = make_cotangent(out);
  return detail::backward_cached(family, params, *cache, cot);
}

}  // namespace sad
