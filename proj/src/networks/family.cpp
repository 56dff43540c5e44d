#include "sad/networks/family.hpp"

#include <array>
#include <cmath>
#include <string>

#include "internal.hpp"
#include "sad/error.hpp"
#include "sad/numerics/blas.hpp"

namespace sad {

namespace {

template <typename T>
struct Named {
  T value;
  std::string_view name;
};

constexpr std::array<Named<Activation>, 4> kActivations{{{Activation::identity, "identity"},
                                                         {Activation::silu, "silu"},
                                                         {Activation::relu, "relu"},
                                                         {Activation::tanh, "tanh"}}};
constexpr std::array<Named<Resample>, 2> kResamples{{{Resample::nearest, "nearest"}, {Resample::area, "area"}}};
constexpr std::array<Named<Padding>, 2> kPaddings{{{Padding::zero, "zero"}, {Padding::circular, "circular"}}};

template <typename T, std::size_t N>
std::string_view name_of(const std::array<Named<T>, N>& table, T v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename T, std::size_t N>
T parse_named(const std::array<Named<T>, N>& table, std::string_view label, const char* what) {
  for (const auto& e : table)
    if (e.name == label) return e.value;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(label) + "'");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

nlohmann::json image_json(const ImageShape& s) {
  return {{"channels", s.channels}, {"height", s.height}, {"width", s.width}};
}

struct LinearCache final : detail::ForwardCache {
  Matrix x;
};

Matrix forward_linear(const LinearSpec& spec, const ParamSet& params, const Matrix& x,
                      std::unique_ptr<detail::ForwardCache>* cache) {
  const Tensor& theta = params.at("theta");
  const std::size_t k = spec.phi.cols();
  const std::size_t d = x.cols();
  // Rows: (Phi Theta x)^T = x^T Theta^T Phi^T.
  Matrix tx(x.rows(), k);
  detail::gemm_nt(x.rows(), k, d, x.data().data(), theta.values.data(), tx.data().data());
  Matrix out = matmul_transposed(tx, spec.phi);
  if (cache) {
    auto c = std::make_unique<LinearCache>();
    c->x = x;
    *cache = std::move(c);
  }
  return out;
}

ParamSet backward_linear(const LinearSpec& spec, const ParamSet& params, const LinearCache& cache,
                         const Matrix& cot) {
  ParamSet grad = params.zeros_like();
  // dTheta = sum_b Phi^T c_b x_b^T = (C Phi)^T X.
  const Matrix cp = cot * spec.phi;
  detail::gemm_tn_acc(spec.phi.cols(), cache.x.cols(), cot.rows(), cp.data().data(), cache.x.data().data(),
                      grad.at("theta").values.data());
  return grad;
}

void sample_linear(const LinearSpec& spec, RngStream& stream, ParamSet& params) {
  Tensor& t = params.add_zeros("theta", {spec.phi.cols(), spec.phi.rows()});
  detail::fill_normal(t.values, stream, 0.0, spec.theta_std);
}

bool needs_sigma(const FamilySpec& spec) {
  return std::visit(
      [](const auto& s) -> bool {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          return false;
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          return s.sigma_embedding && s.hidden_layers > 0;
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          return s.sigma_embedding && s.levels > 0;
        } else {
          return s.sigma_embedding;
        }
      },
      spec);
}

}  // namespace

std::string_view to_string(Activation a) { return name_of(kActivations, a); }
std::string_view to_string(Resample r) { return name_of(kResamples, r); }
std::string_view to_string(Padding p) { return name_of(kPaddings, p); }
Activation parse_activation(std::string_view s) { return parse_named(kActivations, s, "activation"); }
Resample parse_resample(std::string_view s) { return parse_named(kResamples, s, "resampling mode"); }
Padding parse_padding(std::string_view s) { return parse_named(kPaddings, s, "padding"); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity:
      return x;
    case Activation::silu:
      return x * sigmoid(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::identity:
      return 1.0;
    case Activation::silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

std::array<double, kEmbeddingSize> sigma_embedding(double sigma) {
  std::array<double, kEmbeddingSize> e{};
  const double s = std::log(sigma);
  for (std::size_t k = 0; k < kEmbeddingFrequencies; ++k) {
    const double w = std::ldexp(1.0, static_cast<int>(k) - 4);
    e[2 * k] = std::sin(w * s);
    e[2 * k + 1] = std::cos(w * s);
  }
  return e;
}

Matrix token_unpatchify_matrix(const TokenLinearSpec& spec) {
  const auto index = detail::token_pixel_index(spec);
  Matrix q(index.size(), index.size());
  for (std::size_t col = 0; col < index.size(); ++col) q(index[col], col) = 1.0;
  return q;
}

NetworkFamily::NetworkFamily(FamilySpec spec) : spec_(std::move(spec)) {
  std::visit(
      [this](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          if (s.phi.empty() || !s.phi.is_square())
            throw ConfigError("linear family: phi must be a non-empty square matrix");
          dim_ = s.phi.rows();
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          if (s.dim == 0) throw ConfigError("mlp family: dim must be positive");
          dim_ = s.dim;
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          if (s.image.size() == 0) throw ConfigError("conv_unet_mini family: empty image shape");
          if (s.levels > 2) throw ConfigError("conv_unet_mini family: levels must be 0, 1 or 2");
          if (s.levels > 0 && s.channels == 0) throw ConfigError("conv_unet_mini family: channels must be positive");
          if (s.levels == 2 && (s.image.height < 2 || s.image.width < 2))
            throw ConfigError("conv_unet_mini family: image too small to downsample");
          dim_ = s.image.size();
        } else {
          if (s.patch == 0 || s.image.size() == 0) throw ConfigError("token_linear family: empty shape or patch");
          if (s.flat) {
            if (s.image.size() % s.patch) throw ConfigError("token_linear family: dim not divisible by token length");
          } else if (s.image.height % s.patch || s.image.width % s.patch) {
            throw ConfigError("token_linear family: image not divisible by patch size");
          }
          dim_ = s.image.size();
        }
      },
      spec_);
}

std::string_view NetworkFamily::kind() const {
  constexpr std::array<std::string_view, 4> names{"linear", "mlp", "conv_unet_mini", "token_linear"};
  return names[spec_.index()];
}

std::optional<ImageShape> NetworkFamily::image() const {
  if (const auto* c = std::get_if<ConvUnetSpec>(&spec_)) return c->image;
  if (const auto* t = std::get_if<TokenLinearSpec>(&spec_); t && !t->flat) return t->image;
  return std::nullopt;
}

nlohmann::json NetworkFamily::describe() const {
  nlohmann::json j = {{"kind", kind()}, {"dim", dim_}};
  std::visit(
      [&j](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          j["theta_std"] = s.theta_std;
          std::vector<double> diag;
          for (std::size_t i = 0; i < s.phi.rows(); ++i) diag.push_back(s.phi(i, i));
          j["phi_diagonal"] = diag;
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          j["hidden_layers"] = s.hidden_layers;
          j["width"] = s.hidden_width();
          j["activation"] = to_string(s.activation);
          j["output_activation"] = to_string(s.output_activation);
          j["sigma_embedding"] = s.sigma_embedding;
          j["weight_gain"] = s.weight_gain;
          j["output_weight_std"] = s.output_weight_std;
          j["output_weight_mean"] = s.output_weight_mean;
          j["bias_mean"] = s.bias_mean;
          j["bias_std"] = s.bias_std;
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          j["image"] = image_json(s.image);
          j["channels"] = s.channels;
          j["levels"] = s.levels;
          j["resample"] = to_string(s.resample);
          j["padding"] = to_string(s.padding);
          j["activation"] = to_string(s.activation);
          j["output_activation"] = to_string(s.output_activation);
          j["sigma_embedding"] = s.sigma_embedding;
          j["symmetric_init"] = s.symmetric_init;
          j["weight_gain"] = s.weight_gain;
          j["output_weight_std"] = s.output_weight_std;
          j["bias_mean"] = s.bias_mean;
          j["bias_std"] = s.bias_std;
        } else {
          j["image"] = image_json(s.image);
          j["patch"] = s.patch;
          j["flat"] = s.flat;
          j["weight_std"] = s.weight_std;
          j["bias_std"] = s.bias_std;
          j["sigma_embedding"] = s.sigma_embedding;
          j["symmetric_init"] = s.symmetric_init;
          j["tokens"] = s.token_count();
          j["token_length"] = s.token_length();
        }
      },
      spec_);
  return j;
}

ParamSet sample_params(const NetworkFamily& family, RngStream& stream) {
  ParamSet params;
  params.seed = stream.master_seed();
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          sample_linear(s, stream, params);
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          detail::sample_mlp(s, stream, params);
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          detail::sample_conv(s, stream, params);
        } else {
          detail::sample_token(s, stream, params);
        }
      },
      family.spec());
  return params;
}

namespace detail {

void check_batch(const NetworkFamily& family, const Matrix& x, std::span<const double> sigma, bool sigma_used) {
  if (x.cols() != family.dim())
    throw DimensionError(std::string(family.kind()) + ": input dimension " + std::to_string(x.cols()) +
                         ", expected " + std::to_string(family.dim()));
  if (sigma.size() != x.rows())
    throw DimensionError(std::string(family.kind()) + ": " + std::to_string(sigma.size()) + " noise levels for " +
                         std::to_string(x.rows()) + " inputs");
  if (sigma_used)
    for (double s : sigma)
      if (!(s > 0.0) || !std::isfinite(s))
        throw PreconditionError(std::string(family.kind()) + ": noise level must be positive and finite");
}

Matrix embed_sigmas(std::span<const double> sigma) {
  Matrix e(sigma.size(), kEmbeddingSize);
  for (std::size_t b = 0; b < sigma.size(); ++b) {
    const auto row = sigma_embedding(sigma[b]);
    std::copy(row.begin(), row.end(), e.row(b).begin());
  }
  return e;
}

void apply_activation(Activation a, std::span<const double> z, std::span<double> out) {
  if (a == Activation::identity) {
    std::copy(z.begin(), z.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(a, z[i]);
}

void multiply_activation_derivative(Activation a, std::span<const double> z, std::span<double> grad) {
  if (a == Activation::identity) return;
  for (std::size_t i = 0; i < z.size(); ++i) grad[i] *= activate_derivative(a, z[i]);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, double beta) {
  gemm(false, true, m, n, k, 1.0, a, k, b, k, beta, c, n);
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm(true, false, m, n, k, 1.0, a, m, b, n, 1.0, c, n);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  gemm(false, false, m, n, k, 1.0, a, k, b, n, 0.0, c, n);
}

void fill_normal(std::span<double> out, RngStream& stream, double mean, double stddev) {
  if (stddev == 0.0) {
    std::fill(out.begin(), out.end(), mean);
    return;
  }
  stream.fill_normal(out);
  for (double& v : out) v = mean + stddev * v;
}

Matrix forward_cached(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                      std::span<const double> sigma, std::unique_ptr<ForwardCache>& cache) {
  check_batch(family, x, sigma, needs_sigma(family.spec()));
  return std::visit(
      [&](const auto& s) -> Matrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          return forward_linear(s, params, x, &cache);
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          return forward_mlp(s, params, x, sigma, &cache);
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          return forward_conv(s, params, x, sigma, &cache);
        } else {
          return forward_token(s, params, x, sigma, &cache);
        }
      },
      family.spec());
}

ParamSet backward_cached(const NetworkFamily& family, const ParamSet& params, const ForwardCache& cache,
                         const Matrix& cotangent) {
  return std::visit(
      [&](const auto& s) -> ParamSet {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          return backward_linear(s, params, static_cast<const LinearCache&>(cache), cotangent);
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          return backward_mlp(s, params, cache, cotangent);
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          return backward_conv(s, params, cache, cotangent);
        } else {
          return backward_token(s, params, cache, cotangent);
        }
      },
      family.spec());
}

}  // namespace detail

Matrix forward_batch(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                     std::span<const double> sigma) {
  detail::check_batch(family, x, sigma, needs_sigma(family.spec()));
  return std::visit(
      [&](const auto& s) -> Matrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          return forward_linear(s, params, x, nullptr);
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          return detail::forward_mlp(s, params, x, sigma, nullptr);
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          return detail::forward_conv(s, params, x, sigma, nullptr);
        } else {
          return detail::forward_token(s, params, x, sigma, nullptr);
        }
      },
      family.spec());
}

ParamSet backward_batch(const NetworkFamily& family, const ParamSet& params, const Matrix& x,
                        std::span<const double> sigma, const Matrix& cotangent) {
  if (cotangent.rows() != x.rows() || cotangent.cols() != family.dim())
    throw DimensionError(std::string(family.kind()) + ": cotangent shape does not match the output");
  std::unique_ptr<detail::ForwardCache> cache;
  detail::forward_cached(family, params, x, sigma, cache);
  return detail::backward_cached(family, params, *cache, cotangent);
}

Vector forward(const NetworkFamily& family, const ParamSet& params, std::span<const double> x, double sigma) {
  const Matrix xm(1, x.size(), Vector(x.begin(), x.end()));
  const Matrix out = forward_batch(family, params, xm, std::span<const double>(&sigma, 1));
  return Vector(out.data().begin(), out.data().end());
}

ParamSet backward(const NetworkFamily& family, const ParamSet& params, std::span<const double> x, double sigma,
                  std::span<const double> cotangent) {
  const Matrix xm(1, x.size(), Vector(x.begin(), x.end()));
  const Matrix cm(1, cotangent.size(), Vector(cotangent.begin(), cotangent.end()));
  return backward_batch(family, params, xm, std::span<const double>(&sigma, 1), cm);
}

ImpulseResponse impulse_response(const NetworkFamily& family, const ParamSet& params, std::size_t row,
                                 std::size_t col, double sigma) {
  const auto image = family.image();
  if (!image) throw PreconditionError(std::string(family.kind()) + ": impulse probe needs an image layout");
  const std::size_t h = image->height;
  const std::size_t w = image->width;
  if (row >= h || col >= w) throw DimensionError("impulse_response: location outside the image");
  const std::size_t plane = h * w;
  Vector x(family.dim(), 0.0);
  for (std::size_t c = 0; c < image->channels; ++c) x[c * plane + row * w + col] = 1.0;

  ImpulseResponse out;
  out.response = forward(family, params, x, sigma);
  out.image = Matrix(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.image(r, c) = out.response[r * w + c];

  double dh = 0.0;
  double dv = 0.0;
  for (std::size_t ch = 0; ch < image->channels; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double v = out.response[ch * plane + r * w + c];
        const double a = v - out.response[ch * plane + (h - 1 - r) * w + c];
        const double b = v - out.response[ch * plane + r * w + (w - 1 - c)];
        dh += a * a;
        dv += b * b;
      }
  out.asymmetry = std::sqrt(dh) + std::sqrt(dv);
  return out;
}

}  // namespace sad
