#include "sad/geometry/analytic.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sad/error.hpp"
#include "sad/numerics/quadrature.hpp"

namespace sad {

namespace {

constexpr std::array<std::pair<AnalyticKind, std::string_view>, 3> kAnalyticNames{{
    {AnalyticKind::mlp_last_layer, "mlp_last_layer"},
    {AnalyticKind::conv_last_layer, "conv_last_layer"},
    {AnalyticKind::token_linear, "token_linear"},
}};

const Quadrature& hermite_rule() {
  static const Quadrature q = gauss_hermite(96);
  return q;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

std::string_view to_string(AnalyticKind k) {
  for (const auto& [kind, name] : kAnalyticNames)
    if (kind == k) return name;
  return "?";
}

AnalyticKind parse_analytic_kind(std::string_view label) {
  for (const auto& [kind, name] : kAnalyticNames)
    if (name == label) return kind;
  throw ConfigError("unknown analytic geometry kind '" + std::string(label) + "'");
}

std::vector<HiddenNode> hidden_nodes_point(std::span<const double> h) {
  double s = 0.0;
  for (double v : h) s += v;
  return {HiddenNode{s, dot(h, h), 1.0}};
}

std::vector<HiddenNode> hidden_nodes_isotropic(std::size_t n, double s, std::size_t order) {
  if (n == 0) throw PreconditionError("hidden_nodes_isotropic: empty input");
  // sum(h) = s sqrt(n) g and ||h||^2 = sum(h)^2 / n + s^2 q with q ~ chi^2_{n-1}, independent.
  const Quadrature gh = gauss_hermite(order);
  std::vector<HiddenNode> nodes;
  const double rn = std::sqrt(static_cast<double>(n));
  if (n == 1) {
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      const double sum = s * gh.nodes[i];
      nodes.push_back({sum, sum * sum, gh.weights[i]});
    }
    return nodes;
  }
  const Quadrature chi = gauss_chi_squared(n - 1, order);
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    const double sum = s * rn * gh.nodes[i];
    for (std::size_t j = 0; j < chi.nodes.size(); ++j)
      nodes.push_back({sum, sum * sum / static_cast<double>(n) + s * s * chi.nodes[j], gh.weights[i] * chi.weights[j]});
  }
  return nodes;
}

std::pair<double, double> activation_moments(Activation a, double mean, double sd) {
  if (sd <= 0.0) {
    const double v = activate(a, mean);
    return {v, v * v};
  }
  switch (a) {
    case Activation::identity:
      return {mean, mean * mean + sd * sd};
    case Activation::relu: {
      const double z = mean / sd;
      const double cdf = normal_cdf(z);
      const double pdf = normal_pdf(z);
      return {mean * cdf + sd * pdf, (mean * mean + sd * sd) * cdf + mean * sd * pdf};
    }
    default: {
      const Quadrature& q = hermite_rule();
      double m1 = 0.0;
      double m2 = 0.0;
      for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const double v = activate(a, mean + sd * q.nodes[i]);
        m1 += q.weights[i] * v;
        m2 += q.weights[i] * v * v;
      }
      return {m1, m2};
    }
  }
}

MlpGeometryCoefficients mlp_geometry_coefficients(const MlpLastLayer& spec) {
  if (spec.hidden.empty()) throw PreconditionError("mlp_geometry_coefficients: empty input law");
  MlpGeometryCoefficients c;
  double total = 0.0;
  for (const HiddenNode& h : spec.hidden) {
    // a | h ~ N(m_w sum(h) + m_b, s_w^2 ||h||^2 + s_b^2).
    const double mean = spec.weight_mean * h.sum + spec.bias_mean;
    const double var = spec.weight_std * spec.weight_std * h.norm2 + spec.bias_std * spec.bias_std;
    const auto [m1, m2] = activation_moments(spec.activation, mean, std::sqrt(var));
    c.alpha += h.weight * (m2 - m1 * m1);
    c.beta += h.weight * m1 * m1;
    total += h.weight;
  }
  c.alpha /= total;
  c.beta /= total;
  return c;
}

Matrix mlp_last_layer_geometry(const MlpLastLayer& spec) {
  const MlpGeometryCoefficients c = mlp_geometry_coefficients(spec);
  Matrix g(spec.dim, spec.dim, c.beta);
  for (std::size_t i = 0; i < spec.dim; ++i) g(i, i) += c.alpha;
  return g;
}

ConvGeometryBlocks conv_geometry_blocks(const ConvLastLayer& spec) {
  const std::size_t h = spec.input.height;
  const std::size_t w = spec.input.width;
  const std::size_t plane = h * w;
  const std::size_t din = spec.input.size();
  if (spec.input_moment.rows() != din || spec.input_moment.cols() != din)
    throw DimensionError("conv_geometry_blocks: input moment must be " + std::to_string(din) + "x" +
                         std::to_string(din));
  const Matrix& m = spec.input_moment;
  // Input pixel read by tap (dy, dx) at output pixel p, or -1 in zero padding.
  auto tap = [&](std::size_t p, int dy, int dx) -> long {
    long y = static_cast<long>(p / w) + dy;
    long x = static_cast<long>(p % w) + dx;
    const long hh = static_cast<long>(h);
    const long ww = static_cast<long>(w);
    if (spec.padding == Padding::circular) {
      y = (y % hh + hh) % hh;
      x = (x % ww + ww) % ww;
    } else if (y < 0 || y >= hh || x < 0 || x >= ww) {
      return -1;
    }
    return y * ww + x;
  };
  ConvGeometryBlocks out{Matrix(plane, plane), Matrix(plane, plane, spec.bias_mean * spec.bias_mean)};
  const double sw2 = spec.weight_std * spec.weight_std;
  const double sb2 = spec.bias_std * spec.bias_std;
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t q = 0; q < plane; ++q) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long a = tap(p, dy, dx);
          const long b = tap(q, dy, dx);
          if (a < 0 || b < 0) continue;
          for (std::size_t c = 0; c < spec.input.channels; ++c)
            acc += m(c * plane + static_cast<std::size_t>(a), c * plane + static_cast<std::size_t>(b));
        }
      out.a(p, q) = sw2 * acc + sb2;
    }
  return out;
}

Matrix conv_last_layer_geometry(const ConvLastLayer& spec) {
  const ConvGeometryBlocks blocks = conv_geometry_blocks(spec);
  const std::size_t c = spec.out_channels;
  return kron(Matrix::identity(c), blocks.a) + kron(Matrix(c, c, 1.0), blocks.b);
}

Matrix token_linear_geometry(const TokenLinearGeometry& spec) {
  const std::size_t t = spec.token_gram.rows();
  if (!spec.token_gram.is_square()) throw DimensionError("token_linear_geometry: token Gram must be square");
  Matrix inner = spec.token_gram * spec.weight_var;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j)
      if (spec.coupling == BiasCoupling::shared || i == j) inner(i, j) += spec.bias_var;
  Matrix g = kron(inner, Matrix::identity(spec.token_length));
  if (spec.q.empty()) return g;
  if (spec.q.rows() != g.rows() || spec.q.cols() != g.cols())
    throw DimensionError("token_linear_geometry: Q does not match T * L");
  return spec.q * matmul_transposed(g, spec.q);
}

Matrix token_gram(const TokenLinearSpec& spec, const Matrix& input_moment) {
  const Matrix q = token_unpatchify_matrix(spec);
  if (input_moment.rows() != q.rows() || !input_moment.is_square())
    throw DimensionError("token_gram: input moment does not match the image");
  // Token-space moment Q^T M Q, then trace over the element index.
  const Matrix mt = transposed_matmul(q, input_moment * q);
  const std::size_t l = spec.token_length();
  const std::size_t t = spec.token_count();
  Matrix k(t, t);
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t e = 0; e < l; ++e) k(a, b) += mt(a * l + e, b * l + e);
  return k;
}

Matrix linear_geometry(const Matrix& phi, double theta_std, const Matrix& input_moment) {
  return matmul_transposed(phi, phi) * (theta_std * theta_std * input_moment.trace());
}

Matrix analytic_family_geometry(const NetworkFamily& family, const ProbeDistribution& probe) {
  const std::size_t d = family.dim();
  return std::visit(
      [&](const auto& s) -> Matrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, LinearSpec>) {
          return linear_geometry(s.phi, s.theta_std, probe.second_moment(d));
        } else if constexpr (std::is_same_v<S, MlpSpec>) {
          if (s.hidden_layers != 0)
            throw PreconditionError("analytic geometry: mlp needs hidden_layers = 0 (the last layer sees the probe)");
          MlpLastLayer last;
          last.dim = d;
          last.activation = s.output_activation;
          last.weight_mean = s.output_weight_mean;
          last.weight_std = s.output_weight_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(d)) : s.output_weight_std;
          last.bias_mean = s.bias_mean;
          last.bias_std = s.bias_std;
          if (probe.kind == ProbeKind::delta_zero) {
            last.hidden = hidden_nodes_point(Vector(d, 0.0));
          } else if (probe.kind == ProbeKind::isotropic_gaussian) {
            last.hidden = hidden_nodes_isotropic(d, probe.sigma_p);
          } else {
            throw PreconditionError("analytic geometry: mlp needs a delta_zero or isotropic probe");
          }
          return mlp_last_layer_geometry(last);
        } else if constexpr (std::is_same_v<S, ConvUnetSpec>) {
          if (s.levels != 0 || s.output_activation != Activation::identity || s.symmetric_init)
            throw PreconditionError(
                "analytic geometry: conv needs levels = 0, identity output and independent kernel entries");
          ConvLastLayer last;
          last.input = s.image;
          last.out_channels = s.image.channels;
          last.padding = s.padding;
          last.weight_std = s.output_weight_std < 0.0 ? 1.0 / std::sqrt(9.0 * static_cast<double>(s.image.channels))
                                                      : s.output_weight_std;
          last.bias_mean = s.bias_mean;
          last.bias_std = s.bias_std;
          last.input_moment = probe.second_moment(d);
          return conv_last_layer_geometry(last);
        } else {
          if (s.sigma_embedding || s.symmetric_init)
            throw PreconditionError("analytic geometry: token_linear needs iid weights and no sigma embedding");
          TokenLinearGeometry tg;
          tg.token_gram = token_gram(s, probe.second_moment(d));
          tg.token_length = s.token_length();
          const double ws = s.weight_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(s.token_length())) : s.weight_std;
          tg.weight_var = ws * ws;
          tg.bias_var = s.bias_std * s.bias_std;
          tg.coupling = BiasCoupling::shared;
          tg.q = token_unpatchify_matrix(s);
          return token_linear_geometry(tg);
        }
      },
      family.spec());
}

}  // namespace sad
