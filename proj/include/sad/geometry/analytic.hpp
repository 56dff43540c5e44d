#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "sad/data/dataset.hpp"
#include "sad/geometry/probe.hpp"
#include "sad/networks/family.hpp"
#include "sad/numerics/matrix.hpp"

namespace sad {

enum class AnalyticKind { mlp_last_layer, conv_last_layer, token_linear };

std::string_view to_string(AnalyticKind k);
/// Throws ConfigError for unknown labels.
AnalyticKind parse_analytic_kind(std::string_view label);

/// A point of the input law h of the last layer, summarized by sum(h) and
/// ||h||^2, with a probability weight.
struct HiddenNode {
  double sum = 0.0;
  double norm2 = 0.0;
  double weight = 1.0;
};

/// Single deterministic input h.
std::vector<HiddenNode> hidden_nodes_point(std::span<const double> h);
/// h ~ N(0, s^2 I_n), by product quadrature over sum(h) and the orthogonal part.
std::vector<HiddenNode> hidden_nodes_isotropic(std::size_t n, double s, std::size_t order = 48);

/// Last layer z = phi(W h + b) with W_ij ~ N(m_w, s_w^2) and b_i ~ N(m_b, s_b^2),
/// all independent.
struct MlpLastLayer {
  std::size_t dim = 0;
  Activation activation = Activation::identity;
  double weight_mean = 0.0;
  double weight_std = 1.0;
  double bias_mean = 0.0;
  double bias_std = 0.0;
  std::vector<HiddenNode> hidden;
};

struct MlpGeometryCoefficients {
  double alpha = 0.0;  // E_h Var(phi(a) | h)
  double beta = 0.0;   // E_h (E[phi(a) | h])^2
};

MlpGeometryCoefficients mlp_geometry_coefficients(const MlpLastLayer& spec);
/// alpha I + beta 1 1^T.
Matrix mlp_last_layer_geometry(const MlpLastLayer& spec);

/// E[phi(a)] and E[phi(a)^2] for a ~ N(mean, sd^2).
std::pair<double, double> activation_moments(Activation a, double mean, double sd);

/// 3x3 convolution with identity activation, zero-mean iid weights of
/// standard deviation weight_std, and one bias per output channel.
struct ConvLastLayer {
  ImageShape input;
  std::size_t out_channels = 1;
  Padding padding = Padding::zero;
  double weight_std = 1.0;
  double bias_mean = 0.0;
  double bias_std = 0.0;
  /// E[h h^T] of the input, channel-major flattening.
  Matrix input_moment;
};

/// Blocks A (within channel) and B (across channels).
struct ConvGeometryBlocks {
  Matrix a;
  Matrix b;
};

ConvGeometryBlocks conv_geometry_blocks(const ConvLastLayer& spec);
/// I_C (x) A + 1 1^T (x) B.
Matrix conv_last_layer_geometry(const ConvLastLayer& spec);

enum class BiasCoupling { shared, per_token };

/// Shared per-token affine map y_t = W h_t + b with iid zero-mean W entries of
/// variance weight_var and bias entries of variance bias_var.
struct TokenLinearGeometry {
  /// T x T Gram matrix K_ts = E[h_t^T h_s].
  Matrix token_gram;
  std::size_t token_length = 1;
  double weight_var = 1.0;
  double bias_var = 0.0;
  /// shared: one bias for all tokens (the token_linear family); per_token: independent biases.
  BiasCoupling coupling = BiasCoupling::shared;
  /// Unpatchify matrix; empty means identity.
  Matrix q;
};

/// Q [(weight_var K + bias_var J) (x) I_L] Q^T, J = 1 1^T (shared) or I (per token).
Matrix token_linear_geometry(const TokenLinearGeometry& spec);

/// Token Gram matrix from the pixel-space input moment.
Matrix token_gram(const TokenLinearSpec& spec, const Matrix& input_moment);

/// Linear family Omega = Phi Theta with iid N(0, theta_std^2) entries:
/// theta_std^2 tr(M) Phi Phi^T.
Matrix linear_geometry(const Matrix& phi, double theta_std, const Matrix& input_moment);

/// Structural geometry of a family under a probe: mlp (hidden_layers = 0;
/// delta_zero or isotropic probe), conv_unet_mini (levels = 0, identity
/// output), token_linear (no sigma embedding) and linear. Throws
/// PreconditionError when the family has no closed form here.
Matrix analytic_family_geometry(const NetworkFamily& family, const ProbeDistribution& probe);

}  // namespace sad
