#include <cmath>
#include <string>

#include "internal.hpp"

namespace sad::detail {

namespace {

struct MlpCache final : ForwardCache {
  Matrix embedding;
  // inputs[k] feeds layer k; pre[k] is its pre-activation. The last entry of
  // each is the output layer.
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

std::string hidden_name(std::size_t k, const char* what) { return "hidden" + std::to_string(k) + "." + what; }

bool uses_embedding(const MlpSpec& spec) { return spec.sigma_embedding && spec.hidden_layers > 0; }

void add_bias(Matrix& z, std::span<const double> bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void accumulate_bias_grad(const Matrix& dz, std::span<double> db) {
  for (std::size_t r = 0; r < dz.rows(); ++r) {
    const auto row = dz.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
  }
}

}  // namespace

void sample_mlp(const MlpSpec& spec, RngStream& stream, ParamSet& params) {
  const std::size_t width = spec.hidden_width();
  std::size_t fan_in = spec.dim;
  for (std::size_t k = 0; k < spec.hidden_layers; ++k) {
    Tensor& w = params.add_zeros(hidden_name(k, "weight"), {width, fan_in});
    fill_normal(w.values, stream, 0.0, spec.weight_gain / std::sqrt(static_cast<double>(fan_in)));
    Tensor& b = params.add_zeros(hidden_name(k, "bias"), {width});
    fill_normal(b.values, stream, spec.bias_mean, spec.bias_std);
    if (k == 0 && uses_embedding(spec)) {
      Tensor& e = params.add_zeros("embed.weight", {width, kEmbeddingSize});
      fill_normal(e.values, stream, 0.0, 1.0 / std::sqrt(static_cast<double>(kEmbeddingSize)));
    }
    fan_in = width;
  }
  const double out_std =
      spec.output_weight_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : spec.output_weight_std;
  Tensor& w = params.add_zeros("out.weight", {spec.dim, fan_in});
  fill_normal(w.values, stream, spec.output_weight_mean, out_std);
  Tensor& b = params.add_zeros("out.bias", {spec.dim});
  fill_normal(b.values, stream, spec.bias_mean, spec.bias_std);
}

Matrix forward_mlp(const MlpSpec& spec, const ParamSet& params, const Matrix& x, std::span<const double> sigma,
                   std::unique_ptr<ForwardCache>* cache) {
  const std::size_t batch = x.rows();
  const std::size_t width = spec.hidden_width();
  auto state = std::make_unique<MlpCache>();
  if (uses_embedding(spec)) state->embedding = embed_sigmas(sigma);

  Matrix a = x;
  for (std::size_t k = 0; k <= spec.hidden_layers; ++k) {
    const bool last = k == spec.hidden_layers;
    const Tensor& w = params.at(last ? std::string("out.weight") : hidden_name(k, "weight"));
    const Tensor& b = params.at(last ? std::string("out.bias") : hidden_name(k, "bias"));
    const std::size_t out_dim = last ? spec.dim : width;
    Matrix z(batch, out_dim);
    gemm_nt(batch, out_dim, a.cols(), a.data().data(), w.values.data(), z.data().data());
    if (k == 0 && uses_embedding(spec)) {
      gemm_nt(batch, out_dim, kEmbeddingSize, state->embedding.data().data(), params.at("embed.weight").values.data(),
              z.data().data(), 1.0);
    }
    add_bias(z, b.values);
    Matrix next(batch, out_dim);
    apply_activation(last ? spec.output_activation : spec.activation, z.data(), next.data());
    if (cache) {
      state->inputs.push_back(std::move(a));
      state->pre.push_back(std::move(z));
    }
    a = std::move(next);
  }
  if (cache) *cache = std::move(state);
  return a;
}

ParamSet backward_mlp(const MlpSpec& spec, const ParamSet& params, const ForwardCache& cache_base,
                      const Matrix& cot) {
  const auto& cache = static_cast<const MlpCache&>(cache_base);
  ParamSet grad = params.zeros_like();
  Matrix da = cot;
  for (std::size_t k = spec.hidden_layers + 1; k-- > 0;) {
    const bool last = k == spec.hidden_layers;
    const std::string wname = last ? std::string("out.weight") : hidden_name(k, "weight");
    const std::string bname = last ? std::string("out.bias") : hidden_name(k, "bias");
    const Matrix& input = cache.inputs[k];
    Matrix dz = std::move(da);
    multiply_activation_derivative(last ? spec.output_activation : spec.activation, cache.pre[k].data(), dz.data());
    const std::size_t out_dim = dz.cols();
    gemm_tn_acc(out_dim, input.cols(), dz.rows(), dz.data().data(), input.data().data(),
                grad.at(wname).values.data());
    accumulate_bias_grad(dz, grad.at(bname).values);
    if (k == 0) {
      if (uses_embedding(spec))
        gemm_tn_acc(out_dim, kEmbeddingSize, dz.rows(), dz.data().data(), cache.embedding.data().data(),
                    grad.at("embed.weight").values.data());
      break;
    }
    da = Matrix(dz.rows(), input.cols());
    gemm_nn(dz.rows(), input.cols(), out_dim, dz.data().data(), params.at(wname).values.data(), da.data().data());
  }
  return grad;
}

}  // namespace sad::detail
