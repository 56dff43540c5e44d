#include <algorithm>
#include <cmath>
#include <numeric>

#include "internal.hpp"

namespace sad::detail {

namespace {

struct TokenCache final : ForwardCache {
  Matrix tokens;     // (B * T) x L
  Matrix embedding;  // B x kEmbeddingSize
};

// Permutations of token elements induced by flipping a patch.
std::vector<std::vector<std::size_t>> flip_permutations(const TokenLinearSpec& spec) {
  const std::size_t l = spec.token_length();
  std::vector<std::vector<std::size_t>> perms;
  if (spec.flat) {
    std::vector<std::size_t> id(l);
    std::vector<std::size_t> rev(l);
    for (std::size_t k = 0; k < l; ++k) {
      id[k] = k;
      rev[k] = l - 1 - k;
    }
    perms = {id, rev};
    return perms;
  }
  const std::size_t p = spec.patch;
  for (int flip = 0; flip < 4; ++flip) {
    std::vector<std::size_t> perm(l);
    for (std::size_t k = 0; k < l; ++k) {
      const std::size_t c = k / (p * p);
      std::size_t dy = (k / p) % p;
      std::size_t dx = k % p;
      if (flip & 1) dy = p - 1 - dy;
      if (flip & 2) dx = p - 1 - dx;
      perm[k] = c * p * p + dy * p + dx;
    }
    perms.push_back(std::move(perm));
  }
  return perms;
}

}  // namespace

double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::vector<std::size_t> token_pixel_index(const TokenLinearSpec& spec) {
  const std::size_t d = spec.image.size();
  std::vector<std::size_t> index(d);
  if (spec.flat) {
    std::iota(index.begin(), index.end(), std::size_t{0});
    return index;
  }
  const std::size_t p = spec.patch;
  const std::size_t l = spec.token_length();
  const std::size_t h = spec.image.height;
  const std::size_t w = spec.image.width;
  const std::size_t pw = w / p;
  for (std::size_t tok = 0; tok < spec.token_count(); ++tok)
    for (std::size_t k = 0; k < l; ++k) {
      const std::size_t c = k / (p * p);
      const std::size_t dy = (k / p) % p;
      const std::size_t dx = k % p;
      index[tok * l + k] = c * h * w + ((tok / pw) * p + dy) * w + (tok % pw) * p + dx;
    }
  return index;
}

void sample_token(const TokenLinearSpec& spec, RngStream& stream, ParamSet& params) {
  const std::size_t l = spec.token_length();
  const double wstd = spec.weight_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(l)) : spec.weight_std;
  Tensor& w = params.add_zeros("weight", {l, l});
  fill_normal(w.values, stream, 0.0, wstd);
  Tensor& b = params.add_zeros("bias", {l});
  fill_normal(b.values, stream, 0.0, spec.bias_std);
  if (spec.symmetric_init) {
    // Orbit members are summed in sorted order so that they come out bitwise equal.
    const auto perms = flip_permutations(spec);
    const double inv = 1.0 / static_cast<double>(perms.size());
    const Vector w0 = w.values;
    const Vector b0 = b.values;
    std::vector<double> orbit(perms.size());
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t k = 0; k < perms.size(); ++k) orbit[k] = b0[perms[k][i]];
      b.values[i] = inv * sorted_sum(orbit);
      for (std::size_t j = 0; j < l; ++j) {
        for (std::size_t k = 0; k < perms.size(); ++k) orbit[k] = w0[perms[k][i] * l + perms[k][j]];
        w.values[i * l + j] = inv * sorted_sum(orbit);
      }
    }
  }
  if (spec.sigma_embedding) {
    Tensor& e = params.add_zeros("embed.weight", {l, kEmbeddingSize});
    fill_normal(e.values, stream, 0.0, 1.0 / std::sqrt(static_cast<double>(kEmbeddingSize)));
  }
}

Matrix forward_token(const TokenLinearSpec& spec, const ParamSet& params, const Matrix& x,
                     std::span<const double> sigma, std::unique_ptr<ForwardCache>* cache) {
  const std::size_t batch = x.rows();
  const std::size_t l = spec.token_length();
  const std::size_t t = spec.token_count();
  const auto index = token_pixel_index(spec);

  auto st = std::make_unique<TokenCache>();
  st->tokens = Matrix(batch * t, l);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < t * l; ++i) st->tokens.data()[b * t * l + i] = x(b, index[i]);

  Matrix y(batch * t, l);
  gemm_nt(batch * t, l, l, st->tokens.data().data(), params.at("weight").values.data(), y.data().data());
  const auto& bias = params.at("bias").values;
  Matrix shift;
  if (spec.sigma_embedding) {
    st->embedding = embed_sigmas(sigma);
    shift = Matrix(batch, l);
    gemm_nt(batch, l, kEmbeddingSize, st->embedding.data().data(), params.at("embed.weight").values.data(),
            shift.data().data());
  }
  Matrix out(batch, x.cols());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t tok = 0; tok < t; ++tok)
      for (std::size_t k = 0; k < l; ++k) {
        double v = y(b * t + tok, k) + bias[k];
        if (spec.sigma_embedding) v += shift(b, k);
        out(b, index[tok * l + k]) = v;
      }
  if (cache) *cache = std::move(st);
  return out;
}

ParamSet backward_token(const TokenLinearSpec& spec, const ParamSet& params, const ForwardCache& cache_base,
                        const Matrix& cot) {
  const auto& st = static_cast<const TokenCache&>(cache_base);
  const std::size_t batch = cot.rows();
  const std::size_t l = spec.token_length();
  const std::size_t t = spec.token_count();
  const auto index = token_pixel_index(spec);
  ParamSet grad = params.zeros_like();

  Matrix dy(batch * t, l);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < t * l; ++i) dy.data()[b * t * l + i] = cot(b, index[i]);

  gemm_tn_acc(l, l, batch * t, dy.data().data(), st.tokens.data().data(), grad.at("weight").values.data());
  auto& db = grad.at("bias").values;
  Matrix dshift(batch, l);
  for (std::size_t r = 0; r < dy.rows(); ++r)
    for (std::size_t k = 0; k < l; ++k) {
      db[k] += dy(r, k);
      dshift(r / t, k) += dy(r, k);
    }
  if (spec.sigma_embedding)
    gemm_tn_acc(l, kEmbeddingSize, batch, dshift.data().data(), st.embedding.data().data(),
                grad.at("embed.weight").values.data());
  return grad;
}

}  // namespace sad::detail
