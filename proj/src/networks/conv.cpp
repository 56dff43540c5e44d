#include <cmath>
#include <string>

#include "internal.hpp"
#include "sad/error.hpp"

namespace sad::detail {

namespace {

// Activations are stored as (batch * height * width) x channels matrices.
struct Grid {
  std::size_t batch, height, width;
  std::size_t pixels() const noexcept { return batch * height * width; }
};

constexpr std::size_t kTaps = 9;

struct ConvState {
  Matrix cols;  // im2col of the input
  Matrix pre;   // pre-activation output
};

struct ConvCache final : ForwardCache {
  Grid full{};
  Grid half{};
  Matrix embedding;
  Matrix gamma;     // B x C
  Matrix in_raw;    // in_conv output before the sigma affine
  ConvState in, enc, mid, dec, out;
};

// Separable resampling matrix, rows = output positions.
Matrix resample_matrix(std::size_t in, std::size_t out, Resample mode) {
  Matrix r(out, in);
  for (std::size_t i = 0; i < out; ++i) {
    if (mode == Resample::nearest) {
      r(i, i * in / out) = 1.0;
    } else {
      const std::size_t start = i * in / out;
      const std::size_t end = ((i + 1) * in + out - 1) / out;
      const double wgt = 1.0 / static_cast<double>(end - start);
      for (std::size_t j = start; j < end; ++j) r(i, j) = wgt;
    }
  }
  return r;
}

// out[b, i, j, c] = sum_{y, x} rh(i, y) rw(j, x) in[b, y, x, c].
Matrix resample(const Matrix& in, const Grid& g, const Matrix& rh, const Matrix& rw) {
  const std::size_t ch = in.cols();
  const std::size_t ho = rh.rows();
  const std::size_t wo = rw.rows();
  Matrix tmp(g.batch * g.height * wo, ch);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t j = 0; j < wo; ++j) {
        double* dst = tmp.row((b * g.height + y) * wo + j).data();
        for (std::size_t x = 0; x < g.width; ++x) {
          const double wgt = rw(j, x);
          if (wgt == 0.0) continue;
          const double* src = in.row((b * g.height + y) * g.width + x).data();
          for (std::size_t c = 0; c < ch; ++c) dst[c] += wgt * src[c];
        }
      }
  Matrix out(g.batch * ho * wo, ch);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t y = 0; y < g.height; ++y) {
        const double wgt = rh(i, y);
        if (wgt == 0.0) continue;
        for (std::size_t j = 0; j < wo; ++j) {
          double* dst = out.row((b * ho + i) * wo + j).data();
          const double* src = tmp.row((b * g.height + y) * wo + j).data();
          for (std::size_t c = 0; c < ch; ++c) dst[c] += wgt * src[c];
        }
      }
  return out;
}

// Source pixel of tap (dy, dx) at output (y, x), or -1 when it falls in zero padding.
long source_index(const Grid& g, Padding pad, std::size_t b, std::size_t y, std::size_t x, int dy, int dx) {
  long yy = static_cast<long>(y) + dy;
  long xx = static_cast<long>(x) + dx;
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  if (pad == Padding::circular) {
    yy = (yy % h + h) % h;
    xx = (xx % w + w) % w;
  } else if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
    return -1;
  }
  return (static_cast<long>(b) * h + yy) * w + xx;
}

Matrix im2col(const Matrix& in, const Grid& g, Padding pad) {
  const std::size_t cin = in.cols();
  Matrix cols(g.pixels(), kTaps * cin);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        double* dst = cols.row((b * g.height + y) * g.width + x).data();
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const long src = source_index(g, pad, b, y, x, ky - 1, kx - 1);
            if (src < 0) continue;
            const double* s = in.row(static_cast<std::size_t>(src)).data();
            std::copy(s, s + cin, dst + static_cast<std::size_t>(ky * 3 + kx) * cin);
          }
      }
  return cols;
}

Matrix col2im(const Matrix& dcols, const Grid& g, Padding pad, std::size_t cin) {
  Matrix din(g.pixels(), cin);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        const double* src = dcols.row((b * g.height + y) * g.width + x).data();
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const long idx = source_index(g, pad, b, y, x, ky - 1, kx - 1);
            if (idx < 0) continue;
            double* d = din.row(static_cast<std::size_t>(idx)).data();
            const double* s = src + static_cast<std::size_t>(ky * 3 + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) d[c] += s[c];
          }
      }
  return din;
}

// Weight tensor layout: [out][ky][kx][in].
Matrix conv_forward(const Matrix& in, const Grid& g, Padding pad, const ParamSet& params, const std::string& name,
                    ConvState& state) {
  const Tensor& w = params.at(name + ".weight");
  const Tensor& bias = params.at(name + ".bias");
  const std::size_t cout = w.shape[0];
  state.cols = im2col(in, g, pad);
  Matrix out(g.pixels(), cout);
  gemm_nt(g.pixels(), cout, state.cols.cols(), state.cols.data().data(), w.values.data(), out.data().data());
  for (std::size_t p = 0; p < out.rows(); ++p) {
    auto row = out.row(p);
    for (std::size_t c = 0; c < cout; ++c) row[c] += bias.values[c];
  }
  return out;
}

// Accumulates weight/bias gradients; returns the input gradient when requested.
Matrix conv_backward(const Matrix& dout, const Grid& g, Padding pad, const ParamSet& params, ParamSet& grad,
                     const std::string& name, const ConvState& state, bool need_input) {
  const Tensor& w = params.at(name + ".weight");
  const std::size_t cout = w.shape[0];
  const std::size_t k = state.cols.cols();
  gemm_tn_acc(cout, k, dout.rows(), dout.data().data(), state.cols.data().data(),
              grad.at(name + ".weight").values.data());
  auto& db = grad.at(name + ".bias").values;
  for (std::size_t p = 0; p < dout.rows(); ++p) {
    const auto row = dout.row(p);
    for (std::size_t c = 0; c < cout; ++c) db[c] += row[c];
  }
  if (!need_input) return {};
  Matrix dcols(dout.rows(), k);
  gemm_nn(dout.rows(), k, cout, dout.data().data(), w.values.data(), dcols.data().data());
  return col2im(dcols, g, pad, k / kTaps);
}

Matrix activated(Activation a, const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  apply_activation(a, z.data(), out.data());
  return out;
}

Matrix to_pixels(const Matrix& x, const ImageShape& s) {
  const std::size_t plane = s.height * s.width;
  Matrix out(x.rows() * plane, s.channels);
  for (std::size_t b = 0; b < x.rows(); ++b)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) out(b * plane + p, c) = x(b, c * plane + p);
  return out;
}

Matrix from_pixels(const Matrix& y, const ImageShape& s, std::size_t batch) {
  const std::size_t plane = s.height * s.width;
  Matrix out(batch, s.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) out(b, c * plane + p) = y(b * plane + p, c);
  return out;
}

void add_conv(ParamSet& params, RngStream& stream, const std::string& name, std::size_t cout, std::size_t cin,
              double weight_std, double weight_mean, const ConvUnetSpec& spec) {
  Tensor& w = params.add_zeros(name + ".weight", {cout, 3, 3, cin});
  fill_normal(w.values, stream, weight_mean, weight_std);
  if (spec.symmetric_init) {
    const Vector orig = w.values;
    auto at = [&](std::size_t o, std::size_t ky, std::size_t kx, std::size_t i) {
      return orig[((o * 3 + ky) * 3 + kx) * cin + i];
    };
    std::vector<double> orbit(4);
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx)
          for (std::size_t i = 0; i < cin; ++i) {
            orbit = {at(o, ky, kx, i), at(o, 2 - ky, kx, i), at(o, ky, 2 - kx, i), at(o, 2 - ky, 2 - kx, i)};
            w.values[((o * 3 + ky) * 3 + kx) * cin + i] = 0.25 * sorted_sum(orbit);
          }
  }
  Tensor& b = params.add_zeros(name + ".bias", {cout});
  fill_normal(b.values, stream, spec.bias_mean, spec.bias_std);
}

bool uses_embedding(const ConvUnetSpec& spec) { return spec.sigma_embedding && spec.levels > 0; }

}  // namespace

void sample_conv(const ConvUnetSpec& spec, RngStream& stream, ParamSet& params) {
  const std::size_t cimg = spec.image.channels;
  const std::size_t c = spec.channels;
  auto hidden_std = [&](std::size_t cin) { return spec.weight_gain / std::sqrt(static_cast<double>(kTaps * cin)); };
  auto out_std = [&](std::size_t cin) {
    return spec.output_weight_std < 0.0 ? 1.0 / std::sqrt(static_cast<double>(kTaps * cin)) : spec.output_weight_std;
  };
  if (spec.levels == 0) {
    add_conv(params, stream, "out", cimg, cimg, out_std(cimg), 0.0, spec);
    return;
  }
  add_conv(params, stream, "in", c, cimg, hidden_std(cimg), 0.0, spec);
  if (uses_embedding(spec)) {
    const double es = 1.0 / std::sqrt(static_cast<double>(kEmbeddingSize));
    Tensor& g = params.add_zeros("embed.gamma", {c, kEmbeddingSize});
    fill_normal(g.values, stream, 0.0, es);
    Tensor& b = params.add_zeros("embed.beta", {c, kEmbeddingSize});
    fill_normal(b.values, stream, 0.0, es);
  }
  add_conv(params, stream, "enc", c, c, hidden_std(c), 0.0, spec);
  add_conv(params, stream, "mid", c, c, hidden_std(c), 0.0, spec);
  add_conv(params, stream, "dec", c, c, hidden_std(c), 0.0, spec);
  add_conv(params, stream, "out", cimg, c, out_std(c), 0.0, spec);
}

Matrix forward_conv(const ConvUnetSpec& spec, const ParamSet& params, const Matrix& x, std::span<const double> sigma,
                    std::unique_ptr<ForwardCache>* cache) {
  auto st = std::make_unique<ConvCache>();
  const std::size_t batch = x.rows();
  st->full = {batch, spec.image.height, spec.image.width};
  const Grid& full = st->full;
  const Matrix px = to_pixels(x, spec.image);

  if (spec.levels == 0) {
    st->out.pre = conv_forward(px, full, spec.padding, params, "out", st->out);
    Matrix y = activated(spec.output_activation, st->out.pre);
    if (cache) *cache = std::move(st);
    return from_pixels(y, spec.image, batch);
  }

  const std::size_t c = spec.channels;
  Matrix h0 = conv_forward(px, full, spec.padding, params, "in", st->in);
  if (uses_embedding(spec)) {
    st->embedding = embed_sigmas(sigma);
    st->gamma = Matrix(batch, c);
    Matrix beta(batch, c);
    gemm_nt(batch, c, kEmbeddingSize, st->embedding.data().data(), params.at("embed.gamma").values.data(),
            st->gamma.data().data());
    gemm_nt(batch, c, kEmbeddingSize, st->embedding.data().data(), params.at("embed.beta").values.data(),
            beta.data().data());
    st->in_raw = h0;
    const std::size_t plane = full.height * full.width;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        auto row = h0.row(b * plane + p);
        for (std::size_t k = 0; k < c; ++k) row[k] = row[k] * (1.0 + st->gamma(b, k)) + beta(b, k);
      }
  }
  st->in.pre = std::move(h0);
  const Matrix a0 = activated(spec.activation, st->in.pre);
  st->enc.pre = conv_forward(a0, full, spec.padding, params, "enc", st->enc);
  const Matrix a1 = activated(spec.activation, st->enc.pre);

  Matrix u;
  if (spec.levels == 2) {
    st->half = {batch, spec.image.height / 2, spec.image.width / 2};
    const Matrix d = resample(a1, full, resample_matrix(full.height, st->half.height, spec.resample),
                              resample_matrix(full.width, st->half.width, spec.resample));
    st->mid.pre = conv_forward(d, st->half, spec.padding, params, "mid", st->mid);
    const Matrix a2 = activated(spec.activation, st->mid.pre);
    u = resample(a2, st->half, resample_matrix(st->half.height, full.height, spec.resample),
                 resample_matrix(st->half.width, full.width, spec.resample));
  } else {
    st->mid.pre = conv_forward(a1, full, spec.padding, params, "mid", st->mid);
    u = activated(spec.activation, st->mid.pre);
  }
  u += a1;
  st->dec.pre = conv_forward(u, full, spec.padding, params, "dec", st->dec);
  const Matrix a4 = activated(spec.activation, st->dec.pre);
  st->out.pre = conv_forward(a4, full, spec.padding, params, "out", st->out);
  Matrix y = activated(spec.output_activation, st->out.pre);
  if (cache) *cache = std::move(st);
  return from_pixels(y, spec.image, batch);
}

ParamSet backward_conv(const ConvUnetSpec& spec, const ParamSet& params, const ForwardCache& cache_base,
                       const Matrix& cot) {
  const auto& st = static_cast<const ConvCache&>(cache_base);
  ParamSet grad = params.zeros_like();
  const Grid& full = st.full;
  Matrix dz = to_pixels(cot, spec.image);
  multiply_activation_derivative(spec.output_activation, st.out.pre.data(), dz.data());

  if (spec.levels == 0) {
    conv_backward(dz, full, spec.padding, params, grad, "out", st.out, false);
    return grad;
  }

  Matrix da4 = conv_backward(dz, full, spec.padding, params, grad, "out", st.out, true);
  multiply_activation_derivative(spec.activation, st.dec.pre.data(), da4.data());
  const Matrix du = conv_backward(da4, full, spec.padding, params, grad, "dec", st.dec, true);

  Matrix da1 = du;
  if (spec.levels == 2) {
    const Grid& half = st.half;
    // Adjoint of upsampling is resampling with the transposed matrices.
    Matrix da2 = resample(du, full, resample_matrix(half.height, full.height, spec.resample).transpose(),
                          resample_matrix(half.width, full.width, spec.resample).transpose());
    multiply_activation_derivative(spec.activation, st.mid.pre.data(), da2.data());
    const Matrix dd = conv_backward(da2, half, spec.padding, params, grad, "mid", st.mid, true);
    da1 += resample(dd, half, resample_matrix(full.height, half.height, spec.resample).transpose(),
                    resample_matrix(full.width, half.width, spec.resample).transpose());
  } else {
    Matrix da2 = du;
    multiply_activation_derivative(spec.activation, st.mid.pre.data(), da2.data());
    da1 += conv_backward(da2, full, spec.padding, params, grad, "mid", st.mid, true);
  }
  multiply_activation_derivative(spec.activation, st.enc.pre.data(), da1.data());
  Matrix dh0 = conv_backward(da1, full, spec.padding, params, grad, "enc", st.enc, true);
  multiply_activation_derivative(spec.activation, st.in.pre.data(), dh0.data());

  if (uses_embedding(spec)) {
    const std::size_t c = spec.channels;
    const std::size_t batch = full.batch;
    const std::size_t plane = full.height * full.width;
    Matrix dgamma(batch, c);
    Matrix dbeta(batch, c);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        auto row = dh0.row(b * plane + p);
        const auto raw = st.in_raw.row(b * plane + p);
        for (std::size_t k = 0; k < c; ++k) {
          dgamma(b, k) += row[k] * raw[k];
          dbeta(b, k) += row[k];
          row[k] *= 1.0 + st.gamma(b, k);
        }
      }
    gemm_tn_acc(c, kEmbeddingSize, batch, dgamma.data().data(), st.embedding.data().data(),
                grad.at("embed.gamma").values.data());
    gemm_tn_acc(c, kEmbeddingSize, batch, dbeta.data().data(), st.embedding.data().data(),
                grad.at("embed.beta").values.data());
  }
  conv_backward(dh0, full, spec.padding, params, grad, "in", st.in, false);
  return grad;
}

}  // namespace sad::detail
