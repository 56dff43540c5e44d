#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "sad/networks/family.hpp"

namespace sad::detail {

void check_batch(const NetworkFamily& family, const Matrix& x, std::span<const double> sigma, bool needs_sigma);

/// B x kEmbeddingSize matrix of sigma embeddings.
Matrix embed_sigmas(std::span<const double> sigma);

void apply_activation(Activation a, std::span<const double> z, std::span<double> out);
/// dz = da * act'(z), elementwise, in place on `grad`.
void multiply_activation_derivative(Activation a, std::span<const double> z, std::span<double> grad);

/// Row-major C (m x n) = A (m x k) * B^T where B is n x k.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta = 0.0);
/// C (m x n) += A^T (A is k x m) * B (k x n).
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
/// C (m x n) = A (m x k) * B (k x n).
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

/// Sum after sorting; permutation-invariant bit for bit.
double sorted_sum(std::vector<double>& values);

void fill_normal(std::span<double> out, RngStream& stream, double mean, double stddev);

void sample_mlp(const MlpSpec& spec, RngStream& stream, ParamSet& params);
Matrix forward_mlp(const MlpSpec& spec, const ParamSet& params, const Matrix& x, std::span<const double> sigma,
                   std::unique_ptr<ForwardCache>* cache);
ParamSet backward_mlp(const MlpSpec& spec, const ParamSet& params, const ForwardCache& cache, const Matrix& cot);

void sample_conv(const ConvUnetSpec& spec, RngStream& stream, ParamSet& params);
Matrix forward_conv(const ConvUnetSpec& spec, const ParamSet& params, const Matrix& x,
                    std::span<const double> sigma, std::unique_ptr<ForwardCache>* cache);
ParamSet backward_conv(const ConvUnetSpec& spec, const ParamSet& params, const ForwardCache& cache,
                       const Matrix& cot);

/// index[t * L + k] = position of element k of token t in the flat input.
std::vector<std::size_t> token_pixel_index(const TokenLinearSpec& spec);

void sample_token(const TokenLinearSpec& spec, RngStream& stream, ParamSet& params);
Matrix forward_token(const TokenLinearSpec& spec, const ParamSet& params, const Matrix& x,
                     std::span<const double> sigma, std::unique_ptr<ForwardCache>* cache);
ParamSet backward_token(const TokenLinearSpec& spec, const ParamSet& params, const ForwardCache& cache,
                        const Matrix& cot);

}  // namespace sad::detail
