#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

#include "sad/numerics/matrix.hpp"

namespace sad {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Pure function of counter and key.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// SplitMix64 finalizer, used to derive stream identifiers.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based random stream.
///
/// Output word `k` of a stream is a pure function of (master_seed, stream_id,
/// k): the master seed is the Philox key, and (stream_id, k / 2) fill the
/// 128-bit counter. Distinct stream ids never share a counter block, so
/// streams can be consumed by any number of workers in any order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept
      : master_seed_(master_seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Word at an absolute position, without touching the stream state.
  std::uint64_t word_at(std::uint64_t position) const noexcept;

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  /// Standard normal via Box-Muller (consumes two words).
  double normal() noexcept;
  void fill_normal(std::span<double> out) noexcept;
  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Independent child stream: same master seed, derived stream id, counter 0.
  RngStream split(std::uint64_t tag) const noexcept;

  void skip(std::uint64_t words) noexcept { counter_ += words; }

  friend bool operator==(const RngStream& a, const RngStream& b) noexcept {
    return a.master_seed_ == b.master_seed_ && a.stream_id_ == b.stream_id_ &&
           a.counter_ == b.counter_;
  }

 private:
  std::uint64_t master_seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
  // Cache of the last generated block; never affects output values.
  std::uint64_t cached_block_ = std::numeric_limits<std::uint64_t>::max();
  std::array<std::uint64_t, 2> cache_{};
};

/// n iid standard normal variates; advances the stream.
Vector gaussian(RngStream& stream, std::size_t n);

/// rows x cols matrix of iid N(0, stddev^2) entries.
Matrix gaussian_matrix(RngStream& stream, std::size_t rows, std::size_t cols, double stddev = 1.0);

/// Uniformly distributed unit vector in R^d.
Vector random_unit_vector(RngStream& stream, std::size_t d);

}  // namespace sad
