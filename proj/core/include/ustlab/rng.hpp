#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <limits>

namespace ustlab {

/// One Philox4x32-10 block: a keyed bijection of a 128-bit counter.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream identified by (master seed, stream index).
///
/// Output is a pure function of the identity and the draw counter, so two
/// streams with the same identity produce the same sequence on any thread.
/// Each stream can be split into 2^16 substreams; substream k of stream s is
/// disjoint from every other (stream, substream) pair because the substream
/// id occupies the top 16 bits of the block counter.
///
/// A single stream must not be shared between threads.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_index) noexcept
      : RngStream(master_seed, stream_index, 0) {}

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t stream_index() const noexcept { return stream_; }
  std::uint16_t substream_id() const noexcept { return sub_; }
  /// Number of 128-bit blocks consumed so far.
  std::uint64_t block_counter() const noexcept { return block_; }

  /// Fresh stream for substream `id`; does not advance this stream.
  RngStream substream(std::uint16_t id) const noexcept { return {seed_, stream_, id}; }

  std::uint32_t next_u32() noexcept {
    if (avail_ == 0) refill();
    return buf_[4 - avail_--];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint32_t below(std::uint32_t n) noexcept {
    if ((n & (n - 1)) == 0) return take_bits(n);
    // Lemire's nearly-divisionless method.
    std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * n;
    auto low = static_cast<std::uint32_t>(m);
    if (low < n) {
      const std::uint32_t threshold = (0u - n) % n;
      while (low < threshold) {
        m = static_cast<std::uint64_t>(next_u32()) * n;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept { return next_u64(); }

 private:
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint16_t sub) noexcept
      : seed_(seed), stream_(stream), sub_(sub) {}

  void refill() noexcept;

  std::uint32_t take_bits(std::uint32_t n) noexcept {
    if (n == 1) return 0;
    const int width = std::countr_zero(n);
    if (nbits_ < width) {
      bits_ = next_u32();
      nbits_ = 32;
    }
    const std::uint32_t v = bits_ & (n - 1);
    bits_ >>= width;
    nbits_ -= width;
    return v;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint16_t sub_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int avail_ = 0;
  std::uint32_t bits_ = 0;
  int nbits_ = 0;
};

}  // namespace ustlab
