#pragma once

#include <cstdint>
#include <initializer_list>

namespace cmpc {

// Counter-based pseudorandom generator: the i-th output is a pure function of
// (key, i), so independent streams are cheap to derive and any draw can be
// reproduced without replaying the ones before it. The mixing function is the
// splitmix64 finalizer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Derives a key from a seed and a stream tag, e.g. keyed(seed, {kShuffle, epoch}).
  static CounterRng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53 random bits.
  double next_unit();

  // Uniform integer in [0, n), n >= 1, rejection-sampled to avoid modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream tags for the fixed randomness consumers. Values are arbitrary but
// must never change once results depend on them.
namespace rng_stream {
inline constexpr std::uint64_t kShuffle = 0x01;
inline constexpr std::uint64_t kMcPoints = 0x02;
inline constexpr std::uint64_t kLatticeShift = 0x03;
inline constexpr std::uint64_t kDecoderInit = 0x04;
inline constexpr std::uint64_t kSampling = 0x05;
inline constexpr std::uint64_t kBlockMask = 0x06;
inline constexpr std::uint64_t kMixtureInit = 0x07;
inline constexpr std::uint64_t kErrorShift = 0x08;
}  // namespace rng_stream

}  // namespace cmpc
