#include "cmpc/rng.hpp"

namespace cmpc {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
}

std::uint64_t CounterRng::mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

CounterRng CounterRng::keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::uint64_t key = mix(seed + kGolden);
  for (std::uint64_t word : stream) {
    key = mix(key ^ (word + kGolden));
  }
  return CounterRng(key);
}

std::uint64_t CounterRng::next_u64() {
  return mix(key_ + kGolden * ++counter_);
}

double CounterRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

}  // namespace cmpc
