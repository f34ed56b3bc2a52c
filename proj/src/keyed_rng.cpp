#include "blockmerge/keyed_rng.hpp"

namespace blockmerge {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix64(mix64(parent + kGolden) ^ (tag * kGolden + 0x632be59bd9b4e019ULL));
}

KeyedUniform::KeyedUniform(std::uint64_t seed, std::uint64_t stream, std::string_view name) noexcept
    : key_(derive_seed(derive_seed(seed, stream), fnv1a64(name))) {}

std::uint64_t KeyedUniform::bits(std::uint64_t counter) const noexcept {
  return mix64(key_ + (counter + 1) * kGolden);
}

double KeyedUniform::at(std::uint64_t counter) const noexcept {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

}  // namespace blockmerge
