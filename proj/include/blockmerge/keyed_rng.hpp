#pragma once

#include <cstdint>
#include <string_view>

namespace blockmerge {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Derives an independent child seed from a parent seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept;

/// Counter-based uniform generator. The value at a given counter depends only
/// on (key, counter), so draws can be taken in any order or in parallel.
class KeyedUniform {
 public:
  KeyedUniform(std::uint64_t seed, std::uint64_t stream, std::string_view name) noexcept;
  explicit KeyedUniform(std::uint64_t key) noexcept : key_(key) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double at(std::uint64_t counter) const noexcept;
  std::uint64_t bits(std::uint64_t counter) const noexcept;
  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace blockmerge
