#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace amtl {

/// Identifies one reproducible random stream within a run.
struct StreamId {
  std::uint64_t task = 0;
  std::uint64_t epoch = 0;

  friend bool operator==(const StreamId &, const StreamId &) = default;
};

// Reserved epoch ids for streams that are not tied to a training epoch.
inline constexpr std::uint64_t kEnvironmentEpoch = std::numeric_limits<std::uint64_t>::max();
inline constexpr std::uint64_t kTargetEpoch = kEnvironmentEpoch - 1;
inline constexpr std::uint64_t kTestEpoch = kEnvironmentEpoch - 2;
inline constexpr std::uint64_t kInitEpoch = kEnvironmentEpoch - 3;
inline constexpr std::uint64_t kPermutationEpoch = kEnvironmentEpoch - 4;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the k-th output is mix64(key + k * golden), where
/// the key is a hash of (master_seed, task, epoch). Two streams with the same
/// triple produce identical sequences regardless of what other streams did.
/// Satisfies UniformRandomBitGenerator.
class RngStream {
public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, StreamId id)
      : seed_(master_seed), id_(id),
        key_(mix64(mix64(mix64(master_seed ^ 0x6a09e667f3bcc909ULL) ^ mix64(id.task + 0x3c6ef372fe94f82bULL)) ^
                   mix64(id.epoch + 0xa54ff53a5f1d36f1ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  std::uint64_t master_seed() const { return seed_; }
  StreamId id() const { return id_; }
  std::uint64_t draws() const { return counter_; }

private:
  std::uint64_t seed_;
  StreamId id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

} // namespace amtl
