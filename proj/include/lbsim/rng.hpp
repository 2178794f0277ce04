#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "lbsim/types.hpp"

namespace lbsim {

/// SplitMix64: tiny, fast, and good enough to derive seeds and expand a
/// Uniform into more bits.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  std::uint64_t next();
  /// Uniform double in [0,1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, bound), bound > 0, unbiased.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

/// xoshiro256** generator for the simulation streams.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;
  explicit Xoshiro256(std::uint64_t seed);
  std::uint64_t operator()();
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  Uniform uniform() { return Uniform((*this)()); }
  /// Uniform double in (0,1]; safe to take the log of.
  double open_unit() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

 private:
  std::array<std::uint64_t, 4> s_;
};

/// Named independent sources of randomness.
enum class Stream : std::uint8_t {
  kArrivals = 0,
  kSpontaneous,
  kSizes,
  kSampling,      // U: which servers to query
  kDispatch,      // V: destination tie-breaking
  kSpontaneousSender,  // X
  kDeparture,     // Y
  kInitial,
};
inline constexpr std::size_t kStreamCount = 8;

std::string_view stream_name(Stream s);

/// Deterministic seed derivation: one master seed, then child seeds per
/// replication / experiment point, then one seed per stream.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt);

/// The eight streams of one replication, each seeded from a single master seed.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed);

  Xoshiro256& operator[](Stream s) { return streams_[static_cast<std::size_t>(s)]; }
  std::uint64_t master_seed() const { return master_; }

 private:
  std::uint64_t master_;
  std::array<Xoshiro256, kStreamCount> streams_;
};

}  // namespace lbsim
