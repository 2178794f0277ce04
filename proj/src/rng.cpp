#include "lbsim/rng.hpp"

#include <bit>
#include <cmath>

namespace lbsim {

__extension__ using u128 = unsigned __int128;

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::next_below(std::uint64_t bound) {
  // Lemire's multiply-shift with rejection.
  u128 m = static_cast<u128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<u128>(next()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  SplitMix64 sm(seed);
  for (auto& w : s_) w = sm.next();
}

std::uint64_t Xoshiro256::operator()() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::kArrivals: return "arrivals";
    case Stream::kSpontaneous: return "spontaneous";
    case Stream::kSizes: return "sizes";
    case Stream::kSampling: return "sampling";
    case Stream::kDispatch: return "dispatch";
    case Stream::kSpontaneousSender: return "spontaneous-sender";
    case Stream::kDeparture: return "departure";
    case Stream::kInitial: return "initial";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) {
  SplitMix64 sm(parent ^ (salt * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  sm.next();
  return sm.next();
}

RngStreams::RngStreams(std::uint64_t master_seed)
    : master_(master_seed),
      streams_{Xoshiro256(derive_seed(master_seed, 0)), Xoshiro256(derive_seed(master_seed, 1)),
               Xoshiro256(derive_seed(master_seed, 2)), Xoshiro256(derive_seed(master_seed, 3)),
               Xoshiro256(derive_seed(master_seed, 4)), Xoshiro256(derive_seed(master_seed, 5)),
               Xoshiro256(derive_seed(master_seed, 6)), Xoshiro256(derive_seed(master_seed, 7))} {}

Uniform Uniform::from_value(double x) {
  if (!(x >= 0.0)) x = 0.0;
  if (x >= 1.0) return Uniform(~std::uint64_t{0});
  auto top = static_cast<std::uint64_t>(std::ldexp(x, 53));
  return Uniform(top << 11);
}

std::uint64_t Uniform::index(std::uint64_t count) const {
  // floor(value() * count) computed exactly on the 53-bit mantissa.
  u128 prod = static_cast<u128>(bits_ >> 11) * count;
  auto idx = static_cast<std::uint64_t>(prod >> 53);
  return idx < count ? idx : count - 1;
}

unsigned ceil_log2(std::uint64_t x) {
  if (x <= 1) return 0;
  return static_cast<unsigned>(64 - std::countl_zero(x - 1));
}

}  // namespace lbsim
