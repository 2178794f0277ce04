#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lbsim {

/// Server identifiers are 1-based; 0 is reserved for "no server".
using ServerId = std::uint32_t;
inline constexpr ServerId kNoServer = 0;

/// A policy hook returned something outside its declared contract
/// (out-of-range destination, repeated sample entry, memory overflow).
class PolicyContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Engine bookkeeping went inconsistent. Always a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Rejected configuration or parameters, raised before any simulation work.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A uniform [0,1) randomization variable.
///
/// Carries 64 random bits. value() exposes the top 53 bits as a double; hooks
/// that need more entropy than one double can expand the same bits into a
/// deterministic stream, so every hook stays a pure function of its inputs.
class Uniform {
 public:
  constexpr Uniform() = default;
  constexpr explicit Uniform(std::uint64_t bits) : bits_(bits) {}

  /// Builds the variable whose value() is (as close as possible to) x.
  static Uniform from_value(double x);

  constexpr std::uint64_t bits() const { return bits_; }
  double value() const { return static_cast<double>(bits_ >> 11) * 0x1.0p-53; }

  /// Index in [0, count) selected by value(); count must be positive.
  std::uint64_t index(std::uint64_t count) const;

 private:
  std::uint64_t bits_ = 0;
};

/// ceil(log2(x)) for x >= 1; 0 for x <= 1.
unsigned ceil_log2(std::uint64_t x);

}  // namespace lbsim
