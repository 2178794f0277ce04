#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lbsim {

/// The dispatcher's persistent memory: one unsigned integer of capacity_bits
/// bits, stored little-endian in 64-bit words.
///
/// Policies own the encoding. The framework only checks value < 2^capacity_bits
/// (see fits()), which is what makes a declared bit budget enforceable.
class MemoryState {
 public:
  MemoryState() = default;
  explicit MemoryState(unsigned capacity_bits);

  static MemoryState from_integer(std::uint64_t value, unsigned capacity_bits);
  static MemoryState all_ones(unsigned capacity_bits);

  unsigned capacity_bits() const { return capacity_bits_; }

  /// Number of representable states, saturating at UINT64_MAX.
  std::uint64_t state_count() const;

  /// True iff no bit at or above capacity_bits is set.
  bool fits() const;
  /// Throws PolicyContractViolation unless fits() and the capacity matches.
  void require_capacity(unsigned expected_bits, const std::string& who) const;

  /// Low 64 bits of the value.
  std::uint64_t to_integer() const;

  bool bit(std::size_t i) const;
  void set_bit(std::size_t i, bool on);

  /// Unsigned field of `width` (<= 64) bits starting at bit `offset`.
  std::uint64_t field(std::size_t offset, unsigned width) const;
  void set_field(std::size_t offset, unsigned width, std::uint64_t value);

  std::size_t count_ones() const;
  /// Position of the k-th (0-based) set bit; k must be < count_ones().
  std::size_t select_one(std::size_t k) const;

  /// Raw words, for hashing and serialization.
  const std::vector<std::uint64_t>& words() const { return words_; }
  /// Writes raw bits without the capacity check, so overflow can be detected later.
  void set_word(std::size_t i, std::uint64_t w);

  std::string to_string() const;

  friend bool operator==(const MemoryState&, const MemoryState&) = default;
  friend std::strong_ordering operator<=>(const MemoryState& a, const MemoryState& b);

 private:
  unsigned capacity_bits_ = 0;
  // Always ceil(capacity_bits / 64) words, at least one when capacity_bits > 0.
  std::vector<std::uint64_t> words_;
};

}  // namespace lbsim
