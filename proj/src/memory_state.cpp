#include "lbsim/memory_state.hpp"

#include <bit>
#include <limits>

#include <fmt/format.h>

#include "lbsim/types.hpp"

namespace lbsim {

namespace {

std::size_t words_for(unsigned bits) { return (bits + 63) / 64; }

}  // namespace

MemoryState::MemoryState(unsigned capacity_bits)
    : capacity_bits_(capacity_bits), words_(words_for(capacity_bits), 0) {}

MemoryState MemoryState::from_integer(std::uint64_t value, unsigned capacity_bits) {
  MemoryState m(capacity_bits);
  if (m.words_.empty()) {
    if (value != 0)
      throw PolicyContractViolation("nonzero value for a zero-bit memory");
    return m;
  }
  m.words_[0] = value;
  if (!m.fits())
    throw PolicyContractViolation(fmt::format("value {} does not fit in {} bits", value, capacity_bits));
  return m;
}

MemoryState MemoryState::all_ones(unsigned capacity_bits) {
  MemoryState m(capacity_bits);
  for (std::size_t i = 0; i < capacity_bits; ++i) m.set_bit(i, true);
  return m;
}

std::uint64_t MemoryState::state_count() const {
  if (capacity_bits_ >= 64) return std::numeric_limits<std::uint64_t>::max();
  return std::uint64_t{1} << capacity_bits_;
}

bool MemoryState::fits() const {
  if (words_.size() != words_for(capacity_bits_)) return false;
  if (words_.empty()) return true;
  unsigned used = capacity_bits_ % 64;
  if (used == 0) return true;
  return (words_.back() >> used) == 0;
}

void MemoryState::require_capacity(unsigned expected_bits, const std::string& who) const {
  if (capacity_bits_ != expected_bits)
    throw PolicyContractViolation(fmt::format("{}: memory declared {} bits but carries {}", who,
                                              expected_bits, capacity_bits_));
  if (!fits())
    throw PolicyContractViolation(
        fmt::format("{}: memory value {} exceeds 2^{}", who, to_string(), capacity_bits_));
}

std::uint64_t MemoryState::to_integer() const { return words_.empty() ? 0 : words_[0]; }

bool MemoryState::bit(std::size_t i) const {
  if (i >= capacity_bits_) return false;
  return (words_[i / 64] >> (i % 64)) & 1u;
}

void MemoryState::set_bit(std::size_t i, bool on) {
  if (i >= capacity_bits_) throw PolicyContractViolation("memory bit index out of range");
  std::uint64_t mask = std::uint64_t{1} << (i % 64);
  if (on)
    words_[i / 64] |= mask;
  else
    words_[i / 64] &= ~mask;
}

std::uint64_t MemoryState::field(std::size_t offset, unsigned width) const {
  std::uint64_t v = 0;
  for (unsigned b = 0; b < width; ++b)
    if (bit(offset + b)) v |= std::uint64_t{1} << b;
  return v;
}

void MemoryState::set_field(std::size_t offset, unsigned width, std::uint64_t value) {
  if (width < 64 && (value >> width) != 0)
    throw PolicyContractViolation("memory field value does not fit its width");
  for (unsigned b = 0; b < width; ++b) set_bit(offset + b, (value >> b) & 1u);
}

std::size_t MemoryState::count_ones() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::size_t MemoryState::select_one(std::size_t k) const {
  for (std::size_t wi = 0; wi < words_.size(); ++wi) {
    std::uint64_t w = words_[wi];
    auto pc = static_cast<std::size_t>(std::popcount(w));
    if (k >= pc) {
      k -= pc;
      continue;
    }
    for (; k > 0; --k) w &= w - 1;
    return wi * 64 + static_cast<std::size_t>(std::countr_zero(w));
  }
  throw PolicyContractViolation("select_one: fewer set bits than requested");
}

void MemoryState::set_word(std::size_t i, std::uint64_t w) { words_.at(i) = w; }

std::string MemoryState::to_string() const {
  if (words_.empty()) return "0";
  if (words_.size() == 1) return fmt::format("{}", words_[0]);
  std::string s = "0x";
  for (auto it = words_.rbegin(); it != words_.rend(); ++it) s += fmt::format("{:016x}", *it);
  return s;
}

std::strong_ordering operator<=>(const MemoryState& a, const MemoryState& b) {
  if (auto c = a.capacity_bits_ <=> b.capacity_bits_; c != 0) return c;
  for (std::size_t i = a.words_.size(); i-- > 0;)
    if (auto c = a.words_[i] <=> b.words_[i]; c != 0) return c;
  return std::strong_ordering::equal;
}

}  // namespace lbsim
