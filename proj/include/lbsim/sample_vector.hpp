#pragma once

#include <compare>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lbsim/types.hpp"

namespace lbsim {

/// Ordered vector of distinct server ids: the servers queried on an arrival.
class SampleVector {
 public:
  SampleVector() = default;
  SampleVector(std::initializer_list<ServerId> ids) : ids_(ids) {}
  explicit SampleVector(std::vector<ServerId> ids) : ids_(std::move(ids)) {}

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  ServerId operator[](std::size_t i) const { return ids_[i]; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }
  std::span<const ServerId> ids() const { return ids_; }

  bool contains(ServerId id) const;
  void push_back(ServerId id) { ids_.push_back(id); }

  /// True iff every id is in 1..servers and none repeats.
  bool valid_for(std::size_t servers) const;

  std::string to_string() const;

  friend bool operator==(const SampleVector&, const SampleVector&) = default;
  friend auto operator<=>(const SampleVector&, const SampleVector&) = default;

 private:
  std::vector<ServerId> ids_;
};

/// Decodes cell `index` of the n(n-1)...(n-d+1) ordered d-tuples of distinct
/// servers, in lexicographic order. Cell 0 is (1, 2, ..., d).
SampleVector ordered_tuple(std::size_t servers, std::size_t d, std::uint64_t index);

/// Falling factorial n(n-1)...(n-d+1), or 0 when it exceeds 2^62.
std::uint64_t ordered_tuple_count(std::size_t servers, std::size_t d);

/// Uniformly random ordered d-tuple of distinct servers driven by u alone.
///
/// Uses u.value() to pick a cell when the tuple count is small enough for a
/// double to resolve every cell, else expands u's bits into a partial shuffle.
SampleVector uniform_ordered_tuple(std::size_t servers, std::size_t d, Uniform u);

}  // namespace lbsim
