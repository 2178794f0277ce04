#include "lbsim/sample_vector.hpp"

#include <algorithm>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "lbsim/rng.hpp"

namespace lbsim {

bool SampleVector::contains(ServerId id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

bool SampleVector::valid_for(std::size_t servers) const {
  if (ids_.size() > servers) return false;
  std::vector<ServerId> sorted(ids_);
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty() && (sorted.front() < 1 || sorted.back() > servers)) return false;
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

std::string SampleVector::to_string() const { return fmt::format("({})", fmt::join(ids_, ",")); }

std::uint64_t ordered_tuple_count(std::size_t servers, std::size_t d) {
  if (d > servers) return 0;
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  std::uint64_t p = 1;
  for (std::size_t i = 0; i < d; ++i) {
    std::uint64_t f = servers - i;
    if (p > kCap / f) return 0;
    p *= f;
  }
  return p;
}

namespace {

// Maps a rank among the servers not yet taken to the server id itself.
ServerId nth_unused(std::size_t rank, const std::vector<ServerId>& taken_sorted) {
  auto id = static_cast<ServerId>(rank + 1);
  for (ServerId t : taken_sorted) {
    if (t <= id)
      ++id;
    else
      break;
  }
  return id;
}

SampleVector decode_ranks(const std::vector<std::uint64_t>& ranks) {
  std::vector<ServerId> out;
  std::vector<ServerId> taken;
  out.reserve(ranks.size());
  for (auto r : ranks) {
    ServerId id = nth_unused(r, taken);
    out.push_back(id);
    taken.insert(std::upper_bound(taken.begin(), taken.end(), id), id);
  }
  return SampleVector(std::move(out));
}

}  // namespace

SampleVector ordered_tuple(std::size_t servers, std::size_t d, std::uint64_t index) {
  std::vector<std::uint64_t> ranks(d);
  // Mixed radix, least significant digit last: radices n, n-1, ..., n-d+1.
  for (std::size_t i = d; i-- > 0;) {
    std::uint64_t radix = servers - i;
    ranks[i] = index % radix;
    index /= radix;
  }
  return decode_ranks(ranks);
}

SampleVector uniform_ordered_tuple(std::size_t servers, std::size_t d, Uniform u) {
  if (d == 0) return {};
  std::uint64_t count = ordered_tuple_count(servers, d);
  if (count != 0 && count <= (std::uint64_t{1} << 40)) return ordered_tuple(servers, d, u.index(count));
  SplitMix64 expand(u.bits());
  if (d * d > servers) {
    // Partial Fisher-Yates: linear in n instead of quadratic in d.
    std::vector<ServerId> ids(servers);
    for (std::size_t i = 0; i < servers; ++i) ids[i] = static_cast<ServerId>(i + 1);
    for (std::size_t i = 0; i < d; ++i) std::swap(ids[i], ids[i + expand.next_below(servers - i)]);
    ids.resize(d);
    return SampleVector(std::move(ids));
  }
  std::vector<std::uint64_t> ranks(d);
  for (std::size_t i = 0; i < d; ++i) ranks[i] = expand.next_below(servers - i);
  return decode_ranks(ranks);
}

}  // namespace lbsim
