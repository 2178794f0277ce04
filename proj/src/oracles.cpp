#include "lbsim/oracles.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace lbsim {

namespace {

Weight uniform_over(std::size_t count) { return Weight::ratio(1, static_cast<std::int64_t>(count)); }

DispatchDistribution uniform_servers(std::size_t n) {
  DispatchDistribution d;
  for (ServerId j = 1; j <= n; ++j) d[j] = uniform_over(n);
  return d;
}

DispatchDistribution uniform_among(const std::vector<ServerId>& ids) {
  DispatchDistribution d;
  for (ServerId j : ids) d[j] += uniform_over(ids.size());
  return d;
}

SampleDistribution empty_sample() { return {{SampleVector{}, Weight::ratio(1, 1)}}; }

/// Every ordered d-tuple of distinct servers with equal mass.
SampleDistribution uniform_tuples(std::size_t n, std::size_t d) {
  std::uint64_t count = ordered_tuple_count(n, d);
  if (count == 0 || count > 5'000'000) throw ConfigError("tuple law too large to enumerate");
  SampleDistribution out;
  for (std::uint64_t k = 0; k < count; ++k) out.emplace(ordered_tuple(n, d, k), uniform_over(count));
  return out;
}

class RandomOracle : public DistributionOracle {
 public:
  explicit RandomOracle(std::size_t n) : n_(n) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override { return empty_sample(); }
  DispatchDistribution dispatch_dist(const MemoryState&, double, const SampleVector&,
                                     std::span<const QueueView>) const override {
    return uniform_servers(n_);
  }

 private:
  std::size_t n_;
};

class RoundRobinOracle : public DistributionOracle {
 public:
  explicit RoundRobinOracle(std::size_t n) : n_(n) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override { return empty_sample(); }
  DispatchDistribution dispatch_dist(const MemoryState& m, double, const SampleVector&,
                                     std::span<const QueueView>) const override {
    return {{static_cast<ServerId>(m.to_integer() % n_ + 1), Weight::ratio(1, 1)}};
  }

 private:
  std::size_t n_;
};

class SampleMinOracle : public DistributionOracle {
 public:
  explicit SampleMinOracle(std::shared_ptr<const SampleMinPolicy> p) : p_(std::move(p)) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override {
    return uniform_tuples(p_->servers(), p_->d());
  }
  DispatchDistribution dispatch_dist(const MemoryState&, double, const SampleVector& s,
                                     std::span<const QueueView> q) const override {
    if (s.empty()) return uniform_servers(p_->servers());
    auto load = [&](std::size_t i) {
      return p_->metric() == LoadMetric::kLength ? static_cast<double>(q[i].length()) : q[i].workload();
    };
    double best = load(0);
    for (std::size_t i = 1; i < s.size(); ++i) best = std::min(best, load(i));
    std::vector<ServerId> ties;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (load(i) == best) ties.push_back(s[i]);
    return uniform_among(ties);
  }

 private:
  std::shared_ptr<const SampleMinPolicy> p_;
};

class SqdbOracle : public DistributionOracle {
 public:
  explicit SqdbOracle(std::shared_ptr<const SqdbPolicy> p) : p_(std::move(p)) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override {
    return uniform_tuples(p_->servers(), p_->d());
  }
  DispatchDistribution dispatch_dist(const MemoryState& m, double, const SampleVector& s,
                                     std::span<const QueueView> q) const override {
    // Fresh lengths for sampled servers, remembered lengths for the rest.
    std::map<ServerId, unsigned> known;
    for (const auto& slot : p_->decode(m)) known[slot.id] = slot.length;
    for (std::size_t i = 0; i < s.size(); ++i)
      known[s[i]] = static_cast<unsigned>(std::min<std::size_t>(q[i].length(), SqdbPolicy::kLengthCap));
    if (known.empty()) return uniform_servers(p_->servers());
    unsigned best = known.begin()->second;
    for (const auto& [id, len] : known) best = std::min(best, len);
    std::vector<ServerId> ties;
    for (const auto& [id, len] : known)
      if (len == best) ties.push_back(id);
    return uniform_among(ties);
  }

 private:
  std::shared_ptr<const SqdbPolicy> p_;
};

class IdleSetOracle : public DistributionOracle {
 public:
  explicit IdleSetOracle(std::size_t n) : n_(n) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override { return empty_sample(); }
  DispatchDistribution dispatch_dist(const MemoryState& m, double, const SampleVector&,
                                     std::span<const QueueView>) const override {
    std::vector<ServerId> flagged;
    for (ServerId j = 1; j <= n_; ++j)
      if (m.bit(j - 1)) flagged.push_back(j);
    return flagged.empty() ? uniform_servers(n_) : uniform_among(flagged);
  }

 private:
  std::size_t n_;
};

class SitaOracle : public DistributionOracle {
 public:
  explicit SitaOracle(std::vector<double> cuts) : cuts_(std::move(cuts)) {}
  SampleDistribution sample_dist(const MemoryState&, double) const override { return empty_sample(); }
  DispatchDistribution dispatch_dist(const MemoryState&, double w, const SampleVector&,
                                     std::span<const QueueView>) const override {
    ServerId j = 1;
    for (double c : cuts_)
      if (w >= c) ++j;
    return {{j, Weight::ratio(1, 1)}};
  }

 private:
  std::vector<double> cuts_;
};

}  // namespace

std::shared_ptr<const DistributionOracle> exact_oracle(const PolicyPtr& policy) {
  const std::size_t n = policy->servers();
  if (dynamic_cast<const RandomPolicy*>(policy.get())) return std::make_shared<RandomOracle>(n);
  if (dynamic_cast<const RoundRobinPolicy*>(policy.get())) return std::make_shared<RoundRobinOracle>(n);
  if (auto p = std::dynamic_pointer_cast<const SampleMinPolicy>(policy)) return std::make_shared<SampleMinOracle>(p);
  if (auto p = std::dynamic_pointer_cast<const SqdbPolicy>(policy)) return std::make_shared<SqdbOracle>(p);
  if (dynamic_cast<const IdleSetPolicy*>(policy.get())) return std::make_shared<IdleSetOracle>(n);
  if (auto p = dynamic_cast<const SitaPolicy*>(policy.get())) return std::make_shared<SitaOracle>(p->cuts());
  throw ConfigError(fmt::format("no exact oracle for policy '{}'", policy->name()));
}

MemoryState permute_bitmap(const Permutation& sigma, const MemoryState& m) {
  MemoryState out(m.capacity_bits());
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (m.bit(i)) out.set_bit(sigma[i] - 1, true);
  return out;
}

MemoryState relabel_slots(const SqdbPolicy& policy, const Permutation& sigma, const MemoryState& m) {
  auto slots = policy.decode(m);
  for (auto& slot : slots) slot.id = sigma[slot.id - 1];
  return policy.encode(slots);
}

std::vector<MemoryState> slot_states(const SqdbPolicy& policy, std::size_t limit) {
  // Canonical encodings: distinct ids, lengths nondecreasing, at most b slots.
  std::vector<MemoryState> out;
  std::vector<SqdbPolicy::Slot> slots;
  auto grow = [&](auto&& self) -> void {
    if (out.size() > limit) throw ConfigError(fmt::format("{}: more than {} memory states", policy.name(), limit));
    out.push_back(policy.encode(slots));
    if (slots.size() == policy.b()) return;
    unsigned from = slots.empty() ? 0 : slots.back().length;
    for (ServerId id = 1; id <= policy.servers(); ++id) {
      if (std::any_of(slots.begin(), slots.end(), [&](const auto& sl) { return sl.id == id; })) continue;
      for (unsigned len = from; len <= SqdbPolicy::kLengthCap; ++len) {
        slots.push_back({id, len});
        self(self);
        slots.pop_back();
      }
    }
  };
  grow(grow);
  return out;
}

AuditSubject audit_subject(const PolicyPtr& policy) {
  AuditSubject subject;
  subject.policy = policy;
  subject.oracle = exact_oracle(policy);
  if (auto p = dynamic_cast<const SitaPolicy*>(policy.get())) {
    subject.sizes.clear();
    double lo = 0.0;
    for (double c : p->cuts()) {
      subject.sizes.push_back((lo + c) / 2.0);
      subject.sizes.push_back(c);
      lo = c;
    }
    subject.sizes.push_back(lo + 1.0);
  }
  if (dynamic_cast<const IdleSetPolicy*>(policy.get())) subject.candidate = permute_bitmap;
  if (auto p = std::dynamic_pointer_cast<const SqdbPolicy>(policy)) {
    subject.states = slot_states(*p, 50'000);
    subject.candidate = [p](const Permutation& sigma, const MemoryState& m) { return relabel_slots(*p, sigma, m); };
  }
  return subject;
}

}  // namespace lbsim
