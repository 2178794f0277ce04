#include "lbsim/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace lbsim {

namespace {

void require_servers(std::size_t n) {
  if (n == 0) throw ConfigError("a policy needs at least one server");
  if (n > std::numeric_limits<ServerId>::max() / 2) throw ConfigError("too many servers");
}

ServerId uniform_server(std::size_t n, Uniform v) { return static_cast<ServerId>(v.index(n) + 1); }

}  // namespace

RandomPolicy::RandomPolicy(std::size_t n) : n_(n) { require_servers(n); }

ServerId RandomPolicy::choose_destination(const MemoryState&, double, const SampleVector&,
                                          std::span<const QueueView>, Uniform v) const {
  return uniform_server(n_, v);
}

RoundRobinPolicy::RoundRobinPolicy(std::size_t n) : n_(n) { require_servers(n); }

ServerId RoundRobinPolicy::destination_for(const MemoryState& m) const {
  return static_cast<ServerId>(m.to_integer() % n_ + 1);
}

ServerId RoundRobinPolicy::choose_destination(const MemoryState& m, double, const SampleVector&,
                                              std::span<const QueueView>, Uniform) const {
  return destination_for(m);
}

MemoryState RoundRobinPolicy::update_after_dispatch(const MemoryState& m, double, const SampleVector&,
                                                    std::span<const QueueView>, ServerId) const {
  return MemoryState::from_integer((m.to_integer() % n_ + 1) % n_, memory_bits());
}

SampleMinPolicy::SampleMinPolicy(std::string name, std::size_t n, std::size_t d, bool query_all,
                                 LoadMetric metric)
    : name_(std::move(name)), n_(n), d_(query_all ? n : d), query_all_(query_all), metric_(metric) {
  require_servers(n);
  if (d_ < 1 || d_ > n_) throw ConfigError(fmt::format("{}: need 1 <= d <= n, got d={} n={}", name_, d_, n_));
}

SampleVector SampleMinPolicy::select_servers(const MemoryState&, double, Uniform u) const {
  return uniform_ordered_tuple(n_, d_, u);
}

ServerId SampleMinPolicy::choose_destination(const MemoryState&, double, const SampleVector& s,
                                             std::span<const QueueView> q, Uniform v) const {
  std::vector<std::size_t> best;
  double best_load = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i) {
    double load = metric_ == LoadMetric::kLength ? static_cast<double>(q[i].length()) : q[i].workload();
    if (load < best_load) {
      best_load = load;
      best.assign(1, i);
    } else if (load == best_load) {
      best.push_back(i);
    }
  }
  if (best.empty()) return uniform_server(n_, v);
  return s[best[v.index(best.size())]];
}

SqdbPolicy::SqdbPolicy(std::size_t n, std::size_t d, std::size_t b) : n_(n), d_(d), b_(b) {
  require_servers(n);
  if (d < 1 || d > n) throw ConfigError(fmt::format("sq_d_b: need 1 <= d <= n, got d={} n={}", d, n));
  if (b > d) throw ConfigError(fmt::format("sq_d_b: need b <= d, got b={} d={}", b, d));
}

std::string SqdbPolicy::name() const { return fmt::format("sq_d_b({},{})", d_, b_); }

std::vector<SqdbPolicy::Slot> SqdbPolicy::decode(const MemoryState& m) const {
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < b_; ++k) {
    std::size_t off = k * slot_bits();
    auto id = static_cast<ServerId>(m.field(off, id_bits()));
    if (id == kNoServer) break;
    slots.push_back(Slot{id, static_cast<unsigned>(m.field(off + id_bits(), kLengthBits))});
  }
  return slots;
}

MemoryState SqdbPolicy::encode(const std::vector<Slot>& slots) const {
  MemoryState m(memory_bits());
  for (std::size_t k = 0; k < slots.size() && k < b_; ++k) {
    std::size_t off = k * slot_bits();
    m.set_field(off, id_bits(), slots[k].id);
    m.set_field(off + id_bits(), kLengthBits, std::min(slots[k].length, kLengthCap));
  }
  return m;
}

SampleVector SqdbPolicy::select_servers(const MemoryState&, double, Uniform u) const {
  return uniform_ordered_tuple(n_, d_, u);
}

std::vector<SqdbPolicy::Slot> SqdbPolicy::candidates(const MemoryState& m, const SampleVector& s,
                                                     std::span<const QueueView> q) const {
  std::vector<Slot> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out.push_back(Slot{s[i], static_cast<unsigned>(std::min<std::size_t>(q[i].length(), kLengthCap))});
  for (const Slot& slot : decode(m))
    if (slot.id <= n_ && !s.contains(slot.id)) out.push_back(slot);
  return out;
}

ServerId SqdbPolicy::choose_destination(const MemoryState& m, double, const SampleVector& s,
                                        std::span<const QueueView> q, Uniform v) const {
  auto cand = candidates(m, s, q);
  if (cand.empty()) return uniform_server(n_, v);
  unsigned best = cand.front().length;
  for (const Slot& c : cand) best = std::min(best, c.length);
  std::vector<ServerId> ties;
  for (const Slot& c : cand)
    if (c.length == best) ties.push_back(c.id);
  return ties[v.index(ties.size())];
}

MemoryState SqdbPolicy::update_after_dispatch(const MemoryState& m, double, const SampleVector& s,
                                              std::span<const QueueView> q, ServerId d) const {
  auto cand = candidates(m, s, q);
  for (Slot& c : cand)
    if (c.id == d) c.length = std::min(c.length + 1, kLengthCap);
  std::stable_sort(cand.begin(), cand.end(), [](const Slot& a, const Slot& b) { return a.length < b.length; });
  if (cand.size() > b_) cand.resize(b_);
  return encode(cand);
}

IdleSetPolicy::IdleSetPolicy(std::size_t n, bool departure_signals, double ping_rate)
    : n_(n), departure_signals_(departure_signals), ping_rate_(ping_rate) {
  require_servers(n);
  if (departure_signals_ && ping_rate_ != 0.0) throw ConfigError("jiq uses departure messages only");
  if (!departure_signals_ && !(ping_rate_ > 0.0 && std::isfinite(ping_rate_)))
    throw ConfigError("idle_ping needs a positive finite ping rate");
}

ServerId IdleSetPolicy::choose_destination(const MemoryState& m, double, const SampleVector&,
                                           std::span<const QueueView>, Uniform v) const {
  std::size_t flagged = m.count_ones();
  if (flagged == 0) return uniform_server(n_, v);
  return static_cast<ServerId>(m.select_one(v.index(flagged)) + 1);
}

MemoryState IdleSetPolicy::update_after_dispatch(const MemoryState& m, double, const SampleVector&,
                                                 std::span<const QueueView>, ServerId d) const {
  MemoryState next = m;
  next.set_bit(d - 1, false);
  return next;
}

ServerId IdleSetPolicy::spontaneous_sender(const SystemView& queues, Uniform x) const {
  if (departure_signals_) return kNoServer;
  auto i = static_cast<ServerId>(x.index(n_) + 1);
  return queues.queue(i).idle() ? i : kNoServer;
}

MemoryState IdleSetPolicy::absorb_spontaneous(const MemoryState& m, ServerId sender, const QueueView&) const {
  MemoryState next = m;
  next.set_bit(sender - 1, true);
  return next;
}

bool IdleSetPolicy::signals_departure(const QueueView& q, Uniform) const {
  return departure_signals_ && q.idle();
}

MemoryState IdleSetPolicy::absorb_departure(const MemoryState& m, ServerId server, const QueueView&) const {
  MemoryState next = m;
  next.set_bit(server - 1, true);
  return next;
}

SitaPolicy::SitaPolicy(std::vector<double> cuts) : cuts_(std::move(cuts)) {
  double prev = 0.0;
  for (double c : cuts_) {
    if (!(c > prev) || !std::isfinite(c))
      throw ConfigError("sita cut points must be positive, finite and strictly increasing");
    prev = c;
  }
}

ServerId SitaPolicy::choose_destination(const MemoryState&, double size, const SampleVector&,
                                        std::span<const QueueView>, Uniform) const {
  auto it = std::upper_bound(cuts_.begin(), cuts_.end(), size);
  return static_cast<ServerId>(it - cuts_.begin() + 1);
}

std::size_t default_dn_rule(std::size_t n) {
  return std::clamp<std::size_t>(ceil_log2(n), 1, std::max<std::size_t>(n, 1));
}

PolicyPtr make_random(std::size_t n) { return std::make_shared<RandomPolicy>(n); }
PolicyPtr make_round_robin(std::size_t n) { return std::make_shared<RoundRobinPolicy>(n); }

PolicyPtr make_sq(std::size_t n) {
  return std::make_shared<SampleMinPolicy>("sq", n, n, true, LoadMetric::kLength);
}

PolicyPtr make_sq_d(std::size_t n, std::size_t d) {
  return std::make_shared<SampleMinPolicy>(fmt::format("sq_d({})", d), n, d, false, LoadMetric::kLength);
}

PolicyPtr make_sq_dn(std::size_t n, const std::function<std::size_t(std::size_t)>& rule) {
  std::size_t d = rule(n);
  return std::make_shared<SampleMinPolicy>(fmt::format("sq_dn({})", d), n, d, false, LoadMetric::kLength);
}

PolicyPtr make_sq_d_b(std::size_t n, std::size_t d, std::size_t b) {
  return std::make_shared<SqdbPolicy>(n, d, b);
}

PolicyPtr make_ll(std::size_t n) {
  return std::make_shared<SampleMinPolicy>("ll", n, n, true, LoadMetric::kWorkload);
}

PolicyPtr make_ll_d(std::size_t n, std::size_t d) {
  return std::make_shared<SampleMinPolicy>(fmt::format("ll_d({})", d), n, d, false, LoadMetric::kWorkload);
}

PolicyPtr make_jiq(std::size_t n) { return std::make_shared<IdleSetPolicy>(n, true, 0.0); }
PolicyPtr make_idle_ping(std::size_t n, double rate) { return std::make_shared<IdleSetPolicy>(n, false, rate); }
PolicyPtr make_sita(std::vector<double> cuts) { return std::make_shared<SitaPolicy>(std::move(cuts)); }

PolicyPtr make_sita(std::size_t n, const SizeSpec& sizes) {
  require_servers(n);
  sizes.validate();
  // Cut i carries work share i/n, so every server sees load lambda.
  std::vector<double> cuts;
  for (std::size_t i = 1; i < n; ++i) {
    double target = static_cast<double>(i) / static_cast<double>(n);
    double lo = 0.0, hi = 1.0;
    while (sizes.partial_mean(hi) < target) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (sizes.partial_mean(mid) < target ? lo : hi) = mid;
    }
    if (!cuts.empty() && !(hi > cuts.back()))
      throw ConfigError("size distribution has atoms; give explicit sita cut points");
    cuts.push_back(hi);
  }
  return make_sita(std::move(cuts));
}

}  // namespace lbsim
