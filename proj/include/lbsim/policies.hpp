#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lbsim/arrivals.hpp"
#include "lbsim/policy.hpp"

namespace lbsim {

/// Sends every job to a uniformly random server. No memory, no messages.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::size_t n);
  std::string name() const override { return "random"; }
  std::size_t servers() const override { return n_; }
  unsigned memory_bits() const override { return 0; }
  SampleVector select_servers(const MemoryState&, double, Uniform) const override { return {}; }
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;

 private:
  std::size_t n_;
};

/// Cycles through servers 1..n. Memory holds the zero-based index of the next
/// destination; values >= n are read modulo n.
class RoundRobinPolicy : public Policy {
 public:
  explicit RoundRobinPolicy(std::size_t n);
  std::string name() const override { return "round_robin"; }
  std::size_t servers() const override { return n_; }
  unsigned memory_bits() const override { return ceil_log2(n_); }
  SampleVector select_servers(const MemoryState&, double, Uniform) const override { return {}; }
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;
  MemoryState update_after_dispatch(const MemoryState& m, double size, const SampleVector& s,
                                    std::span<const QueueView> q, ServerId d) const override;

  ServerId destination_for(const MemoryState& m) const;

 private:
  std::size_t n_;
};

enum class LoadMetric { kLength, kWorkload };

/// Queries a uniform ordered d-tuple (d = n when `query_all`, so a uniform
/// ordering of all servers) and joins the least loaded, ties broken uniformly in sampled
/// order. Covers SQ, SQ(d), SQ(d_n), LL and LL(d).
class SampleMinPolicy : public Policy {
 public:
  SampleMinPolicy(std::string name, std::size_t n, std::size_t d, bool query_all, LoadMetric metric);
  std::string name() const override { return name_; }
  std::size_t servers() const override { return n_; }
  unsigned memory_bits() const override { return 0; }
  SampleVector select_servers(const MemoryState& m, double size, Uniform u) const override;
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;

  std::size_t d() const { return d_; }
  bool query_all() const { return query_all_; }
  LoadMetric metric() const { return metric_; }

 private:
  std::string name_;
  std::size_t n_;
  std::size_t d_;
  bool query_all_;
  LoadMetric metric_;
};

/// SQ(d,b): samples d servers and also considers up to b remembered servers
/// with the queue lengths last seen for them.
///
/// Memory holds b slots, each an id field (0 = empty) followed by an 8-bit
/// length field, kept sorted by length with empty slots last. Lengths are
/// capped at 255.
class SqdbPolicy : public Policy {
 public:
  struct Slot {
    ServerId id = kNoServer;
    unsigned length = 0;
    friend bool operator==(const Slot&, const Slot&) = default;
  };
  static constexpr unsigned kLengthBits = 8;
  static constexpr unsigned kLengthCap = (1u << kLengthBits) - 1;

  SqdbPolicy(std::size_t n, std::size_t d, std::size_t b);
  std::string name() const override;
  std::size_t servers() const override { return n_; }
  unsigned memory_bits() const override { return static_cast<unsigned>(b_) * slot_bits(); }
  SampleVector select_servers(const MemoryState& m, double size, Uniform u) const override;
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;
  MemoryState update_after_dispatch(const MemoryState& m, double size, const SampleVector& s,
                                    std::span<const QueueView> q, ServerId d) const override;

  std::size_t d() const { return d_; }
  std::size_t b() const { return b_; }
  unsigned id_bits() const { return ceil_log2(n_ + 1); }
  unsigned slot_bits() const { return id_bits() + kLengthBits; }
  /// Occupied slots in stored order.
  std::vector<Slot> decode(const MemoryState& m) const;
  MemoryState encode(const std::vector<Slot>& slots) const;
  /// Candidates considered at dispatch: sampled (fresh lengths) then stored ids not sampled.
  std::vector<Slot> candidates(const MemoryState& m, const SampleVector& s,
                               std::span<const QueueView> q) const;

 private:
  std::size_t n_;
  std::size_t d_;
  std::size_t b_;
};

/// Idle-set dispatching: memory bit i-1 is set iff server i is believed idle.
/// Jobs go to a uniformly chosen flagged server, else to a uniform random one;
/// the chosen server's bit is cleared.
///
/// With `departure_signals` (JIQ) a server reports when a departure empties it.
/// Otherwise (idle ping) a rate-mu clock picks server ceil(x n), which reports iff idle.
class IdleSetPolicy : public Policy {
 public:
  IdleSetPolicy(std::size_t n, bool departure_signals, double ping_rate);
  std::string name() const override { return departure_signals_ ? "jiq" : "idle_ping"; }
  std::size_t servers() const override { return n_; }
  unsigned memory_bits() const override { return static_cast<unsigned>(n_); }
  double spontaneous_rate() const override { return ping_rate_; }
  MemoryState initial_memory() const override { return MemoryState::all_ones(memory_bits()); }
  SampleVector select_servers(const MemoryState&, double, Uniform) const override { return {}; }
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;
  MemoryState update_after_dispatch(const MemoryState& m, double size, const SampleVector& s,
                                    std::span<const QueueView> q, ServerId d) const override;
  ServerId spontaneous_sender(const SystemView& queues, Uniform x) const override;
  MemoryState absorb_spontaneous(const MemoryState& m, ServerId sender, const QueueView& q) const override;
  bool signals_departure(const QueueView& q, Uniform y) const override;
  MemoryState absorb_departure(const MemoryState& m, ServerId server, const QueueView& q) const override;

  bool departure_signals() const { return departure_signals_; }

 private:
  std::size_t n_;
  bool departure_signals_;
  double ping_rate_;
};

/// Size-interval assignment: server i takes sizes in [cut_{i-1}, cut_i), with
/// cut_0 = 0 and cut_n = infinity. No memory, no messages.
class SitaPolicy : public Policy {
 public:
  explicit SitaPolicy(std::vector<double> cuts);
  std::string name() const override { return "sita"; }
  std::size_t servers() const override { return cuts_.size() + 1; }
  unsigned memory_bits() const override { return 0; }
  bool size_aware() const override { return true; }
  SampleVector select_servers(const MemoryState&, double, Uniform) const override { return {}; }
  ServerId choose_destination(const MemoryState& m, double size, const SampleVector& s,
                              std::span<const QueueView> q, Uniform v) const override;

  const std::vector<double>& cuts() const { return cuts_; }

 private:
  std::vector<double> cuts_;
};

/// d_n = ceil(log2 n), clamped to [1, n].
std::size_t default_dn_rule(std::size_t n);

PolicyPtr make_random(std::size_t n);
PolicyPtr make_round_robin(std::size_t n);
PolicyPtr make_sq(std::size_t n);
PolicyPtr make_sq_d(std::size_t n, std::size_t d);
PolicyPtr make_sq_dn(std::size_t n, const std::function<std::size_t(std::size_t)>& rule = default_dn_rule);
PolicyPtr make_sq_d_b(std::size_t n, std::size_t d, std::size_t b);
PolicyPtr make_ll(std::size_t n);
PolicyPtr make_ll_d(std::size_t n, std::size_t d);
PolicyPtr make_jiq(std::size_t n);
PolicyPtr make_idle_ping(std::size_t n, double rate);
/// Explicit cut points: strictly increasing, positive, finite; n = cuts + 1.
PolicyPtr make_sita(std::vector<double> cuts);
/// Equal-work cuts: jobs below cut i carry share i/n of the mean work.
PolicyPtr make_sita(std::size_t n, const SizeSpec& sizes);

}  // namespace lbsim
