#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "lbsim/memory_state.hpp"
#include "lbsim/sample_vector.hpp"
#include "lbsim/server_queue.hpp"
#include "lbsim/types.hpp"

namespace lbsim {

/// All server queues at one instant, indexed by 1-based server id.
class SystemView {
 public:
  SystemView(std::span<const ServerQueue> queues, double now) : queues_(queues), now_(now) {}

  std::size_t servers() const { return queues_.size(); }
  double now() const { return now_; }
  QueueView operator[](ServerId id) const { return QueueView(queues_[id - 1], now_); }
  const ServerQueue& queue(ServerId id) const { return queues_[id - 1]; }

 private:
  std::span<const ServerQueue> queues_;
  double now_;
};

/// A dispatching policy, written as the seven decision rules the engine calls.
///
/// On an arrival of size w the engine calls, in order and against one
/// pre-arrival snapshot of the queried queues:
///   select_servers -> choose_destination -> update_after_dispatch.
/// At a spontaneous-clock tick (rate spontaneous_rate() * n) it calls
/// spontaneous_sender and, if a server answers, absorb_spontaneous.
/// At every departure it calls signals_departure and, if true, absorb_departure.
///
/// Every rule must be a pure function of its arguments. Memory updates take no
/// randomization. Memory produced by any rule must fit memory_bits(); the
/// engine checks this on every update rather than trusting the declaration.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  virtual std::size_t servers() const = 0;
  virtual unsigned memory_bits() const = 0;
  /// Per-server rate of the spontaneous message clock.
  virtual double spontaneous_rate() const { return 0.0; }
  /// Memory at time zero for a system that starts empty.
  virtual MemoryState initial_memory() const { return MemoryState(memory_bits()); }
  /// Whether any rule reads the job size (audits then need a size grid).
  virtual bool size_aware() const { return false; }

  virtual SampleVector select_servers(const MemoryState& memory, double size, Uniform u) const = 0;

  /// `queried[i]` is the state of server `sampled[i]` just before the arrival.
  virtual ServerId choose_destination(const MemoryState& memory, double size,
                                      const SampleVector& sampled,
                                      std::span<const QueueView> queried, Uniform v) const = 0;

  virtual MemoryState update_after_dispatch(const MemoryState& memory, double size,
                                            const SampleVector& sampled,
                                            std::span<const QueueView> queried,
                                            ServerId destination) const {
    (void)size, (void)sampled, (void)queried, (void)destination;
    return memory;
  }

  /// Server that reports at a spontaneous tick, or kNoServer.
  virtual ServerId spontaneous_sender(const SystemView& queues, Uniform x) const {
    (void)queues, (void)x;
    return kNoServer;
  }
  /// The sender's full queue is passed even if the policy ignores it.
  virtual MemoryState absorb_spontaneous(const MemoryState& memory, ServerId sender,
                                         const QueueView& queue) const {
    (void)sender, (void)queue;
    return memory;
  }

  /// Called with the queue just after a departure; true sends one message.
  virtual bool signals_departure(const QueueView& queue, Uniform y) const {
    (void)queue, (void)y;
    return false;
  }
  virtual MemoryState absorb_departure(const MemoryState& memory, ServerId server,
                                       const QueueView& queue) const {
    (void)server, (void)queue;
    return memory;
  }
};

using PolicyPtr = std::shared_ptr<const Policy>;

}  // namespace lbsim
