#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace lbsim {

/// FIFO queue of one unit-rate server.
///
/// Stores the sizes of waiting jobs and the absolute departure time of the job
/// in service, so remaining workloads are exact at any instant without
/// touching idle servers. Entries are strictly positive; a server is idle iff
/// the queue is empty.
class ServerQueue {
 public:
  ServerQueue() = default;

  /// Queue whose remaining workloads at time `now` are `remaining` (head first).
  static ServerQueue from_workloads(std::span<const double> remaining, double now = 0.0);

  bool idle() const { return sizes_.empty(); }
  std::size_t length() const { return sizes_.size(); }

  /// Absolute completion time of the head job. Requires !idle().
  double head_departure() const { return head_departure_; }

  /// Remaining work of the j-th job (0 = head) at time `now`.
  double remaining(std::size_t j, double now) const;
  /// Total unfinished work at `now`: head remainder first, then queued sizes in order.
  double workload(double now) const;
  std::vector<double> workloads(double now) const;

  /// Appends a job of positive size; an idle server starts it at `now`.
  void push(double size, double now);
  /// Removes the head at its departure instant and starts the next job.
  void pop_head();

 private:
  std::deque<double> sizes_;
  double head_departure_ = 0.0;
};

/// Read-only view of a queue at a fixed instant; what hooks get to see.
class QueueView {
 public:
  QueueView(const ServerQueue& q, double now) : queue_(&q), now_(now) {}

  bool idle() const { return queue_->idle(); }
  std::size_t length() const { return queue_->length(); }
  double workload() const { return queue_->workload(now_); }
  double remaining(std::size_t j) const { return queue_->remaining(j, now_); }
  std::vector<double> workloads() const { return queue_->workloads(now_); }

 private:
  const ServerQueue* queue_;
  double now_;
};

}  // namespace lbsim
