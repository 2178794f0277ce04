#include "lbsim/server_queue.hpp"

#include "lbsim/types.hpp"

namespace lbsim {

ServerQueue ServerQueue::from_workloads(std::span<const double> remaining, double now) {
  ServerQueue q;
  for (double w : remaining) {
    if (!(w > 0.0)) throw ConfigError("queue workloads must be strictly positive");
    q.push(w, now);
  }
  return q;
}

double ServerQueue::remaining(std::size_t j, double now) const {
  if (j >= sizes_.size()) return 0.0;
  return j == 0 ? head_departure_ - now : sizes_[j];
}

double ServerQueue::workload(double now) const {
  if (sizes_.empty()) return 0.0;
  double total = head_departure_ - now;
  for (std::size_t j = 1; j < sizes_.size(); ++j) total += sizes_[j];
  return total;
}

std::vector<double> ServerQueue::workloads(double now) const {
  std::vector<double> out;
  out.reserve(sizes_.size());
  for (std::size_t j = 0; j < sizes_.size(); ++j) out.push_back(remaining(j, now));
  return out;
}

void ServerQueue::push(double size, double now) {
  if (!(size > 0.0)) throw InvariantViolation("job sizes must be strictly positive");
  if (sizes_.empty()) head_departure_ = now + size;
  sizes_.push_back(size);
}

void ServerQueue::pop_head() {
  if (sizes_.empty()) throw InvariantViolation("departure from an empty queue");
  double t = head_departure_;
  sizes_.pop_front();
  if (!sizes_.empty()) head_departure_ = t + sizes_.front();
}

}  // namespace lbsim
