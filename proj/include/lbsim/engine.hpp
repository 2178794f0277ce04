#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbsim/arrivals.hpp"
#include "lbsim/policy.hpp"
#include "lbsim/rng.hpp"
#include "lbsim/stats.hpp"

namespace lbsim {

struct ScriptedArrival {
  double time = 0.0;
  double size = 1.0;
};

struct SimulationConfig {
  std::size_t servers = 1;
  double load = 0.5;  // lambda; total arrival rate is load * servers
  UnitMeanDistribution interarrival;
  SizeSpec sizes;
  std::uint64_t job_budget = 0;  // 0 = no job limit
  double horizon = 0.0;          // 0 = no time limit; at least one limit is required
  std::uint64_t seed = 1;
  /// Share of the job budget (or of the horizon, for time-limited runs)
  /// discarded before steady-state statistics start.
  double warmup_fraction = 0.2;
  double census_gamma = 0.1;
  double census_rate = 10.0;  // snapshots per unit time; 0 disables
  /// Start the arrival clock from its stationary residual instead of a full interarrival.
  bool stationary_arrival_start = false;
  bool record_jobs = true;
  /// Explicit (time, size) arrivals replacing the renewal and size streams.
  std::vector<ScriptedArrival> script;

  /// Throws ConfigError; called before any simulation work.
  void validate() const;
  double arrival_rate() const { return load * static_cast<double>(servers); }
};

/// One dispatched job. Only |S_k| is kept; observers see the full sample vector.
struct JobRecord {
  std::uint64_t index = 0;
  double arrival = 0.0;
  double size = 0.0;
  std::uint32_t sampled = 0;
  ServerId destination = kNoServer;
  double delay = 0.0;
  /// Spontaneous + departure messages charged since the previous arrival.
  std::uint32_t server_messages = 0;

  friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

struct MessageCounts {
  std::uint64_t query = 0;
  std::uint64_t response = 0;
  std::uint64_t spontaneous = 0;
  std::uint64_t departure = 0;

  std::uint64_t total() const { return query + response + spontaneous + departure; }
  MessageCounts& operator+=(const MessageCounts& o);
  friend bool operator==(const MessageCounts&, const MessageCounts&) = default;
};

/// Servers split by total unfinished work w at one instant:
/// loaded (w >= 2*gamma), idle (w == 0), draining (0 < w < 2*gamma).
struct Census {
  double time = 0.0;
  std::uint32_t loaded = 0;
  std::uint32_t idle = 0;
  std::uint32_t draining = 0;

  friend bool operator==(const Census&, const Census&) = default;
};

Census take_census(const SystemView& state, double gamma);

inline constexpr std::size_t kTailDepth = 16;

/// Additive run statistics. Merging is associative and commutative, so
/// replications can be combined in any order.
struct RunTotals {
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  std::uint64_t steady_arrivals = 0;
  std::uint64_t steady_departures = 0;
  std::uint64_t sampled_total = 0;
  std::uint64_t dispatched_to_idle = 0;
  MessageCounts messages;
  MessageCounts steady_messages;
  double steady_duration = 0.0;
  double server_time = 0.0;  // steady_duration * servers
  std::array<double, kTailDepth> tail_time{};
  double delay_sum = 0.0;
  std::uint64_t delay_count = 0;

  RunTotals& operator+=(const RunTotals& o);
  friend bool operator==(const RunTotals&, const RunTotals&) = default;
};

struct MetricsLog {
  std::string policy;
  std::size_t servers = 0;
  double load = 0.0;
  std::uint64_t seed = 0;
  unsigned memory_bits = 0;

  std::vector<JobRecord> jobs;
  std::uint64_t warmup_jobs = 0;

  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  std::uint64_t steady_arrivals = 0;
  std::uint64_t steady_departures = 0;
  std::uint64_t sampled_total = 0;       // sum of |S_k| over all jobs
  std::uint64_t dispatched_to_idle = 0;  // jobs that found their server empty
  std::uint64_t spontaneous_ticks = 0;
  std::uint64_t busy_at_end = 0;
  MessageCounts messages;         // whole run
  MessageCounts steady_messages;  // steady window only

  double end_time = 0.0;
  double steady_start = 0.0;
  /// tail_time[j] = integral over the steady window of #{servers with >= j+1 jobs}.
  std::array<double, kTailDepth> tail_time{};

  double census_gamma = 0.0;
  std::vector<Census> census;

  double steady_duration() const { return end_time - steady_start; }
  /// Time-average fraction of servers holding at least `jobs` jobs (1 <= jobs <= kTailDepth).
  double tail_fraction(std::size_t jobs) const;
  double busy_fraction() const { return tail_fraction(1); }
  double idle_fraction() const { return 1.0 - busy_fraction(); }

  RunTotals totals(double warmup_fraction = 0.2) const;
};

/// Callbacks for trace checks and probes. All default to no-ops.
class Observer {
 public:
  virtual ~Observer() = default;
  /// Fired after the destination is chosen, before the job joins its queue.
  virtual void on_arrival(const JobRecord& job, const SampleVector& sampled,
                          const SystemView& before) {
    (void)job, (void)sampled, (void)before;
  }
  virtual void on_spontaneous(double time, ServerId sender) { (void)time, (void)sender; }
  virtual void on_departure(double time, ServerId server, bool signaled) {
    (void)time, (void)server, (void)signaled;
  }
  /// Observation grid start + k * interval; interval 0 disables it.
  virtual double observation_interval() const { return 0.0; }
  virtual double observation_start() const { return 0.0; }
  /// State at a grid instant, after all events at or before that instant.
  virtual void on_observe(const SystemView& state, const MemoryState& memory) {
    (void)state, (void)memory;
  }
};

enum class EventKind : std::uint8_t { kDeparture = 0, kArrival = 1, kSpontaneous = 2 };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::kArrival;
  ServerId server = kNoServer;
  std::uint64_t sequence = 0;
};

/// Earliest time first; at equal times departures, then arrivals, then
/// spontaneous ticks; then insertion order.
struct EventLater {
  bool operator()(const Event& a, const Event& b) const;
};

/// One replication of the dispatching system.
class Simulator {
 public:
  Simulator(PolicyPtr policy, SimulationConfig config, Observer* observer = nullptr);

  /// Processes the next event. Returns false once a stopping limit is hit.
  bool step();
  MetricsLog run();

  double now() const { return now_; }
  SystemView view() const { return SystemView(queues_, now_); }
  const MemoryState& memory() const { return memory_; }
  const MetricsLog& log() const { return log_; }

 private:
  void handle_arrival(double t);
  void handle_departure(double t, ServerId server);
  void handle_spontaneous(double t);

  void schedule(double t, EventKind kind, ServerId server = kNoServer);
  void schedule_next_arrival(double after);
  void advance_clock(double t);
  void flush_grids(double before);
  void finish(double t);
  void job_added(std::size_t new_length);
  void job_removed(std::size_t old_length);
  void check_sample(const SampleVector& s);
  void set_memory(MemoryState m, const char* who);

  PolicyPtr policy_;
  SimulationConfig config_;
  Observer* observer_;
  RngStreams rng_;
  InterarrivalSpec interarrival_;

  std::vector<ServerQueue> queues_;
  MemoryState memory_;
  std::priority_queue<Event, std::vector<Event>, EventLater> events_;
  std::uint64_t sequence_ = 0;
  double now_ = 0.0;
  bool done_ = false;

  std::uint64_t warmup_jobs_ = 0;
  double warmup_time_ = 0.0;
  bool steady_ = false;
  std::uint64_t busy_ = 0;
  std::array<std::uint64_t, kTailDepth> at_least_{};
  std::uint32_t pending_server_messages_ = 0;
  std::size_t script_pos_ = 0;
  std::uint64_t census_index_ = 0;
  std::uint64_t observe_index_ = 0;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t stamp_epoch_ = 0;
  std::vector<QueueView> scratch_views_;

  MetricsLog log_;
};

MetricsLog run(PolicyPtr policy, const SimulationConfig& config, Observer* observer = nullptr);

/// Batch-means mean delay over jobs after the first `warmup_fraction` share.
BatchEstimate estimate_delay(const MetricsLog& log, double warmup_fraction = 0.2,
                             std::size_t batches = 20, double confidence = 0.95);

struct MessageRate {
  double total = 0.0;
  double query = 0.0;
  double response = 0.0;
  double spontaneous = 0.0;
  double departure = 0.0;
  double duration = 0.0;
};

/// Messages per unit time over the steady window, split by category.
MessageRate estimate_message_rate(const MetricsLog& log);

/// Batch-means interval for the total message rate, batching steady-window jobs.
BatchEstimate message_rate_interval(const MetricsLog& log, std::size_t batches = 20,
                                    double confidence = 0.95);

nlohmann::json to_json(const MetricsLog& log);
MetricsLog metrics_from_json(const nlohmann::json& j);
/// One row per job: k,T_k,W_k,sampled,D_k,L_k
void write_jobs_csv(std::ostream& out, const MetricsLog& log);

}  // namespace lbsim
