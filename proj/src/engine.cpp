#include "lbsim/engine.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lbsim {

void SimulationConfig::validate() const {
  if (servers == 0) throw ConfigError("servers must be at least 1");
  if (!(load > 0.0 && load < 1.0)) throw ConfigError(fmt::format("load {} not in (0,1)", load));
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be nonnegative");
  if (job_budget == 0 && horizon == 0.0 && script.empty())
    throw ConfigError("either a job budget or a horizon is required");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup fraction must be in [0,1)");
  if (!(census_gamma > 0.0)) throw ConfigError("census gamma must be positive");
  if (!(census_rate >= 0.0)) throw ConfigError("census rate must be nonnegative");
  interarrival.validate();
  sizes.validate();
  double prev = 0.0;
  for (const auto& a : script) {
    if (!(a.time >= prev)) throw ConfigError("scripted arrivals must be in nondecreasing time order");
    if (!(a.size > 0.0)) throw ConfigError("job sizes must be strictly positive");
    prev = a.time;
  }
}

MessageCounts& MessageCounts::operator+=(const MessageCounts& o) {
  query += o.query;
  response += o.response;
  spontaneous += o.spontaneous;
  departure += o.departure;
  return *this;
}

RunTotals& RunTotals::operator+=(const RunTotals& o) {
  arrivals += o.arrivals;
  departures += o.departures;
  steady_arrivals += o.steady_arrivals;
  steady_departures += o.steady_departures;
  sampled_total += o.sampled_total;
  dispatched_to_idle += o.dispatched_to_idle;
  messages += o.messages;
  steady_messages += o.steady_messages;
  steady_duration += o.steady_duration;
  server_time += o.server_time;
  for (std::size_t j = 0; j < kTailDepth; ++j) tail_time[j] += o.tail_time[j];
  delay_sum += o.delay_sum;
  delay_count += o.delay_count;
  return *this;
}

Census take_census(const SystemView& state, double gamma) {
  Census c;
  c.time = state.now();
  for (ServerId i = 1; i <= state.servers(); ++i) {
    const ServerQueue& q = state.queue(i);
    if (q.idle()) {
      ++c.idle;
      continue;
    }
    if (q.workload(state.now()) >= 2.0 * gamma)
      ++c.loaded;
    else
      ++c.draining;
  }
  return c;
}

double MetricsLog::tail_fraction(std::size_t jobs) const {
  if (jobs == 0) return 1.0;
  if (jobs > kTailDepth) throw ConfigError("tail depth exceeds what the engine tracks");
  double d = steady_duration();
  if (!(d > 0.0)) return 0.0;
  return tail_time[jobs - 1] / (d * static_cast<double>(servers));
}

RunTotals MetricsLog::totals(double warmup_fraction) const {
  RunTotals t;
  t.arrivals = arrivals;
  t.departures = departures;
  t.steady_arrivals = steady_arrivals;
  t.steady_departures = steady_departures;
  t.sampled_total = sampled_total;
  t.dispatched_to_idle = dispatched_to_idle;
  t.messages = messages;
  t.steady_messages = steady_messages;
  t.steady_duration = steady_duration();
  t.server_time = steady_duration() * static_cast<double>(servers);
  t.tail_time = tail_time;
  auto k0 = static_cast<std::size_t>(warmup_fraction * static_cast<double>(jobs.size()));
  for (std::size_t k = k0; k < jobs.size(); ++k) {
    t.delay_sum += jobs[k].delay;
    ++t.delay_count;
  }
  return t;
}

bool EventLater::operator()(const Event& a, const Event& b) const {
  if (a.time != b.time) return a.time > b.time;
  if (a.kind != b.kind) return a.kind > b.kind;
  return a.sequence > b.sequence;
}

Simulator::Simulator(PolicyPtr policy, SimulationConfig config, Observer* observer)
    : policy_(std::move(policy)),
      config_(std::move(config)),
      observer_(observer),
      rng_(config_.seed) {
  config_.validate();
  if (!policy_) throw ConfigError("no policy given");
  if (policy_->servers() != config_.servers)
    throw ConfigError(fmt::format("policy built for {} servers, simulation has {}",
                                  policy_->servers(), config_.servers));
  interarrival_ = InterarrivalSpec{config_.interarrival, config_.arrival_rate()};
  queues_.resize(config_.servers);
  stamp_.assign(config_.servers + 1, 0);
  memory_ = policy_->initial_memory();
  memory_.require_capacity(policy_->memory_bits(), policy_->name() + " initial memory");

  log_.policy = policy_->name();
  log_.servers = config_.servers;
  log_.load = config_.load;
  log_.seed = config_.seed;
  log_.memory_bits = policy_->memory_bits();
  log_.census_gamma = config_.census_gamma;
  if (config_.record_jobs && config_.job_budget > 0)
    log_.jobs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(config_.job_budget, 1u << 26)));

  if (config_.job_budget > 0)
    warmup_jobs_ = static_cast<std::uint64_t>(config_.warmup_fraction *
                                              static_cast<double>(config_.job_budget));
  else if (config_.horizon > 0.0)
    warmup_time_ = config_.warmup_fraction * config_.horizon;
  if (warmup_jobs_ == 0 && warmup_time_ == 0.0) steady_ = true;
  log_.warmup_jobs = warmup_jobs_;

  if (!config_.script.empty()) {
    schedule(config_.script.front().time, EventKind::kArrival);
  } else {
    double first = config_.stationary_arrival_start
                       ? interarrival_.sample_residual(rng_[Stream::kArrivals])
                       : interarrival_.sample(rng_[Stream::kArrivals]);
    schedule(first, EventKind::kArrival);
  }
  double mu = policy_->spontaneous_rate();
  if (mu < 0.0) throw PolicyContractViolation("negative spontaneous message rate");
  if (mu > 0.0) {
    double rate = mu * static_cast<double>(config_.servers);
    schedule(-std::log(rng_[Stream::kSpontaneous].open_unit()) / rate, EventKind::kSpontaneous);
  }
}

void Simulator::schedule(double t, EventKind kind, ServerId server) {
  events_.push(Event{t, kind, server, sequence_++});
}

void Simulator::schedule_next_arrival(double after) {
  if (!config_.script.empty()) {
    ++script_pos_;
    if (script_pos_ < config_.script.size()) schedule(config_.script[script_pos_].time, EventKind::kArrival);
    return;
  }
  schedule(after + interarrival_.sample(rng_[Stream::kArrivals]), EventKind::kArrival);
}

void Simulator::flush_grids(double before) {
  if (config_.census_rate > 0.0) {
    for (;;) {
      double g = static_cast<double>(census_index_) / config_.census_rate;
      if (!(g < before)) break;
      if (steady_ && g >= log_.steady_start)
        log_.census.push_back(take_census(SystemView(queues_, g), config_.census_gamma));
      ++census_index_;
    }
  }
  if (observer_ != nullptr) {
    double dt = observer_->observation_interval();
    if (dt > 0.0) {
      for (;;) {
        double g = observer_->observation_start() + static_cast<double>(observe_index_) * dt;
        if (!(g < before)) break;
        observer_->on_observe(SystemView(queues_, g), memory_);
        ++observe_index_;
      }
    }
  }
}

void Simulator::advance_clock(double t) {
  if (!steady_ && warmup_jobs_ == 0 && t >= warmup_time_) {
    flush_grids(warmup_time_);
    now_ = warmup_time_;
    steady_ = true;
    log_.steady_start = warmup_time_;
  }
  flush_grids(t);
  if (steady_) {
    double dt = t - now_;
    for (std::size_t j = 0; j < kTailDepth; ++j)
      log_.tail_time[j] += static_cast<double>(at_least_[j]) * dt;
  }
  now_ = t;
}

void Simulator::finish(double t) {
  if (t > now_) advance_clock(t);
  if (!steady_) {
    steady_ = true;
    log_.steady_start = t;
  }
  log_.end_time = t;
  log_.busy_at_end = busy_;
  done_ = true;
}

void Simulator::job_added(std::size_t new_length) {
  if (new_length == 1) ++busy_;
  if (new_length <= kTailDepth) ++at_least_[new_length - 1];
}

void Simulator::job_removed(std::size_t old_length) {
  if (old_length <= kTailDepth) --at_least_[old_length - 1];
  if (old_length == 1) --busy_;
}

void Simulator::check_sample(const SampleVector& s) {
  const std::size_t n = config_.servers;
  if (s.size() > n)
    throw PolicyContractViolation(policy_->name() + ": sample vector longer than n");
  if (++stamp_epoch_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    stamp_epoch_ = 1;
  }
  for (ServerId id : s) {
    if (id < 1 || id > n)
      throw PolicyContractViolation(fmt::format("{}: sampled server {} outside 1..{}", policy_->name(), id, n));
    if (stamp_[id] == stamp_epoch_)
      throw PolicyContractViolation(fmt::format("{}: server {} sampled twice", policy_->name(), id));
    stamp_[id] = stamp_epoch_;
  }
}

void Simulator::set_memory(MemoryState m, const char* who) {
  m.require_capacity(policy_->memory_bits(), policy_->name() + " " + who);
  memory_ = std::move(m);
}

void Simulator::handle_arrival(double t) {
  if (!steady_ && warmup_jobs_ > 0 && log_.arrivals == warmup_jobs_) {
    steady_ = true;
    log_.steady_start = t;
  }
  const bool scripted = !config_.script.empty();
  double size = scripted ? config_.script[script_pos_].size : config_.sizes.sample(rng_[Stream::kSizes]);
  Uniform u = rng_[Stream::kSampling].uniform();
  Uniform v = rng_[Stream::kDispatch].uniform();

  SampleVector sampled = policy_->select_servers(memory_, size, u);
  check_sample(sampled);
  scratch_views_.clear();
  for (ServerId id : sampled) scratch_views_.emplace_back(queues_[id - 1], t);
  ServerId dest = policy_->choose_destination(memory_, size, sampled, scratch_views_, v);
  if (dest < 1 || dest > config_.servers)
    throw PolicyContractViolation(fmt::format("{}: destination {} outside 1..{}", policy_->name(), dest,
                                              config_.servers));
  MemoryState next = policy_->update_after_dispatch(memory_, size, sampled, scratch_views_, dest);

  MessageCounts charged;
  charged.query = sampled.size();
  charged.response = sampled.size();
  log_.messages += charged;
  if (steady_) log_.steady_messages += charged;
  log_.sampled_total += sampled.size();

  ServerQueue& q = queues_[dest - 1];
  JobRecord job;
  job.index = log_.arrivals;
  job.arrival = t;
  job.size = size;
  job.sampled = static_cast<std::uint32_t>(sampled.size());
  job.destination = dest;
  job.delay = q.workload(t);
  job.server_messages = pending_server_messages_;
  pending_server_messages_ = 0;

  const bool was_idle = q.idle();
  if (was_idle) ++log_.dispatched_to_idle;
  if (observer_ != nullptr) observer_->on_arrival(job, sampled, view());

  set_memory(std::move(next), "update_after_dispatch");
  q.push(size, t);
  job_added(q.length());
  if (was_idle) schedule(q.head_departure(), EventKind::kDeparture, dest);

  ++log_.arrivals;
  if (steady_) ++log_.steady_arrivals;
  if (config_.record_jobs) log_.jobs.push_back(job);

  if (config_.job_budget > 0 && log_.arrivals >= config_.job_budget) {
    finish(t);
    return;
  }
  schedule_next_arrival(t);
}

void Simulator::handle_departure(double t, ServerId server) {
  ServerQueue& q = queues_[server - 1];
  if (q.idle()) throw InvariantViolation(fmt::format("departure scheduled on empty server {}", server));
  if (q.head_departure() != t)
    throw InvariantViolation(fmt::format("stale departure event at server {}", server));
  std::size_t old_length = q.length();
  q.pop_head();
  job_removed(old_length);
  ++log_.departures;
  if (steady_) ++log_.steady_departures;

  Uniform y = rng_[Stream::kDeparture].uniform();
  QueueView after(q, t);
  bool signaled = policy_->signals_departure(after, y);
  if (signaled) {
    ++log_.messages.departure;
    if (steady_) ++log_.steady_messages.departure;
    ++pending_server_messages_;
    set_memory(policy_->absorb_departure(memory_, server, after), "absorb_departure");
  }
  if (observer_ != nullptr) observer_->on_departure(t, server, signaled);
  if (!q.idle()) schedule(q.head_departure(), EventKind::kDeparture, server);
}

void Simulator::handle_spontaneous(double t) {
  ++log_.spontaneous_ticks;
  Uniform x = rng_[Stream::kSpontaneousSender].uniform();
  SystemView state = view();
  ServerId sender = policy_->spontaneous_sender(state, x);
  if (sender != kNoServer) {
    if (sender > config_.servers)
      throw PolicyContractViolation(fmt::format("{}: spontaneous sender {} outside 1..{}", policy_->name(),
                                                sender, config_.servers));
    ++log_.messages.spontaneous;
    if (steady_) ++log_.steady_messages.spontaneous;
    ++pending_server_messages_;
    set_memory(policy_->absorb_spontaneous(memory_, sender, state[sender]), "absorb_spontaneous");
  }
  if (observer_ != nullptr) observer_->on_spontaneous(t, sender);
  double rate = policy_->spontaneous_rate() * static_cast<double>(config_.servers);
  schedule(t - std::log(rng_[Stream::kSpontaneous].open_unit()) / rate, EventKind::kSpontaneous);
}

bool Simulator::step() {
  if (done_) return false;
  // Scripted runs drain once the script is exhausted; the spontaneous clock
  // alone never keeps a run alive.
  bool only_clock = events_.empty() || (events_.size() == 1 && events_.top().kind == EventKind::kSpontaneous &&
                                        !config_.script.empty() && script_pos_ >= config_.script.size());
  if (only_clock) {
    finish(config_.horizon > 0.0 ? std::max(now_, config_.horizon) : now_);
    return false;
  }
  Event e = events_.top();
  if (config_.horizon > 0.0 && e.time > config_.horizon) {
    finish(config_.horizon);
    return false;
  }
  events_.pop();
  advance_clock(e.time);
  switch (e.kind) {
    case EventKind::kArrival: handle_arrival(e.time); break;
    case EventKind::kDeparture: handle_departure(e.time, e.server); break;
    case EventKind::kSpontaneous: handle_spontaneous(e.time); break;
  }
  return !done_;
}

MetricsLog Simulator::run() {
  while (step()) {
  }
  return log_;
}

MetricsLog run(PolicyPtr policy, const SimulationConfig& config, Observer* observer) {
  Simulator sim(std::move(policy), config, observer);
  return sim.run();
}

BatchEstimate estimate_delay(const MetricsLog& log, double warmup_fraction, std::size_t batches,
                             double confidence) {
  auto k0 = static_cast<std::size_t>(warmup_fraction * static_cast<double>(log.jobs.size()));
  std::vector<double> delays;
  delays.reserve(log.jobs.size() - std::min(k0, log.jobs.size()));
  for (std::size_t k = k0; k < log.jobs.size(); ++k) delays.push_back(log.jobs[k].delay);
  return batch_means(delays, batches, confidence);
}

MessageRate estimate_message_rate(const MetricsLog& log) {
  MessageRate r;
  r.duration = log.steady_duration();
  if (!(r.duration > 0.0)) throw ConfigError("message rate needs a positive steady window");
  const auto& m = log.steady_messages;
  r.query = static_cast<double>(m.query) / r.duration;
  r.response = static_cast<double>(m.response) / r.duration;
  r.spontaneous = static_cast<double>(m.spontaneous) / r.duration;
  r.departure = static_cast<double>(m.departure) / r.duration;
  r.total = static_cast<double>(m.total()) / r.duration;
  return r;
}

BatchEstimate message_rate_interval(const MetricsLog& log, std::size_t batches, double confidence) {
  BatchEstimate est;
  est.confidence = confidence;
  est.batches = batches;
  std::size_t k0 = std::min<std::size_t>(log.warmup_jobs, log.jobs.size());
  std::size_t count = log.jobs.size() - k0;
  est.samples = count;
  if (batches < 10 || count < 2 * batches) {
    est.reason = "not enough steady-state jobs for batching";
    return est;
  }
  std::size_t per = count / batches;
  RunningStats rates;
  for (std::size_t b = 0; b < batches; ++b) {
    std::size_t lo = k0 + b * per, hi = lo + per;
    double msgs = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      msgs += 2.0 * log.jobs[k].sampled;
      if (k + 1 < log.jobs.size()) msgs += log.jobs[k + 1].server_messages;
    }
    double span = (hi < log.jobs.size() ? log.jobs[hi].arrival : log.end_time) - log.jobs[lo].arrival;
    if (span > 0.0) rates.add(msgs / span);
  }
  est.mean = estimate_message_rate(log).total;
  est.std_error = std::sqrt(rates.variance() / static_cast<double>(rates.count()));
  est.half_width =
      student_t_quantile(0.5 + confidence / 2.0, static_cast<double>(rates.count() - 1)) * est.std_error;
  est.conclusive = rates.count() >= 10;
  return est;
}

}  // namespace lbsim
