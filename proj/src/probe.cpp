#include "lbsim/probe.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lbsim {

void BadEventConfig::validate(std::size_t n) const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (windows == 0) throw ConfigError("probe needs at least one window");
  if (!(spacing >= window_length(n))) throw ConfigError("windows overlap: spacing below gamma/n");
  if (!(start >= 0.0)) throw ConfigError("probe start must be nonnegative");
  if (batches < 10) throw ConfigError("probe needs at least 10 batches");
  if (!(confidence > 0.5 && confidence < 1.0)) throw ConfigError("probe confidence must be in (0.5,1)");
}

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

class WindowObserver : public Observer {
 public:
  WindowObserver(std::size_t n, const BadEventConfig& cfg)
      : n_(n), cfg_(cfg), length_(cfg.window_length(n)), deadline_(n + 1, kNever) {}

  double observation_interval() const override { return cfg_.spacing; }
  double observation_start() const override { return cfg_.start; }

  void on_observe(const SystemView& state, const MemoryState&) override {
    const double t = state.now();
    close_window();
    expire(t);
    if (tally_.windows >= cfg_.windows) return;

    Census c = take_census(state, cfg_.gamma);
    if (c.loaded + c.idle + c.draining != n_) ++tally_.census_violations;
    bool gap = false;
    for (ServerId i = 1; i <= n_; ++i) {
      const ServerQueue& q = state.queue(i);
      if (q.idle()) continue;
      double head_left = q.head_departure() - t;
      if (head_left > 0.0 && head_left < length_) gap = true;
      double work = q.workload(t);
      if (work < 2.0 * cfg_.gamma) {
        // Unit-rate service finishes the head no later than the total workload.
        if (!(q.head_departure() < t + 2.0 * cfg_.gamma)) ++tally_.draining_violations;
        deadline_[i] = std::min(deadline_[i], t + 2.0 * cfg_.gamma);
      }
    }
    tally_.loaded.push_back(c.loaded);
    tally_.idle.push_back(c.idle);
    tally_.draining.push_back(c.draining);
    tally_.service_gap.push_back(gap);
    tally_.busy_block.push_back(static_cast<double>(c.loaded) >= cfg_.gamma * static_cast<double>(n_));
    ++tally_.windows;

    open_ = true;
    window_start_ = t;
    arrivals_ = 0;
    big_ = true;
    tick_ = false;
  }

  void on_arrival(const JobRecord& job, const SampleVector&, const SystemView&) override {
    if (!open_) return;
    if (job.arrival >= window_start_ + length_) {
      close_window();
      return;
    }
    if (arrivals_ <= cfg_.c && job.size < 2.0 * cfg_.gamma) big_ = false;
    ++arrivals_;
  }

  void on_spontaneous(double time, ServerId) override {
    if (open_ && time <= window_start_ + length_) tick_ = true;
  }

  void on_departure(double time, ServerId server, bool) override {
    if (open_ && time >= window_start_ + length_) close_window();
    if (deadline_[server] != kNever && time <= deadline_[server]) deadline_[server] = kNever;
  }

  BadEventTally finish(double end_time) {
    close_window();
    expire(end_time);
    return std::move(tally_);
  }

 private:
  void close_window() {
    if (!open_) return;
    open_ = false;
    // Job sizes after the window still decide A_w; with fewer than c+1 arrivals
    // A_a fails, so H_0^+ needs no later information.
    bool burst = arrivals_ >= cfg_.c + 1 && !tick_;
    bool big = big_ && arrivals_ >= cfg_.c + 1;
    std::size_t k = tally_.windows - 1;
    tally_.burst.push_back(burst);
    tally_.big_jobs.push_back(big);
    tally_.all_bad.push_back(burst && big && !tally_.service_gap[k] && tally_.busy_block[k]);
  }

  void expire(double now) {
    for (ServerId i = 1; i <= n_; ++i)
      if (deadline_[i] < now) {
        ++tally_.draining_violations;
        deadline_[i] = kNever;
      }
  }

  std::size_t n_;
  BadEventConfig cfg_;
  double length_;
  std::vector<double> deadline_;
  BadEventTally tally_;
  bool open_ = false;
  double window_start_ = 0.0;
  unsigned arrivals_ = 0;
  bool big_ = true;
  bool tick_ = false;
};

template <class T>
BatchEstimate window_estimate(const std::vector<T>& xs, std::size_t batches, double scale = 1.0) {
  std::vector<double> v(xs.size());
  std::transform(xs.begin(), xs.end(), v.begin(), [&](T x) { return static_cast<double>(x) * scale; });
  return batch_means(v, batches, 0.95);
}

BoundCheck one_sided(std::string name, const BatchEstimate& e, double level, double bound, bool upper) {
  BoundCheck b;
  b.name = std::move(name);
  b.estimate = e.mean;
  b.bound = bound;
  b.relation = upper ? "<=" : ">=";
  if (!e.conclusive) {
    b.verdict = "INCONCLUSIVE";
    return b;
  }
  b.ci_low = e.lower_bound(level);
  b.ci_high = e.upper_bound(level);
  bool ok = upper ? b.ci_high <= bound : b.ci_low >= bound;
  b.verdict = ok ? "PASS" : "FAIL";
  return b;
}

}  // namespace

bool ProbeReport::pass() const {
  if (tally.census_violations != 0 || tally.draining_violations != 0) return false;
  return std::all_of(checks.begin(), checks.end(), [](const BoundCheck& b) { return b.verdict == "PASS"; });
}

ProbeReport probe_lemma_bounds(PolicyPtr policy, const SimulationConfig& base, const BadEventConfig& config) {
  const std::size_t n = base.servers;
  config.validate(n);
  SimulationConfig sim = base;
  sim.job_budget = 0;
  sim.horizon = config.start + static_cast<double>(config.windows) * config.spacing;
  sim.warmup_fraction = config.start / sim.horizon;
  sim.record_jobs = false;
  sim.census_rate = 0.0;
  sim.census_gamma = config.gamma;

  ProbeReport report;
  report.policy = policy->name();
  report.servers = n;
  report.load = base.load;
  report.config = config;

  WindowObserver observer(n, config);
  Simulator simulator(std::move(policy), sim, &observer);
  MetricsLog log = simulator.run();
  report.tally = observer.finish(log.end_time);
  const auto& t = report.tally;

  const double lambda = base.load, gamma = config.gamma;
  const std::size_t batches = config.batches;
  if (t.windows < 10000) {
    for (const char* name : {"P(A_s^c)", "P(A_b)", "E[N_I]/n"})
      report.checks.push_back(BoundCheck{name, 0, 0, 0, 0, "", "INCONCLUSIVE"});
    return report;
  }
  report.checks.push_back(
      one_sided("P(A_s^c)", window_estimate(t.service_gap, batches), config.confidence, lambda * gamma, true));
  report.checks.push_back(one_sided("P(A_b)", window_estimate(t.busy_block, batches), config.confidence,
                                    lambda - 2.0 * lambda * gamma - gamma, false));

  auto idle = window_estimate(t.idle, batches, 1.0 / static_cast<double>(n));
  BoundCheck idle_check;
  idle_check.name = "E[N_I]/n";
  idle_check.relation = "~";
  idle_check.bound = 1.0 - lambda;
  idle_check.estimate = idle.mean;
  if (idle.conclusive) {
    double z = student_t_quantile(0.5 + config.confidence / 2.0, static_cast<double>(idle.batches - 1));
    idle_check.ci_low = idle.mean - z * idle.std_error;
    idle_check.ci_high = idle.mean + z * idle.std_error;
    idle_check.verdict =
        idle_check.ci_low <= idle_check.bound && idle_check.bound <= idle_check.ci_high ? "PASS" : "FAIL";
  } else {
    idle_check.verdict = "INCONCLUSIVE";
  }
  report.checks.push_back(idle_check);
  return report;
}

BurstReport probe_arrival_burst(const UnitMeanDistribution& shape, std::size_t n, double load, double gamma,
                                unsigned c, std::uint64_t samples, std::uint64_t seed, double confidence) {
  shape.validate();
  if (n == 0) throw ConfigError("servers must be at least 1");
  if (!(load > 0.0 && load < 1.0)) throw ConfigError("load must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (samples == 0) throw ConfigError("burst probe needs samples");

  InterarrivalSpec spec{shape, load * static_cast<double>(n)};
  const double window = gamma / static_cast<double>(n);
  const double slot = window / static_cast<double>(c + 1);
  Xoshiro256 rng(derive_seed(seed, 0xB0057));
  Xoshiro256 gaps(derive_seed(seed, 0xDE17A));

  std::uint64_t hits = 0, short_gaps = 0;
  for (std::uint64_t k = 0; k < samples; ++k) {
    double t = spec.sample_residual(rng);
    for (unsigned j = 0; j < c && t < window; ++j) t += spec.sample(rng);
    if (t < window) ++hits;
    if (spec.sample(gaps) <= slot) ++short_gaps;
  }

  BurstReport r;
  r.family = shape.describe();
  r.servers = n;
  r.load = load;
  r.gamma = gamma;
  r.c = c;
  r.samples = samples;
  Proportion p = wilson_interval(hits, samples, confidence);
  r.estimate = p.estimate;
  r.ci_low = p.low;
  r.ci_high = p.high;
  if (shape.family == Family::kExponential) {
    // T_{c+1} < gamma/n iff a rate-lambda*n Poisson count on the window reaches c+1.
    double mean = load * gamma, term = std::exp(-mean), cdf = 0.0;
    for (unsigned j = 0; j <= c; ++j) {
      cdf += term;
      term *= mean / static_cast<double>(j + 1);
    }
    r.exact = 1.0 - cdf;
  }
  double q = static_cast<double>(short_gaps) / static_cast<double>(samples);
  r.delta = std::min(q, 1.0 - q);
  r.bound = load * gamma / static_cast<double>(c + 1) * std::pow(r.delta, static_cast<double>(c + 1));
  r.assumption_holds = r.delta >= 1e-3;
  if (!r.assumption_holds)
    r.verdict = "FAIL";
  else
    r.verdict = r.ci_high >= r.bound ? "PASS" : "FAIL";
  return r;
}

nlohmann::json to_json(const BoundCheck& b) {
  return {{"name", b.name},       {"estimate", b.estimate}, {"ci_low", b.ci_low},  {"ci_high", b.ci_high},
          {"bound", b.bound},     {"relation", b.relation}, {"verdict", b.verdict}};
}

nlohmann::json to_json(const ProbeReport& r) {
  nlohmann::json j;
  j["policy"] = r.policy;
  j["servers"] = r.servers;
  j["load"] = r.load;
  j["gamma"] = r.config.gamma;
  j["c"] = r.config.c;
  j["windows"] = r.tally.windows;
  j["spacing"] = r.config.spacing;
  auto count = [](const std::vector<std::uint8_t>& v) { return std::count(v.begin(), v.end(), 1); };
  j["counts"] = {{"A_s^c", count(r.tally.service_gap)}, {"A_b", count(r.tally.busy_block)},
                 {"A_w", count(r.tally.big_jobs)},      {"A_a", count(r.tally.burst)},
                 {"H_0^+", count(r.tally.all_bad)}};
  j["census_violations"] = r.tally.census_violations;
  j["draining_violations"] = r.tally.draining_violations;
  auto& checks = j["bounds"] = nlohmann::json::array();
  for (const auto& b : r.checks) checks.push_back(to_json(b));
  j["verdict"] = r.pass() ? "PASS" : "FAIL";
  return j;
}

nlohmann::json to_json(const BurstReport& r) {
  nlohmann::json j{{"family", r.family},   {"servers", r.servers},   {"load", r.load},
                   {"gamma", r.gamma},     {"c", r.c},               {"samples", r.samples},
                   {"estimate", r.estimate}, {"ci_low", r.ci_low},   {"ci_high", r.ci_high},
                   {"delta", r.delta},     {"bound", r.bound},       {"assumption_holds", r.assumption_holds},
                   {"verdict", r.verdict}};
  if (std::isnan(r.exact))
    j["exact"] = nullptr;
  else
    j["exact"] = r.exact;
  return j;
}

}  // namespace lbsim
