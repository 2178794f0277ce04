#include "lbsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "lbsim/engine.hpp"

namespace lbsim {

// ---------------------------------------------------------------- config JSON

namespace {

template <class T>
T field(const nlohmann::json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("key '{}': {}", key, e.what()));
  }
}

}  // namespace

nlohmann::json to_json(const UnitMeanDistribution& d) {
  nlohmann::json j{{"family", family_name(d.family)}};
  if (d.family == Family::kHyperexponential) {
    j["p"] = d.p;
    j["ratio"] = d.ratio;
  }
  if (d.family == Family::kUniform) j["spread"] = d.spread;
  return j;
}

UnitMeanDistribution distribution_from_json(const nlohmann::json& j) {
  UnitMeanDistribution d;
  if (j.is_string()) {
    d.family = parse_family(j.get<std::string>());
  } else if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      if (key == "family")
        d.family = parse_family(field<std::string>(value, key));
      else if (key == "p")
        d.p = field<double>(value, key);
      else if (key == "ratio")
        d.ratio = field<double>(value, key);
      else if (key == "spread")
        d.spread = field<double>(value, key);
      else
        throw ConfigError(fmt::format("unknown distribution key '{}'", key));
    }
  } else {
    throw ConfigError("distribution must be a family name or an object");
  }
  d.validate();
  return d;
}

void ExperimentConfig::validate() const {
  if (policies.empty()) throw ConfigError("policy list is empty");
  if (servers.empty()) throw ConfigError("n list is empty");
  for (std::size_t n : servers)
    if (n == 0) throw ConfigError("n must be at least 1");
  if (!(load > 0.0 && load < 1.0)) throw ConfigError(fmt::format("load {} not in (0,1)", load));
  sizes.validate();
  arrivals.validate();
  if (jobs == 0) throw ConfigError("jobs per replication must be positive");
  if (replications == 0) throw ConfigError("replications must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must be in [0,1)");
  if (batches < 10) throw ConfigError("at least 10 batches are required");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (probe && probe_windows == 0) throw ConfigError("probe windows must be positive");
  if (threads == 0) throw ConfigError("threads must be positive");
  // Policy parameters are checked by building each policy once.
  for (const auto& p : policies)
    for (std::size_t n : servers) make_policy(p, n, sizes);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : c.policies) policies.push_back(to_json(p));
  return {{"policies", policies},
          {"servers", c.servers},
          {"load", c.load},
          {"sizes", to_json(c.sizes)},
          {"arrivals", to_json(c.arrivals)},
          {"jobs", c.jobs},
          {"replications", c.replications},
          {"seed", c.seed},
          {"warmup_fraction", c.warmup_fraction},
          {"batches", c.batches},
          {"confidence", c.confidence},
          {"gamma", c.gamma},
          {"probe", c.probe},
          {"probe_windows", c.probe_windows},
          {"output_dir", c.output_dir},
          {"format", c.format == OutputFormat::kCsv ? "csv" : "json"},
          {"threads", c.threads}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "policies" || key == "policy") {
      c.policies.clear();
      if (value.is_array())
        for (const auto& p : value) c.policies.push_back(policy_spec_from_json(p));
      else
        c.policies.push_back(policy_spec_from_json(value));
    } else if (key == "servers") {
      c.servers = field<std::vector<std::size_t>>(value, key);
    } else if (key == "load") {
      c.load = field<double>(value, key);
    } else if (key == "sizes") {
      c.sizes = distribution_from_json(value);
    } else if (key == "arrivals") {
      c.arrivals = distribution_from_json(value);
    } else if (key == "jobs") {
      c.jobs = field<std::uint64_t>(value, key);
    } else if (key == "replications") {
      c.replications = field<std::uint64_t>(value, key);
    } else if (key == "seed") {
      c.seed = field<std::uint64_t>(value, key);
    } else if (key == "warmup_fraction") {
      c.warmup_fraction = field<double>(value, key);
    } else if (key == "batches") {
      c.batches = field<std::size_t>(value, key);
    } else if (key == "confidence") {
      c.confidence = field<double>(value, key);
    } else if (key == "gamma") {
      c.gamma = field<double>(value, key);
    } else if (key == "probe") {
      c.probe = field<bool>(value, key);
    } else if (key == "probe_windows") {
      c.probe_windows = field<std::uint64_t>(value, key);
    } else if (key == "output_dir") {
      c.output_dir = field<std::string>(value, key);
    } else if (key == "format") {
      auto f = field<std::string>(value, key);
      if (f == "csv")
        c.format = OutputFormat::kCsv;
      else if (f == "json")
        c.format = OutputFormat::kJson;
      else
        throw ConfigError(fmt::format("unknown format '{}'", f));
    } else if (key == "threads") {
      c.threads = field<unsigned>(value, key);
    } else {
      throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  }
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
  }
  return experiment_from_json(j);
}

// ---------------------------------------------------------------- trend

std::string trend_name(Trend t) {
  switch (t) {
    case Trend::kVanishing: return "VANISHING";
    case Trend::kPositive: return "POSITIVE";
    case Trend::kInconclusive: break;
  }
  return "INCONCLUSIVE";
}

Trend classify_trend(const std::vector<TrendPoint>& series) {
  if (series.size() < 3) return Trend::kInconclusive;
  bool falling = true;
  for (std::size_t i = 1; i < series.size(); ++i)
    if (!(series[i].mean < series[i - 1].mean - (series[i].half_width + series[i - 1].half_width))) falling = false;
  if (falling && series.back().mean < 0.1 * series.front().mean) return Trend::kVanishing;

  double lo = series.front().mean, hi = series.front().mean;
  for (const auto& p : series) {
    lo = std::min(lo, p.mean);
    hi = std::max(hi, p.mean);
  }
  bool floor_held = std::all_of(series.begin(), series.end(),
                                [&](const TrendPoint& p) { return p.mean - p.half_width > 0.5 * lo; });
  if (floor_held && lo > 0.0 && lo >= 0.5 * hi) return Trend::kPositive;
  return Trend::kInconclusive;
}

// ---------------------------------------------------------------- runs

namespace {

/// What one replication contributes to a row.
struct ReplicationOutcome {
  std::vector<double> delay_batches;
  std::vector<double> rate_batches;
  MessageCounts steady_messages;
  double steady_duration = 0.0;
  double busy_time = 0.0;
  double tail2_time = 0.0;
  double server_time = 0.0;
  std::string error;
  bool invariant = false;
};

std::vector<double> batch_series(std::span<const double> xs, std::size_t batches) {
  std::vector<double> out;
  if (xs.size() < batches) return out;
  std::size_t per = xs.size() / batches, skip = xs.size() - per * batches;
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) sum += xs[skip + b * per + i];
    out.push_back(sum / static_cast<double>(per));
  }
  return out;
}

BatchEstimate estimate_from(const std::vector<double>& batch_means_all, double point, double confidence,
                            std::size_t samples) {
  BatchEstimate e;
  e.confidence = confidence;
  e.batches = batch_means_all.size();
  e.samples = samples;
  e.mean = point;
  if (e.batches < 10) {
    e.reason = "fewer than 10 batches";
    return e;
  }
  RunningStats s;
  for (double x : batch_means_all) s.add(x);
  e.std_error = std::sqrt(s.variance() / static_cast<double>(e.batches));
  e.half_width = student_t_quantile(0.5 + confidence / 2.0, static_cast<double>(e.batches - 1)) * e.std_error;
  e.conclusive = true;
  return e;
}

/// Exact bookkeeping identities every run must satisfy.
void check_log(const MetricsLog& log) {
  if (log.messages.query != log.messages.response || log.messages.query != log.sampled_total)
    throw InvariantViolation("query, response and sampled counts disagree");
  if (log.departures > log.arrivals) throw InvariantViolation("more departures than arrivals");
  std::uint64_t signaled = log.messages.spontaneous + log.messages.departure;
  std::uint64_t attributed = 0;
  for (const auto& j : log.jobs) attributed += j.server_messages;
  if (attributed > signaled) throw InvariantViolation("server messages attributed twice");
}

ReplicationOutcome run_replication(const ExperimentConfig& cfg, const PolicyPtr& policy, std::size_t n,
                                   std::uint64_t seed) {
  ReplicationOutcome out;
  try {
    SimulationConfig sim;
    sim.servers = n;
    sim.load = cfg.load;
    sim.interarrival = cfg.arrivals;
    sim.sizes = cfg.sizes;
    sim.job_budget = cfg.jobs;
    sim.seed = seed;
    sim.warmup_fraction = cfg.warmup_fraction;
    sim.census_rate = 0.0;
    sim.census_gamma = cfg.gamma;
    MetricsLog log = run(policy, sim);
    check_log(log);

    std::vector<double> delays;
    delays.reserve(log.jobs.size());
    for (std::size_t k = log.warmup_jobs; k < log.jobs.size(); ++k) delays.push_back(log.jobs[k].delay);
    out.delay_batches = batch_series(delays, cfg.batches);

    std::size_t count = log.jobs.size() - log.warmup_jobs;
    std::size_t per = count / cfg.batches;
    for (std::size_t b = 0; per > 0 && b < cfg.batches; ++b) {
      std::size_t lo = log.warmup_jobs + b * per, hi = lo + per;
      double msgs = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        msgs += 2.0 * log.jobs[k].sampled;
        if (k + 1 < log.jobs.size()) msgs += log.jobs[k + 1].server_messages;
      }
      double span = (hi < log.jobs.size() ? log.jobs[hi].arrival : log.end_time) - log.jobs[lo].arrival;
      if (span > 0.0) out.rate_batches.push_back(msgs / span);
    }
    out.steady_messages = log.steady_messages;
    out.steady_duration = log.steady_duration();
    out.server_time = log.steady_duration() * static_cast<double>(n);
    out.busy_time = log.tail_time[0];
    out.tail2_time = log.tail_time[1];
  } catch (const PolicyContractViolation& e) {
    out.error = e.what();
    out.invariant = true;
  } catch (const InvariantViolation& e) {
    out.error = e.what();
    out.invariant = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  struct Task {
    std::size_t point;
    std::uint64_t replication;
  };
  const std::size_t points = config.policies.size() * config.servers.size();
  std::vector<CatalogEntry> entries;
  for (const auto& spec : config.policies)
    for (std::size_t n : config.servers) entries.push_back(catalog_entry(spec, n, config.load, config.sizes));

  std::vector<Task> tasks;
  for (std::size_t p = 0; p < points; ++p)
    for (std::uint64_t r = 0; r < config.replications; ++r) tasks.push_back(Task{p, r});
  std::vector<ReplicationOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      std::size_t n = config.servers[t.point % config.servers.size()];
      std::uint64_t seed = derive_seed(derive_seed(config.seed, t.point), t.replication);
      outcomes[i] = run_replication(config, entries[t.point].policy, n, seed);
    }
  };
  unsigned threads = std::min<unsigned>(config.threads, static_cast<unsigned>(tasks.size()));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  ExperimentResult result;
  result.inconclusive_only = true;
  for (std::size_t p = 0; p < points; ++p) {
    const auto& e = entries[p];
    std::size_t n = config.servers[p % config.servers.size()];
    ExperimentRow row;
    row.policy = e.policy->name();
    row.servers = n;
    row.load = config.load;
    row.replications = config.replications;
    row.jobs = config.jobs;
    row.memory_bits = e.memory_bits;
    row.declared_rate = e.message_rate;
    row.rate_is_bound = e.rate_is_bound;

    std::vector<double> delay_batches, rate_batches;
    MessageCounts msgs;
    double duration = 0.0, server_time = 0.0, busy = 0.0, tail2 = 0.0;
    std::vector<std::string> errors;
    if (e.policy->memory_bits() != e.memory_bits) {
      errors.push_back(fmt::format("encoder uses {} bits, catalog declares {}", e.policy->memory_bits(), e.memory_bits));
      result.invariant_failed = true;
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].point != p) continue;
      const auto& o = outcomes[i];
      if (!o.error.empty()) {
        errors.push_back(fmt::format("replication {}: {}", tasks[i].replication, o.error));
        if (o.invariant) result.invariant_failed = true;
        continue;
      }
      delay_batches.insert(delay_batches.end(), o.delay_batches.begin(), o.delay_batches.end());
      rate_batches.insert(rate_batches.end(), o.rate_batches.begin(), o.rate_batches.end());
      msgs += o.steady_messages;
      duration += o.steady_duration;
      server_time += o.server_time;
      busy += o.busy_time;
      tail2 += o.tail2_time;
    }
    double delay_point = 0.0;
    for (double x : delay_batches) delay_point += x;
    if (!delay_batches.empty()) delay_point /= static_cast<double>(delay_batches.size());
    row.delay = estimate_from(delay_batches, delay_point, config.confidence, delay_batches.size());
    if (duration > 0.0) {
      row.query_rate = static_cast<double>(msgs.query) / duration;
      row.response_rate = static_cast<double>(msgs.response) / duration;
      row.spontaneous_rate = static_cast<double>(msgs.spontaneous) / duration;
      row.departure_rate = static_cast<double>(msgs.departure) / duration;
    }
    row.message_rate = estimate_from(rate_batches, duration > 0.0 ? static_cast<double>(msgs.total()) / duration : 0.0,
                                     config.confidence, rate_batches.size());
    if (server_time > 0.0) {
      row.idle_fraction = 1.0 - busy / server_time;
      row.tail2 = tail2 / server_time;
    }
    if (row.delay.conclusive) result.inconclusive_only = false;

    if (config.probe && errors.empty()) {
      try {
        SimulationConfig sim;
        sim.servers = n;
        sim.load = config.load;
        sim.interarrival = config.arrivals;
        sim.sizes = config.sizes;
        sim.horizon = 1.0;
        sim.seed = derive_seed(derive_seed(config.seed, p), 0x9806E);
        BadEventConfig bad;
        bad.gamma = config.gamma;
        bad.windows = config.probe_windows;
        auto report = probe_lemma_bounds(e.policy, sim, bad);
        row.probe = report.pass() ? "PASS" : "FAIL";
        for (const auto& b : report.checks)
          if (b.verdict == "INCONCLUSIVE") row.probe = "INCONCLUSIVE";
      } catch (const std::exception& ex) {
        errors.push_back(fmt::format("probe: {}", ex.what()));
        row.probe = "ERROR";
      }
    }
    if (!errors.empty()) {
      row.status.clear();
      for (const auto& err : errors) row.status += (row.status.empty() ? "" : "; ") + err;
    }
    result.rows.push_back(std::move(row));
  }

  for (std::size_t pi = 0; pi < config.policies.size(); ++pi) {
    std::vector<TrendPoint> series;
    for (std::size_t ni = 0; ni < config.servers.size(); ++ni) {
      const auto& r = result.rows[pi * config.servers.size() + ni];
      series.push_back(TrendPoint{r.servers, r.delay.mean, r.delay.conclusive ? r.delay.half_width : INFINITY});
    }
    std::sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.servers < b.servers; });
    Trend t = classify_trend(series);
    for (std::size_t ni = 0; ni < config.servers.size(); ++ni) result.rows[pi * config.servers.size() + ni].trend = t;
  }
  return result;
}

// ---------------------------------------------------------------- output

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace

void write_results_csv(std::ostream& out, const ExperimentResult& result) {
  out << "# " << kResultsSchema << "\n";
  out << "policy,n,lambda,replications,jobs,memory_bits,declared_rate,rate_is_bound,"
         "message_rate,message_rate_hw,query_rate,response_rate,spontaneous_rate,departure_rate,"
         "delay_mean,delay_hw,delay_conclusive,idle_fraction,tail2,probe,trend,status\n";
  for (const auto& r : result.rows) {
    out << fmt::format("{},{},{},{},{},{},{:.10g},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{},{:.10g},{:.10g},{},{},{}\n",
                       csv_field(r.policy), r.servers, r.load, r.replications, r.jobs, r.memory_bits, r.declared_rate,
                       r.rate_is_bound ? 1 : 0, r.message_rate.mean, r.message_rate.half_width, r.query_rate,
                       r.response_rate, r.spontaneous_rate, r.departure_rate, r.delay.mean, r.delay.half_width,
                       r.delay.conclusive ? 1 : 0, r.idle_fraction, r.tail2, r.probe, trend_name(r.trend),
                       csv_field(r.status));
  }
}

nlohmann::json to_json(const ExperimentResult& result) {
  nlohmann::json j;
  j["schema"] = kResultsSchema;
  auto& rows = j["rows"] = nlohmann::json::array();
  auto estimate = [](const BatchEstimate& e) {
    return nlohmann::json{{"mean", e.mean},           {"half_width", e.half_width}, {"batches", e.batches},
                          {"conclusive", e.conclusive}, {"reason", e.reason}};
  };
  for (const auto& r : result.rows) {
    rows.push_back({{"policy", r.policy},
                    {"n", r.servers},
                    {"lambda", r.load},
                    {"replications", r.replications},
                    {"jobs", r.jobs},
                    {"memory_bits", r.memory_bits},
                    {"declared_rate", r.declared_rate},
                    {"rate_is_bound", r.rate_is_bound},
                    {"message_rate", estimate(r.message_rate)},
                    {"rates",
                     {{"query", r.query_rate},
                      {"response", r.response_rate},
                      {"spontaneous", r.spontaneous_rate},
                      {"departure", r.departure_rate}}},
                    {"delay", estimate(r.delay)},
                    {"idle_fraction", r.idle_fraction},
                    {"tail2", r.tail2},
                    {"probe", r.probe},
                    {"trend", trend_name(r.trend)},
                    {"status", r.status}});
  }
  j["invariant_failed"] = result.invariant_failed;
  return j;
}

std::string write_results(const ExperimentConfig& config, const ExperimentResult& result) {
  std::filesystem::create_directories(config.output_dir);
  bool csv = config.format == OutputFormat::kCsv;
  auto path = std::filesystem::path(config.output_dir) / (csv ? "results.csv" : "results.json");
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  if (csv)
    write_results_csv(out, result);
  else
    out << to_json(result).dump(2) << "\n";
  return path.string();
}

}  // namespace lbsim
