// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "lbsim/audit.hpp"
#include "lbsim/baselines.hpp"
#include "lbsim/engine.hpp"
#include "lbsim/experiment.hpp"
#include "lbsim/oracles.hpp"
#include "lbsim/policies.hpp"
#include "lbsim/probe.hpp"
#include "support/crafted.hpp"

using namespace lbsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kMm1RelTol = 0.05;
constexpr double kMm1Seconds = 30.0;
constexpr double kMmnRelTol = 0.05;
constexpr double kTailAbsTol = 0.02;
constexpr double kMessageRelTol = 0.01;
constexpr double kIdleRelTol = 0.01;
constexpr double kProbeConfidence = 0.99;
constexpr std::uint64_t kProbeWindows = 100000;
constexpr std::uint64_t kSeed = 20261015;

SimulationConfig sim(std::size_t n, double load, std::uint64_t jobs, std::uint64_t seed) {
  SimulationConfig c;
  c.servers = n;
  c.load = load;
  c.job_budget = jobs;
  c.seed = derive_seed(kSeed, seed);
  c.census_rate = 0.0;
  c.record_jobs = false;
  return c;
}

/// Delays of every dispatched job, in dispatch order.
struct DelayTape : Observer {
  std::vector<double> delays;
  void on_arrival(const JobRecord& job, const SampleVector&, const SystemView&) override {
    delays.push_back(job.delay);
  }
  BatchEstimate estimate(double warmup = 0.2) const {
    auto k0 = static_cast<std::size_t>(warmup * static_cast<double>(delays.size()));
    return batch_means(std::span<const double>(delays).subspan(k0), 20, 0.95);
  }
};

json estimate_json(const BatchEstimate& e) {
  return {{"mean", e.mean}, {"half_width", e.half_width}, {"conclusive", e.conclusive}};
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Checks = std::vector<Verdict>;

// ------------------------------------------------------------------ 1

Verdict mm1(json& out, double& seconds) {
  DelayTape tape;
  auto t0 = std::chrono::steady_clock::now();
  auto log = run(make_random(50), sim(50, 0.5, 250000, 1), &tape);
  auto e = tape.estimate();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ref = mm1_wait(0.5);
  std::size_t steady = tape.delays.size() - static_cast<std::size_t>(0.2 * static_cast<double>(tape.delays.size()));
  out = {{"delay", estimate_json(e)}, {"reference", ref}, {"steady_jobs", steady}};
  bool ok = std::abs(e.mean - ref) <= kMm1RelTol * ref && steady >= 200000 && seconds <= kMm1Seconds;
  return {ok, fmt::format("random n=50 load=0.5: delay {:.4f} vs {:.4f} (tol {:.0f}%), {} steady jobs, {:.2f} s",
                          e.mean, ref, 100 * kMm1RelTol, steady, seconds)};
}

// ------------------------------------------------------------------ 2

Verdict mmn(json& out) {
  DelayTape tape;
  run(make_ll(10), sim(10, 0.9, 3000000, 2), &tape);
  auto e = tape.estimate();
  const double ref = mmn_wait(10, 0.9);
  out = {{"delay", estimate_json(e)}, {"reference", ref}};
  return {std::abs(e.mean - ref) <= kMmnRelTol * ref,
          fmt::format("ll n=10 load=0.9: delay {:.4f} +/- {:.4f} vs {:.4f} (tol {:.0f}%)", e.mean, e.half_width,
                      ref, 100 * kMmnRelTol)};
}

// ------------------------------------------------------------------ 3

Verdict tail(json& out) {
  auto log = run(make_sq_d(1000, 2), sim(1000, 0.9, 3000000, 3));
  const double got = log.tail_fraction(2), ref = sqd_tail(0.9, 2, 2);
  out = {{"tail2", got}, {"reference", ref}};
  return {std::abs(got - ref) <= kTailAbsTol,
          fmt::format("sq(2) n=1000 load=0.9: P(Q>=2) {:.4f} vs {:.4f} (tol {})", got, ref, kTailAbsTol)};
}

// ------------------------------------------------------------------ 4

Verdict sqd_messages(json& out) {
  bool ok = true;
  std::string detail;
  out = json::object();
  for (std::size_t d : {2u, 5u}) {
    auto log = run(make_sq_d(500, d), sim(500, 0.9, 2000000, 40 + d));
    auto rate = estimate_message_rate(log);
    const double ref = 2.0 * static_cast<double>(d) * 0.9 * 500.0;
    bool exact = log.messages.query == log.messages.response && log.messages.query == d * log.arrivals &&
                 log.messages.spontaneous == 0 && log.messages.departure == 0;
    ok = ok && exact && std::abs(rate.total - ref) <= kMessageRelTol * ref;
    out[fmt::format("d{}", d)] = {{"rate", rate.total},
                                  {"reference", ref},
                                  {"query", log.messages.query},
                                  {"response", log.messages.response}};
    detail += fmt::format("{}d={}: rate {:.1f} vs {:.0f}, query {} == response {}", detail.empty() ? "" : "; ", d,
                          rate.total, ref, log.messages.query, log.messages.response);
  }
  return {ok, detail};
}

// ------------------------------------------------------------------ 5

Verdict jiq(json& out) {
  const double load = 0.9;
  bool ok = true;
  std::vector<TrendPoint> series;
  std::string detail;
  out = json::object();
  for (auto [n, jobs] : {std::pair<std::size_t, std::uint64_t>{100, 2000000}, {1000, 10000000}, {5000, 10000000}}) {
    DelayTape tape;
    auto policy = make_jiq(n);
    auto log = run(policy, sim(n, load, jobs, 50 + n), &tape);
    auto e = tape.estimate();
    series.push_back({n, e.mean, e.conclusive ? e.half_width : INFINITY});
    auto rate = estimate_message_rate(log);
    const double cap = load * static_cast<double>(n);
    const double offered = static_cast<double>(log.steady_arrivals) / rate.duration;
    const std::uint64_t to_busy = log.arrivals - log.dispatched_to_idle;
    // Rate per offered arrival, scaled to lambda n: the arrival-count noise cancels.
    const double scaled = cap * static_cast<double>(log.messages.total()) / static_cast<double>(log.arrivals);
    // Every idle-dispatched job raises exactly one departure signal unless it is still in the system.
    bool identity = log.messages.departure + log.busy_at_end == log.dispatched_to_idle &&
                    log.arrivals - log.messages.departure == to_busy + log.busy_at_end &&
                    log.messages.query == 0 && log.messages.spontaneous == 0;
    PolicySpec spec;
    spec.name = "jiq";
    bool memory = policy->memory_bits() == n && log.memory_bits == n && catalog_entry(spec, n, load).memory_bits == n;
    ok = ok && identity && memory && scaled <= cap;
    out[fmt::format("n{}", n)] = {{"delay", estimate_json(e)},
                                  {"rate", rate.total},
                                  {"offered_rate", offered},
                                  {"scaled_rate", scaled},
                                  {"cap", cap},
                                  {"arrivals", log.arrivals},
                                  {"arrivals_to_busy", to_busy},
                                  {"busy_at_end", log.busy_at_end},
                                  {"departure_messages", log.messages.departure},
                                  {"memory_bits", log.memory_bits}};
    detail += fmt::format("n={}: delay {:.3g}+/-{:.2g}, rate {:.1f} (arrivals {:.1f}), scaled {:.1f}<={:.0f}, "
                          "gap {}+{} exact; ",
                          n, e.mean, e.half_width, rate.total, offered, scaled, cap, to_busy, log.busy_at_end);
  }
  Trend t = classify_trend(series);
  out["trend"] = trend_name(t);
  ok = ok && t == Trend::kVanishing;
  return {ok, detail + "trend " + trend_name(t)};
}

// ------------------------------------------------------------------ 6

Verdict little(json& out) {
  bool ok = true;
  std::string detail;
  out = json::object();
  std::uint64_t stream = 60;
  for (double load : {0.5, 0.9})
    for (const char* name : {"random", "sq_d"}) {
      PolicyPtr p = std::string(name) == "random" ? make_random(100) : make_sq_d(100, 2);
      std::uint64_t jobs = load < 0.7 ? 4000000 : 30000000;
      auto log = run(p, sim(100, load, jobs, ++stream));
      const double got = log.idle_fraction(), ref = 1.0 - load;
      ok = ok && std::abs(got - ref) <= kIdleRelTol * ref;
      out[fmt::format("{}_{}", p->name(), load)] = got;
      detail += fmt::format("{}{} load {}: {:.5f} vs {:.2f}", detail.empty() ? "" : "; ", p->name(), load, got, ref);
    }
  return {ok, detail};
}

// ------------------------------------------------------------------ 7

Verdict probe(json& out) {
  BadEventConfig cfg;
  cfg.gamma = 0.1;
  cfg.windows = kProbeWindows;
  cfg.confidence = kProbeConfidence;
  SimulationConfig base;
  base.servers = 200;
  base.load = 0.9;
  base.seed = derive_seed(kSeed, 7);
  auto r = probe_lemma_bounds(make_random(200), base, cfg);
  out = to_json(r);
  bool ok = r.tally.census_violations == 0 && r.tally.draining_violations == 0 && r.tally.windows >= 10000;
  std::string detail = fmt::format("{} windows", r.tally.windows);
  for (const auto& b : r.checks) {
    if (b.name == "E[N_I]/n") continue;
    ok = ok && b.verdict == "PASS";
    double edge = b.relation == "<=" ? b.ci_high : b.ci_low;
    detail += fmt::format("; {} {:.4f} (99% bound {:.4f}) {} {:.2f}", b.name, b.estimate, edge, b.relation, b.bound);
  }
  return {ok, detail};
}

// ------------------------------------------------------------------ 8

Verdict audit(json& out) {
  bool ok = true;
  std::string detail;
  out = json::object();
  for (auto p : {make_random(4), make_sq_d(4, 2)}) {
    auto subject = audit_subject(p);
    auto v = check_symmetry(subject);
    bool verified = v.symmetric && verify_witness(subject, v);
    ok = ok && verified;
    out[p->name()] = {{"symmetric", v.symmetric}, {"witness_verified", verified}};
    detail += fmt::format("{} {}; ", p->name(), verified ? "SYMMETRIC (witness verified)" : "not verified");
  }
  auto rr = audit_subject(make_round_robin(4));
  auto v = check_symmetry(rr);
  bool rechecked = !v.symmetric && v.counterexample && v.counterexample->condition == 3 &&
                   recheck_counterexample(rr, *v.counterexample);
  ok = ok && rechecked;
  out["round_robin"] = {{"symmetric", v.symmetric},
                        {"condition", v.counterexample ? v.counterexample->condition : 0},
                        {"rechecked", rechecked}};
  detail += fmt::format("round_robin {} condition {}", v.symmetric ? "SYMMETRIC" : "NOT SYMMETRIC",
                        v.counterexample ? v.counterexample->condition : 0);
  return {ok, detail};
}

// ------------------------------------------------------------------ 9

Verdict distinguished(json& out) {
  const std::size_t n = 4;
  bool ok = true;
  testing::VipOracle vip(n);
  const unsigned bits = ceil_log2(n + 1);
  const double c = static_cast<double>(bits) / std::log2(static_cast<double>(n));
  json vip_rows = json::array();
  for (ServerId j = 1; j <= n; ++j) {
    auto r = distinguished_sample_set(vip, n, MemoryState::from_integer(j, bits), 1.0, {}, 2);
    ok = ok && !r.tie && r.servers == std::vector<ServerId>{j} && static_cast<double>(r.servers.size()) <= c;
    vip_rows.push_back(r.servers);
  }

  // Random never samples, so every conditional on |S| = ell >= 1 is undefined and R is vacuously empty.
  auto random = exact_oracle(make_random(n));
  bool sample_vacuous = true;
  for (std::size_t ell = 1; ell <= n; ++ell) {
    try {
      distinguished_sample_set(*random, n, MemoryState(0), 1.0, {}, ell);
      sample_vacuous = false;
    } catch (const UndefinedConditional&) {
    }
  }
  auto rp = distinguished_dispatch_set(*random, n, MemoryState(0), 1.0, {}, {});
  ok = ok && sample_vacuous && !rp.tie && rp.servers.empty();

  testing::TieOracle tie_oracle;
  auto tie = distinguished_sample_set(tie_oracle, n, MemoryState(0), 1.0, {}, 1);
  ok = ok && tie.tie && tie.servers.empty();

  out = {{"vip_R", vip_rows},
         {"vip_c", c},
         {"random_R_empty", sample_vacuous},
         {"random_R_prime", rp.servers},
         {"tie", tie.tie}};
  return {ok, fmt::format("vip R={} for each stored id (|R|=1 <= c={:.2f}); random R={{}} R'={{}}; tie oracle {}",
                          "{j}", c, tie.tie ? "TIE" : "guessed")};
}

// ------------------------------------------------------------------ 10

Verdict binomial(json& out) {
  using boost::multiprecision::cpp_int;
  bool ok = true;
  std::string detail;
  out = json::object();
  for (auto [a, c] : {std::pair<unsigned, unsigned>{2, 2}, {3, 1}}) {
    auto scan = binomial_bound_scan(a, c, 20, 200);
    bool agree = scan.rows.size() == 181;
    std::optional<std::size_t> threshold;
    for (const auto& row : scan.rows) {
      const unsigned m = static_cast<unsigned>(row.n) - a;
      cpp_int limit = 1;
      for (unsigned i = 0; i < c; ++i) limit *= row.n;
      std::vector<std::size_t> feasible;
      bool contained = true;
      cpp_int binom = 1;  // C(m, b)
      for (unsigned b = 0; b <= m; ++b) {
        if (b > 0) binom = binom * (m - b + 1) / b;
        if (binom <= limit) {
          feasible.push_back(b);
          if (!(b <= c || b >= m - c)) contained = false;
        }
      }
      agree = agree && feasible == row.feasible && contained == row.contained;
      if (!contained) threshold.reset();
      else if (!threshold) threshold = row.n;
    }
    bool found = threshold && scan.threshold == threshold && *threshold < 200;
    ok = ok && agree && found;
    out[fmt::format("a{}c{}", a, c)] = {{"threshold", threshold ? json(*threshold) : json(nullptr)},
                                        {"agrees", agree}};
    detail += fmt::format("{}(a={},c={}) threshold n={} exact check {}", detail.empty() ? "" : "; ", a, c,
                          threshold ? std::to_string(*threshold) : "none", agree ? "agrees" : "disagrees");
  }
  return {ok, detail};
}

// ------------------------------------------------------------------ 11

/// Compares recorded delays with the destination workload seen by the observer.
struct WorkloadAtDispatch : Observer {
  std::uint64_t mismatched = 0;
  void on_arrival(const JobRecord& job, const SampleVector&, const SystemView& before) override {
    if (job.delay != before.queue(job.destination).workload(before.now())) ++mismatched;
  }
};

Verdict delay_identity(json& out) {
  SimulationConfig c = sim(50, 0.9, 10000, 11);
  c.record_jobs = true;
  WorkloadAtDispatch seen;
  auto log = run(make_sq_d(50, 2), c, &seen);

  // Independent replay: FIFO unit-rate queues from (arrival, size, destination) alone.
  struct Replay {
    std::deque<double> sizes;
    double head_done = 0.0;
  };
  std::vector<Replay> q(50);
  std::uint64_t replay_mismatched = 0;
  for (const auto& job : log.jobs) {
    Replay& r = q[job.destination - 1];
    while (!r.sizes.empty() && r.head_done <= job.arrival) {
      double t = r.head_done;
      r.sizes.pop_front();
      if (!r.sizes.empty()) r.head_done = t + r.sizes.front();
    }
    double work = 0.0;
    if (!r.sizes.empty()) {
      work = r.head_done - job.arrival;
      for (std::size_t j = 1; j < r.sizes.size(); ++j) work += r.sizes[j];
    }
    if (job.delay != work) ++replay_mismatched;
    if (r.sizes.empty()) r.head_done = job.arrival + job.size;
    r.sizes.push_back(job.size);
  }
  out = {{"jobs", log.jobs.size()}, {"observer_mismatches", seen.mismatched}, {"replay_mismatches", replay_mismatched}};
  return {log.jobs.size() == 10000 && seen.mismatched == 0 && replay_mismatched == 0,
          fmt::format("{} jobs: {} observer mismatches, {} replay mismatches", log.jobs.size(), seen.mismatched,
                      replay_mismatched)};
}

// ------------------------------------------------------------------ suite

struct Suite {
  json results;
  Checks checks;
  double mm1_seconds = 0.0;
};

Suite run_suite() {
  Suite s;
  auto add = [&](const char* key, Verdict (*f)(json&)) {
    json j;
    s.checks.push_back(f(j));
    s.results[key] = j;
  };
  json j1;
  s.checks.push_back(mm1(j1, s.mm1_seconds));
  s.results["mm1"] = j1;
  add("mmn", mmn);
  add("sqd_tail", tail);
  add("sqd_messages", sqd_messages);
  add("jiq", jiq);
  add("idle_fraction", little);
  add("window_probe", probe);
  add("symmetry", audit);
  add("distinguished", distinguished);
  add("binomial", binomial);
  add("delay_identity", delay_identity);
  return s;
}

void write_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kNames[] = {"M/M/1 oracle",      "M/M/n oracle",          "power-of-d tail",     "SQ(d) messages",
                        "JIQ resources",     "idle fraction",          "window bounds",       "symmetry audit",
                        "distinguished sets", "binomial scan",         "delay identity",      "determinism"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string out_dir = "acceptance_out";
  std::string results_only;
  app.add_option("--out", out_dir, "Directory for result files");
  app.add_option("--results-only", results_only, "Write the result file to this path and exit");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!results_only.empty()) {
      write_file(results_only, run_suite().results);
      return 0;
    }
    fs::create_directories(out_dir);
    Suite s = run_suite();
    const fs::path first = fs::path(out_dir) / "results.json";
    const fs::path second = fs::path(out_dir) / "results_rerun.json";
    write_file(first, s.results);

    fs::remove(second);
    std::string cmd = fmt::format("\"{}\" --results-only \"{}\"", argv[0], second.string());
    int status = std::system(cmd.c_str());
    bool same = status == 0 && fs::exists(second) && slurp(first) == slurp(second);
    s.checks.push_back({same, fmt::format("rerun of the suite in a fresh process: {} ({} bytes)",
                                          same ? "byte-identical" : "differs", slurp(first).size())});

    int failed = 0;
    for (std::size_t i = 0; i < s.checks.size(); ++i) {
      const auto& c = s.checks[i];
      if (!c.pass) ++failed;
      std::cout << fmt::format("{} {:>2} {}: {}\n", c.pass ? "PASS" : "FAIL", i + 1, kNames[i], c.detail);
    }
    std::cout << fmt::format("{} of {} criteria passed\n", s.checks.size() - failed, s.checks.size());
    return failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
    return 2;
  }
}
