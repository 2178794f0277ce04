// lbsim: batch runner for the dispatching simulator and its audits.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lbsim/audit.hpp"
#include "lbsim/baselines.hpp"
#include "lbsim/catalog.hpp"
#include "lbsim/experiment.hpp"
#include "lbsim/oracles.hpp"
#include "lbsim/probe.hpp"

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kInvariant = 2, kInconclusive = 3 };

int verbosity = 0;

template <class... Args>
void note(int level, fmt::format_string<Args...> f, Args&&... args) {
  if (verbosity >= level) fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw lbsim::ConfigError(fmt::format("cannot write '{}'", path));
  out << j.dump(2) << "\n";
}

lbsim::PolicySpec parse_policy(const std::string& text) {
  if (!text.empty() && text.front() == '{') return lbsim::policy_spec_from_json(nlohmann::json::parse(text));
  return lbsim::policy_spec_from_json(nlohmann::json(text));
}

lbsim::UnitMeanDistribution parse_distribution(const std::string& text) {
  if (!text.empty() && text.front() == '{') return lbsim::distribution_from_json(nlohmann::json::parse(text));
  return lbsim::distribution_from_json(nlohmann::json(text));
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replications;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<unsigned> threads;
  bool strict = false;
};

int cmd_run(const RunArgs& a) {
  lbsim::ExperimentConfig cfg = lbsim::load_experiment(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.replications) cfg.replications = *a.replications;
  if (a.out) cfg.output_dir = *a.out;
  if (a.threads) cfg.threads = *a.threads;
  if (a.format) cfg.format = lbsim::experiment_from_json({{"format", *a.format}}).format;
  cfg.validate();
  note(1, "running {} policies x {} sizes, {} replications", cfg.policies.size(), cfg.servers.size(),
       cfg.replications);

  auto result = lbsim::run_experiment(cfg);
  auto path = lbsim::write_results(cfg, result);
  note(1, "wrote {}", path);
  for (const auto& r : result.rows) {
    note(2, "{:<16} n={:<6} delay={:.5g} +/- {:.3g} rate={:.6g} trend={} status={}", r.policy, r.servers,
         r.delay.mean, r.delay.half_width, r.message_rate.mean, lbsim::trend_name(r.trend), r.status);
    if (r.status != "ok") note(0, "{} n={}: {}", r.policy, r.servers, r.status);
  }
  if (result.invariant_failed) return kInvariant;
  if (a.strict && result.inconclusive_only) return kInconclusive;
  return kOk;
}

int cmd_audit(const std::string& policy, std::size_t n, const std::string& out) {
  auto p = lbsim::make_policy(parse_policy(policy), n);
  auto subject = lbsim::audit_subject(p);
  auto verdict = lbsim::check_symmetry(subject);
  note(1, "{}: {} after {} permutations", verdict.policy, verdict.symmetric ? "SYMMETRIC" : "NOT SYMMETRIC",
       verdict.permutations_checked);
  auto report = lbsim::audit_report(subject, verdict);
  if (verdict.symmetric)
    report["witness_verified"] = lbsim::verify_witness(subject, verdict);
  else if (verdict.counterexample)
    report["counterexample_rechecked"] = lbsim::recheck_counterexample(subject, *verdict.counterexample);
  emit(report, out);
  return kOk;
}

int cmd_arrivals(const std::string& family, double load, std::uint64_t samples, std::uint64_t seed,
                 const std::string& out) {
  lbsim::AssumptionSettings s;
  s.samples = samples;
  s.seed = seed;
  auto cells = lbsim::validate_assumption(parse_distribution(family), load, s);
  if (out.empty() || out == "-") {
    lbsim::write_assumption_csv(std::cout, cells);
  } else {
    std::ofstream f(out);
    if (!f) throw lbsim::ConfigError(fmt::format("cannot write '{}'", out));
    lbsim::write_assumption_csv(f, cells);
  }
  return kOk;
}

int cmd_probe(const std::string& policy, std::size_t n, double load, lbsim::BadEventConfig bad, std::uint64_t seed,
              const std::string& out) {
  lbsim::SimulationConfig sim;
  sim.servers = n;
  sim.load = load;
  sim.horizon = 1.0;
  sim.seed = seed;
  auto report = lbsim::probe_lemma_bounds(lbsim::make_policy(parse_policy(policy), n), sim, bad);
  for (const auto& c : report.checks)
    note(1, "{}: {:.5g} [{:.5g}, {:.5g}] {} {:.5g} -> {}", c.name, c.estimate, c.ci_low, c.ci_high, c.relation,
         c.bound, c.verdict);
  emit(lbsim::to_json(report), out);
  if (report.tally.census_violations || report.tally.draining_violations) return kInvariant;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dispatching-policy simulator, symmetry audit and probes"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", verbosity, "Increase verbosity (repeatable)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment sweep from a JSON config");
  run_cmd->add_option("-c,--config", run.config, "Config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Override the master seed");
  run_cmd->add_option("--replications", run.replications, "Override the replication count");
  run_cmd->add_option("-o,--out", run.out, "Output directory");
  run_cmd->add_option("--format", run.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  run_cmd->add_option("-j,--threads", run.threads, "Worker threads");
  run_cmd->add_flag("--strict", run.strict, "Exit 3 when no delay estimate is conclusive");

  std::string policy = "random", out, family = "exponential";
  std::size_t n = 4;
  double load = 0.9;
  std::uint64_t seed = 1, samples = 200000;
  auto* audit_cmd = app.add_subcommand("audit", "Exact symmetry audit and distinguished sets");
  audit_cmd->add_option("-p,--policy", policy, "Policy name or JSON object");
  audit_cmd->add_option("-n,--servers", n, "Servers (at most 6)");
  audit_cmd->add_option("-o,--out", out, "Report path (default stdout)");

  auto* arrivals_cmd = app.add_subcommand("arrivals", "Check the interarrival assumption over (n, eps) cells");
  arrivals_cmd->add_option("-f,--family", family, "Family name or JSON object");
  arrivals_cmd->add_option("-l,--load", load);
  arrivals_cmd->add_option("--samples", samples);
  arrivals_cmd->add_option("--seed", seed);
  arrivals_cmd->add_option("-o,--out", out, "CSV path (default stdout)");

  unsigned a = 2, c = 1;
  std::size_t n_lo = 20, n_hi = 200;
  auto* binomial_cmd = app.add_subcommand("binomial", "Exact scan of C(n-a,b) <= n^c");
  binomial_cmd->add_option("-a", a);
  binomial_cmd->add_option("-c", c);
  binomial_cmd->add_option("--from", n_lo);
  binomial_cmd->add_option("--to", n_hi);
  binomial_cmd->add_option("-o,--out", out);

  lbsim::BadEventConfig bad;
  auto* probe_cmd = app.add_subcommand("probe", "Window probe of the steady-state bad events");
  probe_cmd->add_option("-p,--policy", policy);
  probe_cmd->add_option("-n,--servers", n);
  probe_cmd->add_option("-l,--load", load);
  probe_cmd->add_option("-g,--gamma", bad.gamma);
  probe_cmd->add_option("--windows", bad.windows);
  probe_cmd->add_option("--spacing", bad.spacing);
  probe_cmd->add_option("--seed", seed);
  probe_cmd->add_option("-o,--out", out);

  auto* burst_cmd = app.add_subcommand("burst", "P(T_{c+1} < gamma/n) against its lower bound");
  burst_cmd->add_option("-f,--family", family);
  burst_cmd->add_option("-n,--servers", n);
  burst_cmd->add_option("-l,--load", load);
  burst_cmd->add_option("-g,--gamma", bad.gamma);
  burst_cmd->add_option("-c", c);
  burst_cmd->add_option("--samples", samples);
  burst_cmd->add_option("--seed", seed);
  burst_cmd->add_option("-o,--out", out);

  auto* baseline_cmd = app.add_subcommand("baseline", "Closed-form mean waits");
  baseline_cmd->add_option("-n,--servers", n);
  baseline_cmd->add_option("-l,--load", load);
  baseline_cmd->add_option("-o,--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*audit_cmd) return cmd_audit(policy, n, out);
    if (*arrivals_cmd) return cmd_arrivals(family, load, samples, seed, out);
    if (*binomial_cmd) {
      emit(lbsim::to_json(lbsim::binomial_bound_scan(a, c, n_lo, n_hi)), out);
      return kOk;
    }
    if (*probe_cmd) return cmd_probe(policy, n, load, bad, seed, out);
    if (*burst_cmd) {
      auto r = lbsim::probe_arrival_burst(parse_distribution(family), n, load, bad.gamma, c, samples, seed);
      emit(lbsim::to_json(r), out);
      return kOk;
    }
    if (*baseline_cmd) {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& b : {lbsim::mm1_baseline(load), lbsim::mmn_baseline(n, load), lbsim::sqd_baseline(load, 2),
                            lbsim::dm1_baseline(load)})
        j.push_back({{"model", b.model}, {"mean_wait", b.mean_wait}});
      emit(j, out);
      return kOk;
    }
  } catch (const lbsim::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const lbsim::InvariantViolation& e) {
    fmt::print(stderr, "invariant violation: {}\n", e.what());
    return kInvariant;
  } catch (const lbsim::PolicyContractViolation& e) {
    fmt::print(stderr, "invariant violation: {}\n", e.what());
    return kInvariant;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInvariant;
  }
  return kOk;
}
