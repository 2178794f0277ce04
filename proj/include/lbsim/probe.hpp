#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbsim/engine.hpp"

namespace lbsim {

/// Observation windows of length gamma/n, started every `spacing` time units
/// after `start`. Windows are disjoint when spacing >= gamma/n.
struct BadEventConfig {
  double gamma = 0.1;
  unsigned c = 1;
  std::uint64_t windows = 10000;
  double spacing = 0.5;
  double start = 50.0;
  std::size_t batches = 20;
  double confidence = 0.99;  // one-sided level of the bound checks

  void validate(std::size_t n) const;
  double window_length(std::size_t n) const { return gamma / static_cast<double>(n); }
};

/// Per-window indicators and census counts at window starts.
struct BadEventTally {
  std::uint64_t windows = 0;
  std::vector<std::uint8_t> service_gap;  // A_s^c: some head job ends inside the window
  std::vector<std::uint8_t> busy_block;   // A_b: N_b >= gamma n
  std::vector<std::uint8_t> big_jobs;     // A_w on windows holding c+1 arrivals: those jobs all have size >= 2 gamma
  std::vector<std::uint8_t> burst;        // A_a: c+1 arrivals and no spontaneous tick inside the window
  std::vector<std::uint8_t> all_bad;      // H_0^+: all four
  std::vector<std::uint32_t> loaded;      // N_b
  std::vector<std::uint32_t> idle;        // N_I
  std::vector<std::uint32_t> draining;    // N_d
  /// Census identity N_b + N_I + N_d = n failures (must be 0).
  std::uint64_t census_violations = 0;
  /// Servers in N_d at a window start with no departure within 2 gamma (must be 0).
  std::uint64_t draining_violations = 0;
};

/// One empirical quantity against its bound.
struct BoundCheck {
  std::string name;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;
  /// "<=" when the estimate must stay below the bound, ">=" above it, "~" when
  /// the bound must lie inside the two-sided interval.
  std::string relation;
  std::string verdict;  // PASS, FAIL or INCONCLUSIVE
};

struct ProbeReport {
  std::string policy;
  std::size_t servers = 0;
  double load = 0.0;
  BadEventConfig config;
  BadEventTally tally;
  std::vector<BoundCheck> checks;
  bool pass() const;
};

/// Census at every window start plus the window events.
ProbeReport probe_lemma_bounds(PolicyPtr policy, const SimulationConfig& base, const BadEventConfig& config);

struct BurstReport {
  std::string family;
  std::size_t servers = 0;
  double load = 0.0;
  double gamma = 0.0;
  unsigned c = 0;
  std::uint64_t samples = 0;
  double estimate = 0.0;  // P(T_{c+1} < gamma/n), stationary start
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// Closed form for exponential interarrivals, NaN otherwise.
  double exact = std::numeric_limits<double>::quiet_NaN();
  double delta = 0.0;  // estimated two-sided assumption constant at eps = gamma/(c+1)
  double bound = 0.0;  // (lambda gamma/(c+1)) delta^(c+1)
  bool assumption_holds = false;
  std::string verdict;
};

BurstReport probe_arrival_burst(const UnitMeanDistribution& shape, std::size_t n, double load, double gamma,
                                unsigned c, std::uint64_t samples = 200000, std::uint64_t seed = 1,
                                double confidence = 0.99);

nlohmann::json to_json(const BoundCheck& b);
nlohmann::json to_json(const ProbeReport& r);
nlohmann::json to_json(const BurstReport& r);

}  // namespace lbsim
