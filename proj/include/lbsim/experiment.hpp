#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbsim/arrivals.hpp"
#include "lbsim/catalog.hpp"
#include "lbsim/probe.hpp"
#include "lbsim/stats.hpp"

namespace lbsim {

nlohmann::json to_json(const UnitMeanDistribution& d);
/// Accepts a family name or an object; unknown keys are rejected.
UnitMeanDistribution distribution_from_json(const nlohmann::json& j);

enum class OutputFormat { kCsv, kJson };

/// A sweep over policies and system sizes.
struct ExperimentConfig {
  std::vector<PolicySpec> policies{PolicySpec{}};
  std::vector<std::size_t> servers{100};
  double load = 0.9;
  UnitMeanDistribution sizes;
  UnitMeanDistribution arrivals;
  std::uint64_t jobs = 200000;  // per replication
  std::uint64_t replications = 1;
  std::uint64_t seed = 1;
  double warmup_fraction = 0.2;
  std::size_t batches = 20;
  double confidence = 0.95;
  double gamma = 0.1;
  bool probe = false;
  std::uint64_t probe_windows = 10000;
  std::string output_dir = ".";
  OutputFormat format = OutputFormat::kCsv;
  unsigned threads = 1;

  /// Throws ConfigError; run_experiment calls it before any simulation.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

enum class Trend { kVanishing, kPositive, kInconclusive };
std::string trend_name(Trend t);

struct TrendPoint {
  std::size_t servers = 0;
  double mean = 0.0;
  double half_width = 0.0;
};

/// VANISHING iff every mean drops below its predecessor by more than the two
/// half-widths and the last mean is under 0.1x the first. POSITIVE iff every
/// lower CI bound exceeds half the smallest mean and the smallest mean is at
/// least half the largest. Otherwise, or with fewer than 3 points, INCONCLUSIVE.
Trend classify_trend(const std::vector<TrendPoint>& series);

struct ExperimentRow {
  std::string policy;
  std::size_t servers = 0;
  double load = 0.0;
  std::uint64_t replications = 0;
  std::uint64_t jobs = 0;
  unsigned memory_bits = 0;
  double declared_rate = 0.0;
  bool rate_is_bound = false;
  BatchEstimate delay;
  BatchEstimate message_rate;
  double query_rate = 0.0;
  double response_rate = 0.0;
  double spontaneous_rate = 0.0;
  double departure_rate = 0.0;
  double idle_fraction = 0.0;
  double tail2 = 0.0;  // fraction of queues with >= 2 jobs
  std::string probe = "off";
  Trend trend = Trend::kInconclusive;
  std::string status = "ok";
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  bool invariant_failed = false;
  bool inconclusive_only = false;  // no conclusive delay estimate anywhere
};

/// Runs every (policy, n) point. Failures are isolated per replication and
/// recorded in the row status.
ExperimentResult run_experiment(const ExperimentConfig& config);

inline constexpr const char* kResultsSchema = "lbsim-results/1";

void write_results_csv(std::ostream& out, const ExperimentResult& result);
nlohmann::json to_json(const ExperimentResult& result);
/// Writes results.csv or results.json into the output directory; returns the path.
std::string write_results(const ExperimentConfig& config, const ExperimentResult& result);

}  // namespace lbsim
