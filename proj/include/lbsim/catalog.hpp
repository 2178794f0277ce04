#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbsim/arrivals.hpp"
#include "lbsim/policy.hpp"
#include "lbsim/stats.hpp"

namespace lbsim {

/// Policy name plus the parameters the named constructors take.
struct PolicySpec {
  std::string name = "random";
  std::size_t d = 2;         // sq_d, ll_d, sq_d_b
  std::size_t b = 1;         // sq_d_b
  double ping_rate = 1.0;    // idle_ping
  std::vector<double> cuts;  // sita; empty = size quantiles

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

nlohmann::json to_json(const PolicySpec& spec);
/// Unknown keys are rejected.
PolicySpec policy_spec_from_json(const nlohmann::json& j);

/// Names accepted by make_policy, in table order.
const std::vector<std::string>& policy_names();

PolicyPtr make_policy(const PolicySpec& spec, std::size_t n, const SizeSpec& sizes = {});

enum class DelayClass { kZero, kPositive, kUnknown };
std::string delay_class_name(DelayClass c);

/// A policy with the resources it is expected to use at (n, lambda).
struct CatalogEntry {
  PolicySpec spec;
  PolicyPtr policy;
  unsigned memory_bits = 0;
  std::string memory_formula;
  double message_rate = 0.0;
  /// True when message_rate is only an upper bound (pull-based policies).
  bool rate_is_bound = false;
  std::string rate_formula;
  DelayClass limiting_delay = DelayClass::kUnknown;
};

CatalogEntry catalog_entry(const PolicySpec& spec, std::size_t n, double load, const SizeSpec& sizes = {});

/// One row of the resource table: declared values next to measured ones.
struct ResourceRow {
  std::string policy;
  std::size_t servers = 0;
  double load = 0.0;
  unsigned memory_bits = 0;
  unsigned measured_memory_bits = 0;
  double declared_rate = 0.0;
  bool rate_is_bound = false;
  BatchEstimate measured_rate;
  BatchEstimate delay;
  DelayClass limiting_delay = DelayClass::kUnknown;
};

struct Measurement {
  unsigned memory_bits = 0;
  BatchEstimate message_rate;
  BatchEstimate delay;
};

/// Pairs each entry with its measurement; entries and measurements align by index.
std::vector<ResourceRow> resource_table(const std::vector<CatalogEntry>& catalog, std::size_t n, double load,
                                        const std::vector<Measurement>& measured);

}  // namespace lbsim
