#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lbsim/rng.hpp"

namespace lbsim {

enum class Family { kExponential, kHyperexponential, kUniform, kDeterministic };

std::string family_name(Family f);
Family parse_family(const std::string& name);

/// A positive distribution with mean exactly 1.
///
/// - exponential: rate 1.
/// - hyperexponential: rate r w.p. `p`, rate r*`ratio` otherwise, r chosen for mean 1.
/// - uniform: on [1-spread, 1+spread]; spread < 1 keeps it bounded away from zero.
/// - deterministic: always 1.
struct UnitMeanDistribution {
  Family family = Family::kExponential;
  double p = 0.5;
  double ratio = 10.0;
  double spread = 0.5;

  /// Throws ConfigError on nonpositive or out-of-range parameters.
  void validate() const;

  double sample(Xoshiro256& rng) const;
  /// Draw from the stationary residual (equilibrium) distribution.
  double sample_residual(Xoshiro256& rng) const;
  double cdf(double x) const;
  /// Smallest x with cdf(x) >= q, for q in [0,1].
  double quantile(double q) const;
  double second_moment() const;
  /// E[W; W <= x], the share of total work carried by jobs no larger than x.
  double partial_mean(double x) const;

  std::string describe() const;

  friend bool operator==(const UnitMeanDistribution&, const UnitMeanDistribution&) = default;
};

/// Renewal interarrival times at total rate lambda*n.
struct InterarrivalSpec {
  UnitMeanDistribution shape;
  double rate = 1.0;  // lambda * n

  void validate() const;
  double mean() const { return 1.0 / rate; }
  double sample(Xoshiro256& rng) const { return shape.sample(rng) / rate; }
  double sample_residual(Xoshiro256& rng) const { return shape.sample_residual(rng) / rate; }
  double cdf(double t) const { return shape.cdf(t * rate); }
};

using SizeSpec = UnitMeanDistribution;

/// One (n, eps) cell of the arrival-assumption check: how often is the
/// interarrival time at most eps/n, and is that bounded away from 0 and 1?
struct AssumptionCell {
  std::string family;
  std::size_t servers = 0;
  double epsilon = 0.0;
  std::uint64_t samples = 0;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double exact = 0.0;  // closed form P(I_n <= eps/n)
  bool pass = false;
};

struct AssumptionSettings {
  std::vector<std::size_t> servers{10, 100, 1000};
  std::vector<double> epsilons{0.01, 0.05, 0.1, 0.5};
  std::uint64_t samples = 100000;
  double delta = 1e-3;
  double confidence = 0.99;
  std::uint64_t seed = 1;
};

/// Monte Carlo estimate of P(I_n <= eps/n) per cell. A cell passes iff the
/// estimate lies in [delta, 1 - delta].
std::vector<AssumptionCell> validate_assumption(const UnitMeanDistribution& shape, double load,
                                                const AssumptionSettings& settings);

/// CSV: family,n,epsilon,estimate,ci_low,ci_high,exact,verdict
void write_assumption_csv(std::ostream& out, const std::vector<AssumptionCell>& cells);

}  // namespace lbsim
