#include "lbsim/arrivals.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "lbsim/stats.hpp"
#include "lbsim/types.hpp"

namespace lbsim {

std::string family_name(Family f) {
  switch (f) {
    case Family::kExponential: return "exponential";
    case Family::kHyperexponential: return "hyperexponential";
    case Family::kUniform: return "uniform";
    case Family::kDeterministic: return "deterministic";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "exponential") return Family::kExponential;
  if (name == "hyperexponential") return Family::kHyperexponential;
  if (name == "uniform") return Family::kUniform;
  if (name == "deterministic") return Family::kDeterministic;
  throw ConfigError("unknown distribution family '" + name + "'");
}

namespace {

double slow_rate(const UnitMeanDistribution& d) { return d.p + (1.0 - d.p) / d.ratio; }

double exp_draw(Xoshiro256& rng, double rate) { return -std::log(rng.open_unit()) / rate; }

}  // namespace

void UnitMeanDistribution::validate() const {
  switch (family) {
    case Family::kHyperexponential:
      if (!(p > 0.0 && p < 1.0)) throw ConfigError("hyperexponential p must be in (0,1)");
      if (!(ratio > 0.0)) throw ConfigError("hyperexponential ratio must be positive");
      break;
    case Family::kUniform:
      if (!(spread > 0.0 && spread <= 1.0)) throw ConfigError("uniform spread must be in (0,1]");
      break;
    default:
      break;
  }
}

double UnitMeanDistribution::sample(Xoshiro256& rng) const {
  switch (family) {
    case Family::kExponential:
      return exp_draw(rng, 1.0);
    case Family::kHyperexponential: {
      double r1 = slow_rate(*this);
      return rng.uniform().value() < p ? exp_draw(rng, r1) : exp_draw(rng, r1 * ratio);
    }
    case Family::kUniform: {
      // open_unit keeps the draw strictly positive even when spread == 1.
      return (1.0 - spread) + 2.0 * spread * rng.open_unit();
    }
    case Family::kDeterministic:
      return 1.0;
  }
  return 1.0;
}

double UnitMeanDistribution::sample_residual(Xoshiro256& rng) const {
  switch (family) {
    case Family::kExponential:
      return exp_draw(rng, 1.0);
    case Family::kHyperexponential: {
      // Phase chosen proportionally to p_i * mean_i; the residual of an
      // exponential phase is exponential with the same rate.
      double r1 = slow_rate(*this);
      double w1 = p / r1;
      return rng.uniform().value() < w1 ? exp_draw(rng, r1) : exp_draw(rng, r1 * ratio);
    }
    case Family::kUniform: {
      double a = 1.0 - spread, b = 1.0 + spread;
      double biased = std::sqrt(a * a + rng.uniform().value() * (b * b - a * a));
      return rng.open_unit() * biased;
    }
    case Family::kDeterministic:
      return rng.open_unit();
  }
  return 0.0;
}

double UnitMeanDistribution::cdf(double x) const {
  if (x < 0.0) return 0.0;
  switch (family) {
    case Family::kExponential:
      return -std::expm1(-x);
    case Family::kHyperexponential: {
      double r1 = slow_rate(*this);
      return 1.0 - p * std::exp(-r1 * x) - (1.0 - p) * std::exp(-r1 * ratio * x);
    }
    case Family::kUniform: {
      double a = 1.0 - spread;
      if (x <= a) return 0.0;
      return std::min(1.0, (x - a) / (2.0 * spread));
    }
    case Family::kDeterministic:
      return x >= 1.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double UnitMeanDistribution::quantile(double q) const {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must be in [0,1]");
  switch (family) {
    case Family::kExponential:
      return q >= 1.0 ? INFINITY : -std::log1p(-q);
    case Family::kUniform:
      return (1.0 - spread) + 2.0 * spread * q;
    case Family::kDeterministic:
      return 1.0;
    case Family::kHyperexponential: {
      if (q >= 1.0) return INFINITY;
      double lo = 0.0, hi = 1.0;
      while (cdf(hi) < q) hi *= 2.0;
      for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        double mid = 0.5 * (lo + hi);
        (cdf(mid) < q ? lo : hi) = mid;
      }
      return hi;
    }
  }
  return 1.0;
}

double UnitMeanDistribution::partial_mean(double x) const {
  if (x <= 0.0) return 0.0;
  auto exp_part = [x](double rate) { return (-std::expm1(-rate * x) - rate * x * std::exp(-rate * x)) / rate; };
  switch (family) {
    case Family::kExponential:
      return exp_part(1.0);
    case Family::kHyperexponential: {
      double r1 = slow_rate(*this);
      return p * exp_part(r1) + (1.0 - p) * exp_part(r1 * ratio);
    }
    case Family::kUniform: {
      double a = 1.0 - spread, b = 1.0 + spread;
      if (x <= a) return 0.0;
      if (x >= b) return 1.0;
      return (x * x - a * a) / (2.0 * (b - a));
    }
    case Family::kDeterministic:
      return x >= 1.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double UnitMeanDistribution::second_moment() const {
  switch (family) {
    case Family::kExponential:
      return 2.0;
    case Family::kHyperexponential: {
      double r1 = slow_rate(*this), r2 = r1 * ratio;
      return 2.0 * p / (r1 * r1) + 2.0 * (1.0 - p) / (r2 * r2);
    }
    case Family::kUniform:
      return 1.0 + spread * spread / 3.0;
    case Family::kDeterministic:
      return 1.0;
  }
  return 1.0;
}

std::string UnitMeanDistribution::describe() const {
  switch (family) {
    case Family::kHyperexponential:
      return fmt::format("hyperexponential(p={};ratio={})", p, ratio);
    case Family::kUniform:
      return fmt::format("uniform(spread={})", spread);
    default:
      return family_name(family);
  }
}

void InterarrivalSpec::validate() const {
  shape.validate();
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ConfigError("arrival rate must be positive");
}

std::vector<AssumptionCell> validate_assumption(const UnitMeanDistribution& shape, double load,
                                                const AssumptionSettings& settings) {
  shape.validate();
  if (!(load > 0.0 && load < 1.0)) throw ConfigError("load must be in (0,1)");
  std::vector<AssumptionCell> cells;
  std::uint64_t salt = 0;
  for (std::size_t n : settings.servers) {
    if (n == 0) throw ConfigError("server counts must be positive");
    InterarrivalSpec spec{shape, load * static_cast<double>(n)};
    for (double eps : settings.epsilons) {
      if (!(eps > 0.0)) throw ConfigError("epsilon grid must be positive");
      Xoshiro256 rng(derive_seed(settings.seed, salt++));
      double threshold = eps / static_cast<double>(n);
      std::uint64_t hits = 0;
      for (std::uint64_t i = 0; i < settings.samples; ++i)
        if (spec.sample(rng) <= threshold) ++hits;
      auto ci = wilson_interval(hits, settings.samples, settings.confidence);
      AssumptionCell cell;
      cell.family = shape.describe();
      cell.servers = n;
      cell.epsilon = eps;
      cell.samples = settings.samples;
      cell.estimate = ci.estimate;
      cell.ci_low = ci.low;
      cell.ci_high = ci.high;
      cell.exact = spec.cdf(threshold);
      cell.pass = cell.estimate >= settings.delta && cell.estimate <= 1.0 - settings.delta;
      cells.push_back(cell);
    }
  }
  return cells;
}

void write_assumption_csv(std::ostream& out, const std::vector<AssumptionCell>& cells) {
  out << "family,n,epsilon,estimate,ci_low,ci_high,exact,verdict\n";
  for (const auto& c : cells)
    out << fmt::format("{},{},{},{},{},{},{},{}\n", c.family, c.servers, c.epsilon, c.estimate,
                       c.ci_low, c.ci_high, c.exact, c.pass ? "PASS" : "FAIL");
}

}  // namespace lbsim
