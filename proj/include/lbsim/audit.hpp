#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

#include "lbsim/policy.hpp"

namespace lbsim {

/// A probability, exact when built from rationals.
///
/// Two exact weights compare exactly; anything involving a double compares
/// with absolute tolerance kTolerance.
class Weight {
 public:
  using Rational = boost::rational<std::int64_t>;
  static constexpr double kTolerance = 1e-9;

  Weight() = default;
  Weight(Rational r) : rational_(r) {}  // NOLINT: implicit on purpose
  static Weight ratio(std::int64_t num, std::int64_t den) { return Weight(Rational(num, den)); }
  static Weight approx(double p);

  bool exact() const { return exact_; }
  double value() const;
  const Rational& rational() const { return rational_; }
  std::string to_string() const;

  Weight& operator+=(const Weight& o);
  friend Weight operator+(Weight a, const Weight& b) { return a += b; }
  friend Weight operator*(const Weight& a, const Weight& b);
  friend Weight operator/(const Weight& a, const Weight& b);
  /// Equality under the rule above.
  friend bool same(const Weight& a, const Weight& b);
  bool is_zero() const;

 private:
  bool exact_ = true;
  Rational rational_{0};
  double approx_ = 0.0;
};

using SampleDistribution = std::map<SampleVector, Weight>;
using DispatchDistribution = std::map<ServerId, Weight>;

/// Raised when an oracle returns negative mass or mass not summing to 1.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a conditional distribution conditions on a null event.
class UndefinedConditional : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Exact laws of the sampling and dispatch rules.
class DistributionOracle {
 public:
  virtual ~DistributionOracle() = default;
  /// Law of select_servers(m, w, U).
  virtual SampleDistribution sample_dist(const MemoryState& m, double w) const = 0;
  /// Law of choose_destination(m, w, s, q, V).
  virtual DispatchDistribution dispatch_dist(const MemoryState& m, double w, const SampleVector& s,
                                             std::span<const QueueView> q) const = 0;
};

/// Throws OracleError unless masses are nonnegative and sum to 1 within 1e-12.
void check_normalized(const SampleDistribution& d, const std::string& who);
void check_normalized(const DispatchDistribution& d, const std::string& who);

/// sigma[i-1] = sigma(i).
using Permutation = std::vector<ServerId>;
Permutation identity_permutation(std::size_t n);
SampleVector apply(const Permutation& sigma, const SampleVector& s);

using MemoryRelabel = std::function<MemoryState(const Permutation&, const MemoryState&)>;

/// Everything the symmetry check quantifies over.
struct AuditSubject {
  PolicyPtr policy;
  std::shared_ptr<const DistributionOracle> oracle;
  /// Memory states; must be closed under update_after_dispatch. Empty = all 2^bits.
  std::vector<MemoryState> states;
  std::vector<double> sizes{1.0};
  /// Queue states a queried server may report, as remaining workloads head first.
  std::vector<std::vector<double>> queue_grid{{}, {1.0}, {0.5, 1.0}};
  /// Candidate sigma_M; required when there are more than kExhaustiveStates states.
  MemoryRelabel candidate;
};

inline constexpr std::size_t kExhaustiveStates = 8;
inline constexpr std::size_t kMaxAuditServers = 6;

struct Counterexample {
  Permutation sigma;
  int condition = 0;  // 1: sampling law, 2: dispatch law, 3: memory update
  MemoryState memory;
  double size = 0.0;
  SampleVector sampled;
  /// Queue states of the sampled servers (grid entries), aligned with `sampled`.
  std::vector<std::vector<double>> queues;
  ServerId destination = kNoServer;
  /// The full sigma_M the instance was evaluated under, aligned with the state list.
  std::vector<MemoryState> sigma_m;
  std::string detail;
};

struct WitnessEntry {
  Permutation sigma;
  std::vector<std::size_t> sigma_m;  // indices into AuditVerdict::states
};

struct AuditVerdict {
  bool symmetric = false;
  std::string policy;
  std::size_t servers = 0;
  std::vector<MemoryState> states;
  std::vector<WitnessEntry> witness;
  std::optional<Counterexample> counterexample;
  std::size_t permutations_checked = 0;
};

/// Searches, for every server permutation, for a memory permutation meeting
/// the three symmetry conditions exactly on the subject's grids.
AuditVerdict check_symmetry(const AuditSubject& subject);

/// Re-checks every witness entry from scratch. True iff all conditions hold.
bool verify_witness(const AuditSubject& subject, const AuditVerdict& verdict);

/// True iff the counterexample's condition fails at its instance under its sigma_M.
bool recheck_counterexample(const AuditSubject& subject, const Counterexample& cex);

/// Servers outside `s` grouped by probability; R is everything but the largest class.
struct DistinguishedSet {
  bool tie = false;
  std::vector<ServerId> servers;  // R when !tie
  std::vector<std::pair<Weight, std::vector<ServerId>>> classes;
};

/// R for the next sampled index given |S| = ell and S starts with s.
DistinguishedSet distinguished_sample_set(const DistributionOracle& oracle, std::size_t n, const MemoryState& m,
                                          double w, const SampleVector& s, std::size_t ell);

/// R' for the destination given the queried s and responses q.
DistinguishedSet distinguished_dispatch_set(const DistributionOracle& oracle, std::size_t n, const MemoryState& m,
                                            double w, const SampleVector& s, std::span<const QueueView> q);

/// True iff probabilities are constant over servers outside r and s, and no
/// smaller set has that property (exhaustive over subsets).
bool is_minimal_uniformizing(std::size_t n, const std::map<ServerId, Weight>& probs, const SampleVector& s,
                             const std::vector<ServerId>& r);

struct BinomialRow {
  std::size_t n = 0;
  std::vector<std::size_t> feasible;  // b with C(n-a, b) <= n^c
  bool contained = false;
};

struct BinomialScan {
  unsigned a = 0;
  unsigned c = 0;
  std::vector<BinomialRow> rows;
  /// Smallest scanned n from which containment holds for every larger scanned n.
  std::optional<std::size_t> threshold;
};

BinomialScan binomial_bound_scan(unsigned a, unsigned c, std::size_t n_lo, std::size_t n_hi);

nlohmann::json to_json(const AuditVerdict& v);
nlohmann::json to_json(const DistinguishedSet& d);
nlohmann::json to_json(const BinomialScan& s);

/// Audit report: verdict plus R and R' for s = () at every memory state and size.
nlohmann::json audit_report(const AuditSubject& subject, const AuditVerdict& verdict);

}  // namespace lbsim
