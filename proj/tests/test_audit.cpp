#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <map>

#include "lbsim/audit.hpp"
#include "lbsim/oracles.hpp"
#include "lbsim/policies.hpp"
#include "lbsim/rng.hpp"
#include "lbsim/stats.hpp"
#include "support/crafted.hpp"

using namespace lbsim;

namespace {

MemoryState bitmap(std::size_t n, std::initializer_list<ServerId> ids) {
  MemoryState m(static_cast<unsigned>(n));
  for (ServerId i : ids) m.set_bit(i - 1, true);
  return m;
}

bool all_identity(const AuditVerdict& v) {
  for (const auto& w : v.witness)
    for (std::size_t i = 0; i < w.sigma_m.size(); ++i)
      if (w.sigma_m[i] != i) return false;
  return true;
}

std::vector<ServerId> ids(std::initializer_list<ServerId> l) { return l; }

class LeakyOracle : public DistributionOracle {
 public:
  SampleDistribution sample_dist(const MemoryState&, double) const override {
    return {{SampleVector{}, Weight::ratio(9, 10)}};
  }
  DispatchDistribution dispatch_dist(const MemoryState&, double, const SampleVector&,
                                     std::span<const QueueView>) const override {
    return {{1, Weight::ratio(1, 1)}};
  }
};

/// Chi-square goodness of fit of observed counts against exact probabilities.
template <class Key>
bool fits_law(const std::map<Key, Weight>& law, const std::map<Key, std::uint64_t>& counts, std::uint64_t draws) {
  double stat = 0.0;
  std::size_t cells = 0;
  for (const auto& [k, c] : counts)
    if (!law.count(k) || law.at(k).is_zero()) return false;
  for (const auto& [k, w] : law) {
    if (w.is_zero()) continue;
    double expect = w.value() * static_cast<double>(draws);
    double obs = counts.count(k) ? static_cast<double>(counts.at(k)) : 0.0;
    stat += (obs - expect) * (obs - expect) / expect;
    ++cells;
  }
  if (cells <= 1) return true;
  return stat < chi_squared_quantile(1.0 - 1e-3, static_cast<double>(cells - 1));
}

}  // namespace

TEST_SUITE("symmetry") {
  TEST_CASE("random is symmetric with identity memory maps") {
    for (std::size_t n : {2u, 3u, 4u}) {
      auto subject = audit_subject(make_random(n));
      auto v = check_symmetry(subject);
      CHECK(v.symmetric);
      CHECK(v.witness.size() == v.permutations_checked);
      CHECK(all_identity(v));
      CHECK(verify_witness(subject, v));
    }
  }

  TEST_CASE("naive round robin fails the memory update condition") {
    auto subject = audit_subject(make_round_robin(3));
    auto v = check_symmetry(subject);
    CHECK_FALSE(v.symmetric);
    REQUIRE(v.counterexample);
    CHECK(v.counterexample->condition == 3);
    CHECK(recheck_counterexample(subject, *v.counterexample));
    // Under the identity the same instance is fine, so the recheck is not vacuous.
    Counterexample id = *v.counterexample;
    id.sigma = identity_permutation(3);
    id.sigma_m = v.states;
    CHECK_FALSE(recheck_counterexample(subject, id));
  }

  TEST_CASE("sq(2) at n=4 is symmetric with identity memory maps") {
    auto subject = audit_subject(make_sq_d(4, 2));
    auto v = check_symmetry(subject);
    CHECK(v.symmetric);
    CHECK(v.permutations_checked == 24);
    CHECK(all_identity(v));
    CHECK(verify_witness(subject, v));
  }

  TEST_CASE("memory-carrying symmetric policies pass with their relabeling") {
    for (auto p : {make_jiq(4), make_idle_ping(3, 1.0), make_sq_d_b(3, 2, 1), make_sq(4), make_ll_d(4, 2)}) {
      CAPTURE(p->name());
      auto subject = audit_subject(p);
      auto v = check_symmetry(subject);
      CHECK(v.symmetric);
      CHECK(verify_witness(subject, v));
    }
  }

  TEST_CASE("size-interval routing is not symmetric") {
    auto subject = audit_subject(make_sita({1.0, 2.0}));
    auto v = check_symmetry(subject);
    CHECK_FALSE(v.symmetric);
    REQUIRE(v.counterexample);
    CHECK(v.counterexample->condition == 2);
    CHECK(recheck_counterexample(subject, *v.counterexample));
  }

  TEST_CASE("a tampered witness is caught") {
    auto subject = audit_subject(make_jiq(3));
    auto v = check_symmetry(subject);
    REQUIRE(v.symmetric);
    auto bad = v;
    for (auto& w : bad.witness)
      if (w.sigma != identity_permutation(3)) std::fill(w.sigma_m.begin(), w.sigma_m.end(), 0);
    CHECK_FALSE(verify_witness(subject, bad));
    bad = v;
    bad.witness.pop_back();
    CHECK_FALSE(verify_witness(subject, bad));
  }

  TEST_CASE("normalization failures abort the audit") {
    SampleDistribution leaky{{SampleVector{}, Weight::ratio(9, 10)}};
    CHECK_THROWS_AS(check_normalized(leaky, "leaky"), OracleError);
    DispatchDistribution neg{{1, Weight::approx(1.5)}, {2, Weight::approx(-0.5)}};
    CHECK_THROWS_AS(check_normalized(neg, "neg"), OracleError);
    AuditSubject subject;
    subject.policy = make_random(3);
    subject.oracle = std::make_shared<LeakyOracle>();
    CHECK_THROWS_AS(check_symmetry(subject), OracleError);
  }

  TEST_CASE("too many states without a candidate, or too many servers, are refused") {
    AuditSubject s;
    s.policy = make_jiq(4);
    s.oracle = exact_oracle(s.policy);
    CHECK_THROWS_AS(check_symmetry(s), ConfigError);
    CHECK_THROWS_AS(check_symmetry(audit_subject(make_random(7))), ConfigError);
  }

  TEST_CASE("json report carries verdict and sets") {
    auto subject = audit_subject(make_jiq(3));
    auto v = check_symmetry(subject);
    auto j = audit_report(subject, v);
    CHECK(j["verdict"] == "SYMMETRIC");
    CHECK(j["witness"].size() == 6);
    CHECK(j["distinguished"].size() == v.states.size());
  }
}

TEST_SUITE("weights") {
  TEST_CASE("exact weights compare exactly, approximate ones with tolerance") {
    CHECK(same(Weight::ratio(1, 3) + Weight::ratio(1, 6), Weight::ratio(1, 2)));
    CHECK_FALSE(same(Weight::ratio(1, 3), Weight::ratio(333333333, 1000000000)));
    CHECK(same(Weight::approx(1.0 / 3.0), Weight::ratio(1, 3)));
    CHECK_FALSE(same(Weight::approx(0.3334), Weight::ratio(1, 3)));
    CHECK((Weight::ratio(1, 2) * Weight::ratio(2, 3)).to_string() == "1/3");
  }
}

TEST_SUITE("distinguished sets") {
  TEST_CASE("random: no sample is ever drawn, and dispatch treats everyone alike") {
    auto oracle = exact_oracle(make_random(4));
    for (std::size_t ell = 1; ell <= 4; ++ell)
      CHECK_THROWS_AS(distinguished_sample_set(*oracle, 4, MemoryState(0), 1.0, {}, ell), UndefinedConditional);
    auto r = distinguished_dispatch_set(*oracle, 4, MemoryState(0), 1.0, {}, {});
    CHECK_FALSE(r.tie);
    CHECK(r.servers.empty());
  }

  TEST_CASE("uniform sampling has no distinguished servers at any prefix") {
    auto oracle = exact_oracle(make_sq_d(5, 3));
    auto r = distinguished_sample_set(*oracle, 5, MemoryState(0), 1.0, {}, 3);
    CHECK(r.servers.empty());
    CHECK_FALSE(r.tie);
    auto r2 = distinguished_sample_set(*oracle, 5, MemoryState(0), 1.0, {2, 5}, 3);
    CHECK(r2.servers.empty());
    CHECK_THROWS_AS(distinguished_sample_set(*oracle, 5, MemoryState(0), 1.0, {}, 2), UndefinedConditional);
  }

  TEST_CASE("vip server is the only distinguished one") {
    const std::size_t n = 5;
    testing::VipOracle oracle(n);
    for (ServerId j = 1; j <= n; ++j) {
      auto m = MemoryState::from_integer(j, ceil_log2(n + 1));
      auto r = distinguished_sample_set(oracle, n, m, 1.0, {}, 2);
      CHECK_FALSE(r.tie);
      CHECK(r.servers == ids({j}));
      CHECK(r.servers.size() <= 1);
      std::map<ServerId, Weight> probs;
      for (const auto& [w, ss] : r.classes)
        for (ServerId s : ss) probs[s] = w;
      CHECK(is_minimal_uniformizing(n, probs, {}, r.servers));
      CHECK_FALSE(is_minimal_uniformizing(n, probs, {}, {}));
      // After the vip is drawn the second slot is uniform.
      auto next = distinguished_sample_set(oracle, n, m, 1.0, {j}, 2);
      CHECK(next.servers.empty());
    }
  }

  TEST_CASE("two equally large classes are a tie, not a guess") {
    testing::TieOracle oracle;
    auto r = distinguished_sample_set(oracle, 4, MemoryState(0), 1.0, {}, 1);
    CHECK(r.tie);
    CHECK(r.servers.empty());
    REQUIRE(r.classes.size() == 2);
    CHECK(r.classes[0].second.size() == 2);
    CHECK(r.classes[1].second.size() == 2);
  }

  TEST_CASE("jiq sends to its single idle server") {
    auto oracle = exact_oracle(make_jiq(4));
    auto r = distinguished_dispatch_set(*oracle, 4, bitmap(4, {4}), 1.0, {}, {});
    CHECK(r.servers == ids({4}));
    auto none = distinguished_dispatch_set(*oracle, 4, bitmap(4, {}), 1.0, {}, {});
    CHECK(none.servers.empty());
  }

  TEST_CASE("sq(2) destinations stay inside the sample") {
    auto oracle = exact_oracle(make_sq_d(4, 2));
    std::vector<ServerQueue> qs{ServerQueue::from_workloads(std::vector<double>{1.0}), ServerQueue()};
    std::vector<QueueView> q{QueueView(qs[0], 0.0), QueueView(qs[1], 0.0)};
    auto r = distinguished_dispatch_set(*oracle, 4, MemoryState(0), 1.0, {1, 3}, q);
    CHECK_FALSE(r.tie);
    CHECK(r.servers.empty());
  }

  TEST_CASE("returned sets are minimal on every audited state") {
    for (auto p : {make_jiq(4), make_sq_d_b(3, 2, 1)}) {
      auto subject = audit_subject(p);
      auto states = subject.states;
      if (states.empty())
        for (std::uint64_t v = 0; v < (1u << p->memory_bits()); ++v)
          states.push_back(MemoryState::from_integer(v, p->memory_bits()));
      for (const auto& m : states) {
        auto r = distinguished_dispatch_set(*subject.oracle, p->servers(), m, 1.0, {}, {});
        if (r.tie) continue;
        auto law = subject.oracle->dispatch_dist(m, 1.0, {}, {});
        CHECK(is_minimal_uniformizing(p->servers(), law, {}, r.servers));
      }
    }
  }
}

TEST_SUITE("binomial bound") {
  using boost::multiprecision::cpp_int;

  cpp_int choose(unsigned n, unsigned k) {
    cpp_int r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }

  TEST_CASE("a=2, c=2, n=100 feasible set is the two tails") {
    auto scan = binomial_bound_scan(2, 2, 100, 100);
    REQUIRE(scan.rows.size() == 1);
    const auto& row = scan.rows[0];
    CHECK(row.contained);
    for (std::size_t b : row.feasible) CHECK((b <= 2 || b >= 96));
    CHECK(row.feasible.front() == 0);
    std::vector<std::size_t> expect;
    for (unsigned b = 0; b <= 98; ++b)
      if (choose(98, b) <= cpp_int(100) * 100) expect.push_back(b);
    CHECK(row.feasible == expect);
  }

  TEST_CASE("small n may break containment and is only reported") {
    auto scan = binomial_bound_scan(1, 1, 3, 8);
    for (const auto& row : scan.rows) {
      std::vector<std::size_t> expect;
      bool contained = true;
      for (unsigned b = 0; b <= row.n - 1; ++b)
        if (choose(static_cast<unsigned>(row.n - 1), b) <= cpp_int(row.n)) {
          expect.push_back(b);
          if (!(b <= 1 || b + 1 + 1 >= row.n)) contained = false;
        }
      CHECK(row.feasible == expect);
      CHECK(row.contained == contained);
    }
  }

  TEST_CASE("threshold from the scanned range") {
    for (auto [a, c] : {std::pair<unsigned, unsigned>{2, 2}, {3, 1}}) {
      auto scan = binomial_bound_scan(a, c, 20, 200);
      REQUIRE(scan.threshold);
      for (const auto& row : scan.rows)
        if (row.n >= *scan.threshold) CHECK(row.contained);
      CHECK(scan.rows.size() == 181);
    }
  }
}

TEST_SUITE("oracle versus hooks") {
  constexpr std::uint64_t kDraws = 100000;

  void check_policy(const PolicyPtr& p, const std::vector<MemoryState>& states,
                    const std::vector<std::vector<double>>& grid, std::uint64_t seed) {
    auto oracle = exact_oracle(p);
    Xoshiro256 rng(seed);
    const std::size_t n = p->servers();
    for (const auto& m : states)
      for (double w : {0.5, 1.5}) {
        CAPTURE(p->name());
        CAPTURE(m.to_string());
        std::map<SampleVector, std::uint64_t> samples;
        for (std::uint64_t k = 0; k < kDraws; ++k) ++samples[p->select_servers(m, w, rng.uniform())];
        CHECK(fits_law(oracle->sample_dist(m, w), samples, kDraws));

        // Dispatch law for one fixed sample and one queue assignment per grid shift.
        SampleVector s = samples.begin()->first;
        for (std::size_t shift = 0; shift < grid.size(); ++shift) {
          std::vector<ServerQueue> qs;
          for (std::size_t i = 0; i < s.size(); ++i)
            qs.push_back(ServerQueue::from_workloads(grid[(i + shift) % grid.size()]));
          std::vector<QueueView> q;
          for (const auto& x : qs) q.emplace_back(x, 0.0);
          std::map<ServerId, std::uint64_t> dest;
          for (std::uint64_t k = 0; k < kDraws; ++k) ++dest[p->choose_destination(m, w, s, q, rng.uniform())];
          CHECK(fits_law(oracle->dispatch_dist(m, w, s, q), dest, kDraws));
        }
        (void)n;
      }
  }

  TEST_CASE("sampling and dispatch draws follow the exact laws") {
    std::vector<std::vector<double>> grid{{}, {1.0}, {0.5, 1.0}, {1.0}};
    check_policy(make_random(4), {MemoryState(0)}, grid, 1);
    check_policy(make_sq_d(4, 2), {MemoryState(0)}, grid, 2);
    check_policy(make_sq(4), {MemoryState(0)}, {{1.0}, {1.0}, {0.2}}, 3);
    check_policy(make_ll_d(5, 3), {MemoryState(0)}, {{1.0}, {2.0}, {1.0}}, 4);
    check_policy(make_jiq(4), {bitmap(4, {}), bitmap(4, {2, 3}), bitmap(4, {1, 2, 3, 4})}, grid, 5);
    auto sqdb = std::dynamic_pointer_cast<const SqdbPolicy>(make_sq_d_b(4, 2, 1));
    check_policy(sqdb, {sqdb->encode({}), sqdb->encode({{3, 0}}), sqdb->encode({{1, 1}})}, grid, 6);
    check_policy(make_round_robin(4), {MemoryState::from_integer(2, 2)}, grid, 7);
    check_policy(make_sita({1.0, 2.0}), {MemoryState(0)}, grid, 8);
  }
}
