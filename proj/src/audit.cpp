#include "lbsim/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

namespace lbsim {

// ---------------------------------------------------------------- Weight

Weight Weight::approx(double p) {
  Weight w;
  w.exact_ = false;
  w.approx_ = p;
  return w;
}

double Weight::value() const {
  if (!exact_) return approx_;
  return static_cast<double>(rational_.numerator()) / static_cast<double>(rational_.denominator());
}

std::string Weight::to_string() const {
  if (!exact_) return fmt::format("{:.12g}", approx_);
  if (rational_.denominator() == 1) return fmt::format("{}", rational_.numerator());
  return fmt::format("{}/{}", rational_.numerator(), rational_.denominator());
}

Weight& Weight::operator+=(const Weight& o) {
  if (exact_ && o.exact_) {
    rational_ += o.rational_;
  } else {
    approx_ = value() + o.value();
    exact_ = false;
  }
  return *this;
}

Weight operator*(const Weight& a, const Weight& b) {
  if (a.exact_ && b.exact_) return Weight(a.rational_ * b.rational_);
  return Weight::approx(a.value() * b.value());
}

Weight operator/(const Weight& a, const Weight& b) {
  if (a.exact_ && b.exact_) return Weight(a.rational_ / b.rational_);
  return Weight::approx(a.value() / b.value());
}

bool same(const Weight& a, const Weight& b) {
  if (a.exact_ && b.exact_) return a.rational_ == b.rational_;
  return std::abs(a.value() - b.value()) <= Weight::kTolerance;
}

bool Weight::is_zero() const { return same(*this, Weight()); }

// ---------------------------------------------------------------- helpers

namespace {

template <class Key>
void check_law(const std::map<Key, Weight>& d, const std::string& who) {
  Weight total;
  for (const auto& [k, w] : d) {
    if (w.value() < 0.0) throw OracleError(who + ": negative probability");
    total += w;
  }
  bool ok = total.exact() ? total.rational() == Weight::Rational(1) : std::abs(total.value() - 1.0) <= 1e-12;
  if (!ok) throw OracleError(fmt::format("{}: probabilities sum to {}", who, total.to_string()));
}

template <class Key>
bool same_law(const std::map<Key, Weight>& a, const std::map<Key, Weight>& b) {
  for (const auto& [k, w] : a) {
    auto it = b.find(k);
    if (it == b.end() ? !w.is_zero() : !same(w, it->second)) return false;
  }
  for (const auto& [k, w] : b)
    if (!a.contains(k) && !w.is_zero()) return false;
  return true;
}

SampleDistribution permute_law(const Permutation& sigma, const SampleDistribution& d) {
  SampleDistribution out;
  for (const auto& [s, w] : d) out[lbsim::apply(sigma, s)] += w;
  return out;
}

DispatchDistribution permute_law(const Permutation& sigma, const DispatchDistribution& d) {
  DispatchDistribution out;
  for (const auto& [j, w] : d) out[sigma[j - 1]] += w;
  return out;
}

std::string permutation_string(const Permutation& sigma) {
  return SampleVector(std::vector<ServerId>(sigma.begin(), sigma.end())).to_string();
}

/// All ordered vectors of distinct servers with length `len`.
void ordered_vectors(std::size_t n, std::size_t len, std::vector<SampleVector>& out) {
  std::vector<ServerId> cur;
  std::vector<bool> used(n + 1, false);
  std::function<void()> rec = [&] {
    if (cur.size() == len) {
      out.emplace_back(cur);
      return;
    }
    for (ServerId i = 1; i <= n; ++i) {
      if (used[i]) continue;
      used[i] = true;
      cur.push_back(i);
      rec();
      cur.pop_back();
      used[i] = false;
    }
  };
  rec();
}

std::vector<MemoryState> audit_states(const AuditSubject& subject) {
  if (!subject.states.empty()) return subject.states;
  unsigned bits = subject.policy->memory_bits();
  if (bits > 16) throw ConfigError("memory too large to enumerate; list the audited states explicitly");
  std::vector<MemoryState> out;
  for (std::uint64_t v = 0; v < (std::uint64_t{1} << bits); ++v) out.push_back(MemoryState::from_integer(v, bits));
  return out;
}

/// The precomputed grids one audit works over.
struct AuditSpace {
  std::size_t n = 0;
  std::vector<MemoryState> states;
  std::map<MemoryState, std::size_t> state_index;
  std::vector<double> sizes;
  std::vector<ServerQueue> grid;
  std::vector<SampleVector> samples;
  std::map<SampleVector, std::size_t> sample_index;
  // combos[len][qi] = grid index per sampled position
  std::vector<std::vector<std::vector<std::size_t>>> combos;
  std::vector<std::size_t> key_base;  // first cond-3 key of each sample vector
  std::size_t key_count = 0;

  std::vector<QueueView> views(std::size_t len, std::size_t qi) const {
    std::vector<QueueView> v;
    for (std::size_t g : combos[len][qi]) v.emplace_back(grid[g], 0.0);
    return v;
  }
  std::size_t key(std::size_t si, std::size_t qi, ServerId d, std::size_t wi) const {
    return key_base[si] + (qi * n + (d - 1)) * sizes.size() + wi;
  }
};

AuditSpace build_space(const AuditSubject& subject) {
  if (!subject.policy || !subject.oracle) throw ConfigError("audit needs a policy and an oracle");
  AuditSpace sp;
  sp.n = subject.policy->servers();
  if (sp.n > kMaxAuditServers) throw ConfigError(fmt::format("audit supports n <= {}", kMaxAuditServers));
  sp.states = audit_states(subject);
  for (std::size_t i = 0; i < sp.states.size(); ++i) {
    sp.states[i].require_capacity(subject.policy->memory_bits(), "audited state");
    if (!sp.state_index.emplace(sp.states[i], i).second) throw ConfigError("audited states repeat");
  }
  sp.sizes = subject.sizes;
  if (sp.sizes.empty()) throw ConfigError("audit needs at least one job size");
  for (const auto& g : subject.queue_grid) sp.grid.push_back(ServerQueue::from_workloads(g, 0.0));

  // Only sample lengths that the sampling law can produce reach the dispatch
  // rule; every ordering and labelling of those lengths is included.
  std::set<std::size_t> lengths{0};
  for (const auto& m : sp.states)
    for (double w : sp.sizes) {
      auto law = subject.oracle->sample_dist(m, w);
      check_law(law, subject.policy->name() + " sample law");
      for (const auto& [s, p] : law)
        if (!p.is_zero()) lengths.insert(s.size());
    }
  for (std::size_t len : lengths) ordered_vectors(sp.n, len, sp.samples);
  for (std::size_t i = 0; i < sp.samples.size(); ++i) sp.sample_index.emplace(sp.samples[i], i);

  sp.combos.resize(sp.n + 1);
  for (std::size_t len : lengths) {
    std::vector<std::size_t> digits(len, 0);
    for (;;) {
      sp.combos[len].push_back(digits);
      std::size_t pos = 0;
      while (pos < len && ++digits[pos] == sp.grid.size()) digits[pos++] = 0;
      if (pos == len) break;
    }
  }
  for (const auto& s : sp.samples) {
    sp.key_base.push_back(sp.key_count);
    sp.key_count += sp.combos[s.size()].size() * sp.n * sp.sizes.size();
  }
  return sp;
}

struct Failure {
  int condition = 0;
  std::size_t wi = 0;
  std::size_t si = 0;
  std::size_t qi = 0;
  ServerId d = kNoServer;
  std::size_t m = 0;
};

/// Everything sigma-independent: laws and the memory-update table.
struct AuditTables {
  std::vector<std::vector<SampleDistribution>> sample;                   // [m][wi]
  std::vector<std::vector<std::vector<DispatchDistribution>>> dispatch;  // [m][wi][flat(si,qi)]
  std::vector<std::size_t> dispatch_base;                                // flat offset per si
  std::vector<std::vector<std::size_t>> update;                          // [m][key] -> state index
};

AuditTables build_tables(const AuditSubject& subject, const AuditSpace& sp) {
  AuditTables t;
  const auto& oracle = *subject.oracle;
  const auto& policy = *subject.policy;
  std::size_t flat = 0;
  for (const auto& s : sp.samples) {
    t.dispatch_base.push_back(flat);
    flat += sp.combos[s.size()].size();
  }
  std::size_t k_states = sp.states.size();
  t.sample.resize(k_states);
  t.dispatch.resize(k_states);
  t.update.assign(k_states, std::vector<std::size_t>(sp.key_count));
  for (std::size_t m = 0; m < k_states; ++m) {
    const MemoryState& mem = sp.states[m];
    t.dispatch[m].resize(sp.sizes.size());
    for (std::size_t wi = 0; wi < sp.sizes.size(); ++wi) {
      double w = sp.sizes[wi];
      t.sample[m].push_back(oracle.sample_dist(mem, w));
      auto& row = t.dispatch[m][wi];
      row.reserve(flat);
      for (std::size_t si = 0; si < sp.samples.size(); ++si) {
        const auto& s = sp.samples[si];
        for (std::size_t qi = 0; qi < sp.combos[s.size()].size(); ++qi) {
          auto views = sp.views(s.size(), qi);
          auto law = oracle.dispatch_dist(mem, w, s, views);
          check_law(law, policy.name() + " dispatch law");
          row.push_back(std::move(law));
          for (ServerId d = 1; d <= sp.n; ++d) {
            MemoryState next = policy.update_after_dispatch(mem, w, s, views, d);
            auto it = sp.state_index.find(next);
            if (it == sp.state_index.end())
              throw ConfigError(fmt::format("{}: update leaves the audited states (reaches {})", policy.name(),
                                            next.to_string()));
            t.update[m][sp.key(si, qi, d, wi)] = it->second;
          }
        }
      }
    }
  }
  return t;
}

/// First instance where conditions 1 or 2 fail for sigma_M(m) = m2.
std::optional<Failure> law_failure(const AuditSpace& sp, const AuditTables& t, const Permutation& sigma,
                                   const std::vector<std::size_t>& sigma_samples, std::size_t m, std::size_t m2) {
  for (std::size_t wi = 0; wi < sp.sizes.size(); ++wi)
    if (!same_law(permute_law(sigma, t.sample[m][wi]), t.sample[m2][wi])) return Failure{1, wi, 0, 0, kNoServer, m};
  for (std::size_t wi = 0; wi < sp.sizes.size(); ++wi)
    for (std::size_t si = 0; si < sp.samples.size(); ++si) {
      std::size_t ps = sigma_samples[si];
      for (std::size_t qi = 0; qi < sp.combos[sp.samples[si].size()].size(); ++qi) {
        const auto& here = t.dispatch[m][wi][t.dispatch_base[si] + qi];
        const auto& there = t.dispatch[m2][wi][t.dispatch_base[ps] + qi];
        if (!same_law(permute_law(sigma, here), there)) return Failure{2, wi, si, qi, kNoServer, m};
      }
    }
  return std::nullopt;
}

struct SigmaContext {
  const AuditSpace& sp;
  const AuditTables& t;
  const Permutation& sigma;
  std::vector<std::size_t> sigma_samples;
  std::vector<std::size_t> sigma_keys;
};

std::optional<Failure> update_failure(const SigmaContext& cx, const std::vector<std::size_t>& perm) {
  const auto& sp = cx.sp;
  for (std::size_t m = 0; m < sp.states.size(); ++m)
    for (std::size_t si = 0; si < sp.samples.size(); ++si)
      for (std::size_t qi = 0; qi < sp.combos[sp.samples[si].size()].size(); ++qi)
        for (ServerId d = 1; d <= sp.n; ++d)
          for (std::size_t wi = 0; wi < sp.sizes.size(); ++wi) {
            std::size_t k = sp.key(si, qi, d, wi);
            if (perm[cx.t.update[m][k]] != cx.t.update[perm[m]][cx.sigma_keys[k]])
              return Failure{3, wi, si, qi, d, m};
          }
  return std::nullopt;
}

constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);

/// Backtracking over sigma_M. With `with_updates` false only conditions 1 and 2 are enforced.
bool search(const SigmaContext& cx, const std::vector<std::vector<bool>>& compat, bool with_updates,
            std::vector<std::size_t>& perm) {
  const std::size_t k_states = cx.sp.states.size();
  std::vector<bool> used(k_states, false);
  perm.assign(k_states, kUnassigned);
  std::function<bool(std::size_t)> rec = [&](std::size_t m) -> bool {
    if (m == k_states) return true;
    for (std::size_t m2 = 0; m2 < k_states; ++m2) {
      if (used[m2] || !compat[m][m2]) continue;
      perm[m] = m2;
      bool ok = true;
      if (with_updates) {
        for (std::size_t j = 0; j <= m && ok; ++j)
          for (std::size_t k = 0; k < cx.sp.key_count; ++k) {
            std::size_t tj = cx.t.update[j][k];
            if (j != m && tj != m) continue;
            if (perm[tj] == kUnassigned) continue;
            if (perm[tj] != cx.t.update[perm[j]][cx.sigma_keys[k]]) {
              ok = false;
              break;
            }
          }
      }
      if (ok) {
        used[m2] = true;
        if (rec(m + 1)) return true;
        used[m2] = false;
      }
      perm[m] = kUnassigned;
    }
    return false;
  };
  return rec(0);
}

/// Completes a partial assignment into a bijection, preferring law-compatible images.
void complete(std::vector<std::size_t>& perm, const std::vector<std::vector<bool>>& compat) {
  std::vector<bool> used(perm.size(), false);
  for (std::size_t p : perm)
    if (p != kUnassigned) used[p] = true;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t m = 0; m < perm.size(); ++m) {
      if (perm[m] != kUnassigned) continue;
      for (std::size_t m2 = 0; m2 < perm.size(); ++m2)
        if (!used[m2] && (pass == 1 || compat[m][m2])) {
          perm[m] = m2;
          used[m2] = true;
          break;
        }
    }
}

Counterexample make_counterexample(const AuditSpace& sp, const Permutation& sigma, const Failure& f,
                                   const std::vector<std::size_t>& perm, std::string detail) {
  Counterexample c;
  c.sigma = sigma;
  c.condition = f.condition;
  c.memory = sp.states[f.m];
  c.size = sp.sizes[f.wi];
  if (f.condition >= 2) {
    c.sampled = sp.samples[f.si];
    for (std::size_t g : sp.combos[c.sampled.size()][f.qi]) c.queues.push_back(sp.grid[g].workloads(0.0));
  }
  c.destination = f.d;
  for (std::size_t p : perm) c.sigma_m.push_back(sp.states[p]);
  c.detail = std::move(detail);
  return c;
}

bool next_permutation(Permutation& p) { return std::next_permutation(p.begin(), p.end()); }

}  // namespace

void check_normalized(const SampleDistribution& d, const std::string& who) { check_law(d, who); }
void check_normalized(const DispatchDistribution& d, const std::string& who) { check_law(d, who); }

Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), ServerId{1});
  return p;
}

SampleVector apply(const Permutation& sigma, const SampleVector& s) {
  std::vector<ServerId> out;
  out.reserve(s.size());
  for (ServerId i : s) out.push_back(sigma[i - 1]);
  return SampleVector(std::move(out));
}

// ---------------------------------------------------------------- symmetry

AuditVerdict check_symmetry(const AuditSubject& subject) {
  AuditSpace sp = build_space(subject);
  AuditTables t = build_tables(subject, sp);
  const std::size_t k_states = sp.states.size();
  if (k_states > kExhaustiveStates && !subject.candidate)
    throw ConfigError(fmt::format("{} memory states exceed the exhaustive bound {}; supply a candidate relabeling",
                                  k_states, kExhaustiveStates));

  AuditVerdict verdict;
  verdict.policy = subject.policy->name();
  verdict.servers = sp.n;
  verdict.states = sp.states;
  verdict.symmetric = true;

  Permutation sigma = identity_permutation(sp.n);
  do {
    ++verdict.permutations_checked;
    SigmaContext cx{sp, t, sigma, {}, {}};
    for (const auto& s : sp.samples) cx.sigma_samples.push_back(sp.sample_index.at(lbsim::apply(sigma, s)));
    cx.sigma_keys.resize(sp.key_count);
    for (std::size_t si = 0; si < sp.samples.size(); ++si)
      for (std::size_t qi = 0; qi < sp.combos[sp.samples[si].size()].size(); ++qi)
        for (ServerId d = 1; d <= sp.n; ++d)
          for (std::size_t wi = 0; wi < sp.sizes.size(); ++wi)
            cx.sigma_keys[sp.key(si, qi, d, wi)] = sp.key(cx.sigma_samples[si], qi, sigma[d - 1], wi);

    std::vector<std::size_t> perm;
    if (subject.candidate) {
      std::vector<bool> hit(k_states, false);
      for (const auto& m : sp.states) {
        auto it = sp.state_index.find(subject.candidate(sigma, m));
        if (it == sp.state_index.end() || hit[it->second])
          throw ConfigError("candidate relabeling is not a permutation of the audited states");
        hit[it->second] = true;
        perm.push_back(it->second);
      }
      std::optional<Failure> f;
      for (std::size_t m = 0; m < k_states && !f; ++m) f = law_failure(sp, t, sigma, cx.sigma_samples, m, perm[m]);
      if (!f) f = update_failure(cx, perm);
      if (f) {
        verdict.symmetric = false;
        verdict.counterexample = make_counterexample(sp, sigma, *f, perm, "candidate relabeling fails");
        return verdict;
      }
      verdict.witness.push_back(WitnessEntry{sigma, perm});
      continue;
    }

    std::vector<std::vector<bool>> compat(k_states, std::vector<bool>(k_states, false));
    std::vector<std::optional<Failure>> deepest(k_states);
    std::vector<std::size_t> deepest_image(k_states, 0);
    for (std::size_t m = 0; m < k_states; ++m)
      for (std::size_t m2 = 0; m2 < k_states; ++m2) {
        auto f = law_failure(sp, t, sigma, cx.sigma_samples, m, m2);
        compat[m][m2] = !f;
        if (f && (!deepest[m] || f->condition > deepest[m]->condition)) {
          deepest[m] = f;
          deepest_image[m] = m2;
        }
      }
    if (search(cx, compat, true, perm)) {
      verdict.witness.push_back(WitnessEntry{sigma, perm});
      continue;
    }

    verdict.symmetric = false;
    for (std::size_t m = 0; m < k_states; ++m) {
      bool any = std::find(compat[m].begin(), compat[m].end(), true) != compat[m].end();
      if (any) continue;
      Failure f = *deepest[m];
      perm.assign(k_states, kUnassigned);
      perm[m] = deepest_image[m];
      complete(perm, compat);
      verdict.counterexample = make_counterexample(
          sp, sigma, f, perm, fmt::format("no memory state matches the laws of state {}", sp.states[m].to_string()));
      return verdict;
    }
    if (search(cx, compat, false, perm)) {
      auto f = update_failure(cx, perm);
      verdict.counterexample =
          make_counterexample(sp, sigma, *f, perm, "every law-preserving relabeling breaks the memory update");
      return verdict;
    }
    perm.assign(k_states, kUnassigned);
    complete(perm, compat);
    for (std::size_t m = 0; m < k_states; ++m) {
      if (compat[m][perm[m]]) continue;
      auto f = law_failure(sp, t, sigma, cx.sigma_samples, m, perm[m]);
      verdict.counterexample =
          make_counterexample(sp, sigma, *f, perm, "no bijection preserves the laws of every state");
      return verdict;
    }
    throw InvariantViolation("symmetry search failed without a counterexample");
  } while (next_permutation(sigma));
  return verdict;
}

// ---------------------------------------------------------------- re-checks

namespace {

/// Direct evaluation of one condition at one instance. True iff it holds.
bool condition_holds(const AuditSubject& subject, const std::map<MemoryState, MemoryState>& sigma_m,
                     const Permutation& sigma, int condition, const MemoryState& m, double w, const SampleVector& s,
                     std::span<const QueueView> q, ServerId d) {
  const auto& oracle = *subject.oracle;
  const MemoryState& m2 = sigma_m.at(m);
  if (condition == 1) return same_law(permute_law(sigma, oracle.sample_dist(m, w)), oracle.sample_dist(m2, w));
  SampleVector ps = lbsim::apply(sigma, s);
  if (condition == 2)
    return same_law(permute_law(sigma, oracle.dispatch_dist(m, w, s, q)), oracle.dispatch_dist(m2, w, ps, q));
  MemoryState lhs = subject.policy->update_after_dispatch(m, w, s, q, d);
  auto it = sigma_m.find(lhs);
  if (it == sigma_m.end()) return false;
  return it->second == subject.policy->update_after_dispatch(m2, w, ps, q, sigma[d - 1]);
}

std::optional<std::map<MemoryState, MemoryState>> relabel_map(const std::vector<MemoryState>& states,
                                                              const std::vector<MemoryState>& images) {
  if (states.size() != images.size()) return std::nullopt;
  std::map<MemoryState, MemoryState> out;
  std::set<MemoryState> seen;
  std::set<MemoryState> domain(states.begin(), states.end());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!domain.contains(images[i]) || !seen.insert(images[i]).second) return std::nullopt;
    out.emplace(states[i], images[i]);
  }
  return out;
}

}  // namespace

bool verify_witness(const AuditSubject& subject, const AuditVerdict& verdict) {
  if (!verdict.symmetric) return false;
  AuditSpace sp = build_space(subject);
  std::size_t expected = 1;
  for (std::size_t i = 2; i <= sp.n; ++i) expected *= i;
  if (verdict.witness.size() != expected) return false;
  std::set<Permutation> covered;
  for (const auto& entry : verdict.witness) {
    if (entry.sigma.size() != sp.n || !covered.insert(entry.sigma).second) return false;
    std::vector<MemoryState> images;
    for (std::size_t idx : entry.sigma_m) {
      if (idx >= verdict.states.size()) return false;
      images.push_back(verdict.states[idx]);
    }
    auto map = relabel_map(verdict.states, images);
    if (!map) return false;
    for (const auto& m : verdict.states)
      for (double w : sp.sizes) {
        if (!condition_holds(subject, *map, entry.sigma, 1, m, w, {}, {}, kNoServer)) return false;
        for (const auto& s : sp.samples)
          for (std::size_t qi = 0; qi < sp.combos[s.size()].size(); ++qi) {
            auto views = sp.views(s.size(), qi);
            if (!condition_holds(subject, *map, entry.sigma, 2, m, w, s, views, kNoServer)) return false;
            for (ServerId d = 1; d <= sp.n; ++d)
              if (!condition_holds(subject, *map, entry.sigma, 3, m, w, s, views, d)) return false;
          }
      }
  }
  return true;
}

bool recheck_counterexample(const AuditSubject& subject, const Counterexample& cex) {
  auto states = audit_states(subject);
  auto map = relabel_map(states, cex.sigma_m);
  if (!map || !map->contains(cex.memory)) return false;
  if (cex.sigma.size() != subject.policy->servers()) return false;
  if (cex.queues.size() != cex.sampled.size()) return false;
  std::vector<ServerQueue> queues;
  for (const auto& q : cex.queues) queues.push_back(ServerQueue::from_workloads(q, 0.0));
  std::vector<QueueView> views;
  for (const auto& q : queues) views.emplace_back(q, 0.0);
  if (cex.condition == 3 && (cex.destination < 1 || cex.destination > cex.sigma.size())) return false;
  return !condition_holds(subject, *map, cex.sigma, cex.condition, cex.memory, cex.size, cex.sampled, views,
                          cex.destination);
}

// ---------------------------------------------------------------- distinguished sets

namespace {

DistinguishedSet group_outside(std::size_t n, const std::map<ServerId, Weight>& probs, const SampleVector& s) {
  DistinguishedSet out;
  for (ServerId j = 1; j <= n; ++j) {
    if (s.contains(j)) continue;
    auto it = probs.find(j);
    Weight p = it == probs.end() ? Weight() : it->second;
    auto cls = std::find_if(out.classes.begin(), out.classes.end(), [&](const auto& c) { return same(c.first, p); });
    if (cls == out.classes.end())
      out.classes.push_back({p, {j}});
    else
      cls->second.push_back(j);
  }
  std::stable_sort(out.classes.begin(), out.classes.end(),
                   [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
  if (out.classes.size() >= 2 && out.classes[0].second.size() == out.classes[1].second.size()) {
    out.tie = true;
    return out;
  }
  for (std::size_t c = 1; c < out.classes.size(); ++c)
    out.servers.insert(out.servers.end(), out.classes[c].second.begin(), out.classes[c].second.end());
  std::sort(out.servers.begin(), out.servers.end());
  return out;
}

}  // namespace

DistinguishedSet distinguished_sample_set(const DistributionOracle& oracle, std::size_t n, const MemoryState& m,
                                          double w, const SampleVector& s, std::size_t ell) {
  auto law = oracle.sample_dist(m, w);
  check_law(law, "sample law");
  const std::size_t k = s.size();
  if (ell <= k || ell > n)
    throw UndefinedConditional(fmt::format("no next index: sample length {} with prefix length {}", ell, k));
  std::map<ServerId, Weight> mass;
  Weight total;
  for (const auto& [v, p] : law) {
    if (v.size() != ell || p.is_zero()) continue;
    if (!std::equal(s.begin(), s.end(), v.begin())) continue;
    mass[v[k]] += p;
    total += p;
  }
  if (total.is_zero())
    throw UndefinedConditional(
        fmt::format("P(|S| = {}, S starts with {}) = 0 at memory {}", ell, s.to_string(), m.to_string()));
  for (auto& [j, p] : mass) p = p / total;
  return group_outside(n, mass, s);
}

DistinguishedSet distinguished_dispatch_set(const DistributionOracle& oracle, std::size_t n, const MemoryState& m,
                                            double w, const SampleVector& s, std::span<const QueueView> q) {
  auto law = oracle.dispatch_dist(m, w, s, q);
  check_law(law, "dispatch law");
  return group_outside(n, law, s);
}

bool is_minimal_uniformizing(std::size_t n, const std::map<ServerId, Weight>& probs, const SampleVector& s,
                             const std::vector<ServerId>& r) {
  std::vector<ServerId> outside;
  for (ServerId j = 1; j <= n; ++j)
    if (!s.contains(j)) outside.push_back(j);
  auto prob = [&](ServerId j) {
    auto it = probs.find(j);
    return it == probs.end() ? Weight() : it->second;
  };
  auto constant_without = [&](auto excluded) {
    std::optional<Weight> first;
    for (std::size_t i = 0; i < outside.size(); ++i) {
      if (excluded(i)) continue;
      Weight p = prob(outside[i]);
      if (!first)
        first = p;
      else if (!same(*first, p))
        return false;
    }
    return true;
  };
  auto in_r = [&](std::size_t i) { return std::find(r.begin(), r.end(), outside[i]) != r.end(); };
  if (!constant_without(in_r)) return false;
  if (outside.size() > 20) throw ConfigError("subset check limited to 20 servers");
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << outside.size()); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) >= r.size()) continue;
    if (constant_without([&](std::size_t i) { return (mask >> i) & 1u; })) return false;
  }
  return true;
}

// ---------------------------------------------------------------- binomial scan

BinomialScan binomial_bound_scan(unsigned a, unsigned c, std::size_t n_lo, std::size_t n_hi) {
  using boost::multiprecision::cpp_int;
  if (a < 1 || c < 1) throw ConfigError("binomial scan needs a, c >= 1");
  if (n_lo <= a || n_hi < n_lo) throw ConfigError("binomial scan needs a < n_lo <= n_hi");
  BinomialScan scan;
  scan.a = a;
  scan.c = c;
  for (std::size_t n = n_lo; n <= n_hi; ++n) {
    BinomialRow row;
    row.n = n;
    const std::size_t top = n - a;
    cpp_int limit = boost::multiprecision::pow(cpp_int(n), c);
    cpp_int binom = 1;
    row.contained = true;
    for (std::size_t b = 0; b <= top; ++b) {
      if (b > 0) binom = binom * (top - b + 1) / b;
      if (binom > limit) continue;
      row.feasible.push_back(b);
      bool low = b <= c;
      bool high = b + a + c >= n;
      if (!low && !high) row.contained = false;
    }
    scan.rows.push_back(std::move(row));
  }
  std::optional<std::size_t> threshold = n_lo;
  for (const auto& row : scan.rows)
    if (!row.contained) threshold = row.n + 1;
  if (threshold && *threshold > n_hi) threshold.reset();
  scan.threshold = threshold;
  return scan;
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const DistinguishedSet& d) {
  nlohmann::json j;
  j["tie"] = d.tie;
  if (d.tie)
    j["set"] = nullptr;
  else
    j["set"] = d.servers;
  auto& classes = j["classes"] = nlohmann::json::array();
  for (const auto& [p, ids] : d.classes) classes.push_back({{"probability", p.to_string()}, {"servers", ids}});
  return j;
}

nlohmann::json to_json(const AuditVerdict& v) {
  nlohmann::json j;
  j["policy"] = v.policy;
  j["servers"] = v.servers;
  j["verdict"] = v.symmetric ? "SYMMETRIC" : "NOT SYMMETRIC";
  j["permutations_checked"] = v.permutations_checked;
  auto& states = j["states"] = nlohmann::json::array();
  for (const auto& m : v.states) states.push_back(m.to_string());
  if (v.symmetric) {
    auto& w = j["witness"] = nlohmann::json::array();
    for (const auto& e : v.witness) {
      nlohmann::json row;
      row["sigma"] = e.sigma;
      auto& img = row["sigma_m"] = nlohmann::json::array();
      for (std::size_t idx : e.sigma_m) img.push_back(v.states[idx].to_string());
      w.push_back(std::move(row));
    }
  }
  if (v.counterexample) {
    const auto& c = *v.counterexample;
    nlohmann::json cj;
    cj["sigma"] = c.sigma;
    cj["condition"] = c.condition;
    cj["memory"] = c.memory.to_string();
    cj["size"] = c.size;
    cj["sampled"] = std::vector<ServerId>(c.sampled.begin(), c.sampled.end());
    cj["queues"] = c.queues;
    if (c.condition == 3) cj["destination"] = c.destination;
    auto& img = cj["sigma_m"] = nlohmann::json::array();
    for (const auto& m : c.sigma_m) img.push_back(m.to_string());
    cj["detail"] = c.detail;
    cj["sigma_text"] = permutation_string(c.sigma);
    j["counterexample"] = std::move(cj);
  }
  return j;
}

nlohmann::json to_json(const BinomialScan& s) {
  nlohmann::json j;
  j["a"] = s.a;
  j["c"] = s.c;
  if (s.threshold)
    j["threshold"] = *s.threshold;
  else
    j["threshold"] = nullptr;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : s.rows) rows.push_back({{"n", r.n}, {"feasible", r.feasible}, {"contained", r.contained}});
  return j;
}

nlohmann::json audit_report(const AuditSubject& subject, const AuditVerdict& verdict) {
  nlohmann::json j = to_json(verdict);
  const std::size_t n = subject.policy->servers();
  auto& sets = j["distinguished"] = nlohmann::json::array();
  for (const auto& m : verdict.states)
    for (double w : subject.sizes) {
      nlohmann::json row;
      row["memory"] = m.to_string();
      row["size"] = w;
      row["dispatch"] = to_json(distinguished_dispatch_set(*subject.oracle, n, m, w, {}, {}));
      auto& sample = row["sample"] = nlohmann::json::object();
      for (std::size_t ell = 1; ell <= n; ++ell) {
        try {
          sample[std::to_string(ell)] = to_json(distinguished_sample_set(*subject.oracle, n, m, w, {}, ell));
        } catch (const UndefinedConditional&) {
        }
      }
      sets.push_back(std::move(row));
    }
  return j;
}

}  // namespace lbsim
