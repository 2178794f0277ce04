#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "lbsim/policies.hpp"
#include "lbsim/rng.hpp"
#include "lbsim/sample_vector.hpp"
#include "lbsim/server_queue.hpp"

using namespace lbsim;

namespace {

std::vector<ServerQueue> queues_with_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<ServerQueue> out;
  for (std::size_t len : lengths) {
    std::vector<double> w(len, 1.0);
    out.push_back(ServerQueue::from_workloads(w));
  }
  return out;
}

std::vector<QueueView> views(const std::vector<ServerQueue>& qs) {
  std::vector<QueueView> out;
  for (const auto& q : qs) out.emplace_back(q, 0.0);
  return out;
}

MemoryState bitmap(std::size_t n, std::initializer_list<ServerId> ids) {
  MemoryState m(static_cast<unsigned>(n));
  for (ServerId i : ids) m.set_bit(i - 1, true);
  return m;
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("capacity is enforced") {
    MemoryState m(3);
    m.set_field(0, 3, 7);
    CHECK(m.fits());
    CHECK(m.to_integer() == 7);
    CHECK_THROWS_AS(m.set_field(0, 4, 8), PolicyContractViolation);
    MemoryState raw(3);
    raw.set_word(0, 8);
    CHECK_FALSE(raw.fits());
    CHECK_THROWS_AS(raw.require_capacity(3, "test"), PolicyContractViolation);
    CHECK_THROWS_AS(MemoryState(3).require_capacity(4, "test"), PolicyContractViolation);
    CHECK_THROWS(MemoryState::from_integer(8, 3));
  }

  TEST_CASE("zero-bit memory has one state") {
    MemoryState m(0);
    CHECK(m.state_count() == 1);
    CHECK(m.fits());
    CHECK(m.to_integer() == 0);
  }

  TEST_CASE("wide bitmaps cross word boundaries") {
    MemoryState m = MemoryState::all_ones(130);
    CHECK(m.count_ones() == 130);
    CHECK(m.fits());
    m.set_bit(64, false);
    CHECK(m.count_ones() == 129);
    CHECK(m.select_one(64) == 65);
    CHECK(m.field(60, 8) == 0xEF);
  }

  TEST_CASE("field round trip over random layouts") {
    Xoshiro256 rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
      unsigned bits = static_cast<unsigned>(rng() % 200) + 1;
      MemoryState m(bits);
      std::size_t off = rng() % bits;
      unsigned width = static_cast<unsigned>(std::min<std::uint64_t>(bits - off, 1 + rng() % 64));
      std::uint64_t mask = width == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
      std::uint64_t v = rng() & mask;
      m.set_field(off, width, v);
      REQUIRE(m.fits());
      CHECK(m.field(off, width) == v);
      CHECK(m.count_ones() == static_cast<std::size_t>(std::popcount(v)));
    }
  }
}

TEST_SUITE("queue") {
  TEST_CASE("fifo at unit rate") {
    ServerQueue q;
    CHECK(q.idle());
    q.push(1.0, 0.0);
    q.push(2.0, 0.3);
    CHECK(q.head_departure() == doctest::Approx(1.0));
    CHECK(q.workload(0.3) == doctest::Approx(2.7));
    CHECK(q.remaining(0, 0.3) == doctest::Approx(0.7));
    q.pop_head();
    CHECK(q.length() == 1);
    CHECK(q.head_departure() == doctest::Approx(3.0));
    q.pop_head();
    CHECK(q.idle());
    CHECK(q.workload(5.0) == 0.0);
  }

  TEST_CASE("nonpositive sizes are rejected") {
    ServerQueue q;
    CHECK_THROWS(q.push(0.0, 0.0));
    CHECK_THROWS(q.push(-1.0, 0.0));
    std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS(ServerQueue::from_workloads(bad));
  }

  TEST_CASE("from_workloads reproduces the remaining work") {
    std::vector<double> w{0.25, 1.5, 2.0};
    auto q = ServerQueue::from_workloads(w, 4.0);
    CHECK(q.workloads(4.0) == w);
    CHECK(q.head_departure() == 4.25);
  }
}

TEST_SUITE("sample vector") {
  TEST_CASE("validity") {
    CHECK(SampleVector{}.valid_for(3));
    CHECK(SampleVector{3, 1}.valid_for(3));
    CHECK_FALSE(SampleVector{1, 1}.valid_for(3));
    CHECK_FALSE(SampleVector{4}.valid_for(3));
    CHECK_FALSE(SampleVector{0}.valid_for(3));
  }

  TEST_CASE("each cell of u maps to one ordered pair, and every pair has one cell") {
    const std::size_t n = 7;
    const std::uint64_t cells = n * (n - 1);
    REQUIRE(ordered_tuple_count(n, 2) == cells);
    CHECK(ordered_tuple(n, 2, 0) == SampleVector{1, 2});
    std::set<SampleVector> seen;
    for (std::uint64_t k = 0; k < cells; ++k) {
      auto mid = Uniform::from_value((static_cast<double>(k) + 0.5) / static_cast<double>(cells));
      auto s = uniform_ordered_tuple(n, 2, mid);
      CHECK(s == ordered_tuple(n, 2, k));
      CHECK(s.valid_for(n));
      seen.insert(s);
    }
    CHECK(seen.size() == cells);
  }

  TEST_CASE("large tuples come from a shuffle and stay duplicate-free") {
    Xoshiro256 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::size_t n = 50 + rng() % 400;
      std::size_t d = 1 + rng() % n;
      auto s = uniform_ordered_tuple(n, d, rng.uniform());
      CHECK(s.size() == d);
      CHECK(s.valid_for(n));
    }
  }
}

TEST_SUITE("hooks") {
  TEST_CASE("random samples nobody and keeps its single memory state") {
    auto p = make_random(10);
    Xoshiro256 rng(1);
    for (int i = 0; i < 100; ++i) {
      MemoryState m = p->initial_memory();
      CHECK(p->select_servers(m, 1.0, rng.uniform()).empty());
      auto d = p->choose_destination(m, 1.0, {}, {}, rng.uniform());
      CHECK(d >= 1);
      CHECK(d <= 10);
      CHECK(p->update_after_dispatch(m, 1.0, {}, {}, d) == m);
    }
  }

  TEST_CASE("sq queries every server once") {
    auto p = make_sq(6);
    Xoshiro256 rng(2);
    for (int i = 0; i < 100; ++i) {
      auto s = p->select_servers(MemoryState(0), 1.0, rng.uniform());
      CHECK(s.size() == 6);
      CHECK(s.valid_for(6));
    }
  }

  TEST_CASE("sq(2) joins the shorter sampled queue") {
    auto p = make_sq_d(10, 2);
    SampleVector s{3, 7};
    auto qs = queues_with_lengths({3, 1});
    auto q = views(qs);
    CHECK(p->choose_destination(MemoryState(0), 1.0, s, q, Uniform::from_value(0.3)) == 7);
  }

  TEST_CASE("sq(2) breaks ties by v") {
    auto p = make_sq_d(10, 2);
    SampleVector s{3, 7};
    auto qs = queues_with_lengths({2, 2});
    auto q = views(qs);
    CHECK(p->choose_destination(MemoryState(0), 1.0, s, q, Uniform::from_value(0.1)) == 3);
    CHECK(p->choose_destination(MemoryState(0), 1.0, s, q, Uniform::from_value(0.49)) == 3);
    CHECK(p->choose_destination(MemoryState(0), 1.0, s, q, Uniform::from_value(0.5)) == 7);
    CHECK(p->choose_destination(MemoryState(0), 1.0, s, q, Uniform::from_value(0.99)) == 7);
  }

  TEST_CASE("jiq dispatches into the idle set and forgets the destination") {
    auto p = make_jiq(8);
    MemoryState m = bitmap(8, {4});
    CHECK(p->select_servers(m, 1.0, Uniform::from_value(0.7)).empty());
    for (double v : {0.0, 0.3, 0.99}) CHECK(p->choose_destination(m, 1.0, {}, {}, Uniform::from_value(v)) == 4);
    CHECK(p->update_after_dispatch(m, 1.0, {}, {}, 4) == bitmap(8, {}));
  }

  TEST_CASE("jiq with an empty idle set falls back to uniform") {
    auto p = make_jiq(8);
    std::set<ServerId> hit;
    for (int k = 0; k < 8; ++k)
      hit.insert(p->choose_destination(bitmap(8, {}), 1.0, {}, {}, Uniform::from_value((k + 0.5) / 8.0)));
    CHECK(hit.size() == 8);
  }

  TEST_CASE("jiq signals exactly when the server empties") {
    auto p = make_jiq(8);
    auto empty = queues_with_lengths({0});
    auto one = queues_with_lengths({1});
    CHECK(p->signals_departure(QueueView(empty[0], 0.0), Uniform::from_value(0.5)));
    CHECK_FALSE(p->signals_departure(QueueView(one[0], 0.0), Uniform::from_value(0.5)));
    CHECK(p->absorb_departure(bitmap(8, {2}), 5, QueueView(empty[0], 0.0)) == bitmap(8, {2, 5}));
    CHECK(p->spontaneous_rate() == 0.0);
    auto all = queues_with_lengths(std::vector<std::size_t>(8, 0));
    CHECK(p->spontaneous_sender(SystemView(all, 0.0), Uniform::from_value(0.5)) == kNoServer);
  }

  TEST_CASE("sq(d) never signals") {
    auto p = make_sq_d(8, 2);
    auto empty = queues_with_lengths({0});
    CHECK_FALSE(p->signals_departure(QueueView(empty[0], 0.0), Uniform::from_value(0.5)));
  }

  TEST_CASE("idle-ping: x picks a server, which answers only when idle") {
    auto p = make_idle_ping(4, 1.0);
    auto qs = queues_with_lengths({1, 0, 2, 0});
    SystemView sys(qs, 0.0);
    CHECK(p->spontaneous_sender(sys, Uniform::from_value(0.1)) == kNoServer);
    CHECK(p->spontaneous_sender(sys, Uniform::from_value(0.3)) == 2);
    CHECK(p->spontaneous_sender(sys, Uniform::from_value(0.6)) == kNoServer);
    CHECK(p->spontaneous_sender(sys, Uniform::from_value(0.9)) == 4);
    CHECK(p->absorb_spontaneous(bitmap(4, {}), 2, sys[2]) == bitmap(4, {2}));
    auto busy = queues_with_lengths({1, 1, 1, 1});
    for (double x : {0.1, 0.3, 0.6, 0.9})
      CHECK(p->spontaneous_sender(SystemView(busy, 0.0), Uniform::from_value(x)) == kNoServer);
  }

  TEST_CASE("sq(d,b) keeps the b least loaded known servers in order") {
    auto base = make_sq_d_b(10, 3, 2);
    auto p = std::dynamic_pointer_cast<const SqdbPolicy>(base);
    REQUIRE(p);
    MemoryState m = p->encode({{9, 0}, {5, 4}});
    SampleVector s{2, 9, 6};
    auto qs = queues_with_lengths({3, 1, 2});
    auto q = views(qs);
    // Candidates: 2:3, 9:1, 6:2 (fresh), then 5:4 (stored); 9 grows to 2 and keeps its place.
    CHECK(p->choose_destination(m, 1.0, s, q, Uniform::from_value(0.5)) == 9);
    auto next = p->update_after_dispatch(m, 1.0, s, q, 9);
    std::vector<SqdbPolicy::Slot> expect{{9, 2}, {6, 2}};
    CHECK(p->decode(next) == expect);
  }

  TEST_CASE("round robin cycles") {
    auto p = make_round_robin(8);
    CHECK(p->memory_bits() == 3);
    MemoryState m = p->initial_memory();
    std::vector<ServerId> seen;
    for (int k = 0; k < 17; ++k) {
      ServerId d = p->choose_destination(m, 1.0, {}, {}, Uniform::from_value(0.5));
      seen.push_back(d);
      m = p->update_after_dispatch(m, 1.0, {}, {}, d);
      m.require_capacity(3, "rr");
    }
    for (int k = 0; k < 17; ++k) CHECK(seen[k] == static_cast<ServerId>(k % 8 + 1));
  }
}

TEST_SUITE("hook properties") {
  // Every catalog policy at a few sizes, driven by random inputs.
  std::vector<PolicyPtr> catalog(std::size_t n) {
    std::vector<PolicyPtr> out{make_random(n), make_round_robin(n), make_sq(n),      make_sq_d(n, std::min<std::size_t>(2, n)),
                               make_sq_dn(n),  make_ll(n),          make_jiq(n),     make_idle_ping(n, 0.5),
                               make_sq_d_b(n, std::min<std::size_t>(3, n), 1)};
    if (n > 1) out.push_back(make_ll_d(n, 2));
    out.push_back(make_sita(n, SizeSpec{}));
    return out;
  }

  std::vector<ServerQueue> random_queues(std::size_t n, Xoshiro256& rng) {
    std::vector<ServerQueue> qs;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w;
      std::size_t len = rng() % 4;
      for (std::size_t j = 0; j < len; ++j) w.push_back(0.1 + rng.open_unit());
      qs.push_back(ServerQueue::from_workloads(w));
    }
    return qs;
  }

  TEST_CASE("hooks respect memory capacity, sample validity and purity") {
    Xoshiro256 rng(2024);
    for (std::size_t n : {1u, 2u, 5u, 33u, 70u}) {
      for (const auto& p : catalog(n)) {
        CAPTURE(p->name());
        MemoryState m = p->initial_memory();
        m.require_capacity(p->memory_bits(), "initial");
        for (int step = 0; step < 300; ++step) {
          auto qs = random_queues(n, rng);
          double w = 0.05 + 3.0 * rng.open_unit();
          Uniform u = rng.uniform(), v = rng.uniform(), x = rng.uniform(), y = rng.uniform();
          auto s = p->select_servers(m, w, u);
          REQUIRE(s.valid_for(n));
          CHECK(p->select_servers(m, w, u) == s);
          std::vector<QueueView> q;
          for (ServerId id : s) q.emplace_back(qs[id - 1], 0.0);
          ServerId d = p->choose_destination(m, w, s, q, v);
          REQUIRE(d >= 1);
          REQUIRE(d <= n);
          CHECK(p->choose_destination(m, w, s, q, v) == d);
          MemoryState next = p->update_after_dispatch(m, w, s, q, d);
          CHECK(p->update_after_dispatch(m, w, s, q, d) == next);
          next.require_capacity(p->memory_bits(), "f3");
          ServerId i = p->spontaneous_sender(SystemView(qs, 0.0), x);
          if (i != kNoServer) {
            REQUIRE(i <= n);
            next = p->absorb_spontaneous(next, i, QueueView(qs[i - 1], 0.0));
            next.require_capacity(p->memory_bits(), "g2");
          }
          ServerId j = static_cast<ServerId>(rng() % n + 1);
          if (p->signals_departure(QueueView(qs[j - 1], 0.0), y)) {
            next = p->absorb_departure(next, j, QueueView(qs[j - 1], 0.0));
            next.require_capacity(p->memory_bits(), "h2");
          }
          m = next;
        }
      }
    }
  }
}

TEST_SUITE("randomization") {
  TEST_CASE("index is floor(value * count)") {
    for (double x : {0.0, 0.1, 0.25, 0.5, 0.999}) {
      auto u = Uniform::from_value(x);
      CHECK(u.value() == doctest::Approx(x));
      for (std::uint64_t c : {1u, 2u, 3u, 10u, 1000u})
        CHECK(u.index(c) == static_cast<std::uint64_t>(static_cast<long double>(u.value()) * c));
    }
  }

  TEST_CASE("streams are reproducible and distinct") {
    RngStreams a(42), b(42), c(43);
    for (std::size_t s = 0; s < kStreamCount; ++s) CHECK(a[Stream(s)]() == b[Stream(s)]());
    CHECK(RngStreams(42)[Stream::kArrivals]() != c[Stream::kArrivals]());
    std::set<std::uint64_t> firsts;
    RngStreams d(7);
    for (std::size_t s = 0; s < kStreamCount; ++s) firsts.insert(d[Stream(s)]());
    CHECK(firsts.size() == kStreamCount);
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  }
}
