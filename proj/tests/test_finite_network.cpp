#include <doctest.h>

#include <cmath>

#include "swapnet/error.hpp"
#include "swapnet/finite_network.hpp"
#include "swapnet/metrics.hpp"

using namespace swapnet;

namespace {

Model single_node_model(double lambda, double mu) {
  Model m{Graph::build({{"v0"}, {}}), {"a"}, {}, {}, {}, ClassTransitionTable::identity()};
  if (lambda > 0.0) m.arrivals.add(0, 0, 0, lambda);
  m.set_uniform_law(ServiceLaw::exponential(mu));
  m.disciplines.assign(1, Discipline::fifo());
  return m;
}

/// 4-cycle where every node sends its customers to the opposite corner.
Model ring4_model() {
  GraphSpec spec{{"v0", "v1", "v2", "v3"},
                 {{"v0", "v1", 0.4}, {"v1", "v2", 0.4}, {"v2", "v3", 0.4}, {"v3", "v0", 0.4}}};
  Model m{Graph::build(spec), {"a"}, {}, {}, {}, ClassTransitionTable::identity()};
  for (NodeId v = 0; v < 4; ++v) m.arrivals.add(0, v, (v + 2) % 4, 0.6);
  m.set_uniform_law(ServiceLaw::erlang(2, 4.0));
  m.disciplines.assign(4, Discipline::fifo());
  return m;
}

}  // namespace

TEST_CASE("init_network") {
  const auto m = path3_model();
  auto s = init_network(m, 10, InitialLaw::empty(3), 1);
  CHECK(s.clock() == 0.0);
  CHECK(s.customers_in_system() == 0);
  for (NodeId v = 0; v < 3; ++v)
    for (std::size_t k = 0; k < 10; ++k) CHECK(s.queue(v, k).empty());

  InitialLaw init = InitialLaw::empty(3);
  init.set(0, {{{}, 0.3}, {{{0, 2}}, 0.4}, {{{0, 2}, {0, 2}}, 0.3}});
  auto a = init_network(m, 50, init, 7);
  auto b = init_network(m, 50, init, 7);
  for (std::size_t k = 0; k < 50; ++k) CHECK(a.queue(0, k) == b.queue(0, k));

  const auto one = single_node_model(1.0, 2.0);
  auto tiny = init_network(one, 1, InitialLaw::empty(1), 3);
  CHECK(tiny.copies() == 1);
  CHECK(tiny.queue(0, 0).empty());
  CHECK_THROWS_AS(init_network(m, 0, InitialLaw::empty(3), 1), Error);
}

TEST_CASE("next_event on a null system") {
  auto m = path3_model();
  m.arrivals = ArrivalTable{};
  m.graph = Graph::path(3, 0.0);
  auto s = init_network(m, 5, InitialLaw::empty(3), 1);
  CHECK_FALSE(next_event(s).has_value());
  auto traj = run(s, 10.0, std::vector<double>{5.0, 10.0});
  CHECK(traj.snapshots.size() == 3);
  CHECK(s.clock() == 10.0);
}

TEST_CASE("external arrivals form a Poisson stream") {
  const auto m = single_node_model(1.0, 2.0);
  auto s = init_network(m, 1, InitialLaw::empty(1), 42);
  std::vector<Event> trace;
  RunOptions opts;
  opts.trace = &trace;
  run(s, 20000.0, {}, opts);
  std::vector<double> gaps;
  double last = 0.0;
  for (const auto& e : trace) {
    if (e.kind != EventKind::Arrival) continue;
    gaps.push_back(e.time - last);
    last = e.time;
  }
  REQUIRE(gaps.size() > 10000);
  CHECK(mean(gaps) == doctest::Approx(1.0).epsilon(0.03));
  const double ks = ks_statistic(gaps, [](double t) { return 1.0 - std::exp(-t); });
  CHECK(ks < 1.63 / std::sqrt(static_cast<double>(gaps.size())));
}

TEST_CASE("per-server swap rate does not depend on N") {
  const auto m = path3_model();
  for (std::size_t n : {10u, 100u}) {
    auto s = init_network(m, n, InitialLaw::empty(3), 5 + n);
    std::vector<Event> trace;
    RunOptions opts;
    opts.trace = &trace;
    const double horizon = 400.0;
    run(s, horizon, {}, opts);
    std::vector<double> touching(3, 0.0);
    for (const auto& e : trace) {
      if (e.kind != EventKind::Swap) continue;
      touching[e.node] += 1;
      touching[e.other_node] += 1;
    }
    for (NodeId v = 0; v < 3; ++v) {
      const double expected = m.graph.total_swap_rate(v) * horizon * static_cast<double>(n);
      const double rate = touching[v] / (horizon * static_cast<double>(n));
      CHECK(std::abs(touching[v] - expected) < 3.0 * std::sqrt(expected));
      CHECK(rate == doctest::Approx(m.graph.total_swap_rate(v)).epsilon(0.1));
    }
  }
}

TEST_CASE("apply_event semantics") {
  auto m = path3_model();
  NetworkState s(m, 2, 9);
  QueueState qa{{{0, 2, 0.0, std::nullopt}, {0, 2, 0.0, std::nullopt}}};
  QueueState qb{{{0, 1, 0.0, std::nullopt}}};
  s.set_queue(0, 0, qa);
  s.set_queue(1, 1, qb);
  Event swap{EventKind::Swap, 0.0, 0, 0, 1, 1, 0};
  apply_event(s, swap);
  CHECK(s.queue(0, 0).word() == qb.word());
  CHECK(s.queue(1, 1).word() == qa.word());
  CHECK(s.customers_in_system() == 3);

  Event bogus{EventKind::Swap, 0.0, 0, 0, 2, 0, 0};
  CHECK_THROWS_AS(apply_event(s, bogus), Error);
  Event early{EventKind::Arrival, -1.0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(apply_event(s, early), Error);
}

TEST_CASE("a completion two hops from the destination moves to the middle node") {
  auto m = path3_model();
  m.arrivals = ArrivalTable{};
  m.graph = Graph::path(3, 0.0);
  NetworkState s(m, 3, 4);
  s.set_queue(0, 0, QueueState{{{0, 2, 0.0, std::nullopt}}});
  auto e = next_event(s);
  REQUIRE(e.has_value());
  REQUIRE(e->kind == EventKind::Completion);
  apply_event(s, *e);
  CHECK(s.queue(0, 0).empty());
  std::size_t found = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    auto q = s.queue(1, k);
    if (!q.empty()) {
      ++found;
      CHECK(q.customers[0].dest == 2);
      CHECK(q.customers[0].age == 0.0);
    }
  }
  CHECK(found == 1);
  CHECK(s.counters().transits == 1);
  CHECK(s.customers_in_system() == 1);
}

TEST_CASE("customer conservation at every event") {
  const auto m = ring4_model();
  auto s = init_network(m, 8, InitialLaw::empty(4), 77);
  std::int64_t last = 0;
  for (int i = 0; i < 20000; ++i) {
    auto e = next_event(s);
    REQUIRE(e.has_value());
    apply_event(s, *e);
    const auto& c = s.counters();
    CHECK(s.entries() - c.exits == s.customers_in_system());
    std::uint64_t counted = 0;
    for (NodeId v = 0; v < 4; ++v)
      for (std::size_t k = 0; k < 8; ++k) counted += s.queue(v, k).size();
    CHECK(counted == s.customers_in_system());
    const auto now = static_cast<std::int64_t>(s.customers_in_system());
    if (e->kind == EventKind::Arrival) CHECK(now - last == 1);
    if (e->kind == EventKind::Swap) CHECK(now == last);
    if (e->kind == EventKind::Completion) CHECK((now - last == 0 || now - last == -1));
    last = now;
  }
}

TEST_CASE("run: horizon zero and pure death process") {
  auto m = path3_model();
  auto s = init_network(m, 4, InitialLaw::empty(3), 1);
  auto traj = run(s, 0.0, {});
  CHECK(traj.snapshots.size() == 1);
  CHECK(traj.snapshots[0].time == 0.0);

  m.arrivals = ArrivalTable{};
  m.graph = Graph::path(3, 0.0);
  InitialLaw init = InitialLaw::empty(3);
  for (NodeId v = 0; v < 3; ++v) init.set(v, {{{{0, 2}, {0, 0}, {0, 2}}, 1.0}});
  auto drain = init_network(m, 5, init, 3);
  std::vector<Event> trace;
  RunOptions opts;
  opts.trace = &trace;
  std::uint64_t prev = drain.customers_in_system();
  NetworkState copy = drain;
  run(drain, 50.0, {}, opts);
  for (const auto& e : trace) {
    apply_event(copy, e);
    CHECK(copy.customers_in_system() <= prev);
    prev = copy.customers_in_system();
  }
  CHECK(drain.customers_in_system() == 0);
}

TEST_CASE("M/M/1 occupancy at the entry node is geometric") {
  const auto m = mm1_model(1.0, 2.0, 0.0);
  auto s = init_network(m, 1, InitialLaw::empty(2), 2024);
  s.track_occupancy(10);
  run(s, 20000.0, {});
  const auto occ = s.occupancy(0);
  for (std::size_t k = 0; k <= 5; ++k) CHECK(std::abs(occ[k] - 0.5 * std::pow(0.5, k)) < 0.02);
}

TEST_CASE("empirical measures") {
  const auto m = path3_model();
  auto s = init_network(m, 6, InitialLaw::empty(3), 1);
  auto em = empirical_measure(s, 0);
  auto marg = em.marginal({1, 8});
  CHECK(marg.probs().size() == 1);
  CHECK(marg.at(Descriptor{0, {}}) == doctest::Approx(1.0));

  NetworkState two(m, 2, 1);
  two.set_queue(1, 1, QueueState::from_word({{0, 2}, {0, 2}, {0, 2}}));
  auto hist = empirical_measure(two, 1).marginal({0, 8}).length_histogram();
  CHECK(hist[0] == doctest::Approx(0.5));
  CHECK(hist[3] == doctest::Approx(0.5));
  NetworkState swapped(m, 2, 1);
  swapped.set_queue(1, 0, QueueState::from_word({{0, 2}, {0, 2}, {0, 2}}));
  CHECK(tv_distance(empirical_measure(two, 1).marginal({2, 8}), empirical_measure(swapped, 1).marginal({2, 8})) ==
        0.0);
}

TEST_CASE("identical configuration and seed give an identical event trace") {
  const auto m = ring4_model();
  std::vector<Event> a;
  std::vector<Event> b;
  for (auto* trace : {&a, &b}) {
    auto s = init_network(m, 20, InitialLaw::empty(4), 31337);
    RunOptions opts;
    opts.trace = trace;
    run(s, 30.0, {}, opts);
  }
  REQUIRE(a.size() > 1000);
  CHECK(a == b);
}

TEST_CASE("event budget signals runaway runs") {
  const auto m = ring4_model();
  auto s = init_network(m, 20, InitialLaw::empty(4), 1);
  RunOptions opts;
  opts.event_budget = 100;
  try {
    run(s, 1000.0, {}, opts);
    FAIL("expected EventBudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EventBudgetExceeded);
  }
}

TEST_CASE("permuting copies leaves the law unchanged") {
  const auto m = path3_model();
  // Arm A puts a 3-customer queue at copy 0 of v0, arm B at copy 3.
  std::vector<double> arm_a;
  std::vector<double> arm_b;
  for (int rep = 0; rep < 10000; ++rep) {
    for (int arm = 0; arm < 2; ++arm) {
      NetworkState s(m, 4, Rng::derive(555, rep, arm).raw());
      s.set_queue(0, arm == 0 ? 0 : 3, QueueState::from_word({{0, 2}, {0, 2}, {0, 2}}));
      run(s, 1.0, {});
      double total = 0.0;
      for (std::size_t k = 0; k < 4; ++k) total += static_cast<double>(s.queue(1, k).size());
      (arm == 0 ? arm_a : arm_b).push_back(total);
    }
  }
  CHECK(ks_two_sample(arm_a, arm_b) < 1.63 * std::sqrt(2.0 / 10000.0));
  const double se = std::sqrt((stddev(arm_a) * stddev(arm_a) + stddev(arm_b) * stddev(arm_b)) / 10000.0);
  CHECK(std::abs(mean(arm_a) - mean(arm_b)) < 3.0 * se);
}

TEST_CASE("swaps across nodes with different laws redraw the residual requirement") {
  auto m = path3_model();
  m.laws[1] = ServiceLaw::erlang(3, 6.0);
  auto s = init_network(m, 3, InitialLaw::empty(3), 8);
  RunOptions opts;
  opts.keep_full_states = true;
  auto traj = run(s, 50.0, std::vector<double>{10.0, 25.0, 50.0}, opts);
  for (const auto& snap : traj.snapshots)
    for (const auto& measure : snap.measures)
      for (const auto& q : measure.atoms)
        for (const auto& c : q.customers) {
          if (c.requirement) CHECK(*c.requirement >= c.age - 1e-12);
        }
}
