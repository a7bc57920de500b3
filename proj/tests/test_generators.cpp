#include <doctest.h>

#include <cmath>

#include "swapnet/error.hpp"
#include "swapnet/generators.hpp"
#include "swapnet/nlmp_ode.hpp"

using namespace swapnet;

namespace {

const Letter kA{0, 2};

QueueState word_of(std::size_t len) {
  QueueState q;
  for (std::size_t i = 0; i < len; ++i) q.customers.push_back({kA.klass, kA.dest, 0.0, std::nullopt});
  return q;
}

AtomicMeasure all_empty(std::size_t nodes, std::size_t n) {
  return empirical(std::vector<std::vector<QueueState>>(nodes, std::vector<QueueState>(n)));
}

TestFunction empty_indicator_v0() {
  return TestFunction::make_linear("empty_v0", {{0, Observable::length_equals(0)}}, {1.0});
}

TestFunction path3_quadratic() {
  std::vector<Coordinate> c{{0, Observable::capped_length(4)},
                            {1, Observable::capped_length(4)},
                            {2, Observable::length_equals(0)}};
  return TestFunction::make_quadratic("quad", c, {0.3, -0.2, 0.5},
                                      {{1.0, 0.2, 0.0}, {0.2, 0.8, 0.1}, {0.0, 0.1, 0.6}});
}

TestFunction path3_cubic() {
  auto f = path3_quadratic();
  return TestFunction::make_cubic("cubic", f.coords, f.linear, f.quadratic, {0.7, -0.4, 0.9});
}

/// Two-destination PATH3 variant: more letters, Erlang services.
Model rich_model() {
  Model m = path3_model(ServiceLaw::erlang(2, 3.0));
  m.arrivals.add(0, 2, 0, 0.7);
  return m;
}

double max_abs_diff(double a, double b) { return std::abs(a - b); }

}  // namespace

TEST_CASE("eval examples") {
  const auto m = path3_model();
  CHECK(eval(empty_indicator_v0(), m, all_empty(3, 4)) == 1.0);

  std::vector<std::vector<QueueState>> copies(3, std::vector<QueueState>{word_of(0), word_of(1)});
  const auto sq = TestFunction::make_quadratic("sq", {{0, Observable::length_equals(0)}}, {0.0}, {{1.0}});
  CHECK(eval(sq, m, empirical(copies)) == doctest::Approx(0.25));

  auto c = TestFunction::make_linear("c", {}, {});
  c.constant = 2.5;
  CHECK(eval(c, m, all_empty(3, 2)) == 2.5);
  CHECK(eval(c, m, empirical(copies)) == 2.5);
  CHECK(c.degree() == 0);
  CHECK(path3_cubic().degree() == 3);
}

TEST_CASE("observables") {
  const auto m = rich_model();
  QueueState q = word_of(3);
  q.customers[1].dest = 0;
  q.customers[0].age = 0.5;
  CHECK(Observable::capped_length(2)(q, m, 0) == 1.0);
  CHECK(Observable::capped_length(4)(q, m, 0) == 0.75);
  CHECK(Observable::head_letter(1, {0, 0})(q, m, 0) == 1.0);
  CHECK(Observable::head_letter(0, {0, 0})(q, m, 0) == 0.0);
  CHECK(Observable::head_letter(5, {0, 0})(q, m, 0) == 0.0);
  CHECK(Observable::age_ramp(2.0)(q, m, 0) == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK(Observable::age_ramp(2.0).age_derivative(q, m, 0) == doctest::Approx(2.0 * std::exp(-1.0)));
  CHECK(Observable::age_ramp(2.0)(QueueState{}, m, 0) == 0.0);
  CHECK_THROWS_AS(Observable::capped_length(0), Error);
  CHECK_THROWS_AS(TestFunction::make_linear("bad", {{0, Observable::constant()}}, {1.0, 2.0}), Error);
}

TEST_CASE("frechet") {
  const auto m = rich_model();
  Rng rng(7);
  const auto delta = iid_sampler(m, 3, false)(rng, 5);
  const auto h = iid_sampler(m, 3, false)(rng, 4);
  const auto f = path3_cubic();

  SignedAtomicMeasure zero;
  zero.nodes.resize(3);
  CHECK(frechet(f, m, delta, zero) == 0.0);

  // Linear Φ: the derivative is the pairing itself, whatever the base point.
  const auto lin = TestFunction::make_linear("lin", f.coords, {0.3, -0.2, 0.5});
  const double pairing = eval(lin, m, h);
  CHECK(frechet(lin, m, delta, h) == doctest::Approx(pairing).epsilon(1e-14));
  CHECK(frechet(lin, m, all_empty(3, 2), h) == doctest::Approx(pairing).epsilon(1e-14));

  auto shifted = [&](double eps) {
    AtomicMeasure d = delta;
    for (NodeId v = 0; v < 3; ++v)
      for (const auto& a : h.nodes[v]) d.nodes[v].push_back({a.state, eps * a.weight});
    return eval(f, m, d);
  };
  const double base = eval(f, m, delta);
  const double exact = frechet(f, m, delta, h);
  double forward_prev = 0.0;
  double central_prev = 0.0;
  for (double eps : {1e-2, 5e-3, 2.5e-3}) {
    const double forward = std::abs((shifted(eps) - base) / eps - exact);
    const double central = std::abs((shifted(eps) - shifted(-eps)) / (2 * eps) - exact);
    if (forward_prev > 0.0) {
      CHECK(forward_prev / forward == doctest::Approx(2.0).epsilon(0.05));
      CHECK(central_prev / central == doctest::Approx(4.0).epsilon(0.05));
    }
    forward_prev = forward;
    central_prev = central;
  }
}

TEST_CASE("omega_N hand values") {
  const auto m = path3_model();
  const auto f = empty_indicator_v0();
  for (std::size_t n : {1, 2, 7, 50}) {
    CHECK(omega_N(f, m, all_empty(3, n)) == doctest::Approx(-1.0));
    CHECK(omega_N_literal(f, m, all_empty(3, n)) == doctest::Approx(-1.0));
  }
  CHECK(omega_limit(f, m, all_empty(3, 1)) == doctest::Approx(-1.0));

  Model idle = path3_model();
  idle.arrivals = ArrivalTable{};
  idle.graph = Graph::path(3, 0.0);
  CHECK(omega_N(path3_quadratic(), idle, all_empty(3, 5)) == 0.0);
  CHECK(omega_limit(path3_quadratic(), idle, all_empty(3, 5)) == 0.0);
}

TEST_CASE("omega_N swap block") {
  Model m = path3_model();
  Rng rng(3);
  const auto sample = iid_sampler(m, 3, false)(rng, 6);
  // The same measure at every node.
  AtomicMeasure sym = sample;
  sym.nodes[1] = sym.nodes[2] = sym.nodes[0];

  // Swaps move mass between nodes without changing m0 + m1 + m2.
  std::vector<Coordinate> c{
      {0, Observable::capped_length(3)}, {1, Observable::capped_length(3)}, {2, Observable::capped_length(3)}};
  std::vector<std::vector<double>> ones(3, std::vector<double>(3, 1.0));
  const auto total_sq = TestFunction::make_quadratic("sum_sq", c, {0.4, 0.4, 0.4}, ones);
  CHECK(omega_N_blocks(total_sq, m, sample).swaps == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

  // With identical node measures the limiting swap term vanishes for any F.
  const auto prod = TestFunction::make_quadratic("prod", c, {0.0, 0.0, 0.5},
                                                 {{0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}, {0.3, 0.0, 0.0}});
  Model frozen = m;
  frozen.graph = Graph::path(3, 0.0);
  CHECK(omega_limit(prod, m, sym) == doctest::Approx(omega_limit(prod, frozen, sym)).epsilon(1e-14));
  CHECK(omega_N_blocks(prod, m, sample).swaps != 0.0);
}

TEST_CASE("omega_N matches the literal copy sum") {
  const auto m = rich_model();
  std::vector<Coordinate> c{{0, Observable::capped_length(4)},
                            {1, Observable::head_letter(0, {0, 0})},
                            {2, Observable::age_ramp(1.5)},
                            {1, Observable::length_equals(1)}};
  const auto f = TestFunction::make_cubic("mixed", c, {0.2, -0.1, 0.4, 0.3},
                                          {{0.5, 0.1, 0.0, 0.2},
                                           {0.0, 0.3, 0.2, 0.0},
                                           {0.1, 0.0, 0.4, 0.0},
                                           {0.0, 0.0, 0.1, 0.2}},
                                          {0.3, 0.0, -0.2, 0.1});
  const auto sampler = iid_sampler(m, 3, true);
  for (std::size_t n : {1, 3, 8, 20}) {
    Rng rng = Rng::derive(11, n);
    const auto delta = sampler(rng, n);
    const double fast = omega_N(f, m, delta);
    const double literal = omega_N_literal(f, m, delta);
    CHECK(max_abs_diff(fast, literal) <= 1e-12 * std::max(1.0, std::abs(literal)));
  }
}

TEST_CASE("weight checks") {
  const auto m = path3_model();
  auto d = all_empty(3, 4);
  d.nodes[1].pop_back();
  CHECK_THROWS_AS(omega_N(path3_quadratic(), m, d), Error);
  auto bad = all_empty(3, 4);
  bad.nodes[2][0].weight = 0.5;
  CHECK_THROWS_AS(omega_N(path3_quadratic(), m, bad), Error);
  CHECK_THROWS_AS(omega_limit(path3_quadratic(), m, bad), Error);
  try {
    omega_N(path3_quadratic(), m, all_empty(2, 4));
    FAIL("expected WeightMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WeightMismatch);
  }
}

TEST_CASE("linear test functions have no generator gap") {
  const auto m = rich_model();
  const auto q = path3_quadratic();
  const auto lin = TestFunction::make_linear("lin", q.coords, q.linear);
  const auto stats = generator_gap(lin, m, {1, 10, 100, 1000}, iid_sampler(m, 4, false), 20, 5);
  for (const auto& s : stats) CHECK(s.max_gap <= 1e-12);
}

TEST_CASE("transport term against an age shift") {
  const auto m = rich_model();
  std::vector<Coordinate> c{{0, Observable::age_ramp(1.0)}, {2, Observable::age_ramp(0.5)}};
  const auto f = TestFunction::make_quadratic("ages", c, {0.3, 0.6}, {{0.4, 0.2}, {0.0, 0.7}});
  Rng rng(19);
  const auto delta = iid_sampler(m, 3, true)(rng, 10);
  auto aged = [&](double s) {
    AtomicMeasure d = delta;
    for (NodeId v = 0; v < 3; ++v)
      for (auto& a : d.nodes[v])
        if (!a.state.empty())
          a.state.customers[select_in_service(a.state, m.discipline(v), m.graph.distances(), v)].age += s;
    return eval(f, m, d);
  };
  const double s = 1e-5;
  const double fd = (aged(s) - aged(-s)) / (2 * s);
  CHECK(limit_transport(f, m, delta) == doctest::Approx(fd).epsilon(1e-7));
  CHECK(omega_N_blocks(f, m, delta).transport == doctest::Approx(fd).epsilon(1e-7));
  CHECK(omega_N_blocks(path3_quadratic(), m, delta).transport == 0.0);
}

TEST_CASE("limit generator equals the derivative along the ODE drift") {
  const auto m = path3_model();
  NlmpOde ode(m, enumerate_states(m, 5, AlphabetMode::Full));
  const auto f = path3_cubic();
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto mu = ode.zeros();
    for (NodeId v = 0; v < 3; ++v) {
      double total = 0.0;
      for (std::size_t i = 0; i < mu.states(); ++i)
        if (ode.states().length(i) < 5) total += mu.at(v, i) = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
      mu.at(v, 0) += 0.1;
      total += 0.1;
      for (std::size_t i = 0; i < mu.states(); ++i) mu.at(v, i) /= total;
    }
    const auto delta = atoms_of(ode, mu);
    const double lhs = omega_limit(f, m, delta);
    const double rhs = frechet(f, m, delta, atoms_of(ode, ode.drift(mu)));
    CHECK(std::abs(lhs - rhs) <= 1e-9);
  }
}

TEST_CASE("generator gap shrinks like 1/N") {
  const auto m = rich_model();
  const auto stats = generator_gap(path3_quadratic(), m, {10, 20, 40, 80, 1000}, iid_sampler(m, 3, false), 100, 29);
  for (std::size_t i = 1; i + 2 < stats.size(); ++i) {
    const double ratio = stats[i].mean_gap / stats[i + 1].mean_gap;
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.4);
  }
  CHECK(stats.back().mean_gap < stats.front().mean_gap);
  CHECK(stats.front().samples == 100);
  CHECK(stats.front().gaps.size() == 100);
}
