#include "swapnet/generators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "swapnet/error.hpp"

namespace swapnet {

AtomicMeasure empirical(const std::vector<std::vector<QueueState>>& copies) {
  AtomicMeasure d;
  d.nodes.resize(copies.size());
  for (std::size_t v = 0; v < copies.size(); ++v) {
    const double w = 1.0 / static_cast<double>(copies[v].size());
    for (const auto& q : copies[v]) d.nodes[v].push_back({q, w});
  }
  return d;
}

AtomicMeasure atoms_of(const NlmpOde& ode, const NodeVector& x) {
  AtomicMeasure d;
  d.nodes.resize(x.nodes());
  for (NodeId v = 0; v < x.nodes(); ++v)
    for (std::size_t i = 0; i < x.states(); ++i)
      if (x.at(v, i) != 0.0) d.nodes[v].push_back({QueueState::from_word(ode.states().word(i)), x.at(v, i)});
  return d;
}

Observable Observable::length_equals(std::size_t l) {
  Observable o;
  o.kind = Kind::LengthEquals;
  o.length = l;
  return o;
}

Observable Observable::capped_length(std::size_t cap) {
  if (cap == 0) throw Error(ErrorCode::InvalidConfig, "length cap must be positive");
  Observable o;
  o.kind = Kind::CappedLength;
  o.length = cap;
  return o;
}

Observable Observable::head_letter(std::size_t p, Letter a) {
  Observable o;
  o.kind = Kind::HeadLetter;
  o.position = p;
  o.letter = a;
  return o;
}

Observable Observable::age_ramp(double r) {
  Observable o;
  o.kind = Kind::ServiceAgeRamp;
  o.rate = r;
  return o;
}

double Observable::operator()(const QueueState& q, const Model& m, NodeId v) const {
  switch (kind) {
    case Kind::Constant:
      return 1.0;
    case Kind::LengthEquals:
      return q.size() == length ? 1.0 : 0.0;
    case Kind::CappedLength:
      return static_cast<double>(std::min(q.size(), length)) / static_cast<double>(length);
    case Kind::HeadLetter:
      return position < q.size() && q.customers[position].letter() == letter ? 1.0 : 0.0;
    case Kind::ServiceAgeRamp: {
      if (q.empty()) return 0.0;
      const auto& c = q.customers[select_in_service(q, m.discipline(v), m.graph.distances(), v)];
      return 1.0 - std::exp(-rate * c.age);
    }
  }
  return 0.0;
}

double Observable::age_derivative(const QueueState& q, const Model& m, NodeId v) const {
  if (kind != Kind::ServiceAgeRamp || q.empty()) return 0.0;
  const auto& c = q.customers[select_in_service(q, m.discipline(v), m.graph.distances(), v)];
  return rate * std::exp(-rate * c.age);
}

TestFunction TestFunction::make_linear(std::string id, std::vector<Coordinate> coords, std::vector<double> a) {
  return make_cubic(std::move(id), std::move(coords), std::move(a), {}, {});
}

TestFunction TestFunction::make_quadratic(std::string id, std::vector<Coordinate> coords, std::vector<double> a,
                                          std::vector<std::vector<double>> q) {
  return make_cubic(std::move(id), std::move(coords), std::move(a), std::move(q), {});
}

TestFunction TestFunction::make_cubic(std::string id, std::vector<Coordinate> coords, std::vector<double> a,
                                      std::vector<std::vector<double>> q, std::vector<double> c) {
  const std::size_t d = coords.size();
  if (a.empty()) a.assign(d, 0.0);
  if (q.empty()) q.assign(d, std::vector<double>(d, 0.0));
  if (c.empty()) c.assign(d, 0.0);
  bool ok = a.size() == d && q.size() == d && c.size() == d;
  for (const auto& row : q) ok = ok && row.size() == d;
  if (!ok) throw Error(ErrorCode::InvalidConfig, "polynomial coefficients do not match the coordinates");
  TestFunction f;
  f.id = std::move(id);
  f.coords = std::move(coords);
  f.linear = std::move(a);
  f.quadratic = std::move(q);
  f.cubic = std::move(c);
  return f;
}

int TestFunction::degree() const {
  for (double c : cubic)
    if (c != 0.0) return 3;
  for (const auto& row : quadratic)
    for (double x : row)
      if (x != 0.0) return 2;
  for (double x : linear)
    if (x != 0.0) return 1;
  return 0;
}

bool TestFunction::age_dependent() const {
  return std::any_of(coords.begin(), coords.end(), [](const Coordinate& c) { return c.phi.age_dependent(); });
}

double TestFunction::outer(const std::vector<double>& m) const {
  double s = constant;
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += linear[i] * m[i] + cubic[i] * m[i] * m[i] * m[i];
    for (std::size_t j = 0; j < m.size(); ++j) s += quadratic[i][j] * m[i] * m[j];
  }
  return s;
}

std::vector<double> TestFunction::gradient(const std::vector<double>& m) const {
  std::vector<double> g(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    g[i] = linear[i] + 3.0 * cubic[i] * m[i] * m[i];
    for (std::size_t j = 0; j < m.size(); ++j) g[i] += (quadratic[i][j] + quadratic[j][i]) * m[j];
  }
  return g;
}

namespace {

double pairing(const Coordinate& c, const Model& model, const AtomicMeasure& d) {
  double s = 0.0;
  for (const auto& a : d.nodes[c.node]) s += a.weight * c.phi(a.state, model, c.node);
  return s;
}

void check_nodes(const Model& model, const AtomicMeasure& d) {
  if (d.nodes.size() != model.num_nodes())
    throw Error(ErrorCode::WeightMismatch, "measure has " + std::to_string(d.nodes.size()) + " nodes, model has " +
                                               std::to_string(model.num_nodes()));
}

/// Copies per node when every atom carries weight 1/N.
std::size_t copies_of(const Model& model, const AtomicMeasure& d) {
  check_nodes(model, d);
  const std::size_t n = d.nodes.empty() ? 0 : d.nodes[0].size();
  if (n == 0) throw Error(ErrorCode::WeightMismatch, "empirical measure without atoms");
  for (const auto& node : d.nodes) {
    if (node.size() != n) throw Error(ErrorCode::WeightMismatch, "nodes carry different numbers of copies");
    for (const auto& a : node)
      if (std::abs(a.weight - 1.0 / static_cast<double>(n)) > 1e-12)
        throw Error(ErrorCode::WeightMismatch, "atoms of an empirical measure must weigh 1/N");
  }
  return n;
}

void check_probability(const Model& model, const AtomicMeasure& d) {
  check_nodes(model, d);
  for (const auto& node : d.nodes) {
    double s = 0.0;
    for (const auto& a : node) {
      if (a.weight < 0.0) throw Error(ErrorCode::WeightMismatch, "negative atom weight");
      s += a.weight;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorCode::WeightMismatch, "atom weights must sum to one per node");
  }
}

struct StateLess {
  bool operator()(const QueueState& a, const QueueState& b) const {
    return std::lexicographical_compare(a.customers.begin(), a.customers.end(), b.customers.begin(),
                                        b.customers.end(), [](const Customer& x, const Customer& y) {
                                          return std::tie(x.klass, x.dest, x.age) < std::tie(y.klass, y.dest, y.age);
                                        });
  }
};

/// Distinct queue states of one node with their multiplicities.
std::vector<std::pair<QueueState, double>> group(const std::vector<Atom>& atoms) {
  std::map<QueueState, double, StateLess> g;
  for (const auto& a : atoms) g[a.state] += 1.0;
  return {g.begin(), g.end()};
}

QueueState with_arrival(const QueueState& q, ClassId k, NodeId dest) {
  return append_arrival(q, Customer{k, dest, 0.0, std::nullopt});
}

/// Exact increments Φ(m + δ) − Φ(m) for jumps that rewrite one or two copies.
class JumpEvaluator {
 public:
  JumpEvaluator(const TestFunction& f, const Model& m, const AtomicMeasure& d, double inv_n)
      : f_(f), m_(m), inv_n_(inv_n), mean_(means(f, m, d)), base_(f.outer(mean_)), by_node_(m.num_nodes()) {
    for (std::size_t i = 0; i < f.coords.size(); ++i) by_node_[f.coords[i].node].push_back(i);
  }

  /// One copy at v goes from `from` to `to`; optionally a second at w.
  double operator()(NodeId v, const QueueState& from, const QueueState& to, const QueueState* from2 = nullptr,
                    const QueueState* to2 = nullptr, NodeId w = 0) const {
    auto m = mean_;
    for (std::size_t i : by_node_[v])
      m[i] += inv_n_ * (f_.coords[i].phi(to, m_, v) - f_.coords[i].phi(from, m_, v));
    if (from2 != nullptr)
      for (std::size_t i : by_node_[w])
        m[i] += inv_n_ * (f_.coords[i].phi(*to2, m_, w) - f_.coords[i].phi(*from2, m_, w));
    return f_.outer(m) - base_;
  }

  const std::vector<double>& mean() const { return mean_; }

 private:
  const TestFunction& f_;
  const Model& m_;
  double inv_n_;
  std::vector<double> mean_;
  double base_;
  std::vector<std::vector<std::size_t>> by_node_;
};

double transport_term(const TestFunction& f, const Model& model, const AtomicMeasure& d) {
  if (!f.age_dependent()) return 0.0;
  const auto g = f.gradient(means(f, model, d));
  double s = 0.0;
  for (std::size_t i = 0; i < f.coords.size(); ++i) {
    const auto& c = f.coords[i];
    double dm = 0.0;
    for (const auto& a : d.nodes[c.node]) dm += a.weight * c.phi.age_derivative(a.state, model, c.node);
    s += g[i] * dm;
  }
  return s;
}

double service_hazard(const Model& model, const QueueState& q, NodeId v, std::size_t pos) {
  const auto& c = q.customers[pos];
  return hazard_rate(model.law(c.klass, v), c.age);
}

}  // namespace

std::vector<double> means(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  check_nodes(model, delta);
  std::vector<double> m(f.coords.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = pairing(f.coords[i], model, delta);
  return m;
}

double eval(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  return f.outer(means(f, model, delta));
}

double frechet(const TestFunction& f, const Model& model, const AtomicMeasure& delta, const SignedAtomicMeasure& h) {
  check_nodes(model, h);
  const auto g = f.gradient(means(f, model, delta));
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * pairing(f.coords[i], model, h);
  return s;
}

GeneratorBlocks omega_N_blocks(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  const std::size_t n = copies_of(model, delta);
  const double inv_n = 1.0 / static_cast<double>(n);
  const JumpEvaluator jump(f, model, delta, inv_n);
  const auto& graph = model.graph;
  std::vector<std::vector<std::pair<QueueState, double>>> groups(model.num_nodes());
  for (NodeId v = 0; v < model.num_nodes(); ++v) groups[v] = group(delta.nodes[v]);

  GeneratorBlocks b;
  b.transport = transport_term(f, model, delta);
  for (const auto& s : model.arrivals.streams()) {
    if (s.rate == 0.0) continue;
    for (const auto& [q, count] : groups[s.node])
      b.arrivals += s.rate * count * jump(s.node, q, with_arrival(q, s.klass, s.dest));
  }
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    for (const auto& [q, count] : groups[v]) {
      if (q.empty()) continue;
      const std::size_t pos = select_in_service(q, model.discipline(v), graph.distances(), v);
      const double sigma = service_hazard(model, q, v, pos);
      if (sigma == 0.0) continue;
      auto [rest, served] = remove_in_service(q, model.discipline(v), graph.distances(), v);
      if (graph.dist(v, served.dest) <= 1) {
        b.exits += sigma * count * jump(v, q, rest);
        continue;
      }
      const auto targets = graph.routing_candidates(v, served.dest);
      const double e = 1.0 / static_cast<double>(targets.size());
      for (NodeId w : targets) {
        const ClassId k = class_transition(model.transitions, served.klass, v, w);
        for (const auto& [qw, cw] : groups[w]) {
          const QueueState grown = with_arrival(qw, k, served.dest);
          b.transits += sigma * count * e * cw * inv_n * jump(v, q, rest, &qw, &grown, w);
        }
      }
    }
  }
  for (const auto& edge : graph.edges()) {
    if (edge.swap_rate == 0.0) continue;
    for (const auto& [qa, ca] : groups[edge.a])
      for (const auto& [qb, cb] : groups[edge.b])
        b.swaps += edge.swap_rate * inv_n * ca * cb * jump(edge.a, qa, qb, &qb, &qa, edge.b);
  }
  return b;
}

double omega_N(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  return omega_N_blocks(f, model, delta).total();
}

double omega_N_literal(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  const std::size_t n = copies_of(model, delta);
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& graph = model.graph;
  std::vector<std::vector<QueueState>> copies(model.num_nodes());
  for (NodeId v = 0; v < model.num_nodes(); ++v)
    for (const auto& a : delta.nodes[v]) copies[v].push_back(a.state);
  const double base = eval(f, model, delta);
  auto value = [&] { return eval(f, model, empirical(copies)); };

  double total = transport_term(f, model, delta);
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    for (std::size_t k = 0; k < n; ++k) {
      const QueueState q = copies[v][k];
      for (const auto& s : model.arrivals.streams()) {
        if (s.node != v || s.rate == 0.0) continue;
        copies[v][k] = with_arrival(q, s.klass, s.dest);
        total += s.rate * (value() - base);
        copies[v][k] = q;
      }
      if (q.empty()) continue;
      const std::size_t pos = select_in_service(q, model.discipline(v), graph.distances(), v);
      const double sigma = service_hazard(model, q, v, pos);
      auto [rest, served] = remove_in_service(q, model.discipline(v), graph.distances(), v);
      copies[v][k] = rest;
      if (graph.dist(v, served.dest) <= 1) {
        total += sigma * (value() - base);
      } else {
        const auto targets = graph.routing_candidates(v, served.dest);
        for (NodeId w : targets) {
          const ClassId cls = class_transition(model.transitions, served.klass, v, w);
          for (std::size_t k2 = 0; k2 < n; ++k2) {
            const QueueState qw = copies[w][k2];
            copies[w][k2] = with_arrival(qw, cls, served.dest);
            total += sigma * inv_n / static_cast<double>(targets.size()) * (value() - base);
            copies[w][k2] = qw;
          }
        }
      }
      copies[v][k] = q;
    }
  }
  for (const auto& edge : graph.edges()) {
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t k2 = 0; k2 < n; ++k2) {
        std::swap(copies[edge.a][k], copies[edge.b][k2]);
        total += edge.swap_rate * inv_n * (value() - base);
        std::swap(copies[edge.a][k], copies[edge.b][k2]);
      }
  }
  return total;
}

SignedAtomicMeasure limit_direction(const Model& model, const AtomicMeasure& delta) {
  check_nodes(model, delta);
  const auto& graph = model.graph;
  SignedAtomicMeasure g;
  g.nodes.resize(model.num_nodes());
  std::vector<std::map<Letter, double>> transit(model.num_nodes());
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    auto& out = g.nodes[v];
    for (const auto& [q, w] : delta.nodes[v]) {
      for (const auto& s : model.arrivals.streams()) {
        if (s.node != v || s.rate == 0.0) continue;
        out.push_back({with_arrival(q, s.klass, s.dest), s.rate * w});
        out.push_back({q, -s.rate * w});
      }
      if (q.empty()) continue;
      const std::size_t pos = select_in_service(q, model.discipline(v), graph.distances(), v);
      const double sigma = service_hazard(model, q, v, pos);
      auto [rest, served] = remove_in_service(q, model.discipline(v), graph.distances(), v);
      out.push_back({rest, sigma * w});
      out.push_back({q, -sigma * w});
      if (graph.dist(v, served.dest) <= 1) continue;
      const auto targets = graph.routing_candidates(v, served.dest);
      for (NodeId t : targets)
        transit[t][{class_transition(model.transitions, served.klass, v, t), served.dest}] +=
            sigma * w / static_cast<double>(targets.size());
    }
    for (NodeId u : graph.neighbors(v)) {
      const double beta = graph.swap_rate(v, u);
      if (beta == 0.0) continue;
      for (const auto& a : delta.nodes[u]) out.push_back({a.state, beta * a.weight});
      for (const auto& a : delta.nodes[v]) out.push_back({a.state, -beta * a.weight});
    }
  }
  for (NodeId v = 0; v < model.num_nodes(); ++v)
    for (const auto& [letter, rate] : transit[v])
      for (const auto& [q, w] : delta.nodes[v]) {
        g.nodes[v].push_back({with_arrival(q, letter.klass, letter.dest), rate * w});
        g.nodes[v].push_back({q, -rate * w});
      }
  return g;
}

double limit_transport(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  return transport_term(f, model, delta);
}

double omega_limit(const TestFunction& f, const Model& model, const AtomicMeasure& delta) {
  check_probability(model, delta);
  return limit_transport(f, model, delta) + frechet(f, model, delta, limit_direction(model, delta));
}

MeasureSampler iid_sampler(const Model& model, std::size_t max_length, bool with_ages) {
  const auto letters = model.reachable_letters();
  if (letters.empty() && max_length > 0)
    throw Error(ErrorCode::InvalidConfig, "model admits no customers to sample");
  return [&model, letters, max_length, with_ages](Rng& rng, std::size_t n) {
    std::vector<std::vector<QueueState>> copies(model.num_nodes(), std::vector<QueueState>(n));
    for (NodeId v = 0; v < model.num_nodes(); ++v)
      for (auto& q : copies[v]) {
        const std::size_t len = rng.index(max_length + 1);
        for (std::size_t i = 0; i < len; ++i) {
          const Letter l = letters[rng.index(letters.size())];
          q.customers.push_back({l.klass, l.dest, 0.0, std::nullopt});
        }
        if (with_ages && !q.empty())
          q.customers[select_in_service(q, model.discipline(v), model.graph.distances(), v)].age = 2.0 * rng.uniform();
      }
    return empirical(copies);
  };
}

std::vector<GapStats> generator_gap(const TestFunction& f, const Model& model, const std::vector<std::size_t>& n_list,
                                    const MeasureSampler& sampler, std::size_t samples, std::uint64_t seed) {
  std::vector<GapStats> out;
  for (std::size_t n : n_list) {
    GapStats st;
    st.n = n;
    st.samples = samples;
    for (std::size_t s = 0; s < samples; ++s) {
      Rng rng = Rng::derive(seed, n, s);
      const auto delta = sampler(rng, n);
      const double gap = std::abs(omega_N(f, model, delta) - omega_limit(f, model, delta));
      st.gaps.push_back(gap);
      st.mean_gap += gap;
      st.max_gap = std::max(st.max_gap, gap);
    }
    if (samples > 0) st.mean_gap /= static_cast<double>(samples);
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace swapnet
