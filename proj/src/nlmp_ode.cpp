#include "swapnet/nlmp_ode.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>

#include "swapnet/error.hpp"

namespace swapnet {

StateIndex::StateIndex(std::vector<Letter> alphabet, std::size_t max_length, std::size_t dimension_cap)
    : alphabet_(std::move(alphabet)), max_length_(max_length) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  const double a = static_cast<double>(alphabet_.size());
  double total = 0.0;
  double layer = 1.0;
  for (std::size_t l = 0; l <= max_length_; ++l) {
    offsets_.push_back(static_cast<std::size_t>(total));
    total += layer;
    if (total > static_cast<double>(dimension_cap))
      throw Error(ErrorCode::TruncationTooLarge, "state space with " + std::to_string(alphabet_.size()) +
                                                     " letters and length " + std::to_string(max_length_) +
                                                     " exceeds the cap of " + std::to_string(dimension_cap));
    layer *= a;
    if (alphabet_.empty()) break;
  }
  size_ = static_cast<std::size_t>(total);
  offsets_.push_back(size_);
}

std::size_t StateIndex::letter_index(const Letter& l) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), l);
  if (it == alphabet_.end() || *it != l) return npos;
  return static_cast<std::size_t>(it - alphabet_.begin());
}

std::size_t StateIndex::length(std::size_t i) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

std::vector<Letter> StateIndex::word(std::size_t i) const {
  const std::size_t l = length(i);
  std::vector<Letter> w(l);
  std::size_t rest = i - offsets_[l];
  for (std::size_t p = l; p-- > 0;) {
    w[p] = alphabet_[rest % alphabet_.size()];
    rest /= alphabet_.size();
  }
  return w;
}

std::size_t StateIndex::index(std::span<const Letter> word) const {
  if (word.size() > max_length_) return npos;
  std::size_t rest = 0;
  for (const auto& l : word) {
    const std::size_t a = letter_index(l);
    if (a == npos) return npos;
    rest = rest * alphabet_.size() + a;
  }
  return offsets_[word.size()] + rest;
}

std::size_t StateIndex::append(std::size_t i, std::size_t a) const {
  const std::size_t l = length(i);
  if (l >= max_length_) return npos;
  return offsets_[l + 1] + (i - offsets_[l]) * alphabet_.size() + a;
}

StateIndex enumerate_states(const Model& model, std::size_t max_length, AlphabetMode mode, std::size_t dimension_cap,
                            const std::vector<Letter>& extra) {
  if (mode == AlphabetMode::Full) return StateIndex(model.all_letters(), max_length, dimension_cap);
  return StateIndex(model.reachable_letters(extra), max_length, dimension_cap);
}

double NodeVector::mass(NodeId v) const {
  double s = leak(v);
  for (double x : node(v)) s += x;
  return s;
}

NodeVector& NodeVector::operator+=(const NodeVector& o) { return axpy(1.0, o); }

NodeVector& NodeVector::axpy(double a, const NodeVector& o) {
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
  return *this;
}

NodeVector& NodeVector::operator*=(double a) {
  for (double& x : data_) x *= a;
  return *this;
}

double l1_norm(const NodeVector& x) {
  double s = 0.0;
  for (double v : x.raw()) s += std::abs(v);
  return s;
}

double l1_distance(const NodeVector& a, const NodeVector& b) {
  if (a.raw().size() != b.raw().size()) throw Error(ErrorCode::SpaceMismatch, "vectors live on different spaces");
  double s = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) s += std::abs(a.raw()[i] - b.raw()[i]);
  return s;
}

NlmpOde::NlmpOde(const Model& model, StateIndex index) : model_(&model), index_(std::move(index)) {
  const std::size_t n = model.num_nodes();
  const std::size_t letters = index_.alphabet().size();
  rates_.assign(model.num_classes() * n, 0.0);
  for (ClassId k = 0; k < model.num_classes(); ++k)
    for (NodeId v = 0; v < n; ++v) {
      const auto& law = model.law(k, v);
      if (!law.memoryless())
        throw Error(ErrorCode::InvalidConfig, "the deterministic solver needs exponential service laws");
      rates_[k * n + v] = law.hazard(0.0);
    }
  for (NodeId v = 0; v < n; ++v)
    if (!model.discipline(v).word_determined())
      throw Error(ErrorCode::InvalidConfig, "non-preemptive priority depends on ages; use the stochastic solver");

  external_.assign(n, std::vector<double>(letters, 0.0));
  for (const auto& s : model.arrivals.streams()) {
    if (s.rate == 0.0) continue;
    const std::size_t a = index_.letter_index({s.klass, s.dest});
    if (a == StateIndex::npos)
      throw Error(ErrorCode::InvalidConfig, "alphabet misses an externally arriving letter");
    external_[s.node][a] += s.rate;
  }

  served_.assign(n, std::vector<Served>(index_.size()));
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t i = 1; i < index_.size(); ++i) {
      auto w = index_.word(i);
      const auto q = QueueState::from_word(w);
      const std::size_t pos = select_in_service(q, model.discipline(v), model.graph.distances(), v);
      Served s;
      s.letter = index_.letter_index(w[pos]);
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(pos));
      s.removed = index_.index(w);
      served_[v][i] = s;
    }
  }

  routes_.assign(n, {});
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t a = 0; a < letters; ++a) {
      const Letter l = index_.alphabet()[a];
      if (model.graph.dist(v, l.dest) <= 1) continue;
      const double gamma = service_rate(l.klass, v);
      const auto targets = model.graph.routing_candidates(v, l.dest);
      for (NodeId w : targets) {
        const Letter next{class_transition(model.transitions, l.klass, v, w), l.dest};
        const std::size_t b = index_.letter_index(next);
        if (b == StateIndex::npos)
          throw Error(ErrorCode::InvalidConfig, "alphabet is not closed under routing and class transitions");
        routes_[v].push_back({a, w, b, gamma / static_cast<double>(targets.size())});
      }
    }
  }
}

TruncatedMeasure NlmpOde::empty_measure() const {
  auto mu = zeros();
  for (NodeId v = 0; v < mu.nodes(); ++v) mu.at(v, 0) = 1.0;
  return mu;
}

TruncatedMeasure NlmpOde::from_initial_law(const InitialLaw& init) const {
  if (init.num_nodes() != model_->num_nodes())
    throw Error(ErrorCode::InvalidConfig, "initial law has the wrong number of nodes");
  auto mu = zeros();
  for (NodeId v = 0; v < mu.nodes(); ++v) {
    if (init.atoms(v).empty()) {
      mu.at(v, 0) = 1.0;
      continue;
    }
    for (const auto& [word, p] : init.atoms(v)) {
      const std::size_t i = index_.index(word);
      if (i == StateIndex::npos)
        throw Error(ErrorCode::InvalidConfig, "initial word lies outside the truncated state space");
      mu.at(v, i) += p;
    }
  }
  return mu;
}

std::vector<std::vector<double>> NlmpOde::transit_from(const NodeVector& x) const {
  const std::size_t n = model_->num_nodes();
  const std::size_t letters = index_.alphabet().size();
  std::vector<std::vector<double>> tr(n, std::vector<double>(letters, 0.0));
  std::vector<double> in_service(letters);
  for (NodeId v = 0; v < n; ++v) {
    if (routes_[v].empty()) continue;
    std::fill(in_service.begin(), in_service.end(), 0.0);
    for (std::size_t i = 1; i < index_.size(); ++i) in_service[served_[v][i].letter] += x.at(v, i);
    for (const auto& r : routes_[v]) tr[r.target][r.target_letter] += in_service[r.letter] * r.rate;
  }
  return tr;
}

std::vector<std::vector<double>> NlmpOde::transit_rates(const NodeVector& mu) const { return transit_from(mu); }

void NlmpOde::accumulate(const NodeVector& x, const std::vector<std::vector<double>>& in_rates, bool full,
                         NodeVector& out) const {
  const std::size_t n = model_->num_nodes();
  const std::size_t letters = index_.alphabet().size();
  for (NodeId v = 0; v < n; ++v) {
    const auto& in = in_rates[v];
    double total_in = 0.0;
    for (double r : in) total_in += r;
    for (std::size_t i = 0; i < index_.size(); ++i) {
      const double p = x.at(v, i);
      if (p == 0.0) continue;
      if (total_in > 0.0) {
        out.at(v, i) -= p * total_in;
        for (std::size_t a = 0; a < letters; ++a) {
          if (in[a] == 0.0) continue;
          const std::size_t j = index_.append(i, a);
          if (j == StateIndex::npos)
            out.leak(v) += p * in[a];
          else
            out.at(v, j) += p * in[a];
        }
      }
      if (full && i != 0) {
        const Letter l = index_.alphabet()[served_[v][i].letter];
        const double f = p * service_rate(l.klass, v);
        out.at(v, i) -= f;
        out.at(v, served_[v][i].removed) += f;
      }
    }
    if (!full) continue;
    for (NodeId u : model_->graph.neighbors(v)) {
      const double beta = model_->graph.swap_rate(v, u);
      if (beta == 0.0) continue;
      for (std::size_t i = 0; i < index_.size(); ++i) out.at(v, i) += beta * (x.at(u, i) - x.at(v, i));
      out.leak(v) += beta * (x.leak(u) - x.leak(v));
    }
  }
}

NodeVector NlmpOde::drift(const NodeVector& mu) const {
  auto rates = transit_from(mu);
  for (std::size_t v = 0; v < rates.size(); ++v)
    for (std::size_t a = 0; a < rates[v].size(); ++a) rates[v][a] += external_[v][a];
  auto out = zeros();
  accumulate(mu, rates, true, out);
  return out;
}

NodeVector NlmpOde::derivative(const NodeVector& mu, const NodeVector& h) const {
  auto rates = transit_from(mu);
  for (std::size_t v = 0; v < rates.size(); ++v)
    for (std::size_t a = 0; a < rates[v].size(); ++a) rates[v][a] += external_[v][a];
  auto out = zeros();
  accumulate(h, rates, true, out);
  accumulate(mu, transit_from(h), false, out);
  return out;
}

namespace {

/// Segment end points: snapshot times inside (0, horizon) and the horizon.
std::vector<double> schedule(double horizon, const std::vector<double>& snaps) {
  std::set<double> ts;
  for (double t : snaps)
    if (t > 0.0 && t < horizon) ts.insert(t);
  ts.insert(horizon);
  return {ts.begin(), ts.end()};
}

void check_run(double horizon, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidConfig, "time step must be positive");
  if (!(horizon >= 0.0)) throw Error(ErrorCode::InvalidConfig, "horizon must be non-negative");
}

template <typename Step>
void march(double horizon, const OdeOptions& opts, Step&& step, const std::function<void(double)>& record) {
  record(0.0);
  double t = 0.0;
  for (double target : schedule(horizon, opts.snapshot_times)) {
    if (target <= t) continue;
    const double len = target - t;
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / opts.dt - 1e-9)));
    const double h = len / static_cast<double>(steps);
    for (std::size_t s = 0; s < steps; ++s) step(h);
    t = target;
    record(t);
  }
}

}  // namespace

OdeTrajectory NlmpOde::integrate(const TruncatedMeasure& mu0, double horizon, const OdeOptions& opts) const {
  check_run(horizon, opts.dt);
  OdeTrajectory traj;
  NodeVector y = mu0;
  auto audit = [&] {
    for (NodeId v = 0; v < y.nodes(); ++v) {
      for (double& p : y.node(v))
        if (p < 0.0) {
          p = 0.0;
          ++traj.clamped;
        }
      traj.max_mass_error = std::max(traj.max_mass_error, std::abs(y.mass(v) - 1.0));
      if (y.leak(v) > opts.leak_tolerance)
        throw Error(ErrorCode::MassLeakExceeded, "truncation leak at node " + model_->graph.name(v) + " reached " +
                                                     std::to_string(y.leak(v)) + "; increase the truncation depth");
    }
  };
  auto step = [&](double h) {
    const auto k1 = drift(y);
    auto tmp = y;
    tmp.axpy(h / 2, k1);
    const auto k2 = drift(tmp);
    tmp = y;
    tmp.axpy(h / 2, k2);
    const auto k3 = drift(tmp);
    tmp = y;
    tmp.axpy(h, k3);
    const auto k4 = drift(tmp);
    y.axpy(h / 6, k1).axpy(h / 3, k2).axpy(h / 3, k3).axpy(h / 6, k4);
    audit();
  };
  march(horizon, opts, step, [&](double t) { traj.snapshots.push_back({t, y}); });
  return traj;
}

OdeTrajectory NlmpOde::sensitivity(const TruncatedMeasure& mu0, const SensitivityVector& h0, double horizon,
                                   const OdeOptions& opts) const {
  check_run(horizon, opts.dt);
  for (NodeId v = 0; v < h0.nodes(); ++v)
    if (std::abs(h0.mass(v)) > 1e-8)
      throw Error(ErrorCode::InvalidConfig, "perturbation must carry zero mass at every node");
  OdeTrajectory traj;
  NodeVector y = mu0;
  NodeVector h = h0;
  auto step = [&](double dt) {
    const auto a1 = drift(y);
    const auto b1 = derivative(y, h);
    auto y2 = y;
    y2.axpy(dt / 2, a1);
    auto h2 = h;
    h2.axpy(dt / 2, b1);
    const auto a2 = drift(y2);
    const auto b2 = derivative(y2, h2);
    auto y3 = y;
    y3.axpy(dt / 2, a2);
    auto h3 = h;
    h3.axpy(dt / 2, b2);
    const auto a3 = drift(y3);
    const auto b3 = derivative(y3, h3);
    auto y4 = y;
    y4.axpy(dt, a3);
    auto h4 = h;
    h4.axpy(dt, b3);
    const auto a4 = drift(y4);
    const auto b4 = derivative(y4, h4);
    y.axpy(dt / 6, a1).axpy(dt / 3, a2).axpy(dt / 3, a3).axpy(dt / 6, a4);
    h.axpy(dt / 6, b1).axpy(dt / 3, b2).axpy(dt / 3, b3).axpy(dt / 6, b4);
    for (NodeId v = 0; v < y.nodes(); ++v) {
      traj.max_mass_error = std::max(traj.max_mass_error, std::abs(h.mass(v)));
      if (y.leak(v) > opts.leak_tolerance)
        throw Error(ErrorCode::MassLeakExceeded, "truncation leak at node " + model_->graph.name(v) + " reached " +
                                                     std::to_string(y.leak(v)) + "; increase the truncation depth");
    }
  };
  march(horizon, opts, step, [&](double t) { traj.snapshots.push_back({t, h}); });
  return traj;
}

Marginal NlmpOde::marginal(const TruncatedMeasure& mu, NodeId v, const ObservationSpec& spec) const {
  Marginal m(spec);
  for (std::size_t i = 0; i < index_.size(); ++i) {
    const double p = mu.at(v, i);
    if (p != 0.0) m.add(describe(index_.word(i), spec), p);
  }
  return m;
}

namespace {

double max_service_rate(const std::vector<double>& rates) {
  double f = 0.0;
  for (double r : rates) f = std::max(f, r);
  return f;
}

}  // namespace

double NlmpOde::total_rate_bound() const {
  const double f = max_service_rate(rates_);
  double total = 0.0;
  for (NodeId v = 0; v < model_->num_nodes(); ++v) {
    const double arrivals = model_->arrivals.total_at(v) + f * static_cast<double>(model_->graph.neighbors(v).size());
    total += 2.0 * (arrivals + f + model_->graph.total_swap_rate(v));
  }
  return total;
}

double NlmpOde::gronwall_constant() const {
  const double f = max_service_rate(rates_);
  const auto degree = static_cast<double>(model_->graph.max_degree());
  double beta = 0.0;
  for (NodeId v = 0; v < model_->num_nodes(); ++v) beta = std::max(beta, model_->graph.total_swap_rate(v));
  return 2.0 * (model_->arrivals.max_total() + degree * f + f + beta + f);
}

}  // namespace swapnet
