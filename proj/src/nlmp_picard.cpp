#include "swapnet/nlmp_picard.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <string>
#include <thread>

#include "swapnet/error.hpp"

namespace swapnet {

RateGrid::RateGrid(double horizon, std::size_t intervals) : horizon_(horizon), intervals_(intervals) {
  if (!(horizon > 0.0) || intervals == 0)
    throw Error(ErrorCode::InvalidConfig, "rate grid needs a positive horizon and at least one interval");
}

std::vector<double>& RateGrid::series(const RateKey& key) {
  auto [it, fresh] = series_.try_emplace(key);
  if (fresh) it->second.assign(knots(), 0.0);
  return it->second;
}

double RateGrid::value(const RateKey& key, double t) const {
  auto it = series_.find(key);
  if (it == series_.end()) return 0.0;
  const auto& x = it->second;
  const double u = std::clamp(t / step(), 0.0, static_cast<double>(intervals_));
  const auto j = std::min(static_cast<std::size_t>(u), intervals_ - 1);
  const double frac = u - static_cast<double>(j);
  return x[j] + frac * (x[j + 1] - x[j]);
}

double RateGrid::max_value() const {
  double m = 0.0;
  for (const auto& [key, x] : series_)
    for (double v : x) m = std::max(m, v);
  return m;
}

double RateGrid::max_slope() const {
  double m = 0.0;
  for (const auto& [key, x] : series_)
    for (std::size_t j = 0; j + 1 < x.size(); ++j) m = std::max(m, std::abs(x[j + 1] - x[j]) / step());
  return m;
}

bool RateGrid::same_grid(const RateGrid& o) const {
  return intervals_ == o.intervals_ && std::abs(horizon_ - o.horizon_) <= 1e-12 * std::max(1.0, horizon_);
}

namespace {

/// ∫ over one segment of |linear function| with end values a and b.
double segment_abs(double a, double b, double h) {
  if ((a >= 0.0) == (b >= 0.0)) return 0.5 * h * std::abs(a + b);
  return 0.5 * h * (a * a + b * b) / (std::abs(a) + std::abs(b));
}

double series_abs(const std::vector<double>& d, double h) {
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < d.size(); ++j) s += segment_abs(d[j], d[j + 1], h);
  return s;
}

}  // namespace

double rate_distance(const RateGrid& a, const RateGrid& b) {
  if (!a.same_grid(b)) throw Error(ErrorCode::GridMismatch, "rate grids differ in horizon or resolution");
  std::set<RateKey> keys;
  for (const auto& [k, x] : a.all()) keys.insert(k);
  for (const auto& [k, x] : b.all()) keys.insert(k);
  const std::vector<double> zero(a.knots(), 0.0);
  double total = 0.0;
  std::vector<double> d(a.knots());
  for (const auto& k : keys) {
    auto ia = a.all().find(k);
    auto ib = b.all().find(k);
    const auto& xa = ia == a.all().end() ? zero : ia->second;
    const auto& xb = ib == b.all().end() ? zero : ib->second;
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = xa[j] - xb[j];
    total += series_abs(d, a.step());
  }
  return total;
}

double rate_norm(const RateGrid& a) {
  double total = 0.0;
  for (const auto& [k, x] : a.all()) total += series_abs(x, a.step());
  return total;
}

std::vector<double> lipschitz_project(const std::vector<double>& raw, double step, double lipschitz) {
  const std::size_t n = raw.size();
  if (n == 0) return {};
  const double c = lipschitz * step;
  // Slope trick: the DP value function is convex piecewise linear; its
  // breakpoints live in two heaps with lazy shifts.
  std::priority_queue<double> left;
  std::priority_queue<double, std::vector<double>, std::greater<>> right;
  double shift_l = 0.0;
  double shift_r = 0.0;
  std::vector<double> best(n);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      shift_l -= c;
      shift_r += c;
    }
    const double y = raw[i];
    left.push(y - shift_l);
    right.push(left.top() + shift_l - shift_r);
    left.pop();
    right.push(y - shift_r);
    left.push(right.top() + shift_r - shift_l);
    right.pop();
    const double lo = left.empty() ? -inf : left.top() + shift_l;
    const double hi = right.empty() ? inf : right.top() + shift_r;
    best[i] = std::clamp(y, lo, hi);
  }
  std::vector<double> x(n);
  x[n - 1] = best[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = std::clamp(best[i], x[i + 1] - c, x[i + 1] + c);
  for (double& v : x) v = std::max(v, 0.0);
  return x;
}

RateGrid lipschitz_project(const RateGrid& raw, double lipschitz) {
  RateGrid out(raw.horizon(), raw.intervals());
  for (const auto& [k, x] : raw.all()) out.series(k) = lipschitz_project(x, raw.step(), lipschitz);
  return out;
}

Marginal NodeEnsemble::marginal(NodeId v, const ObservationSpec& spec) const {
  Marginal m(spec);
  const double w = 1.0 / static_cast<double>(replicas[v].size());
  for (const auto& q : replicas[v]) m.add(describe(q, spec), w);
  return m;
}

double NodeEnsemble::mean_length(NodeId v) const {
  double s = 0.0;
  for (const auto& q : replicas[v]) s += static_cast<double>(q.size());
  return s / static_cast<double>(replicas[v].size());
}

NodeEnsemble sample_ensemble(const Model& model, const InitialLaw& init, std::size_t replicas, std::uint64_t seed) {
  if (init.num_nodes() != model.num_nodes())
    throw Error(ErrorCode::InvalidConfig, "initial law has the wrong number of nodes");
  NodeEnsemble e;
  e.replicas.assign(model.num_nodes(), std::vector<QueueState>(replicas));
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    Rng rng = Rng::derive(seed, 0x5e, v);
    for (auto& q : e.replicas[v]) q = init.sample(v, rng);
  }
  return e;
}

std::vector<RateKey> transit_keys(const Model& model, const std::vector<Letter>& letters) {
  std::set<RateKey> keys;
  for (NodeId v = 0; v < model.num_nodes(); ++v)
    for (const auto& l : letters) {
      if (model.graph.dist(v, l.dest) <= 1) continue;
      for (NodeId w : model.graph.routing_candidates(v, l.dest))
        keys.insert({v, w, {class_transition(model.transitions, l.klass, v, w), l.dest}});
    }
  return {keys.begin(), keys.end()};
}

namespace {

std::vector<Letter> letters_in(const NodeEnsemble& e) {
  std::set<Letter> seen;
  for (const auto& node : e.replicas)
    for (const auto& q : node)
      for (const auto& c : q.customers) seen.insert(c.letter());
  return {seen.begin(), seen.end()};
}

struct Stream {
  ClassId klass;
  NodeId dest;
  double rate;
};

struct TransitIn {
  Letter letter;
  const std::vector<double>* knots;
};

/// Per-node inputs of the replica dynamics on one window.
struct NodeInputs {
  std::vector<Stream> external;
  double external_total = 0.0;
  std::vector<TransitIn> transit;
  std::vector<std::pair<NodeId, double>> swaps;
  double swap_total = 0.0;
};

/// Sums owned by one worker; merged after each window.
struct Tally {
  /// [key][batch][bin]
  std::vector<std::vector<std::vector<double>>> departures;
  EnsembleAccounting acc;
};

Tally make_tally(std::size_t keys, std::size_t batches, std::size_t bins, std::size_t nodes) {
  Tally t;
  t.departures.assign(keys, std::vector<std::vector<double>>(batches, std::vector<double>(bins, 0.0)));
  auto zero = std::vector<std::vector<double>>(nodes, std::vector<double>(batches, 0.0));
  t.acc.batches = batches;
  t.acc.external_arrivals = zero;
  t.acc.transit_arrivals = zero;
  t.acc.transit_departures = zero;
  t.acc.exits = zero;
  t.acc.initial_customers = zero;
  t.acc.final_customers = zero;
  return t;
}

void merge(Tally& into, const Tally& from) {
  for (std::size_t k = 0; k < into.departures.size(); ++k)
    for (std::size_t b = 0; b < into.departures[k].size(); ++b)
      for (std::size_t j = 0; j < into.departures[k][b].size(); ++j)
        into.departures[k][b][j] += from.departures[k][b][j];
  auto add = [](auto& a, const auto& b) {
    for (std::size_t v = 0; v < a.size(); ++v)
      for (std::size_t i = 0; i < a[v].size(); ++i) a[v][i] += b[v][i];
  };
  add(into.acc.external_arrivals, from.acc.external_arrivals);
  add(into.acc.transit_arrivals, from.acc.transit_arrivals);
  add(into.acc.transit_departures, from.acc.transit_departures);
  add(into.acc.exits, from.acc.exits);
  add(into.acc.initial_customers, from.acc.initial_customers);
  add(into.acc.final_customers, from.acc.final_customers);
}

class ReplicaDynamics {
 public:
  ReplicaDynamics(const Model& m, const std::vector<NodeInputs>& inputs, const std::map<RateKey, std::size_t>& key_ids,
                  double step)
      : m_(m), inputs_(inputs), key_ids_(key_ids), step_(step) {}

  /// Advances one replica over bin j, given the ensemble at the start of the bin.
  void advance(NodeId v, QueueState& q, Rng& rng, std::size_t bin, std::size_t batch, const NodeEnsemble& snapshot,
               Tally& tally) const {
    const auto& in = inputs_[v];
    const double t0 = step_ * static_cast<double>(bin);
    const double t1 = t0 + step_;
    double peak = in.external_total;
    for (const auto& s : in.transit) peak += std::max((*s.knots)[bin], (*s.knots)[bin + 1]);
    double t = t0;
    while (true) {
      std::size_t serving = 0;
      double completion = std::numeric_limits<double>::infinity();
      if (!q.empty()) {
        serving = select_in_service(q, m_.discipline(v), m_.graph.distances(), v);
        auto& c = q.customers[serving];
        if (!c.requirement) c.requirement = m_.law(c.klass, v).sample_residual(rng, c.age);
        completion = t + std::max(0.0, *c.requirement - c.age);
      }
      const double arrival = t + rng.exponential(peak);
      const double swap = t + rng.exponential(in.swap_total);
      const double next = std::min({completion, arrival, swap});
      if (next >= t1) {
        if (!q.empty()) q.customers[serving].age += t1 - t;
        return;
      }
      if (!q.empty()) q.customers[serving].age += next - t;
      t = next;
      if (next == completion) {
        complete(v, q, serving, rng, bin, batch, tally);
      } else if (next == arrival) {
        arrive(v, q, rng, t, bin, batch, tally, peak);
      } else {
        double u = rng.uniform() * in.swap_total;
        NodeId from = in.swaps.back().first;
        for (const auto& [w, beta] : in.swaps) {
          if (u < beta) {
            from = w;
            break;
          }
          u -= beta;
        }
        q = snapshot.replicas[from][rng.index(snapshot.replicas[from].size())];
        for (auto& c : q.customers) c.requirement.reset();
      }
    }
  }

 private:
  void complete(NodeId v, QueueState& q, std::size_t serving, Rng& rng, std::size_t bin, std::size_t batch,
                Tally& tally) const {
    const Customer c = q.customers[serving];
    q.customers.erase(q.customers.begin() + static_cast<std::ptrdiff_t>(serving));
    if (m_.graph.dist(v, c.dest) <= 1) {
      tally.acc.exits[v][batch] += 1;
      return;
    }
    const auto targets = m_.graph.routing_candidates(v, c.dest);
    const NodeId w = targets[rng.index(targets.size())];
    const RateKey key{v, w, {class_transition(m_.transitions, c.klass, v, w), c.dest}};
    auto it = key_ids_.find(key);
    if (it == key_ids_.end()) throw Error(ErrorCode::InconsistentEvent, "departure on an unregistered transit stream");
    tally.departures[it->second][batch][bin] += 1;
    tally.acc.transit_departures[v][batch] += 1;
  }

  void arrive(NodeId v, QueueState& q, Rng& rng, double t, std::size_t bin, std::size_t batch, Tally& tally,
              double peak) const {
    const auto& in = inputs_[v];
    const double frac = (t - step_ * static_cast<double>(bin)) / step_;
    double u = rng.uniform() * peak;
    for (const auto& s : in.external) {
      if (u < s.rate) {
        q.customers.push_back({s.klass, s.dest, 0.0, std::nullopt});
        tally.acc.external_arrivals[v][batch] += 1;
        return;
      }
      u -= s.rate;
    }
    for (const auto& s : in.transit) {
      const double a = (*s.knots)[bin];
      const double rate = a + frac * ((*s.knots)[bin + 1] - a);
      if (u < rate) {
        q.customers.push_back({s.letter.klass, s.letter.dest, 0.0, std::nullopt});
        tally.acc.transit_arrivals[v][batch] += 1;
        return;
      }
      u -= rate;
    }
    // Thinned candidate: no arrival.
  }

  const Model& m_;
  const std::vector<NodeInputs>& inputs_;
  const std::map<RateKey, std::size_t>& key_ids_;
  double step_;
};

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t, std::size_t, unsigned)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(n, chunk * t);
    const std::size_t hi = std::min(n, lo + chunk);
    pool.emplace_back(fn, lo, hi, t);
  }
  for (auto& th : pool) th.join();
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Knot values from bin averages: interior knots average their two bins,
/// end knots extrapolate linearly.
std::vector<double> bins_to_knots(const std::vector<double>& bins) {
  const std::size_t j = bins.size();
  std::vector<double> k(j + 1);
  if (j == 1) {
    k[0] = k[1] = bins[0];
    return k;
  }
  for (std::size_t i = 1; i < j; ++i) k[i] = 0.5 * (bins[i - 1] + bins[i]);
  k[0] = std::max(0.0, 1.5 * bins[0] - 0.5 * bins[1]);
  k[j] = std::max(0.0, 1.5 * bins[j - 1] - 0.5 * bins[j - 2]);
  return k;
}

}  // namespace

double default_lipschitz(const Model& model) {
  const double f = model.hazard_bound();
  const double arrivals = model.arrivals.max_total() + static_cast<double>(model.graph.max_degree()) * f;
  double beta = 0.0;
  for (NodeId v = 0; v < model.num_nodes(); ++v) beta = std::max(beta, model.graph.total_swap_rate(v));
  return 2.0 * f * (arrivals + beta);
}

DepartureEstimate departure_rates(const Model& model, const NodeEnsemble& start, const RateGrid& lambda,
                                  const PicardOptions& opts, std::uint64_t seed) {
  const std::size_t n = model.num_nodes();
  const std::size_t replicas = start.size();
  if (replicas < std::max<std::size_t>(opts.min_replicas, 1) || replicas < opts.batches)
    throw Error(ErrorCode::EnsembleTooSmall, std::to_string(replicas) + " replicas is below the floor of " +
                                                 std::to_string(std::max(opts.min_replicas, opts.batches)));
  if (start.replicas.size() != n) throw Error(ErrorCode::InvalidConfig, "ensemble has the wrong number of nodes");
  const double bound = opts.rate_bound > 0.0 ? opts.rate_bound : 2.0 * model.hazard_bound();
  if (lambda.max_value() > bound)
    throw Error(ErrorCode::RateBoundExceeded,
                "arrival rate " + std::to_string(lambda.max_value()) + " exceeds the bound " + std::to_string(bound));

  std::vector<Letter> letters = letters_in(start);
  for (const auto& [k, x] : lambda.all()) letters.push_back(k.letter);
  const auto keys = transit_keys(model, model.reachable_letters(letters));
  std::map<RateKey, std::size_t> key_ids;
  for (std::size_t i = 0; i < keys.size(); ++i) key_ids[keys[i]] = i;

  std::vector<NodeInputs> inputs(n);
  for (const auto& s : model.arrivals.streams()) {
    if (s.rate <= 0.0) continue;
    inputs[s.node].external.push_back({s.klass, s.dest, s.rate});
    inputs[s.node].external_total += s.rate;
  }
  for (const auto& [k, x] : lambda.all()) inputs[k.to].transit.push_back({k.letter, &x});
  for (NodeId v = 0; v < n; ++v)
    for (NodeId u : model.graph.neighbors(v)) {
      const double beta = model.graph.swap_rate(v, u);
      if (beta <= 0.0) continue;
      inputs[v].swaps.push_back({u, beta});
      inputs[v].swap_total += beta;
    }

  const std::size_t bins = lambda.intervals();
  const std::size_t batches = std::max<std::size_t>(opts.batches, 1);
  const unsigned threads = std::max(1u, opts.threads);
  std::vector<Tally> tallies;
  for (unsigned t = 0; t < threads; ++t) tallies.push_back(make_tally(keys.size(), batches, bins, n));

  NodeEnsemble ens = start;
  std::vector<Rng> rngs;
  rngs.reserve(n * replicas);
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t r = 0; r < replicas; ++r) rngs.push_back(Rng::derive(seed, v, r));
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t r = 0; r < replicas; ++r)
      tallies[0].acc.initial_customers[v][r % batches] += static_cast<double>(ens.replicas[v][r].size());

  ReplicaDynamics dyn(model, inputs, key_ids, lambda.step());
  for (std::size_t j = 0; j < bins; ++j) {
    const NodeEnsemble snapshot = ens;
    parallel_for(n * replicas, threads, [&](std::size_t lo, std::size_t hi, unsigned t) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto v = static_cast<NodeId>(i / replicas);
        const std::size_t r = i % replicas;
        dyn.advance(v, ens.replicas[v][r], rngs[i], j, r % batches, snapshot, tallies[t]);
      }
    });
  }
  ens.clock = start.clock + lambda.horizon();
  for (unsigned t = 1; t < threads; ++t) merge(tallies[0], tallies[t]);
  Tally& tally = tallies[0];
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t r = 0; r < replicas; ++r)
      tally.acc.final_customers[v][r % batches] += static_cast<double>(ens.replicas[v][r].size());
  tally.acc.batch_sizes.assign(batches, 0);
  for (std::size_t r = 0; r < replicas; ++r) ++tally.acc.batch_sizes[r % batches];

  DepartureEstimate out{RateGrid(lambda.horizon(), bins), RateGrid(lambda.horizon(), bins), std::move(ens),
                        std::move(tally.acc)};
  const double norm = 1.0 / (static_cast<double>(replicas) * lambda.step());
  std::vector<double> total(bins);
  std::vector<std::vector<double>> per_batch(batches);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    std::fill(total.begin(), total.end(), 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<double> rate(bins);
      const double bnorm = 1.0 / (static_cast<double>(out.accounting.batch_sizes[b]) * lambda.step());
      for (std::size_t j = 0; j < bins; ++j) {
        total[j] += tally.departures[k][b][j];
        rate[j] = tally.departures[k][b][j] * bnorm;
      }
      per_batch[b] = bins_to_knots(rate);
    }
    for (double& x : total) x *= norm;
    auto& raw = out.rates.series(keys[k]);
    raw = bins_to_knots(total);
    auto& se = out.standard_error.series(keys[k]);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      std::vector<double> xs(batches);
      for (std::size_t b = 0; b < batches; ++b) xs[b] = per_batch[b][j];
      const double m = mean_of(xs);
      double ss = 0.0;
      for (double x : xs) ss += (x - m) * (x - m);
      se[j] = batches > 1 ? std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches)) : 0.0;
    }
  }
  const double lip = opts.lipschitz > 0.0 ? opts.lipschitz : default_lipschitz(model);
  out.rates = lipschitz_project(out.rates, lip);
  return out;
}

PicardResult picard_solve(const Model& model, const NodeEnsemble& start, double window, const PicardOptions& opts) {
  if (!(window > 0.0)) throw Error(ErrorCode::InvalidConfig, "window must be positive");
  const double f = model.hazard_bound();
  if (f * window > opts.smallness)
    throw Error(ErrorCode::InvalidConfig, "hazard_bound * window = " + std::to_string(f * window) +
                                              " exceeds the smallness limit " + std::to_string(opts.smallness));
  for (NodeId v = 0; v < model.num_nodes(); ++v)
    if (model.graph.total_swap_rate(v) * window > opts.smallness)
      throw Error(ErrorCode::InvalidConfig, "swap rate * window exceeds the smallness limit at node " +
                                                model.graph.name(v));

  RateGrid lambda(window, opts.intervals);
  for (const auto& k : transit_keys(model, model.reachable_letters(letters_in(start)))) lambda.series(k);

  PicardResult res;
  std::size_t rising = 0;
  for (std::size_t k = 0; k < opts.max_iter; ++k) {
    const std::uint64_t seed = opts.common_random_numbers ? opts.seed : Rng::derive(opts.seed, 0x7c, k).raw();
    auto est = departure_rates(model, start, lambda, opts, seed);
    const double d = rate_distance(est.rates, lambda);
    const double floor = opts.noise_floor_factor * rate_norm(est.standard_error);
    res.distances.push_back(d);
    res.noise_floors.push_back(floor);
    res.iterations = k + 1;
    res.fixed_point = lambda;
    res.standard_error = std::move(est.standard_error);
    res.residual = d;
    res.final = std::move(est.final);
    res.accounting = std::move(est.accounting);
    if (d < opts.tol || (floor > 0.0 && d <= floor)) {
      res.converged = true;
      return res;
    }
    if (k > 0 && d >= res.distances[k - 1]) {
      if (++rising >= 3)
        throw Error(ErrorCode::NoContraction, "iterate distances stopped shrinking above the noise floor (last " +
                                                  std::to_string(d) + ", floor " + std::to_string(floor) +
                                                  "); shorten the window or add replicas");
    } else {
      rising = 0;
    }
    lambda = std::move(est.rates);
  }
  return res;
}

WindowedResult windowed_solve(const Model& model, const NodeEnsemble& start, double horizon, double window,
                              const PicardOptions& opts) {
  if (!(window > 0.0)) throw Error(ErrorCode::InvalidConfig, "window must be positive");
  const double m = std::round(horizon / window);
  if (m < 1.0 || std::abs(m * window - horizon) > 1e-9 * std::max(1.0, horizon))
    throw Error(ErrorCode::InvalidConfig, "horizon must be a whole number of windows");
  WindowedResult out;
  out.snapshots.push_back(start);
  for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
    PicardOptions o = opts;
    if (j > 0) o.seed = Rng::derive(opts.seed, 0x3d, j).raw();
    try {
      out.windows.push_back(picard_solve(model, out.snapshots.back(), window, o));
    } catch (const Error& e) {
      throw Error(e.code(), "window " + std::to_string(j) + ": " + e.detail());
    }
    out.snapshots.push_back(out.windows.back().final);
  }
  return out;
}

}  // namespace swapnet
