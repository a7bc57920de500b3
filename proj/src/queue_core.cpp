#include "swapnet/queue_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "swapnet/error.hpp"

namespace swapnet {

std::vector<Letter> QueueState::word() const {
  std::vector<Letter> w;
  w.reserve(customers.size());
  for (const auto& c : customers) w.push_back(c.letter());
  return w;
}

QueueState QueueState::from_word(const std::vector<Letter>& word) {
  QueueState q;
  q.customers.reserve(word.size());
  for (const auto& l : word) q.customers.push_back({l.klass, l.dest, 0.0, std::nullopt});
  return q;
}

std::size_t select_in_service(const QueueState& q, const Discipline& d, const DistanceTable&, NodeId) {
  if (q.empty()) throw Error(ErrorCode::EmptyQueue, "no customer to serve");
  switch (d.kind) {
    case Discipline::Kind::Fifo:
      return 0;
    case Discipline::Kind::LifoPreemptResume:
      return q.size() - 1;
    case Discipline::Kind::StaticPriority: {
      if (!d.preemptive) {
        for (std::size_t i = 0; i < q.size(); ++i) {
          if (q.customers[i].age > 0.0) return i;
        }
      }
      auto rank_of = [&](const Customer& c) {
        return c.klass < d.rank.size() ? d.rank[c.klass] : std::numeric_limits<int>::max();
      };
      std::size_t best = 0;
      for (std::size_t i = 1; i < q.size(); ++i) {
        if (rank_of(q.customers[i]) < rank_of(q.customers[best])) best = i;
      }
      return best;
    }
  }
  return 0;
}

ServiceLaw ServiceLaw::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw Error(ErrorCode::InvalidConfig, "exponential rate must be positive and finite");
  }
  ServiceLaw law;
  law.family_ = Family::Exponential;
  law.weights_ = {1.0};
  law.rates_ = {rate};
  return law;
}

ServiceLaw ServiceLaw::hyperexponential(std::vector<double> weights, std::vector<double> rates) {
  if (weights.empty() || weights.size() != rates.size()) {
    throw Error(ErrorCode::InvalidConfig, "hyperexponential needs matching non-empty weights and rates");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !(rates[i] > 0.0) || !std::isfinite(rates[i])) {
      throw Error(ErrorCode::InvalidConfig, "hyperexponential weights must be >= 0 and rates > 0");
    }
    total += weights[i];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidConfig, "hyperexponential weights sum to zero");
  for (auto& w : weights) w /= total;
  ServiceLaw law;
  law.family_ = Family::HyperExponential;
  law.weights_ = std::move(weights);
  law.rates_ = std::move(rates);
  return law;
}

ServiceLaw ServiceLaw::erlang(int phases, double rate) {
  if (phases < 1 || !(rate > 0.0) || !std::isfinite(rate)) {
    throw Error(ErrorCode::InvalidConfig, "erlang needs phases >= 1 and a positive rate");
  }
  ServiceLaw law;
  law.family_ = Family::Erlang;
  law.weights_ = {1.0};
  law.rates_ = {rate};
  law.phases_ = phases;
  return law;
}

double ServiceLaw::hazard(double age) const {
  switch (family_) {
    case Family::Exponential:
      return rates_[0];
    case Family::HyperExponential: {
      const double rmin = *std::min_element(rates_.begin(), rates_.end());
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < rates_.size(); ++i) {
        const double w = weights_[i] * std::exp(-(rates_[i] - rmin) * age);
        num += w * rates_[i];
        den += w;
      }
      return num / den;
    }
    case Family::Erlang: {
      const double g = rates_[0];
      if (phases_ == 1) return g;
      const double x = g * age;
      if (x <= 0.0) return 0.0;
      // Terms (x^j / j!) relative to the last one, summed backwards.
      double term = 1.0;
      double sum = 1.0;
      for (int j = phases_ - 1; j >= 1; --j) {
        term *= static_cast<double>(j) / x;
        sum += term;
      }
      return g / sum;
    }
  }
  return 0.0;
}

double ServiceLaw::survival(double age) const {
  if (age <= 0.0) return 1.0;
  switch (family_) {
    case Family::Exponential:
      return std::exp(-rates_[0] * age);
    case Family::HyperExponential: {
      double s = 0.0;
      for (std::size_t i = 0; i < rates_.size(); ++i) s += weights_[i] * std::exp(-rates_[i] * age);
      return s;
    }
    case Family::Erlang: {
      const double x = rates_[0] * age;
      double term = 1.0;
      double sum = 1.0;
      for (int j = 1; j < phases_; ++j) {
        term *= x / j;
        sum += term;
      }
      return std::exp(-x) * sum;
    }
  }
  return 0.0;
}

double ServiceLaw::mean() const {
  switch (family_) {
    case Family::Exponential:
      return 1.0 / rates_[0];
    case Family::HyperExponential: {
      double m = 0.0;
      for (std::size_t i = 0; i < rates_.size(); ++i) m += weights_[i] / rates_[i];
      return m;
    }
    case Family::Erlang:
      return phases_ / rates_[0];
  }
  return 0.0;
}

double ServiceLaw::hazard_bound() const {
  switch (family_) {
    case Family::Exponential:
    case Family::Erlang:
      return rates_[0];
    case Family::HyperExponential:
      // Decreasing hazard: the supremum is at age 0.
      return std::inner_product(weights_.begin(), weights_.end(), rates_.begin(), 0.0);
  }
  return 0.0;
}

double ServiceLaw::hazard_limit() const {
  if (family_ == Family::HyperExponential) {
    double rmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      if (weights_[i] > 0.0) rmin = std::min(rmin, rates_[i]);
    }
    return rmin;
  }
  return rates_[0];
}

bool ServiceLaw::memoryless() const {
  if (family_ == Family::Exponential) return true;
  if (family_ == Family::Erlang) return phases_ == 1;
  double r = -1.0;
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    if (weights_[i] <= 0.0) continue;
    if (r >= 0.0 && rates_[i] != r) return false;
    r = rates_[i];
  }
  return true;
}

double ServiceLaw::sample(Rng& rng) const {
  switch (family_) {
    case Family::Exponential:
      return rng.exponential(rates_[0]);
    case Family::HyperExponential: {
      double u = rng.uniform();
      std::size_t i = 0;
      for (; i + 1 < weights_.size(); ++i) {
        if (u < weights_[i]) break;
        u -= weights_[i];
      }
      return rng.exponential(rates_[i]);
    }
    case Family::Erlang: {
      double t = 0.0;
      for (int j = 0; j < phases_; ++j) t += rng.exponential(rates_[0]);
      return t;
    }
  }
  return 0.0;
}

double ServiceLaw::sample_residual(Rng& rng, double age) const {
  if (age <= 0.0) return sample(rng);
  switch (family_) {
    case Family::Exponential:
      return age + rng.exponential(rates_[0]);
    case Family::HyperExponential: {
      // Posterior over phases given survival to `age`.
      const double rmin = *std::min_element(rates_.begin(), rates_.end());
      std::vector<double> post(rates_.size());
      double total = 0.0;
      for (std::size_t i = 0; i < rates_.size(); ++i) {
        post[i] = weights_[i] * std::exp(-(rates_[i] - rmin) * age);
        total += post[i];
      }
      double u = rng.uniform() * total;
      std::size_t i = 0;
      for (; i + 1 < post.size(); ++i) {
        if (u < post[i]) break;
        u -= post[i];
      }
      return age + rng.exponential(rates_[i]);
    }
    case Family::Erlang: {
      // Completed phases j < k given survival are Poisson(x) conditioned on j < k.
      const double x = rates_[0] * age;
      std::vector<double> w(phases_);
      w[phases_ - 1] = 1.0;
      for (int j = phases_ - 1; j >= 1; --j) w[j - 1] = w[j] * j / x;
      double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = rng.uniform() * total;
      int done = 0;
      for (; done + 1 < phases_; ++done) {
        if (u < w[done]) break;
        u -= w[done];
      }
      double t = age;
      for (int j = done; j < phases_; ++j) t += rng.exponential(rates_[0]);
      return t;
    }
  }
  return age;
}

double hazard_rate(const ServiceLaw& law, double age) { return law.hazard(age); }

double sample_requirement(const ServiceLaw& law, Rng& rng) { return law.sample(rng); }

double sample_by_thinning(const ServiceLaw& law, Rng& rng) {
  const double bound = law.hazard_bound();
  double t = 0.0;
  for (;;) {
    t += rng.exponential(bound);
    if (rng.uniform() * bound < law.hazard(t)) return t;
  }
}

ClassId ClassTransitionTable::operator()(ClassId klass, NodeId v, NodeId u) const {
  auto it = entries_.find({klass, v, u});
  if (it != entries_.end()) return it->second;
  if (identity_default_) return klass;
  throw Error(ErrorCode::MissingEntry, "no class transition for class " + std::to_string(klass) + " on " +
                                           std::to_string(v) + "->" + std::to_string(u));
}

ClassId class_transition(const ClassTransitionTable& tt, ClassId klass, NodeId v, NodeId u) {
  return tt(klass, v, u);
}

QueueState append_arrival(QueueState q, Customer c) {
  if (c.age != 0.0) throw Error(ErrorCode::NonZeroAge, "arriving customers have no attained service");
  q.customers.push_back(std::move(c));
  return q;
}

std::pair<QueueState, Customer> remove_in_service(QueueState q, const Discipline& d, const DistanceTable& dist,
                                                  NodeId v) {
  const std::size_t i = select_in_service(q, d, dist, v);
  Customer served = q.customers[i];
  q.customers.erase(q.customers.begin() + static_cast<std::ptrdiff_t>(i));
  return {std::move(q), std::move(served)};
}

std::optional<std::pair<NodeId, Customer>> route_completion(const Customer& served, NodeId v, const Graph& g,
                                                            const ClassTransitionTable& tt, Rng& rng) {
  if (g.dist(v, served.dest) <= 1) return std::nullopt;
  const auto cands = g.routing_candidates(v, served.dest);
  const NodeId w = cands[rng.index(cands.size())];
  Customer moved{tt(served.klass, v, w), served.dest, 0.0, std::nullopt};
  return std::make_pair(w, moved);
}

TransferOutcome transfer(QueueState q_v, NodeId v, const Discipline& d, const Graph& g,
                         const ClassTransitionTable& tt, Rng& rng) {
  auto [rest, served] = remove_in_service(std::move(q_v), d, g.distances(), v);
  TransferOutcome out;
  out.source = std::move(rest);
  out.served = served;
  if (auto next = route_completion(served, v, g, tt, rng)) {
    out.target = next->first;
    out.moved = next->second;
  } else {
    out.exits = true;
  }
  return out;
}

}  // namespace swapnet
