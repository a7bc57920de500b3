#include "swapnet/model.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "swapnet/error.hpp"

namespace swapnet {

void ArrivalTable::add(ClassId klass, NodeId node, NodeId dest, double rate) {
  if (!(rate >= 0.0)) throw Error(ErrorCode::NegativeRate, "arrival rate must be non-negative");
  for (auto& s : streams_) {
    if (s.klass == klass && s.node == node && s.dest == dest) {
      s.rate += rate;
      return;
    }
  }
  streams_.push_back({klass, node, dest, rate});
}

double ArrivalTable::rate(ClassId klass, NodeId node, NodeId dest) const {
  for (const auto& s : streams_) {
    if (s.klass == klass && s.node == node && s.dest == dest) return s.rate;
  }
  return 0.0;
}

double ArrivalTable::total_at(NodeId v) const {
  double total = 0.0;
  for (const auto& s : streams_) {
    if (s.node == v) total += s.rate;
  }
  return total;
}

double ArrivalTable::max_total() const {
  double m = 0.0;
  for (const auto& s : streams_) m = std::max(m, total_at(s.node));
  return m;
}

double Model::hazard_bound() const {
  double m = 0.0;
  for (const auto& law : laws) m = std::max(m, law.hazard_bound());
  return m;
}

bool Model::all_memoryless() const {
  return std::all_of(laws.begin(), laws.end(), [](const ServiceLaw& l) { return l.memoryless(); });
}

std::vector<Letter> Model::reachable_letters(const std::vector<Letter>& extra) const {
  std::set<Letter> seen;
  std::deque<Letter> todo;
  for (const auto& l : extra)
    if (seen.insert(l).second) todo.push_back(l);
  for (const auto& s : arrivals.streams()) {
    if (s.rate > 0.0 && seen.insert({s.klass, s.dest}).second) todo.push_back({s.klass, s.dest});
  }
  // Swaps carry queues everywhere, so a letter may be served at any node.
  while (!todo.empty()) {
    const Letter l = todo.front();
    todo.pop_front();
    for (NodeId v = 0; v < num_nodes(); ++v) {
      if (graph.dist(v, l.dest) <= 1) continue;
      for (NodeId w : graph.routing_candidates(v, l.dest)) {
        const Letter next{transitions(l.klass, v, w), l.dest};
        if (seen.insert(next).second) todo.push_back(next);
      }
    }
  }
  return {seen.begin(), seen.end()};
}

std::vector<Letter> Model::all_letters() const {
  std::vector<Letter> out;
  for (ClassId k = 0; k < num_classes(); ++k)
    for (NodeId d = 0; d < num_nodes(); ++d) out.push_back({k, d});
  return out;
}

void Model::set_uniform_law(const ServiceLaw& law) { laws.assign(num_classes() * num_nodes(), law); }

InitialLaw InitialLaw::empty(std::size_t nodes) {
  InitialLaw law;
  law.atoms_.assign(nodes, {InitialLaw::Atom{{}, 1.0}});
  return law;
}

void InitialLaw::set(NodeId v, std::vector<Atom> atoms) {
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!(a.second >= 0.0)) throw Error(ErrorCode::InvalidConfig, "initial probabilities must be >= 0");
    total += a.second;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "initial probabilities must sum to 1");
  atoms_.at(v) = std::move(atoms);
}

QueueState InitialLaw::sample(NodeId v, Rng& rng) const {
  const auto& atoms = atoms_.at(v);
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
    if (u < atoms[i].second) return QueueState::from_word(atoms[i].first);
    u -= atoms[i].second;
  }
  return QueueState::from_word(atoms.back().first);
}

Model path3_model(const ServiceLaw& law) {
  Model m{Graph::path(3, 0.5), {"a"}, {}, {}, {}, ClassTransitionTable::identity()};
  m.arrivals.add(0, 0, 2, 1.0);
  m.set_uniform_law(law);
  m.disciplines.assign(3, Discipline::fifo());
  return m;
}

Model mm1_model(double lambda, double mu, double beta) {
  Model m{Graph::path(2, beta), {"a"}, {}, {}, {}, ClassTransitionTable::identity()};
  m.arrivals.add(0, 0, 1, lambda);
  m.set_uniform_law(ServiceLaw::exponential(mu));
  m.disciplines.assign(2, Discipline::fifo());
  return m;
}

}  // namespace swapnet
