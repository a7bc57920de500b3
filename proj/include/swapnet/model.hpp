#pragma once

#include <string>
#include <utility>
#include <vector>

#include "swapnet/queue_core.hpp"
#include "swapnet/topology.hpp"

namespace swapnet {

struct ArrivalStream {
  ClassId klass;
  NodeId node;
  NodeId dest;
  double rate;
};

/// External arrival rates λ(class, entry node, destination).
class ArrivalTable {
 public:
  void add(ClassId klass, NodeId node, NodeId dest, double rate);
  const std::vector<ArrivalStream>& streams() const { return streams_; }
  double rate(ClassId klass, NodeId node, NodeId dest) const;
  /// Σ_{class,dest} λ(class, v, dest).
  double total_at(NodeId v) const;
  double max_total() const;

 private:
  std::vector<ArrivalStream> streams_;
};

/// Everything that defines one network: topology, classes, arrivals, per
/// (class, node) service laws, per-node disciplines and class transitions.
struct Model {
  Graph graph;
  std::vector<std::string> classes;
  ArrivalTable arrivals;
  /// Indexed class * |V| + node.
  std::vector<ServiceLaw> laws;
  std::vector<Discipline> disciplines;
  ClassTransitionTable transitions = ClassTransitionTable::identity();

  std::size_t num_nodes() const { return graph.size(); }
  std::size_t num_classes() const { return classes.size(); }
  const ServiceLaw& law(ClassId k, NodeId v) const { return laws[static_cast<std::size_t>(k) * num_nodes() + v]; }
  const Discipline& discipline(NodeId v) const { return disciplines[v]; }

  /// Uniform hazard bound over every law in use.
  double hazard_bound() const;
  bool all_memoryless() const;
  /// Letters (class, dest) that can ever appear in a queue: external arrivals
  /// closed under routing with class transitions. `extra` seeds the closure
  /// with letters present in an initial law.
  std::vector<Letter> reachable_letters(const std::vector<Letter>& extra = {}) const;
  std::vector<Letter> all_letters() const;

  /// Sets every (class, node) law to `law`.
  void set_uniform_law(const ServiceLaw& law);
};

/// Per-node law of the initial queue word; attained services start at zero.
class InitialLaw {
 public:
  using Atom = std::pair<std::vector<Letter>, double>;

  static InitialLaw empty(std::size_t nodes);
  void set(NodeId v, std::vector<Atom> atoms);
  const std::vector<Atom>& atoms(NodeId v) const { return atoms_[v]; }
  std::size_t num_nodes() const { return atoms_.size(); }
  QueueState sample(NodeId v, Rng& rng) const;

 private:
  std::vector<std::vector<Atom>> atoms_;
};

/// Path v0 - v1 - v2, one class, λ(a, v0, v2) = 1, swap rate 0.5, FIFO.
Model path3_model(const ServiceLaw& law = ServiceLaw::exponential(2.0));
/// Path v0 - v1 with arrivals at v0 bound for v1: an M/M/1 queue at v0.
Model mm1_model(double lambda = 1.0, double mu = 2.0, double beta = 0.0);

}  // namespace swapnet
