#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "swapnet/random.hpp"
#include "swapnet/topology.hpp"

namespace swapnet {

using ClassId = std::uint32_t;

/// The (class, destination) pair a customer contributes to a queue word.
struct Letter {
  ClassId klass = 0;
  NodeId dest = 0;
  auto operator<=>(const Letter&) const = default;
};

struct Customer {
  ClassId klass = 0;
  NodeId dest = 0;
  /// Attained service time.
  double age = 0.0;
  /// Total service demand; only the event-driven simulators sample it.
  std::optional<double> requirement;

  Letter letter() const { return {klass, dest}; }
  bool operator==(const Customer&) const = default;
};

/// Queue in arrival order, oldest first.
struct QueueState {
  std::vector<Customer> customers;

  bool empty() const { return customers.empty(); }
  std::size_t size() const { return customers.size(); }
  std::vector<Letter> word() const;
  static QueueState from_word(const std::vector<Letter>& word);
  bool operator==(const QueueState&) const = default;
};

struct Discipline {
  enum class Kind { Fifo, LifoPreemptResume, StaticPriority };

  Kind kind = Kind::Fifo;
  /// Rank per class for StaticPriority; smaller ranks are served first.
  std::vector<int> rank;
  bool preemptive = true;

  static Discipline fifo() { return {}; }
  static Discipline lifo_preempt_resume() { return {Kind::LifoPreemptResume, {}, true}; }
  static Discipline static_priority(std::vector<int> rank, bool preemptive) {
    return {Kind::StaticPriority, std::move(rank), preemptive};
  }

  /// True when the served position is a function of the word alone (no ages).
  bool word_determined() const { return kind != Kind::StaticPriority || preemptive; }
  bool operator==(const Discipline&) const = default;
};

/// Position of the customer in service. Under a non-preemptive priority rule a
/// customer with positive attained service keeps the server.
std::size_t select_in_service(const QueueState& q, const Discipline& d, const DistanceTable& dist, NodeId v);

/// Service-time law with an everywhere finite, bounded and convergent hazard.
class ServiceLaw {
 public:
  enum class Family { Exponential, HyperExponential, Erlang };

  static ServiceLaw exponential(double rate);
  static ServiceLaw hyperexponential(std::vector<double> weights, std::vector<double> rates);
  static ServiceLaw erlang(int phases, double rate);

  Family family() const { return family_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& rates() const { return rates_; }
  int phases() const { return phases_; }

  double hazard(double age) const;
  double survival(double age) const;
  double cdf(double age) const { return 1.0 - survival(age); }
  double mean() const;
  /// sup over ages of the hazard.
  double hazard_bound() const;
  double hazard_limit() const;
  /// Exponential laws give an age-independent hazard.
  bool memoryless() const;

  double sample(Rng& rng) const;
  /// Total requirement conditioned on exceeding the attained service `age`.
  double sample_residual(Rng& rng, double age) const;

  bool operator==(const ServiceLaw&) const = default;

 private:
  Family family_ = Family::Exponential;
  std::vector<double> weights_;
  std::vector<double> rates_;
  int phases_ = 1;
};

double hazard_rate(const ServiceLaw& law, double age);
double sample_requirement(const ServiceLaw& law, Rng& rng);
/// Completion time drawn by thinning a Poisson stream at the hazard bound.
double sample_by_thinning(const ServiceLaw& law, Rng& rng);

/// Class a customer takes when moving from v to an adjacent u.
class ClassTransitionTable {
 public:
  static ClassTransitionTable identity() {
    ClassTransitionTable t;
    t.identity_default_ = true;
    return t;
  }

  void set(ClassId from, NodeId v, NodeId u, ClassId to) { entries_[{from, v, u}] = to; }
  ClassId operator()(ClassId klass, NodeId v, NodeId u) const;
  bool identity_default() const { return identity_default_; }
  const auto& entries() const { return entries_; }

 private:
  std::map<std::tuple<ClassId, NodeId, NodeId>, ClassId> entries_;
  bool identity_default_ = false;
};

ClassId class_transition(const ClassTransitionTable& tt, ClassId klass, NodeId v, NodeId u);

/// χ: the arriving customer joins at the tail with zero attained service.
QueueState append_arrival(QueueState q, Customer c);

/// ψ: drops the customer in service, preserving the order of the others.
std::pair<QueueState, Customer> remove_in_service(QueueState q, const Discipline& d,
                                                  const DistanceTable& dist, NodeId v);

struct TransferOutcome {
  QueueState source;
  Customer served;
  bool exits = false;
  NodeId target = 0;
  /// Customer as it joins the target queue; unset on exit.
  std::optional<Customer> moved;
};

/// Where a customer completing service at v goes next: nullopt when it leaves
/// the network (within one hop of its destination), otherwise the greedy next
/// node and the customer with transformed class and zeroed age.
std::optional<std::pair<NodeId, Customer>> route_completion(const Customer& served, NodeId v, const Graph& g,
                                                            const ClassTransitionTable& tt, Rng& rng);

/// ζ: completes service at v and routes the customer. The caller appends
/// `moved` to whichever copy of the target node it selects.
TransferOutcome transfer(QueueState q_v, NodeId v, const Discipline& d, const Graph& g,
                         const ClassTransitionTable& tt, Rng& rng);

}  // namespace swapnet
