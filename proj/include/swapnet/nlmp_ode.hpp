#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "swapnet/metrics.hpp"
#include "swapnet/model.hpp"

namespace swapnet {

/// Length-lexicographic enumeration of all words of length <= L over a fixed
/// alphabet of letters. Index 0 is the empty word.
class StateIndex {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  StateIndex(std::vector<Letter> alphabet, std::size_t max_length, std::size_t dimension_cap = 1'000'000);

  std::size_t size() const { return size_; }
  std::size_t max_length() const { return max_length_; }
  const std::vector<Letter>& alphabet() const { return alphabet_; }
  /// Position of a letter in the alphabet, or npos.
  std::size_t letter_index(const Letter& l) const;

  std::vector<Letter> word(std::size_t i) const;
  std::size_t length(std::size_t i) const;
  /// Index of a word, or npos when it is longer than L or uses a foreign letter.
  std::size_t index(std::span<const Letter> word) const;
  /// Index of word(i) followed by letter a; npos at length L.
  std::size_t append(std::size_t i, std::size_t a) const;

 private:
  std::vector<Letter> alphabet_;
  std::size_t max_length_;
  std::size_t size_ = 0;
  /// offsets_[l] = number of words shorter than l.
  std::vector<std::size_t> offsets_;
};

enum class AlphabetMode { Reachable, Full };

/// Words over the reachable letters (or all of K x V) up to length L.
StateIndex enumerate_states(const Model& model, std::size_t max_length, AlphabetMode mode = AlphabetMode::Reachable,
                            std::size_t dimension_cap = 1'000'000, const std::vector<Letter>& extra = {});

/// Per-node vectors over a StateIndex plus one leak slot per node. Used both
/// for probability measures and for signed perturbations.
class NodeVector {
 public:
  NodeVector() = default;
  NodeVector(std::size_t nodes, std::size_t states) : nodes_(nodes), states_(states), data_(nodes * (states + 1)) {}

  std::size_t nodes() const { return nodes_; }
  std::size_t states() const { return states_; }
  double& at(NodeId v, std::size_t i) { return data_[v * (states_ + 1) + i]; }
  double at(NodeId v, std::size_t i) const { return data_[v * (states_ + 1) + i]; }
  double& leak(NodeId v) { return data_[v * (states_ + 1) + states_]; }
  double leak(NodeId v) const { return data_[v * (states_ + 1) + states_]; }
  std::span<double> node(NodeId v) { return {data_.data() + v * (states_ + 1), states_}; }
  std::span<const double> node(NodeId v) const { return {data_.data() + v * (states_ + 1), states_}; }
  /// Σ_q x_v(q) + leak_v.
  double mass(NodeId v) const;
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  NodeVector& operator+=(const NodeVector& o);
  /// this += a * o
  NodeVector& axpy(double a, const NodeVector& o);
  NodeVector& operator*=(double a);
  bool operator==(const NodeVector&) const = default;

 private:
  std::size_t nodes_ = 0;
  std::size_t states_ = 0;
  std::vector<double> data_;
};

using TruncatedMeasure = NodeVector;
using SensitivityVector = NodeVector;

/// L1 norm including leak slots.
double l1_norm(const NodeVector& x);
double l1_distance(const NodeVector& a, const NodeVector& b);

struct OdeSnapshot {
  double time = 0.0;
  NodeVector value;
};

struct OdeTrajectory {
  std::vector<OdeSnapshot> snapshots;
  /// Number of entries clamped from a tiny negative value to zero.
  std::size_t clamped = 0;
  /// Largest |Σ_q μ_v(q) + leak_v − 1| seen after any step.
  double max_mass_error = 0.0;
  const NodeVector& final() const { return snapshots.back().value; }
};

struct OdeOptions {
  double dt = 0.01;
  double leak_tolerance = 1e-4;
  /// Times (besides 0 and the horizon) at which the state is recorded.
  std::vector<double> snapshot_times;
};

/// Evolution equation of the limiting network for memoryless service on a
/// length-truncated word space.
class NlmpOde {
 public:
  NlmpOde(const Model& model, StateIndex index);

  const Model& model() const { return *model_; }
  const StateIndex& states() const { return index_; }

  NodeVector zeros() const { return NodeVector(model_->num_nodes(), index_.size()); }
  /// δ_∅ at every node.
  TruncatedMeasure empty_measure() const;
  TruncatedMeasure from_initial_law(const InitialLaw& init) const;

  /// Arrival intensity of transit customers, indexed [target node][letter].
  std::vector<std::vector<double>> transit_rates(const NodeVector& mu) const;
  /// External arrival rates, indexed [node][letter].
  const std::vector<std::vector<double>>& external_rates() const { return external_; }

  NodeVector drift(const NodeVector& mu) const;
  /// Fréchet derivative of the drift at mu in direction h.
  NodeVector derivative(const NodeVector& mu, const NodeVector& h) const;

  OdeTrajectory integrate(const TruncatedMeasure& mu0, double horizon, const OdeOptions& opts = {}) const;
  /// Joint trajectory of (μ, h); the returned snapshots hold h.
  OdeTrajectory sensitivity(const TruncatedMeasure& mu0, const SensitivityVector& h0, double horizon,
                            const OdeOptions& opts = {}) const;

  Marginal marginal(const TruncatedMeasure& mu, NodeId v, const ObservationSpec& spec) const;

  /// Exponential rate of a class at a node.
  double service_rate(ClassId k, NodeId v) const { return rates_[k * model_->num_nodes() + v]; }
  /// Letter index of the customer in service in state i at v (npos for ∅).
  std::size_t served_letter(NodeId v, std::size_t i) const { return served_[v][i].letter; }
  /// State reached from i at v by a service completion.
  std::size_t after_service(NodeId v, std::size_t i) const { return served_[v][i].removed; }

  /// Bound on ‖g(μ)‖₁ over probability measures.
  double total_rate_bound() const;
  /// Growth constant for the linearized flow: ‖h(t)‖₁ ≤ ‖h0‖₁ exp(C t).
  double gronwall_constant() const;

 private:
  struct Served {
    std::size_t letter = StateIndex::npos;
    std::size_t removed = StateIndex::npos;
  };
  struct TransitRoute {
    std::size_t letter;
    NodeId target;
    std::size_t target_letter;
    double rate;
  };

  /// Adds to out the flows of x driven by the given arrival intensities; with
  /// `full` also the service and swap flows.
  void accumulate(const NodeVector& x, const std::vector<std::vector<double>>& in_rates, bool full,
                  NodeVector& out) const;
  std::vector<std::vector<double>> transit_from(const NodeVector& x) const;

  const Model* model_;
  StateIndex index_;
  std::vector<double> rates_;
  std::vector<std::vector<double>> external_;
  std::vector<std::vector<Served>> served_;
  /// Per source node: routes of a served letter to a neighbor.
  std::vector<std::vector<TransitRoute>> routes_;
};

}  // namespace swapnet
