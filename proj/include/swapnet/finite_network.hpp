#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "swapnet/metrics.hpp"
#include "swapnet/model.hpp"
#include "swapnet/queue_core.hpp"
#include "swapnet/random.hpp"

namespace swapnet {

enum class EventKind { Arrival, Completion, Swap };

struct Event {
  EventKind kind = EventKind::Arrival;
  /// Absolute time of the event.
  double time = 0.0;
  NodeId node = 0;
  std::size_t copy = 0;
  /// Swap partner; unused for other kinds.
  NodeId other_node = 0;
  std::size_t other_copy = 0;
  /// Arrival stream index; unused for other kinds.
  std::size_t stream = 0;
  bool operator==(const Event&) const = default;
};

struct EventCounters {
  std::uint64_t arrivals = 0;
  std::uint64_t completions = 0;
  std::uint64_t exits = 0;
  std::uint64_t transits = 0;
  std::uint64_t swaps = 0;
  std::uint64_t total() const { return arrivals + completions + swaps; }
};

struct RunOptions;
struct Trajectory;

/// Atom-1/N measure of the N queue states at one node.
struct EmpiricalMeasure {
  NodeId node = 0;
  std::vector<QueueState> atoms;
  double weight() const { return atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()); }
  Marginal marginal(const ObservationSpec& spec) const;
};

/// Full configuration of the N-fold mean-field network on G × {1..N}.
/// Attained service is advanced lazily: only the customer in service ages, so
/// each server slot remembers when it was last brought up to date.
class NetworkState {
 public:
  NetworkState(const Model& model, std::size_t copies, std::uint64_t seed);

  const Model& model() const { return *model_; }
  std::size_t copies() const { return copies_; }
  double clock() const { return clock_; }
  const EventCounters& counters() const { return counters_; }
  std::uint64_t customers_in_system() const { return in_system_; }
  /// Customers placed directly (initial state) plus external arrivals.
  std::uint64_t entries() const;

  /// Queue at (v, k) with every age brought up to the current clock.
  QueueState queue(NodeId v, std::size_t k) const;
  void set_queue(NodeId v, std::size_t k, QueueState q);

  /// Time-weighted occupancy of capped queue lengths per node, averaged over
  /// copies; enabled by track_occupancy().
  void track_occupancy(std::size_t length_cap);
  std::vector<double> occupancy(NodeId v) const;

 private:
  friend std::optional<Event> next_event(NetworkState& s);
  friend void apply_event(NetworkState& s, const Event& e);
  friend Trajectory run(NetworkState& s, double horizon, std::span<const double> snapshot_times,
                        const RunOptions& opts);

  struct Slot {
    QueueState queue;
    std::size_t in_service = 0;
    double last_update = 0.0;
    double completion_time = std::numeric_limits<double>::infinity();
    std::uint64_t version = 0;
  };
  struct Timer {
    double time;
    std::size_t slot;
    std::uint64_t version;
    bool operator>(const Timer& o) const { return time != o.time ? time > o.time : slot > o.slot; }
  };

  std::size_t slot_index(NodeId v, std::size_t k) const { return static_cast<std::size_t>(v) * copies_ + k; }
  void touch(Slot& slot);
  void reschedule(std::size_t index);
  void relocate(QueueState& q, NodeId from, NodeId to);
  void advance_clock(double t);
  void count_length(NodeId v, std::size_t length, int delta);

  const Model* model_;
  std::size_t copies_;
  double clock_ = 0.0;
  Rng rng_;
  EventCounters counters_;
  std::uint64_t in_system_ = 0;
  std::int64_t injected_ = 0;
  std::vector<Slot> slots_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  double arrival_rate_ = 0.0;
  double swap_rate_ = 0.0;
  std::size_t occupancy_cap_ = 0;
  std::vector<std::vector<std::uint64_t>> length_counts_;
  std::vector<std::vector<double>> occupancy_time_;
};

/// N i.i.d. initial queues per node drawn from `init`; clock at zero.
NetworkState init_network(const Model& model, std::size_t copies, const InitialLaw& init, std::uint64_t seed);

/// Races arrivals (λ per copy), swaps (β/N per copy pair across each edge) and
/// scheduled completions. nullopt when nothing can ever happen.
std::optional<Event> next_event(NetworkState& s);

void apply_event(NetworkState& s, const Event& e);

struct Snapshot {
  double time = 0.0;
  std::vector<Marginal> marginals;
  std::uint64_t customers_in_system = 0;
  EventCounters counters;
  /// Populated only when RunOptions::keep_full_states is set.
  std::vector<EmpiricalMeasure> measures;
};

struct RunOptions {
  ObservationSpec observation;
  std::uint64_t event_budget = 100'000'000;
  bool keep_full_states = false;
  /// When set, every applied event is appended.
  std::vector<Event>* trace = nullptr;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
};

/// Runs until the clock reaches `horizon`. The first snapshot is the initial
/// state; the others are taken at the requested times.
Trajectory run(NetworkState& s, double horizon, std::span<const double> snapshot_times, const RunOptions& opts = {});

EmpiricalMeasure empirical_measure(const NetworkState& s, NodeId v);

}  // namespace swapnet
