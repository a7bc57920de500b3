#include "swapnet/finite_network.hpp"

#include <algorithm>
#include <cmath>

#include "swapnet/error.hpp"

namespace swapnet {

Marginal EmpiricalMeasure::marginal(const ObservationSpec& spec) const {
  Marginal m(spec);
  const double w = weight();
  for (const auto& q : atoms) m.add(describe(q, spec), w);
  return m;
}

NetworkState::NetworkState(const Model& model, std::size_t copies, std::uint64_t seed)
    : model_(&model), copies_(copies), rng_(seed) {
  if (copies == 0) throw Error(ErrorCode::InvalidConfig, "the network needs at least one copy");
  if (model.laws.size() != model.num_classes() * model.num_nodes() || model.disciplines.size() != model.num_nodes()) {
    throw Error(ErrorCode::InvalidConfig, "model is missing service laws or disciplines");
  }
  slots_.resize(model.num_nodes() * copies);
  double lambda = 0.0;
  for (const auto& s : model.arrivals.streams()) lambda += s.rate;
  double beta = 0.0;
  for (const auto& e : model.graph.edges()) beta += e.swap_rate;
  arrival_rate_ = lambda * static_cast<double>(copies);
  swap_rate_ = beta * static_cast<double>(copies);
}

std::uint64_t NetworkState::entries() const {
  return static_cast<std::uint64_t>(injected_ + static_cast<std::int64_t>(counters_.arrivals));
}

QueueState NetworkState::queue(NodeId v, std::size_t k) const {
  const Slot& slot = slots_[slot_index(v, k)];
  QueueState q = slot.queue;
  if (!q.empty()) q.customers[slot.in_service].age += clock_ - slot.last_update;
  return q;
}

void NetworkState::set_queue(NodeId v, std::size_t k, QueueState q) {
  const std::size_t index = slot_index(v, k);
  Slot& slot = slots_[index];
  touch(slot);
  count_length(v, slot.queue.size(), -1);
  in_system_ -= slot.queue.size();
  injected_ -= static_cast<std::int64_t>(slot.queue.size());
  slot.queue = std::move(q);
  in_system_ += slot.queue.size();
  injected_ += static_cast<std::int64_t>(slot.queue.size());
  count_length(v, slot.queue.size(), +1);
  reschedule(index);
}

void NetworkState::track_occupancy(std::size_t length_cap) {
  occupancy_cap_ = length_cap;
  length_counts_.assign(model_->num_nodes(), std::vector<std::uint64_t>(length_cap + 1, 0));
  occupancy_time_.assign(model_->num_nodes(), std::vector<double>(length_cap + 1, 0.0));
  for (NodeId v = 0; v < model_->num_nodes(); ++v) {
    for (std::size_t k = 0; k < copies_; ++k) {
      length_counts_[v][std::min(slots_[slot_index(v, k)].queue.size(), length_cap)] += 1;
    }
  }
}

std::vector<double> NetworkState::occupancy(NodeId v) const {
  std::vector<double> out = occupancy_time_.at(v);
  const double norm = clock_ * static_cast<double>(copies_);
  if (norm > 0.0) {
    for (auto& x : out) x /= norm;
  }
  return out;
}

void NetworkState::count_length(NodeId v, std::size_t length, int delta) {
  if (length_counts_.empty()) return;
  auto& c = length_counts_[v][std::min(length, occupancy_cap_)];
  c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
}

void NetworkState::advance_clock(double t) {
  if (t < clock_) throw Error(ErrorCode::InconsistentEvent, "event time precedes the clock");
  if (!length_counts_.empty()) {
    const double dt = t - clock_;
    for (std::size_t v = 0; v < length_counts_.size(); ++v) {
      for (std::size_t l = 0; l <= occupancy_cap_; ++l) {
        occupancy_time_[v][l] += dt * static_cast<double>(length_counts_[v][l]);
      }
    }
  }
  clock_ = t;
}

void NetworkState::touch(Slot& slot) {
  if (!slot.queue.empty()) slot.queue.customers[slot.in_service].age += clock_ - slot.last_update;
  slot.last_update = clock_;
}

void NetworkState::reschedule(std::size_t index) {
  Slot& slot = slots_[index];
  ++slot.version;
  if (slot.queue.empty()) {
    slot.completion_time = std::numeric_limits<double>::infinity();
    return;
  }
  const auto v = static_cast<NodeId>(index / copies_);
  slot.in_service = select_in_service(slot.queue, model_->discipline(v), model_->graph.distances(), v);
  Customer& c = slot.queue.customers[slot.in_service];
  if (!c.requirement) c.requirement = model_->law(c.klass, v).sample_residual(rng_, c.age);
  slot.completion_time = clock_ + std::max(0.0, *c.requirement - c.age);
  timers_.push({slot.completion_time, index, slot.version});
}

void NetworkState::relocate(QueueState& q, NodeId from, NodeId to) {
  // A requirement drawn under one node's law is redrawn from the new node's
  // law conditioned on the service already received.
  for (auto& c : q.customers) {
    if (!c.requirement) continue;
    if (model_->law(c.klass, from) == model_->law(c.klass, to)) continue;
    if (c.age > 0.0) {
      c.requirement = model_->law(c.klass, to).sample_residual(rng_, c.age);
    } else {
      c.requirement.reset();
    }
  }
}

NetworkState init_network(const Model& model, std::size_t copies, const InitialLaw& init, std::uint64_t seed) {
  if (init.num_nodes() != model.num_nodes()) {
    throw Error(ErrorCode::InvalidConfig, "initial law does not cover every node");
  }
  NetworkState s(model, copies, seed);
  Rng rng = Rng::derive(seed, 0x1217);
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    for (std::size_t k = 0; k < copies; ++k) {
      QueueState q = init.sample(v, rng);
      if (!q.empty()) s.set_queue(v, k, std::move(q));
    }
  }
  return s;
}

std::optional<Event> next_event(NetworkState& s) {
  while (!s.timers_.empty()) {
    const auto& top = s.timers_.top();
    if (s.slots_[top.slot].version == top.version) break;
    s.timers_.pop();
  }
  const double constant_rate = s.arrival_rate_ + s.swap_rate_;
  const double dwell = s.rng_.exponential(constant_rate);
  const double completion = s.timers_.empty() ? std::numeric_limits<double>::infinity() : s.timers_.top().time;
  if (std::isinf(dwell) && std::isinf(completion)) return std::nullopt;

  Event e;
  if (completion <= s.clock_ + dwell) {
    const std::size_t index = s.timers_.top().slot;
    e.kind = EventKind::Completion;
    e.time = completion;
    e.node = static_cast<NodeId>(index / s.copies_);
    e.copy = index % s.copies_;
    return e;
  }
  e.time = s.clock_ + dwell;
  const Model& m = *s.model_;
  double u = s.rng_.uniform() * constant_rate;
  if (u < s.arrival_rate_) {
    e.kind = EventKind::Arrival;
    u /= static_cast<double>(s.copies_);
    const auto& streams = m.arrivals.streams();
    std::size_t i = 0;
    for (; i + 1 < streams.size(); ++i) {
      if (u < streams[i].rate) break;
      u -= streams[i].rate;
    }
    e.stream = i;
    e.node = streams[i].node;
    e.copy = s.rng_.index(s.copies_);
  } else {
    e.kind = EventKind::Swap;
    u = (u - s.arrival_rate_) / static_cast<double>(s.copies_);
    const auto edges = m.graph.edges();
    std::size_t i = 0;
    for (; i + 1 < edges.size(); ++i) {
      if (u < edges[i].swap_rate) break;
      u -= edges[i].swap_rate;
    }
    e.node = edges[i].a;
    e.other_node = edges[i].b;
    e.copy = s.rng_.index(s.copies_);
    e.other_copy = s.rng_.index(s.copies_);
  }
  return e;
}

void apply_event(NetworkState& s, const Event& e) {
  const Model& m = *s.model_;
  switch (e.kind) {
    case EventKind::Arrival: {
      if (e.stream >= m.arrivals.streams().size()) throw Error(ErrorCode::InconsistentEvent, "unknown stream");
      const auto& stream = m.arrivals.streams()[e.stream];
      s.advance_clock(e.time);
      const std::size_t index = s.slot_index(stream.node, e.copy);
      auto& slot = s.slots_[index];
      s.touch(slot);
      s.count_length(stream.node, slot.queue.size(), -1);
      slot.queue.customers.push_back({stream.klass, stream.dest, 0.0, std::nullopt});
      s.count_length(stream.node, slot.queue.size(), +1);
      ++s.in_system_;
      ++s.counters_.arrivals;
      s.reschedule(index);
      break;
    }
    case EventKind::Completion: {
      const std::size_t index = s.slot_index(e.node, e.copy);
      auto& slot = s.slots_[index];
      if (slot.queue.empty() || slot.completion_time != e.time) {
        throw Error(ErrorCode::InconsistentEvent, "no completion scheduled at this slot and time");
      }
      s.advance_clock(e.time);
      s.touch(slot);
      s.count_length(e.node, slot.queue.size(), -1);
      const Customer served = slot.queue.customers[slot.in_service];
      slot.queue.customers.erase(slot.queue.customers.begin() + static_cast<std::ptrdiff_t>(slot.in_service));
      s.count_length(e.node, slot.queue.size(), +1);
      ++s.counters_.completions;
      if (auto next = route_completion(served, e.node, m.graph, m.transitions, s.rng_)) {
        const std::size_t target = s.slot_index(next->first, s.rng_.index(s.copies_));
        auto& dst = s.slots_[target];
        s.touch(dst);
        s.count_length(next->first, dst.queue.size(), -1);
        dst.queue.customers.push_back(next->second);
        s.count_length(next->first, dst.queue.size(), +1);
        ++s.counters_.transits;
        s.reschedule(target);
      } else {
        ++s.counters_.exits;
        --s.in_system_;
      }
      s.reschedule(index);
      break;
    }
    case EventKind::Swap: {
      if (m.graph.swap_rate(e.node, e.other_node) <= 0.0) {
        throw Error(ErrorCode::InconsistentEvent, "swap across a non-edge");
      }
      s.advance_clock(e.time);
      const std::size_t a = s.slot_index(e.node, e.copy);
      const std::size_t b = s.slot_index(e.other_node, e.other_copy);
      s.touch(s.slots_[a]);
      s.touch(s.slots_[b]);
      const std::size_t la = s.slots_[a].queue.size();
      const std::size_t lb = s.slots_[b].queue.size();
      s.count_length(e.node, la, -1);
      s.count_length(e.other_node, lb, -1);
      std::swap(s.slots_[a].queue, s.slots_[b].queue);
      s.count_length(e.node, lb, +1);
      s.count_length(e.other_node, la, +1);
      s.relocate(s.slots_[a].queue, e.other_node, e.node);
      s.relocate(s.slots_[b].queue, e.node, e.other_node);
      ++s.counters_.swaps;
      s.reschedule(a);
      s.reschedule(b);
      break;
    }
  }
}

EmpiricalMeasure empirical_measure(const NetworkState& s, NodeId v) {
  EmpiricalMeasure m;
  m.node = v;
  m.atoms.reserve(s.copies());
  for (std::size_t k = 0; k < s.copies(); ++k) m.atoms.push_back(s.queue(v, k));
  return m;
}

namespace {

Snapshot capture(const NetworkState& s, double t, const RunOptions& opts) {
  Snapshot snap;
  snap.time = t;
  snap.customers_in_system = s.customers_in_system();
  snap.counters = s.counters();
  for (NodeId v = 0; v < s.model().num_nodes(); ++v) {
    auto measure = empirical_measure(s, v);
    snap.marginals.push_back(measure.marginal(opts.observation));
    if (opts.keep_full_states) snap.measures.push_back(std::move(measure));
  }
  return snap;
}

}  // namespace

Trajectory run(NetworkState& s, double horizon, std::span<const double> snapshot_times, const RunOptions& opts) {
  if (!(horizon >= 0.0)) throw Error(ErrorCode::InvalidConfig, "horizon must be non-negative");
  std::vector<double> times(snapshot_times.begin(), snapshot_times.end());
  std::sort(times.begin(), times.end());
  times.erase(std::remove_if(times.begin(), times.end(), [&](double t) { return t <= s.clock() || t > horizon; }),
              times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  Trajectory traj;
  traj.snapshots.push_back(capture(s, s.clock(), opts));
  std::size_t next_snap = 0;
  std::uint64_t applied = 0;
  while (s.clock() < horizon || next_snap < times.size()) {
    auto e = next_event(s);
    const double t_event = e ? e->time : std::numeric_limits<double>::infinity();
    while (next_snap < times.size() && times[next_snap] <= std::min(t_event, horizon)) {
      s.advance_clock(times[next_snap]);
      traj.snapshots.push_back(capture(s, times[next_snap], opts));
      ++next_snap;
    }
    if (t_event > horizon) break;
    if (++applied > opts.event_budget) {
      throw Error(ErrorCode::EventBudgetExceeded, "more than " + std::to_string(opts.event_budget) + " events");
    }
    apply_event(s, *e);
    if (opts.trace) opts.trace->push_back(*e);
  }
  if (s.clock() < horizon) s.advance_clock(horizon);
  return traj;
}

}  // namespace swapnet
