#include "swapnet/topology.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "swapnet/error.hpp"

namespace swapnet {

namespace {

std::vector<int> bfs_all_pairs(const std::vector<std::vector<NodeId>>& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<int> dist(n * n, -1);
  std::deque<NodeId> frontier;
  for (NodeId s = 0; s < n; ++s) {
    int* row = dist.data() + static_cast<std::size_t>(s) * n;
    row[s] = 0;
    frontier.assign(1, s);
    while (!frontier.empty()) {
      const NodeId v = frontier.front();
      frontier.pop_front();
      for (NodeId u : adjacency[v]) {
        if (row[u] < 0) {
          row[u] = row[v] + 1;
          frontier.push_back(u);
        }
      }
    }
  }
  return dist;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::SwapRateBoundExceeded: return "SwapRateBoundExceeded";
    case ErrorCode::DegreeBoundExceeded: return "DegreeBoundExceeded";
    case ErrorCode::SameNode: return "SameNode";
    case ErrorCode::DestinationTooClose: return "DestinationTooClose";
    case ErrorCode::EmptyQueue: return "EmptyQueue";
    case ErrorCode::NonZeroAge: return "NonZeroAge";
    case ErrorCode::MissingEntry: return "MissingEntry";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InconsistentEvent: return "InconsistentEvent";
    case ErrorCode::EventBudgetExceeded: return "EventBudgetExceeded";
    case ErrorCode::TruncationTooLarge: return "TruncationTooLarge";
    case ErrorCode::MassLeakExceeded: return "MassLeakExceeded";
    case ErrorCode::RateBoundExceeded: return "RateBoundExceeded";
    case ErrorCode::EnsembleTooSmall: return "EnsembleTooSmall";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NoContraction: return "NoContraction";
    case ErrorCode::WeightMismatch: return "WeightMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Graph Graph::build(const GraphSpec& spec) {
  if (spec.nodes.empty()) throw Error(ErrorCode::InvalidConfig, "graph needs at least one node");
  Graph g;
  g.names_ = spec.nodes;
  for (NodeId i = 0; i < g.names_.size(); ++i) {
    if (!g.lookup_.emplace(g.names_[i], i).second) {
      throw Error(ErrorCode::InvalidConfig, "node '" + g.names_[i] + "' listed twice");
    }
  }
  g.adjacency_.resize(g.size());
  g.rates_.resize(g.size());
  std::set<std::pair<NodeId, NodeId>> seen;
  for (const auto& e : spec.edges) {
    if (!g.contains(e.a) || !g.contains(e.b)) {
      throw Error(ErrorCode::UnknownNode, "edge " + e.a + "-" + e.b + " references an unknown node");
    }
    NodeId a = g.index(e.a);
    NodeId b = g.index(e.b);
    if (a == b) throw Error(ErrorCode::SelfLoop, "self-loop at " + e.a);
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second) {
      throw Error(ErrorCode::DuplicateEdge, "edge " + e.a + "-" + e.b + " listed twice");
    }
    if (!(e.swap_rate >= 0.0)) {
      throw Error(ErrorCode::NegativeRate, "swap rate on " + e.a + "-" + e.b + " is negative");
    }
    if (!(e.swap_rate < spec.swap_rate_bound)) {
      throw Error(ErrorCode::SwapRateBoundExceeded,
                  "swap rate " + std::to_string(e.swap_rate) + " on " + e.a + "-" + e.b +
                      " violates swap_rate_bound " + std::to_string(spec.swap_rate_bound));
    }
    g.adjacency_[a].push_back(b);
    g.adjacency_[b].push_back(a);
    g.rates_[a][b] = e.swap_rate;
    g.rates_[b][a] = e.swap_rate;
    g.edges_.push_back({a, b, e.swap_rate});
  }
  for (auto& adj : g.adjacency_) std::sort(adj.begin(), adj.end());
  if (spec.degree_bound > 0 && g.max_degree() > spec.degree_bound) {
    throw Error(ErrorCode::DegreeBoundExceeded, "max degree " + std::to_string(g.max_degree()) +
                                                    " exceeds degree_bound " +
                                                    std::to_string(spec.degree_bound));
  }
  g.dist_ = DistanceTable(g.size(), bfs_all_pairs(g.adjacency_));
  for (NodeId v = 0; v < g.size(); ++v) {
    if (g.dist_(0, v) < 0) {
      throw Error(ErrorCode::DisconnectedGraph, "node '" + g.names_[v] + "' unreachable from '" +
                                                    g.names_[0] + "'");
    }
  }
  return g;
}

Graph Graph::path(std::size_t n, double swap_rate) {
  GraphSpec spec;
  for (std::size_t i = 0; i < n; ++i) spec.nodes.push_back("v" + std::to_string(i));
  for (std::size_t i = 0; i + 1 < n; ++i) spec.edges.push_back({spec.nodes[i], spec.nodes[i + 1], swap_rate});
  return build(spec);
}

Graph Graph::grid(std::size_t w, std::size_t h, double swap_rate) {
  GraphSpec spec;
  auto label = [](std::size_t x, std::size_t y) {
    return "(" + std::to_string(x) + "," + std::to_string(y) + ")";
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) spec.nodes.push_back(label(x, y));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) spec.edges.push_back({label(x, y), label(x + 1, y), swap_rate});
      if (y + 1 < h) spec.edges.push_back({label(x, y), label(x, y + 1), swap_rate});
    }
  }
  return build(spec);
}

NodeId Graph::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw Error(ErrorCode::UnknownNode, "unknown node '" + std::string(name) + "'");
  return it->second;
}

bool Graph::contains(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }

double Graph::swap_rate(NodeId v, NodeId u) const {
  auto it = rates_[v].find(u);
  return it == rates_[v].end() ? 0.0 : it->second;
}

double Graph::max_swap_rate() const {
  double m = 0.0;
  for (const auto& e : edges_) m = std::max(m, e.swap_rate);
  return m;
}

double Graph::total_swap_rate(NodeId v) const {
  double total = 0.0;
  for (NodeId u : adjacency_[v]) total += swap_rate(v, u);
  return total;
}

std::size_t Graph::max_degree() const {
  std::size_t d = 0;
  for (const auto& adj : adjacency_) d = std::max(d, adj.size());
  return d;
}

int Graph::diameter() const {
  int d = 0;
  for (NodeId a = 0; a < size(); ++a)
    for (NodeId b = 0; b < size(); ++b) d = std::max(d, dist(a, b));
  return d;
}

std::vector<NodeId> Graph::routing_candidates(NodeId v, NodeId dest) const {
  if (v == dest) throw Error(ErrorCode::SameNode, "routing from " + names_[v] + " to itself");
  std::vector<NodeId> out;
  const int d = dist(v, dest);
  for (NodeId w : adjacency_[v]) {
    if (dist(w, dest) + 1 == d) out.push_back(w);
  }
  return out;
}

std::vector<std::pair<NodeId, double>> Graph::routing_kernel(NodeId v, NodeId dest) const {
  if (dist(v, dest) <= 1) {
    throw Error(ErrorCode::DestinationTooClose,
                names_[v] + " is within one hop of " + names_[dest] + "; the customer exits");
  }
  auto cands = routing_candidates(v, dest);
  const double p = 1.0 / static_cast<double>(cands.size());
  std::vector<std::pair<NodeId, double>> out;
  out.reserve(cands.size());
  for (NodeId w : cands) out.emplace_back(w, p);
  return out;
}

double Graph::routing_probability(NodeId v, NodeId dest, NodeId w) const {
  if (dist(v, dest) <= 1) return 0.0;
  for (const auto& [node, p] : routing_kernel(v, dest)) {
    if (node == w) return p;
  }
  return 0.0;
}

DistanceTable distances(const Graph& g) {
  std::vector<std::vector<NodeId>> adjacency(g.size());
  for (NodeId v = 0; v < g.size(); ++v) {
    auto nb = g.neighbors(v);
    adjacency[v].assign(nb.begin(), nb.end());
  }
  return DistanceTable(g.size(), bfs_all_pairs(adjacency));
}

}  // namespace swapnet
