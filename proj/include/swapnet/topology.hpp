#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace swapnet {

using NodeId = std::uint32_t;

/// Adjacency description as it appears in a config file.
struct GraphSpec {
  struct Edge {
    std::string a;
    std::string b;
    double swap_rate = 0.0;
  };
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  /// Strict upper bound on every swap rate.
  double swap_rate_bound = std::numeric_limits<double>::infinity();
  /// Maximum vertex degree allowed; 0 disables the check.
  std::size_t degree_bound = 0;
};

/// All-pairs hop distances, dense row-major.
class DistanceTable {
 public:
  DistanceTable() = default;
  DistanceTable(std::size_t n, std::vector<int> dist) : n_(n), dist_(std::move(dist)) {}

  int operator()(NodeId a, NodeId b) const { return dist_[static_cast<std::size_t>(a) * n_ + b]; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::vector<int> dist_;
};

struct Edge {
  NodeId a;
  NodeId b;
  double swap_rate;
};

/// Finite connected graph with swap rates on edges. Immutable after build();
/// node indices follow the order of GraphSpec::nodes.
class Graph {
 public:
  static Graph build(const GraphSpec& spec);

  /// Path v0 - v1 - ... - v{n-1} with a uniform swap rate.
  static Graph path(std::size_t n, double swap_rate);
  /// w x h grid, nodes named "(x,y)" in row-major order of y then x.
  static Graph grid(std::size_t w, std::size_t h, double swap_rate);

  std::size_t size() const { return names_.size(); }
  const std::string& name(NodeId v) const { return names_[v]; }
  NodeId index(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::span<const NodeId> neighbors(NodeId v) const { return adjacency_[v]; }
  std::span<const Edge> edges() const { return edges_; }
  /// Zero when v and u are not adjacent.
  double swap_rate(NodeId v, NodeId u) const;
  double max_swap_rate() const;
  /// Σ_{u∼v} β_{vu}: rate at which one server at v swaps, independent of N.
  double total_swap_rate(NodeId v) const;
  std::size_t max_degree() const;
  /// Largest hop distance between two nodes.
  int diameter() const;

  const DistanceTable& distances() const { return dist_; }
  int dist(NodeId a, NodeId b) const { return dist_(a, b); }

  /// Neighbors of v one hop closer to dest.
  std::vector<NodeId> routing_candidates(NodeId v, NodeId dest) const;
  /// Greedy routing kernel: uniform over routing_candidates. Only defined for
  /// dist(v, dest) > 1; closer customers leave the network.
  std::vector<std::pair<NodeId, double>> routing_kernel(NodeId v, NodeId dest) const;
  /// Probability that a customer at v bound for dest moves to w next.
  double routing_probability(NodeId v, NodeId dest, NodeId w) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, NodeId> lookup_;
  std::vector<std::vector<NodeId>> adjacency_;
  std::vector<Edge> edges_;
  std::vector<std::unordered_map<NodeId, double>> rates_;
  DistanceTable dist_;
};

/// Breadth-first hop counts from every node.
DistanceTable distances(const Graph& g);

}  // namespace swapnet
