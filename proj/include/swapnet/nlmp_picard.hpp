#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <vector>

#include "swapnet/metrics.hpp"
#include "swapnet/model.hpp"

namespace swapnet {

/// One directed transit stream: customers leaving `from` for `to`, carrying
/// `letter` as they arrive at `to`.
struct RateKey {
  NodeId from = 0;
  NodeId to = 0;
  Letter letter;
  auto operator<=>(const RateKey&) const = default;
};

/// Rate functions on a uniform grid over [0, T], linear between knots.
class RateGrid {
 public:
  RateGrid() = default;
  RateGrid(double horizon, std::size_t intervals);

  double horizon() const { return horizon_; }
  std::size_t intervals() const { return intervals_; }
  std::size_t knots() const { return intervals_ + 1; }
  double step() const { return horizon_ / static_cast<double>(intervals_); }
  double knot_time(std::size_t j) const { return step() * static_cast<double>(j); }

  /// Knot values of one stream; created as zeros on first access.
  std::vector<double>& series(const RateKey& key);
  const std::map<RateKey, std::vector<double>>& all() const { return series_; }
  /// Linear interpolation; zero for an absent stream.
  double value(const RateKey& key, double t) const;
  double max_value() const;
  /// Largest |slope| between adjacent knots.
  double max_slope() const;
  bool same_grid(const RateGrid& o) const;

 private:
  double horizon_ = 0.0;
  std::size_t intervals_ = 0;
  std::map<RateKey, std::vector<double>> series_;
};

/// Σ over streams of ∫₀ᵀ |λ¹ − λ²| dt, exact for piecewise-linear functions.
double rate_distance(const RateGrid& a, const RateGrid& b);
/// Σ over streams of ∫₀ᵀ |λ| dt.
double rate_norm(const RateGrid& a);

/// L1-nearest knot sequence with |x_{j+1} − x_j| ≤ L·step and x ≥ 0.
std::vector<double> lipschitz_project(const std::vector<double>& raw, double step, double lipschitz);
RateGrid lipschitz_project(const RateGrid& raw, double lipschitz);

/// Replica queues per node sharing one clock.
struct NodeEnsemble {
  double clock = 0.0;
  /// replicas[v][r]
  std::vector<std::vector<QueueState>> replicas;

  std::size_t size() const { return replicas.empty() ? 0 : replicas[0].size(); }
  Marginal marginal(NodeId v, const ObservationSpec& spec) const;
  double mean_length(NodeId v) const;
};

NodeEnsemble sample_ensemble(const Model& model, const InitialLaw& init, std::size_t replicas, std::uint64_t seed);

/// Per-node event totals of one ensemble run, split into replica batches.
struct EnsembleAccounting {
  std::size_t batches = 0;
  /// [node][batch]
  std::vector<std::vector<double>> external_arrivals;
  std::vector<std::vector<double>> transit_arrivals;
  std::vector<std::vector<double>> transit_departures;
  std::vector<std::vector<double>> exits;
  std::vector<std::vector<double>> initial_customers;
  std::vector<std::vector<double>> final_customers;
  std::vector<std::size_t> batch_sizes;
};

struct PicardOptions {
  /// Grid bins per window.
  std::size_t intervals = 10;
  std::size_t replicas = 1000;
  std::size_t min_replicas = 10;
  std::size_t batches = 10;
  /// Stopping tolerance on rate_distance between iterates.
  double tol = 1e-3;
  std::size_t max_iter = 30;
  /// Slope bound of the rate class; 0 picks 2·𝓕·(C + Σβ).
  double lipschitz = 0.0;
  /// Largest admissible rate; 0 picks twice the hazard bound.
  double rate_bound = 0.0;
  /// Upper limit for 𝓕·T and β·T.
  double smallness = 0.5;
  std::uint64_t seed = 1;
  /// Reuse the same replica random streams in every iteration.
  bool common_random_numbers = true;
  /// Noise floor = factor · ‖batch-means standard error‖₁; 0 disables it.
  double noise_floor_factor = 1.128 * 1.4142135623730951;
  unsigned threads = 1;
};

/// Result of one application of the map λ ↦ b.
struct DepartureEstimate {
  RateGrid rates;
  /// Batch-means standard error of the raw knot estimates.
  RateGrid standard_error;
  NodeEnsemble final;
  EnsembleAccounting accounting;
};

/// Transit streams the model can generate, given the letters that may be in
/// service; all other streams are identically zero.
std::vector<RateKey> transit_keys(const Model& model, const std::vector<Letter>& letters);

/// Simulates R replicas per node over [0, T] driven by the arrival streams
/// `lambda` and estimates the departure rate functions.
DepartureEstimate departure_rates(const Model& model, const NodeEnsemble& start, const RateGrid& lambda,
                                  const PicardOptions& opts, std::uint64_t seed);

struct PicardResult {
  RateGrid fixed_point;
  RateGrid standard_error;
  /// Distances between successive iterates.
  std::vector<double> distances;
  std::vector<double> noise_floors;
  std::size_t iterations = 0;
  bool converged = false;
  /// rate_distance(λ̄, ψ(λ̄)).
  double residual = 0.0;
  NodeEnsemble final;
  EnsembleAccounting accounting;
};

double default_lipschitz(const Model& model);

/// Iterates λ ↦ ψ(λ) from λ ≡ 0 on one window of length T.
PicardResult picard_solve(const Model& model, const NodeEnsemble& start, double window, const PicardOptions& opts);

struct WindowedResult {
  std::vector<PicardResult> windows;
  /// Ensembles at 0, T, 2T, ...
  std::vector<NodeEnsemble> snapshots;
};

WindowedResult windowed_solve(const Model& model, const NodeEnsemble& start, double horizon, double window,
                              const PicardOptions& opts);

}  // namespace swapnet
