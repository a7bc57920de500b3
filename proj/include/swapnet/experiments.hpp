#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "swapnet/config.hpp"
#include "swapnet/finite_network.hpp"
#include "swapnet/generators.hpp"
#include "swapnet/metrics.hpp"
#include "swapnet/nlmp_ode.hpp"
#include "swapnet/nlmp_picard.hpp"

namespace swapnet {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

/// RFC-4180 writer: CRLF line ends; fields with commas, quotes or line breaks
/// are quoted and inner quotes doubled.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  static std::string escape(std::string_view field);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

/// Runs `jobs` independent tasks on up to `threads` workers.
void parallel_jobs(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& job);

/// Per-node marginals of the limiting process at the requested times.
struct ReferenceSolution {
  /// "ode" for memoryless services, "picard" otherwise.
  std::string method;
  std::vector<double> times;
  /// [time][node]
  std::vector<std::vector<Marginal>> marginals;
  double runtime_seconds = 0.0;
};

ReferenceSolution solve_reference(const ExperimentConfig& cfg, const std::vector<double>& times, unsigned threads = 1);

struct ConvergenceOptions {
  unsigned threads = 1;
  std::size_t resamples = 2000;
  double level = 0.95;
};

struct ConvergenceRow {
  std::size_t n = 0;
  double t = 0.0;
  std::string node;
  double tv = 0.0;
  Interval ci;
};

/// Node-averaged TV for one (N, t).
struct TrendRow {
  std::size_t n = 0;
  double t = 0.0;
  double tv = 0.0;
  Interval ci;
};

struct RuntimeRow {
  std::string label;
  double seconds = 0.0;
};

struct ComparisonReport {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t seeds = 0;
  std::string method;
  ObservationSpec observation;
  std::vector<std::size_t> copies;
  std::vector<double> times;
  std::vector<std::string> nodes;
  std::vector<ConvergenceRow> rows;
  std::vector<TrendRow> trends;
  /// [n][t][node], averaged over seeds.
  std::vector<std::vector<std::vector<Marginal>>> empirical;
  /// [t][node]
  std::vector<std::vector<Marginal>> reference;
  std::vector<RuntimeRow> runtimes;

  const TrendRow& trend(std::size_t n, double t) const;
};

/// For every N, cfg.seeds independent runs of the N-copy network from i.i.d.
/// initial queues; seed-averaged marginals are compared with the limit by TV,
/// with percentile bootstrap intervals over seeds.
ComparisonReport run_convergence_study(const ExperimentConfig& cfg, const std::vector<std::size_t>& n_list,
                                       const std::vector<double>& t_list, const ConvergenceOptions& opts = {});

nlohmann::json summary_json(const ComparisonReport& report);
/// Rebuilds the tabular part of a report (no marginals, no runtimes).
ComparisonReport report_from_summary(const nlohmann::json& summary);
ComparisonReport load_summary(const std::filesystem::path& path);

/// Writes convergence.csv, trend.csv, marginals_long.csv, summary.json and
/// runtimes.csv. Everything except runtimes.csv depends only on the report's
/// values. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir);

/// time, node, len_0..len_cap, customers_in_system and event counters.
void write_network_trajectory(std::ostream& out, const Model& model, const Trajectory& traj,
                              const ObservationSpec& spec);
/// Ensemble snapshots in the same layout as the network trajectory.
void write_ensemble_trajectory(std::ostream& out, const Model& model, const std::vector<double>& times,
                               const std::vector<NodeEnsemble>& snapshots, const ObservationSpec& spec);
/// Sparse rows time, node, state_index, probability, leak.
void write_ode_trajectory(std::ostream& out, const NlmpOde& ode, const OdeTrajectory& traj);
/// state_index, length, word.
void write_state_index(std::ostream& out, const Model& model, const StateIndex& index);
/// Knot values: t, edge, class, dest, rate; `t0` shifts the window.
void write_rate_grid(std::ostream& out, const Model& model, const RateGrid& grid, double t0 = 0.0,
                     bool with_header = true);
/// from, dest, next, probability for every pair at distance > 1.
void write_route_table(std::ostream& out, const Graph& graph);

struct GeneratorRow {
  std::size_t n = 0;
  std::string f_id;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  std::size_t samples = 0;
};

/// Standard test functions over the first nodes of a model: one linear, one
/// quadratic, one cubic and one with an age ramp.
std::vector<TestFunction> standard_test_functions(const Model& model);
std::vector<GeneratorRow> run_generator_check(const ExperimentConfig& cfg, unsigned threads = 1);
void write_generator_rows(std::ostream& out, const std::vector<GeneratorRow>& rows);

std::string letter_name(const Model& model, const Letter& l);

}  // namespace swapnet
