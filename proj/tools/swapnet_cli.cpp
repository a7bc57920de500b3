#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "swapnet/config.hpp"
#include "swapnet/error.hpp"
#include "swapnet/experiments.hpp"

using namespace swapnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kOtherFailure = 1;
constexpr int kValidationFailure = 2;
constexpr int kNumericalFailure = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned threads = 1;
  bool quiet = false;
};

class Session {
 public:
  explicit Session(const Common& c) : c_(c), start_(std::chrono::steady_clock::now()) {
    cfg_ = load_config(c.config);
    if (c.seed) {
      cfg_.seed = *c.seed;
      cfg_.picard.seed = *c.seed;
    }
  }

  ExperimentConfig& cfg() { return cfg_; }
  unsigned threads() const { return c_.threads; }

  void log(const std::string& msg) const {
    if (!c_.quiet) std::cerr << msg << "\n";
  }

  fs::path file(const std::string& name) {
    std::error_code ec;
    fs::create_directories(c_.out, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + c_.out + "': " + ec.message());
    return fs::path(c_.out) / name;
  }

  void write(const std::string& name, const std::string& body) {
    const auto path = file(name);
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    log("wrote " + path.string());
  }

  void write_summary(json j) {
    j["schema"] = 1;
    j["config"] = cfg_.name;
    j["seed"] = cfg_.seed;
    write("summary.json", j.dump(2) + "\n");
  }

  void done() const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log("finished in " + format_number(secs) + " s");
  }

 private:
  Common c_;
  ExperimentConfig cfg_;
  std::chrono::steady_clock::time_point start_;
};

json counters_json(const EventCounters& c) {
  return {{"arrivals", c.arrivals},
          {"completions", c.completions},
          {"exits", c.exits},
          {"transits", c.transits},
          {"swaps", c.swaps}};
}

int cmd_validate(const Common& c) {
  Session s(c);
  const auto& m = s.cfg().model;
  std::cout << "valid: " << (s.cfg().name.empty() ? c.config : s.cfg().name) << " (" << m.num_nodes() << " nodes, "
            << m.graph.edges().size() << " edges, " << m.num_classes() << " classes, hazard bound "
            << format_number(m.hazard_bound()) << ")\n";
  return kOk;
}

int cmd_simulate(const Common& c, std::optional<std::size_t> copies) {
  Session s(c);
  auto& cfg = s.cfg();
  const std::size_t n = copies ? *copies : cfg.copies.front();
  auto state = init_network(cfg.model, n, cfg.initial, cfg.seed);
  state.track_occupancy(cfg.observation.length_cap);
  RunOptions ro;
  ro.observation = cfg.observation;
  const auto traj = run(state, cfg.horizon, cfg.snapshot_times, ro);

  std::ostringstream csv;
  write_network_trajectory(csv, cfg.model, traj, cfg.observation);
  s.write("trajectory.csv", csv.str());

  json occ = json::object();
  for (NodeId v = 0; v < cfg.model.num_nodes(); ++v) occ[cfg.model.graph.name(v)] = state.occupancy(v);
  s.write_summary({{"command", "simulate"},
                   {"copies", n},
                   {"horizon", cfg.horizon},
                   {"customers_in_system", state.customers_in_system()},
                   {"counters", counters_json(state.counters())},
                   {"time_average_length_distribution", occ}});
  s.done();
  return kOk;
}

int cmd_solve_ode(const Common& c) {
  Session s(c);
  auto& cfg = s.cfg();
  std::vector<Letter> extra;
  for (NodeId v = 0; v < cfg.initial.num_nodes(); ++v)
    for (const auto& [word, p] : cfg.initial.atoms(v)) extra.insert(extra.end(), word.begin(), word.end());
  NlmpOde ode(cfg.model, enumerate_states(cfg.model, cfg.truncation, AlphabetMode::Reachable, 1'000'000, extra));
  OdeOptions opts;
  opts.dt = cfg.ode_dt;
  opts.leak_tolerance = cfg.leak_tolerance;
  opts.snapshot_times = cfg.snapshot_times;
  const auto traj = ode.integrate(ode.from_initial_law(cfg.initial), cfg.horizon, opts);

  std::ostringstream csv;
  write_ode_trajectory(csv, ode, traj);
  s.write("ode_trajectory.csv", csv.str());
  std::ostringstream states;
  write_state_index(states, cfg.model, ode.states());
  s.write("states.csv", states.str());

  json leaks = json::object();
  json lengths = json::object();
  for (NodeId v = 0; v < cfg.model.num_nodes(); ++v) {
    leaks[cfg.model.graph.name(v)] = traj.final().leak(v);
    lengths[cfg.model.graph.name(v)] = ode.marginal(traj.final(), v, cfg.observation).length_histogram();
  }
  s.write_summary({{"command", "solve-ode"},
                   {"states", ode.states().size()},
                   {"horizon", cfg.horizon},
                   {"clamped", traj.clamped},
                   {"max_mass_error", traj.max_mass_error},
                   {"final_leak", leaks},
                   {"final_length_distribution", lengths}});
  s.done();
  return kOk;
}

int cmd_solve_picard(const Common& c) {
  Session s(c);
  auto& cfg = s.cfg();
  auto opts = cfg.picard;
  opts.threads = s.threads();
  const double window = cfg.picard_window;
  const auto steps = std::max<long long>(1, std::llround(cfg.horizon / window));
  const double horizon = window * static_cast<double>(steps);
  const auto start = sample_ensemble(cfg.model, cfg.initial, opts.replicas, cfg.seed);
  const auto res = windowed_solve(cfg.model, start, horizon, window, opts);

  std::ostringstream rates;
  bool converged = true;
  json windows = json::array();
  std::vector<double> times;
  for (std::size_t j = 0; j < res.windows.size(); ++j) {
    const auto& w = res.windows[j];
    write_rate_grid(rates, cfg.model, w.fixed_point, window * static_cast<double>(j), j == 0);
    converged = converged && w.converged;
    windows.push_back({{"index", j},
                       {"iterations", w.iterations},
                       {"converged", w.converged},
                       {"residual", w.residual},
                       {"distances", w.distances},
                       {"noise_floors", w.noise_floors}});
  }
  for (std::size_t j = 0; j < res.snapshots.size(); ++j) times.push_back(window * static_cast<double>(j));
  s.write("rates.csv", rates.str());
  std::ostringstream ens;
  write_ensemble_trajectory(ens, cfg.model, times, res.snapshots, cfg.observation);
  s.write("ensemble.csv", ens.str());
  s.write_summary({{"command", "solve-picard"},
                   {"window", window},
                   {"horizon", horizon},
                   {"replicas", opts.replicas},
                   {"converged", converged},
                   {"windows", windows}});
  s.done();
  if (!converged) {
    std::cerr << "error: the iteration reached max_iter without meeting the tolerance\n";
    return kNumericalFailure;
  }
  return kOk;
}

int cmd_generator_check(const Common& c) {
  Session s(c);
  const auto rows = run_generator_check(s.cfg(), s.threads());
  std::ostringstream csv;
  write_generator_rows(csv, rows);
  s.write("generator.csv", csv.str());
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"n", r.n}, {"f_id", r.f_id}, {"mean_gap", r.mean_gap}, {"max_gap", r.max_gap},
                 {"samples", r.samples}});
  s.write_summary({{"command", "generator-check"}, {"rows", j}});
  s.done();
  return kOk;
}

int cmd_converge(const Common& c) {
  Session s(c);
  auto& cfg = s.cfg();
  ConvergenceOptions opts;
  opts.threads = s.threads();
  auto times = cfg.snapshot_times;
  if (times.empty()) times.push_back(cfg.horizon);
  const auto report = run_convergence_study(cfg, cfg.copies, times, opts);
  for (const auto& p : emit_report(report, c.out)) s.log("wrote " + p.string());
  for (const auto& tr : report.trends)
    s.log("N=" + std::to_string(tr.n) + " t=" + format_number(tr.t) + " tv=" + format_number(tr.tv) + " ci=[" +
          format_number(tr.ci.lo) + ", " + format_number(tr.ci.hi) + "]");
  s.done();
  return kOk;
}

int cmd_route_table(const Common& c) {
  Session s(c);
  std::ostringstream csv;
  write_route_table(csv, s.cfg().model.graph);
  s.write("routes.csv", csv.str());
  if (!c.quiet) std::cout << csv.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field queueing networks with swapping servers"};
  app.require_subcommand(1);
  Common common;
  std::optional<std::size_t> copies;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", common.config, "Experiment config (JSON, schema 1)")->required();
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_flag("--quiet", common.quiet, "Suppress progress output");
  };
  auto* validate = app.add_subcommand("validate", "Load and validate a config");
  auto* simulate = app.add_subcommand("simulate", "Simulate the N-copy network");
  simulate->add_option("--copies", copies, "Copies N (default: first entry of the config list)")
      ->check(CLI::PositiveNumber);
  auto* solve_ode = app.add_subcommand("solve-ode", "Integrate the limiting equations (exponential services)");
  auto* solve_picard = app.add_subcommand("solve-picard", "Fixed-point iteration on departure rates");
  auto* gen = app.add_subcommand("generator-check", "Finite vs limiting generator gaps");
  auto* converge = app.add_subcommand("converge", "Convergence study of empirical measures");
  auto* routes = app.add_subcommand("route-table", "Greedy routing kernel of the graph");
  for (auto* sub : {validate, simulate, solve_ode, solve_picard, gen, converge, routes}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidationFailure;
  }

  try {
    if (*validate) return cmd_validate(common);
    if (*simulate) return cmd_simulate(common, copies);
    if (*solve_ode) return cmd_solve_ode(common);
    if (*solve_picard) return cmd_solve_picard(common);
    if (*gen) return cmd_generator_check(common);
    if (*converge) return cmd_converge(common);
    if (*routes) return cmd_route_table(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::ValidationError || e.code() == ErrorCode::ParseError ||
        e.code() == ErrorCode::InvalidConfig)
      return kValidationFailure;
    if (e.numerical()) return kNumericalFailure;
    return kOtherFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOtherFailure;
  }
  return kOtherFailure;
}
