#include "swapnet/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "swapnet/error.hpp"

namespace swapnet {

using nlohmann::json;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

std::string CsvWriter::escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string s = "\"";
  for (char c : field) {
    if (c == '"') s += '"';
    s += c;
  }
  return s + "\"";
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << escape(fields[i]);
  }
  out_ << "\r\n";
}

void parallel_jobs(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& job) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), jobs));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = jobs;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Letter> initial_letters(const InitialLaw& init) {
  std::vector<Letter> out;
  for (NodeId v = 0; v < init.num_nodes(); ++v)
    for (const auto& [word, p] : init.atoms(v))
      if (p > 0.0) out.insert(out.end(), word.begin(), word.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool ode_applicable(const Model& m) {
  return m.all_memoryless() && std::all_of(m.disciplines.begin(), m.disciplines.end(),
                                           [](const Discipline& d) { return d.word_determined(); });
}

template <class Snap>
const Snap& at_time(const std::vector<Snap>& snaps, double t) {
  for (const auto& s : snaps)
    if (std::abs(s.time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return s;
  throw Error(ErrorCode::InvalidConfig, "no snapshot at t = " + format_number(t));
}

Marginal average(const std::vector<const Marginal*>& ms, const ObservationSpec& spec) {
  Marginal out(spec);
  for (const Marginal* m : ms)
    for (const auto& [d, p] : m->probs()) out.add(d, p);
  if (!ms.empty()) out.scale(1.0 / static_cast<double>(ms.size()));
  return out;
}

std::vector<std::string> node_names(const Graph& g) {
  std::vector<std::string> out;
  for (NodeId v = 0; v < g.size(); ++v) out.push_back(g.name(v));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

Interval interval_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

ReferenceSolution solve_reference(const ExperimentConfig& cfg, const std::vector<double>& times, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  ReferenceSolution ref;
  ref.times = times;
  const double horizon = times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
  const std::size_t nv = cfg.model.num_nodes();
  if (ode_applicable(cfg.model)) {
    ref.method = "ode";
    NlmpOde ode(cfg.model, enumerate_states(cfg.model, cfg.truncation, AlphabetMode::Reachable, 1'000'000,
                                            initial_letters(cfg.initial)));
    OdeOptions opts;
    opts.dt = cfg.ode_dt;
    opts.leak_tolerance = cfg.leak_tolerance;
    opts.snapshot_times = times;
    const auto traj = ode.integrate(ode.from_initial_law(cfg.initial), horizon, opts);
    for (double t : times) {
      const auto& snap = at_time(traj.snapshots, t);
      std::vector<Marginal> row;
      for (NodeId v = 0; v < nv; ++v) row.push_back(ode.marginal(snap.value, v, cfg.observation));
      ref.marginals.push_back(std::move(row));
    }
  } else {
    ref.method = "picard";
    auto opts = cfg.picard;
    opts.threads = threads;
    const double window = cfg.picard_window;
    for (double t : times) {
      const double k = t / window;
      if (std::abs(k - std::round(k)) > 1e-9)
        throw Error(ErrorCode::InvalidConfig, "time " + format_number(t) + " is not a multiple of the picard window");
    }
    const auto steps = static_cast<std::size_t>(std::llround(horizon / window));
    const auto start_ens = sample_ensemble(cfg.model, cfg.initial, opts.replicas, cfg.seed);
    const auto res = steps == 0 ? WindowedResult{{}, {start_ens}}
                                : windowed_solve(cfg.model, start_ens, window * static_cast<double>(steps), window, opts);
    for (double t : times) {
      const auto& ens = res.snapshots.at(static_cast<std::size_t>(std::llround(t / window)));
      std::vector<Marginal> row;
      for (NodeId v = 0; v < nv; ++v) row.push_back(ens.marginal(v, cfg.observation));
      ref.marginals.push_back(std::move(row));
    }
  }
  ref.runtime_seconds = seconds_since(start);
  return ref;
}

const TrendRow& ComparisonReport::trend(std::size_t n, double t) const {
  for (const auto& r : trends)
    if (r.n == n && r.t == t) return r;
  throw Error(ErrorCode::InvalidConfig, "no trend row for N = " + std::to_string(n) + ", t = " + format_number(t));
}

ComparisonReport run_convergence_study(const ExperimentConfig& cfg, const std::vector<std::size_t>& n_list,
                                       const std::vector<double>& t_list, const ConvergenceOptions& opts) {
  if (cfg.seeds == 0) throw Error(ErrorCode::InvalidConfig, "a convergence study needs at least one seed");
  const auto& model = cfg.model;
  const std::size_t nv = model.num_nodes();
  ComparisonReport rep;
  rep.name = cfg.name;
  rep.seed = cfg.seed;
  rep.seeds = cfg.seeds;
  rep.observation = cfg.observation;
  rep.copies = n_list;
  rep.times = t_list;
  rep.nodes = node_names(model.graph);

  const auto ref = solve_reference(cfg, t_list, opts.threads);
  rep.method = ref.method;
  rep.reference = ref.marginals;
  rep.runtimes.push_back({"reference_" + ref.method, ref.runtime_seconds});

  const double horizon = t_list.empty() ? 0.0 : *std::max_element(t_list.begin(), t_list.end());
  // runs[n][seed][t][node]
  std::vector<std::vector<std::vector<std::vector<Marginal>>>> runs(
      n_list.size(), std::vector<std::vector<std::vector<Marginal>>>(cfg.seeds));
  std::vector<double> job_seconds(n_list.size() * cfg.seeds, 0.0);
  parallel_jobs(n_list.size() * cfg.seeds, opts.threads, [&](std::size_t job) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t ni = job / cfg.seeds;
    const std::size_t si = job % cfg.seeds;
    const std::uint64_t seed = Rng::derive(cfg.seed, 0x5eed, n_list[ni], si).raw();
    auto state = init_network(model, n_list[ni], cfg.initial, seed);
    RunOptions ro;
    ro.observation = cfg.observation;
    const auto traj = run(state, horizon, t_list, ro);
    auto& out = runs[ni][si];
    for (double t : t_list) out.push_back(at_time(traj.snapshots, t).marginals);
    job_seconds[job] = seconds_since(start);
  });

  rep.empirical.assign(n_list.size(), {});
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    double secs = 0.0;
    for (std::size_t si = 0; si < cfg.seeds; ++si) secs += job_seconds[ni * cfg.seeds + si];
    rep.runtimes.push_back({"simulate_N" + std::to_string(n_list[ni]), secs});
    for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
      auto tv_at = [&](const std::vector<std::size_t>& idx, NodeId v) {
        std::vector<const Marginal*> ms;
        for (std::size_t s : idx) ms.push_back(&runs[ni][s][ti][v]);
        return tv_distance(average(ms, cfg.observation), ref.marginals[ti][v]);
      };
      std::vector<std::size_t> all(cfg.seeds);
      for (std::size_t s = 0; s < cfg.seeds; ++s) all[s] = s;
      std::vector<Marginal> avg;
      double node_mean = 0.0;
      for (NodeId v = 0; v < nv; ++v) {
        std::vector<const Marginal*> ms;
        for (std::size_t s = 0; s < cfg.seeds; ++s) ms.push_back(&runs[ni][s][ti][v]);
        avg.push_back(average(ms, cfg.observation));
        ConvergenceRow row;
        row.n = n_list[ni];
        row.t = t_list[ti];
        row.node = model.graph.name(v);
        row.tv = tv_at(all, v);
        row.ci = bootstrap_interval(
            cfg.seeds, [&](const std::vector<std::size_t>& idx) { return tv_at(idx, v); }, opts.level, opts.resamples,
            Rng::derive(cfg.seed, 0xb007, ni, ti * (nv + 1) + v + 1).raw());
        node_mean += row.tv / static_cast<double>(nv);
        rep.rows.push_back(std::move(row));
      }
      TrendRow tr;
      tr.n = n_list[ni];
      tr.t = t_list[ti];
      tr.tv = node_mean;
      tr.ci = bootstrap_interval(
          cfg.seeds,
          [&](const std::vector<std::size_t>& idx) {
            double s = 0.0;
            for (NodeId v = 0; v < nv; ++v) s += tv_at(idx, v);
            return s / static_cast<double>(nv);
          },
          opts.level, opts.resamples, Rng::derive(cfg.seed, 0xb007, ni, ti * (nv + 1)).raw());
      rep.trends.push_back(tr);
      rep.empirical[ni].push_back(std::move(avg));
    }
  }
  return rep;
}

json summary_json(const ComparisonReport& r) {
  json j;
  j["schema"] = 1;
  j["name"] = r.name;
  j["seed"] = r.seed;
  j["seeds"] = r.seeds;
  j["method"] = r.method;
  j["observation"] = {{"depth", r.observation.depth}, {"length_cap", r.observation.length_cap}};
  j["copies"] = r.copies;
  j["times"] = r.times;
  j["nodes"] = r.nodes;
  j["rows"] = json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"n", row.n}, {"t", row.t}, {"node", row.node}, {"tv", row.tv}, {"ci", interval_json(row.ci)}});
  j["trends"] = json::array();
  for (const auto& tr : r.trends)
    j["trends"].push_back({{"n", tr.n}, {"t", tr.t}, {"tv", tr.tv}, {"ci", interval_json(tr.ci)}});
  return j;
}

ComparisonReport report_from_summary(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw Error(ErrorCode::ParseError, "unsupported summary schema");
    ComparisonReport r;
    r.name = j.at("name").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.seeds = j.at("seeds").get<std::size_t>();
    r.method = j.at("method").get<std::string>();
    r.observation.depth = j.at("observation").at("depth").get<std::size_t>();
    r.observation.length_cap = j.at("observation").at("length_cap").get<std::size_t>();
    r.copies = j.at("copies").get<std::vector<std::size_t>>();
    r.times = j.at("times").get<std::vector<double>>();
    r.nodes = j.at("nodes").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows"))
      r.rows.push_back({row.at("n").get<std::size_t>(), row.at("t").get<double>(), row.at("node").get<std::string>(),
                        row.at("tv").get<double>(), interval_from(row.at("ci"))});
    for (const auto& tr : j.at("trends"))
      r.trends.push_back({tr.at("n").get<std::size_t>(), tr.at("t").get<double>(), tr.at("tv").get<double>(),
                          interval_from(tr.at("ci"))});
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed summary: ") + e.what());
  }
}

ComparisonReport load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return report_from_summary(j);
}

std::vector<std::filesystem::path> emit_report(const ComparisonReport& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, const std::string& body) {
    write_file(out_dir / name, body);
    written.push_back(out_dir / name);
  };

  std::ostringstream conv;
  CsvWriter cw(conv);
  cw.row({"n", "t", "node", "tv", "ci_lo", "ci_hi", "seeds"});
  for (const auto& row : r.rows)
    cw.row({std::to_string(row.n), format_number(row.t), row.node, format_number(row.tv), format_number(row.ci.lo),
            format_number(row.ci.hi), std::to_string(r.seeds)});
  emit("convergence.csv", conv.str());

  std::ostringstream trend;
  CsvWriter tw(trend);
  tw.row({"n", "t", "mean_tv", "ci_lo", "ci_hi"});
  for (const auto& tr : r.trends)
    tw.row({std::to_string(tr.n), format_number(tr.t), format_number(tr.tv), format_number(tr.ci.lo),
            format_number(tr.ci.hi)});
  emit("trend.csv", trend.str());

  std::ostringstream lng;
  CsvWriter lw(lng);
  lw.row({"source", "n", "t", "node", "descriptor", "probability"});
  for (std::size_t ti = 0; ti < r.reference.size(); ++ti)
    for (std::size_t v = 0; v < r.reference[ti].size(); ++v)
      for (const auto& [d, p] : r.reference[ti][v].probs())
        lw.row({"limit", "", format_number(r.times[ti]), r.nodes[v], to_string(d), format_number(p)});
  for (std::size_t ni = 0; ni < r.empirical.size(); ++ni)
    for (std::size_t ti = 0; ti < r.empirical[ni].size(); ++ti)
      for (std::size_t v = 0; v < r.empirical[ni][ti].size(); ++v)
        for (const auto& [d, p] : r.empirical[ni][ti][v].probs())
          lw.row({"empirical", std::to_string(r.copies[ni]), format_number(r.times[ti]), r.nodes[v], to_string(d),
                  format_number(p)});
  emit("marginals_long.csv", lng.str());

  emit("summary.json", summary_json(r).dump(2) + "\n");

  std::ostringstream rt;
  CsvWriter rw(rt);
  rw.row({"label", "seconds"});
  for (const auto& x : r.runtimes) rw.row({x.label, format_number(x.seconds)});
  emit("runtimes.csv", rt.str());
  return written;
}

void write_network_trajectory(std::ostream& out, const Model& model, const Trajectory& traj,
                              const ObservationSpec& spec) {
  CsvWriter w(out);
  std::vector<std::string> header{"time", "node"};
  for (std::size_t l = 0; l <= spec.length_cap; ++l) header.push_back("len_" + std::to_string(l));
  for (const char* h : {"customers_in_system", "arrivals", "completions", "exits", "transits", "swaps"})
    header.push_back(h);
  w.row(header);
  for (const auto& s : traj.snapshots)
    for (NodeId v = 0; v < model.num_nodes(); ++v) {
      std::vector<std::string> row{format_number(s.time), model.graph.name(v)};
      for (double p : s.marginals[v].length_histogram()) row.push_back(format_number(p));
      for (auto c : {s.customers_in_system, s.counters.arrivals, s.counters.completions, s.counters.exits,
                     s.counters.transits, s.counters.swaps})
        row.push_back(std::to_string(c));
      w.row(row);
    }
}

void write_ensemble_trajectory(std::ostream& out, const Model& model, const std::vector<double>& times,
                               const std::vector<NodeEnsemble>& snapshots, const ObservationSpec& spec) {
  CsvWriter w(out);
  std::vector<std::string> header{"time", "node"};
  for (std::size_t l = 0; l <= spec.length_cap; ++l) header.push_back("len_" + std::to_string(l));
  for (const char* h : {"customers_in_system", "arrivals", "completions", "exits", "transits", "swaps"})
    header.push_back(h);
  w.row(header);
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const auto& ens = snapshots[i];
    std::uint64_t customers = 0;
    for (const auto& node : ens.replicas)
      for (const auto& q : node) customers += q.size();
    for (NodeId v = 0; v < model.num_nodes(); ++v) {
      std::vector<std::string> row{format_number(times[i]), model.graph.name(v)};
      for (double p : ens.marginal(v, spec).length_histogram()) row.push_back(format_number(p));
      row.push_back(std::to_string(customers));
      // Replica ensembles do not track network-wide event counters.
      for (int c = 0; c < 5; ++c) row.emplace_back();
      w.row(row);
    }
  }
}

void write_ode_trajectory(std::ostream& out, const NlmpOde& ode, const OdeTrajectory& traj) {
  CsvWriter w(out);
  w.row({"time", "node", "state_index", "probability", "leak"});
  const auto& model = ode.model();
  for (const auto& s : traj.snapshots)
    for (NodeId v = 0; v < model.num_nodes(); ++v)
      for (std::size_t i = 0; i < ode.states().size(); ++i) {
        const double p = s.value.at(v, i);
        if (p == 0.0) continue;
        w.row({format_number(s.time), model.graph.name(v), std::to_string(i), format_number(p),
               format_number(s.value.leak(v))});
      }
}

std::string letter_name(const Model& model, const Letter& l) {
  return model.classes.at(l.klass) + ">" + model.graph.name(l.dest);
}

void write_state_index(std::ostream& out, const Model& model, const StateIndex& index) {
  CsvWriter w(out);
  w.row({"state_index", "length", "word"});
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::string word;
    for (const auto& l : index.word(i)) word += (word.empty() ? "" : " ") + letter_name(model, l);
    w.row({std::to_string(i), std::to_string(index.length(i)), word});
  }
}

void write_rate_grid(std::ostream& out, const Model& model, const RateGrid& grid, double t0, bool with_header) {
  CsvWriter w(out);
  if (with_header) w.row({"t", "edge", "class", "dest", "rate"});
  for (const auto& [key, values] : grid.all())
    for (std::size_t j = 0; j < values.size(); ++j)
      w.row({format_number(t0 + grid.knot_time(j)), model.graph.name(key.from) + "->" + model.graph.name(key.to),
             model.classes.at(key.letter.klass), model.graph.name(key.letter.dest), format_number(values[j])});
}

void write_route_table(std::ostream& out, const Graph& graph) {
  CsvWriter w(out);
  w.row({"from", "dest", "next", "probability"});
  for (NodeId v = 0; v < graph.size(); ++v)
    for (NodeId d = 0; d < graph.size(); ++d) {
      if (graph.dist(v, d) <= 1) continue;
      for (const auto& [next, p] : graph.routing_kernel(v, d))
        w.row({graph.name(v), graph.name(d), graph.name(next), format_number(p)});
    }
}

std::vector<TestFunction> standard_test_functions(const Model& model) {
  const std::size_t nv = model.num_nodes();
  std::vector<Coordinate> c{{0, Observable::capped_length(4)},
                            {static_cast<NodeId>(std::min<std::size_t>(1, nv - 1)), Observable::length_equals(0)},
                            {static_cast<NodeId>(std::min<std::size_t>(2, nv - 1)), Observable::capped_length(4)}};
  const std::vector<double> a{0.3, -0.2, 0.5};
  const std::vector<std::vector<double>> q{{1.0, 0.2, 0.0}, {0.2, 0.8, 0.1}, {0.0, 0.1, 0.6}};
  std::vector<TestFunction> out;
  out.push_back(TestFunction::make_linear("linear", c, a));
  out.push_back(TestFunction::make_quadratic("quadratic", c, a, q));
  out.push_back(TestFunction::make_cubic("cubic", c, a, q, {0.7, -0.4, 0.9}));
  auto aged = c;
  aged[2].phi = Observable::age_ramp(1.0);
  out.push_back(TestFunction::make_quadratic("age_quadratic", aged, a, q));
  return out;
}

std::vector<GeneratorRow> run_generator_check(const ExperimentConfig& cfg, unsigned threads) {
  const auto fs = standard_test_functions(cfg.model);
  std::vector<std::vector<GapStats>> stats(fs.size());
  parallel_jobs(fs.size(), threads, [&](std::size_t i) {
    const auto sampler = iid_sampler(cfg.model, cfg.generator.max_length, fs[i].age_dependent());
    stats[i] = generator_gap(fs[i], cfg.model, cfg.generator.copies, sampler, cfg.generator.samples, cfg.seed);
  });
  std::vector<GeneratorRow> rows;
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (const auto& s : stats[i]) rows.push_back({s.n, fs[i].id, s.mean_gap, s.max_gap, s.samples});
  return rows;
}

void write_generator_rows(std::ostream& out, const std::vector<GeneratorRow>& rows) {
  CsvWriter w(out);
  w.row({"n", "f_id", "mean_gap", "max_gap", "samples"});
  for (const auto& r : rows)
    w.row({std::to_string(r.n), r.f_id, format_number(r.mean_gap), format_number(r.max_gap),
           std::to_string(r.samples)});
}

}  // namespace swapnet
