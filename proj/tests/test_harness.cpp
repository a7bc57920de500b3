#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "swapnet/config.hpp"
#include "swapnet/error.hpp"
#include "swapnet/experiments.hpp"

using namespace swapnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json path3_doc() {
  std::ifstream in(std::string(SWAPNET_CONFIG_DIR) + "/path3.json");
  return json::parse(in);
}

/// Message of the error raised by parsing `doc`, checking its code.
std::string failure(const json& doc, ErrorCode code) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    CHECK(e.code() == code);
    return e.detail();
  }
  FAIL("config was accepted");
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("swapnet_harness_" + name);
  fs::remove_all(p);
  return p;
}

Marginal point_mass(std::uint32_t length, double p = 1.0) {
  Marginal m({1, 8});
  m.add({length, {}}, p);
  return m;
}

}  // namespace

TEST_CASE("tv_distance examples") {
  Marginal p({1, 8});
  p.add({0, {}}, 0.5);
  p.add({1, {}}, 0.5);
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(point_mass(0), point_mass(3)) == 1.0);
  CHECK(tv_distance(p, point_mass(0)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(tv_distance(p, Marginal({2, 8})), Error);
}

TEST_CASE("bootstrap interval covers the sample mean") {
  std::vector<double> xs;
  Rng rng(4);
  for (int i = 0; i < 200; ++i) xs.push_back(rng.uniform());
  auto stat = [&](const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto i : idx) s += xs[i];
    return s / static_cast<double>(idx.size());
  };
  const auto ci = bootstrap_interval(xs.size(), stat, 0.95, 2000, 9);
  const double m = mean(xs);
  CHECK(ci.lo < m);
  CHECK(ci.hi > m);
  // Normal-theory half width 1.96 σ/√n for comparison.
  const double half = 1.96 * stddev(xs) / std::sqrt(200.0);
  CHECK((ci.hi - ci.lo) / 2 == doctest::Approx(half).epsilon(0.15));
}

TEST_CASE("reference config loads") {
  const auto cfg = load_config(std::string(SWAPNET_CONFIG_DIR) + "/path3.json");
  CHECK(cfg.name == "path3");
  CHECK(cfg.model.num_nodes() == 3);
  CHECK(cfg.model.graph.swap_rate(0, 1) == 0.5);
  CHECK(cfg.model.arrivals.rate(0, 0, 2) == 1.0);
  CHECK(cfg.model.law(0, 1) == ServiceLaw::exponential(2.0));
  CHECK(cfg.copies == std::vector<std::size_t>{10, 100, 1000});
  CHECK(cfg.truncation == 12);
  CHECK(cfg.picard.replicas == 5000);
  CHECK(cfg.picard.seed == cfg.seed);
  for (const char* name : {"path2.json", "path3_erlang.json"})
    CHECK_NOTHROW(load_config(std::string(SWAPNET_CONFIG_DIR) + "/" + name));
}

TEST_CASE("optional config sections") {
  auto doc = path3_doc();
  doc["classes"] = {"a", "b"};
  doc["service"]["overrides"] = {
      {{"class", "b"}, {"node", "v1"}, {"law", {{"family", "hyperexponential"}, {"weights", {0.5, 0.5}}, {"rates", {1.0, 3.0}}}}}};
  doc["disciplines"] = {{"default", "lifo"},
                        {"nodes", {{"v1", {{"kind", "priority"}, {"rank", {{"b", 0}, {"a", 1}}}, {"preemptive", false}}}}}};
  doc["transitions"] = {{{"class", "a"}, {"from", "v0"}, {"to", "v1"}, {"becomes", "b"}}};
  doc["initial"] = {{"v0", {{{"word", json::array()}, {"p", 0.25}},
                            {{"word", {{{"class", "a"}, {"dest", "v2"}}}}, {"p", 0.75}}}}};
  const auto cfg = parse_config(doc);
  CHECK(cfg.model.law(1, 1).family() == ServiceLaw::Family::HyperExponential);
  CHECK(cfg.model.law(1, 0) == ServiceLaw::exponential(2.0));
  CHECK(cfg.model.discipline(0) == Discipline::lifo_preempt_resume());
  CHECK(cfg.model.discipline(1) == Discipline::static_priority({1, 0}, false));
  CHECK(cfg.model.transitions(0, 0, 1) == 1);
  CHECK(cfg.model.transitions(0, 1, 2) == 0);
  REQUIRE(cfg.initial.atoms(0).size() == 2);
  CHECK(cfg.initial.atoms(0)[1].first == std::vector<Letter>{{0, 2}});
  CHECK(cfg.initial.atoms(1).size() == 1);
}

TEST_CASE("validation names the violated bound") {
  auto doc = path3_doc();
  doc["graph"]["edges"][0]["swap_rate"] = 1e6;
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "swap_rate_bound"));

  doc = path3_doc();
  doc["arrivals"][0]["rate"] = 50.0;
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "arrival_bound"));

  doc = path3_doc();
  doc["service"]["default"]["rate"] = 500.0;
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "hazard_bound"));

  doc = path3_doc();
  doc["bounds"]["degree"] = 1;
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "degree_bound"));

  // Every violation is listed, not just the first.
  doc = path3_doc();
  doc["graph"]["edges"][1]["swap_rate"] = 20.0;
  doc["arrivals"][0]["rate"] = 11.0;
  const auto msg = failure(doc, ErrorCode::ValidationError);
  CHECK(contains(msg, "swap_rate_bound"));
  CHECK(contains(msg, "arrival_bound"));

  // Configs within every bound are accepted.
  doc = path3_doc();
  doc["graph"]["edges"][0]["swap_rate"] = 9.99;
  doc["arrivals"][0]["rate"] = 10.0;
  CHECK_NOTHROW(parse_config(doc));
}

TEST_CASE("validation catches broken references") {
  auto doc = path3_doc();
  doc["arrivals"][0]["node"] = "v9";
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "unknown node 'v9'"));

  doc = path3_doc();
  doc["arrivals"][0]["class"] = "zz";
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "unknown class 'zz'"));

  doc = path3_doc();
  doc["graph"]["edges"][1]["b"] = "v0";
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "graph"));

  doc = path3_doc();
  doc["transitions"] = {{{"class", "a"}, {"from", "v0"}, {"to", "v2"}, {"becomes", "a"}}};
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "not adjacent"));

  doc = path3_doc();
  doc["initial"] = {{"v1", {{{"word", json::array()}, {"p", 0.4}}}}};
  CHECK(contains(failure(doc, ErrorCode::ValidationError), "sum to 1"));

  doc = path3_doc();
  doc["service"]["default"] = {{"family", "erlang"}, {"phases", 0}, {"rate", 1.0}};
  failure(doc, ErrorCode::ValidationError);

  doc = path3_doc();
  doc["snapshots"] = {1.0, 7.0};
  failure(doc, ErrorCode::ValidationError);
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_config_text("{\"schema\": 1,"), Error);
  try {
    parse_config_text("{not json");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
  auto doc = path3_doc();
  doc["schema"] = 2;
  CHECK(contains(failure(doc, ErrorCode::ParseError), "schema"));
  doc = path3_doc();
  doc.erase("graph");
  CHECK(contains(failure(doc, ErrorCode::ParseError), "graph"));
  doc = path3_doc();
  doc["arrivals"][0]["rate"] = "fast";
  CHECK(contains(failure(doc, ErrorCode::ParseError), "arrivals[0].rate"));
  doc = path3_doc();
  doc["service"]["default"]["family"] = "deterministic";
  failure(doc, ErrorCode::ParseError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("csv quoting") {
  CHECK(CsvWriter::escape("plain") == "plain");
  CHECK(CsvWriter::escape("a,b") == "\"a,b\"");
  CHECK(CsvWriter::escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(CsvWriter::escape("two\nlines") == "\"two\nlines\"");
  std::ostringstream os;
  CsvWriter(os).row({"x", "y,z", ""});
  CHECK(os.str() == "x,\"y,z\",\r\n");
  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("route table lists the greedy kernel") {
  std::ostringstream os;
  write_route_table(os, Graph::grid(2, 2, 0.1));
  const auto s = os.str();
  CHECK(s.rfind("from,dest,next,probability\r\n", 0) == 0);
  // Opposite corners of the square: two next hops with probability 1/2 each.
  std::size_t halves = 0;
  for (std::size_t pos = s.find(",0.5\r\n"); pos != std::string::npos; pos = s.find(",0.5\r\n", pos + 1)) ++halves;
  CHECK(halves == 8);
}

TEST_CASE("emit_report") {
  SUBCASE("empty report gives header-only tables") {
    const auto dir = scratch("empty");
    ComparisonReport r;
    const auto files = emit_report(r, dir);
    CHECK(files.size() == 5);
    CHECK(slurp(dir / "convergence.csv") == "n,t,node,tv,ci_lo,ci_hi,seeds\r\n");
    CHECK(slurp(dir / "trend.csv") == "n,t,mean_tv,ci_lo,ci_hi\r\n");
    CHECK(slurp(dir / "marginals_long.csv") == "source,n,t,node,descriptor,probability\r\n");
  }

  SUBCASE("study output is deterministic and the summary round-trips") {
    auto cfg = load_config(std::string(SWAPNET_CONFIG_DIR) + "/path3.json");
    cfg.seeds = 10;
    ConvergenceOptions opts;
    opts.resamples = 200;
    const auto a = run_convergence_study(cfg, {5, 20}, {0.5, 1.0}, opts);
    opts.threads = 4;
    const auto b = run_convergence_study(cfg, {5, 20}, {0.5, 1.0}, opts);
    const auto da = scratch("a");
    const auto db = scratch("b");
    emit_report(a, da);
    emit_report(b, db);
    for (const char* f : {"convergence.csv", "trend.csv", "marginals_long.csv", "summary.json"})
      CHECK(slurp(da / f) == slurp(db / f));
    CHECK(a.rows.size() == 2 * 2 * 3);
    CHECK(a.trends.size() == 4);
    for (const auto& row : a.rows) {
      CHECK(row.tv >= 0.0);
      CHECK(row.tv <= 1.0);
      CHECK(row.ci.lo <= row.ci.hi);
    }

    const auto back = load_summary(da / "summary.json");
    CHECK(summary_json(back) == summary_json(a));
    const auto dc = scratch("c");
    emit_report(back, dc);
    CHECK(slurp(dc / "summary.json") == slurp(da / "summary.json"));
    CHECK(slurp(dc / "convergence.csv") == slurp(da / "convergence.csv"));
  }
}

TEST_CASE("convergence study edge cases") {
  auto cfg = load_config(std::string(SWAPNET_CONFIG_DIR) + "/path3.json");
  cfg.seeds = 10;
  ConvergenceOptions opts;
  opts.resamples = 200;

  SUBCASE("N = 1 runs") {
    const auto r = run_convergence_study(cfg, {1}, {1.0}, opts);
    CHECK(r.rows.size() == 3);
    CHECK(r.method == "ode");
  }

  SUBCASE("at t = 0 only the sampling error of the initial law remains") {
    auto doc = path3_doc();
    doc["initial"] = {{"v0", {{{"word", json::array()}, {"p", 0.5}},
                              {{"word", {{{"class", "a"}, {"dest", "v2"}}}}, {"p", 0.3}},
                              {{"word", {{{"class", "a"}, {"dest", "v2"}}, {{"class", "a"}, {"dest", "v2"}}}}, {"p", 0.2}}}}};
    auto c = parse_config(doc);
    c.seeds = 10;
    const auto r = run_convergence_study(c, {10, 1000}, {0.0}, opts);
    // Expected TV of a multinomial sample of size n: ½ Σ_k √(2 p_k (1 − p_k) / (π n)); only v0 is random.
    double k = 0.0;
    for (double p : {0.5, 0.3, 0.2}) k += 0.5 * std::sqrt(2 * p * (1 - p) / M_PI);
    k /= 3.0;
    for (std::size_t n : {10, 1000}) {
      const double scaled = r.trend(n, 0.0).tv * std::sqrt(10.0 * static_cast<double>(n));
      CHECK(scaled > 0.2 * k);
      CHECK(scaled < 2.5 * k);
    }
    CHECK(r.trend(1000, 0.0).tv < r.trend(10, 0.0).tv);
  }

  SUBCASE("non-exponential services use the fixed-point reference") {
    auto doc = path3_doc();
    doc["service"]["default"] = {{"family", "erlang"}, {"phases", 2}, {"rate", 4.0}};
    doc["picard"]["window"] = 0.1;
    doc["picard"]["replicas"] = 400;
    auto c = parse_config(doc);
    c.seeds = 10;
    const auto r = run_convergence_study(c, {10}, {0.2}, opts);
    CHECK(r.method == "picard");
    CHECK_THROWS_AS(run_convergence_study(c, {10}, {0.15}, opts), Error);
  }
}

TEST_CASE("generator check rows") {
  auto cfg = load_config(std::string(SWAPNET_CONFIG_DIR) + "/path3.json");
  cfg.generator.samples = 20;
  const auto rows = run_generator_check(cfg, 2);
  CHECK(rows.size() == 4 * cfg.generator.copies.size());
  for (const auto& r : rows) {
    if (r.f_id == "linear")
      CHECK(r.max_gap <= 1e-12);
    else
      CHECK(r.mean_gap > 0.0);
  }
  std::ostringstream os;
  write_generator_rows(os, rows);
  CHECK(os.str().rfind("n,f_id,mean_gap,max_gap,samples\r\n", 0) == 0);
}
