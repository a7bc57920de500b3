#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "swapnet_cli_tests";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Runs the CLI with stdout and stderr captured in files; returns the exit code.
int cli(const std::string& args, const std::string& tag = "last") {
  fs::create_directories(kWork);
  const std::string cmd = std::string(SWAPNET_CLI) + " " + args + " > " + (kWork / (tag + ".out")).string() +
                          " 2> " + (kWork / (tag + ".err")).string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string err(const std::string& tag = "last") { return slurp(kWork / (tag + ".err")); }

std::string config(const std::string& name) { return std::string(SWAPNET_CONFIG_DIR) + "/" + name; }

json load(const std::string& name) {
  std::ifstream in(config(name));
  return json::parse(in);
}

std::string write_config(const std::string& name, const json& doc) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  std::ofstream(p) << doc.dump(2);
  return p.string();
}

std::string out_dir(const std::string& name) {
  const auto p = kWork / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("validate exit codes") {
  CHECK(cli("validate " + config("path3.json")) == 0);
  CHECK(slurp(kWork / "last.out").find("valid: path3") != std::string::npos);

  auto doc = load("path3.json");
  doc["graph"]["edges"][0]["swap_rate"] = 1e6;
  CHECK(cli("validate " + write_config("bad_swap.json", doc)) == 2);
  CHECK(err().find("swap_rate_bound") != std::string::npos);

  std::ofstream(kWork / "broken.json") << "{\"schema\": 1, ";
  CHECK(cli("validate " + (kWork / "broken.json").string()) == 2);
  CHECK(err().find("ParseError") != std::string::npos);

  CHECK(cli("validate /nonexistent.json") == 2);
  CHECK(cli("") == 2);
  CHECK(cli("validate " + config("path3.json") + " --no-such-flag") == 2);
  CHECK(cli("--help") == 0);
}

TEST_CASE("numerical failure exit code") {
  auto doc = load("path3.json");
  doc["truncation"] = 2;
  doc["horizon"] = 5.0;
  CHECK(cli("solve-ode " + write_config("short.json", doc) + " --quiet --out " + out_dir("leak")) == 3);
  CHECK(err().find("MassLeakExceeded") != std::string::npos);
  CHECK(cli("solve-ode " + config("path3_erlang.json") + " --quiet --out " + out_dir("erlang")) == 2);
}

TEST_CASE("simulate is reproducible for a fixed seed") {
  const auto a = out_dir("sim_a");
  const auto b = out_dir("sim_b");
  const auto c = out_dir("sim_c");
  CHECK(cli("simulate " + config("path3.json") + " --copies 50 --seed 3 --quiet --out " + a) == 0);
  CHECK(cli("simulate " + config("path3.json") + " --copies 50 --seed 3 --quiet --out " + b) == 0);
  CHECK(cli("simulate " + config("path3.json") + " --copies 50 --seed 4 --quiet --out " + c) == 0);
  const auto ta = slurp(fs::path(a) / "trajectory.csv");
  CHECK(ta == slurp(fs::path(b) / "trajectory.csv"));
  CHECK(slurp(fs::path(a) / "summary.json") == slurp(fs::path(b) / "summary.json"));
  CHECK(ta != slurp(fs::path(c) / "trajectory.csv"));
  CHECK(ta.rfind("time,node,len_0,", 0) == 0);
  const auto summary = json::parse(slurp(fs::path(a) / "summary.json"));
  CHECK(summary["copies"] == 50);
  CHECK(summary["seed"] == 3);
  CHECK(summary["schema"] == 1);
}

TEST_CASE("solvers and reports") {
  const auto ode = out_dir("ode");
  CHECK(cli("solve-ode " + config("path3.json") + " --quiet --out " + ode) == 0);
  CHECK(slurp(fs::path(ode) / "ode_trajectory.csv").rfind("time,node,state_index,probability,leak\r\n", 0) == 0);
  CHECK(fs::exists(fs::path(ode) / "states.csv"));

  auto doc = load("path3_erlang.json");
  doc["horizon"] = 0.1;
  doc["snapshots"] = {0.1};
  doc["picard"]["replicas"] = 400;
  const auto cfg = write_config("picard.json", doc);
  const auto p1 = out_dir("picard1");
  const auto p3 = out_dir("picard3");
  CHECK(cli("solve-picard " + cfg + " --quiet --threads 1 --out " + p1) == 0);
  CHECK(cli("solve-picard " + cfg + " --quiet --threads 3 --out " + p3) == 0);
  const auto rates = slurp(fs::path(p1) / "rates.csv");
  CHECK(rates.rfind("t,edge,class,dest,rate\r\n", 0) == 0);
  CHECK(rates == slurp(fs::path(p3) / "rates.csv"));
  CHECK(slurp(fs::path(p1) / "ensemble.csv") == slurp(fs::path(p3) / "ensemble.csv"));
  CHECK(json::parse(slurp(fs::path(p1) / "summary.json"))["windows"].size() == 2);

  auto small = load("path3.json");
  small["copies"] = {5, 20};
  small["generator"]["samples"] = 10;
  const auto scfg = write_config("small.json", small);
  const auto c1 = out_dir("conv1");
  const auto c4 = out_dir("conv4");
  CHECK(cli("converge " + scfg + " --quiet --threads 1 --out " + c1) == 0);
  CHECK(cli("converge " + scfg + " --quiet --threads 4 --out " + c4) == 0);
  for (const char* f : {"convergence.csv", "trend.csv", "marginals_long.csv", "summary.json"})
    CHECK(slurp(fs::path(c1) / f) == slurp(fs::path(c4) / f));
  CHECK(fs::exists(fs::path(c1) / "runtimes.csv"));

  const auto g = out_dir("gen");
  CHECK(cli("generator-check " + scfg + " --quiet --out " + g) == 0);
  CHECK(slurp(fs::path(g) / "generator.csv").rfind("n,f_id,mean_gap,max_gap,samples\r\n", 0) == 0);

  const auto r = out_dir("routes");
  CHECK(cli("route-table " + config("path3.json") + " --out " + r) == 0);
  CHECK(slurp(fs::path(r) / "routes.csv") == "from,dest,next,probability\r\nv0,v2,v1,1\r\nv2,v0,v1,1\r\n");
}
