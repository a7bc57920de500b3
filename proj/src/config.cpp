#include "swapnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "swapnet/error.hpp"

namespace swapnet {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) parse_fail(where, std::string("missing field '") + key + "'");
  return *v;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) parse_fail(where, "expected a number");
  return v.get<double>();
}

std::size_t count(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 0) parse_fail(where, "expected a non-negative integer");
  return v.get<std::size_t>();
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) parse_fail(where, "expected a string");
  return v.get<std::string>();
}

const json& array(const json& v, const std::string& where) {
  if (!v.is_array()) parse_fail(where, "expected an array");
  return v;
}

const json& object(const json& v, const std::string& where) {
  if (!v.is_object()) parse_fail(where, "expected an object");
  return v;
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  const json* v = find(obj, key);
  return v == nullptr ? fallback : number(*v, where + "." + key);
}

std::size_t count_or(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  const json* v = find(obj, key);
  return v == nullptr ? fallback : count(*v, where + "." + key);
}

std::vector<double> numbers(const json& v, const std::string& where) {
  std::vector<double> out;
  for (std::size_t i = 0; i < array(v, where).size(); ++i)
    out.push_back(number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::size_t> counts(const json& v, const std::string& where) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < array(v, where).size(); ++i)
    out.push_back(count(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

/// Collects validation messages so that every violation is reported at once.
class Violations {
 public:
  void add(std::string msg) { msgs_.push_back(std::move(msg)); }
  void add_all(const std::vector<std::string>& msgs) { msgs_.insert(msgs_.end(), msgs.begin(), msgs.end()); }
  bool empty() const { return msgs_.empty(); }
  const std::vector<std::string>& list() const { return msgs_; }

  void raise() const {
    if (msgs_.empty()) return;
    std::string all;
    for (const auto& m : msgs_) all += (all.empty() ? "" : "; ") + m;
    throw Error(ErrorCode::ValidationError, all);
  }

 private:
  std::vector<std::string> msgs_;
};

std::optional<ServiceLaw> parse_law(const json& v, const std::string& where, Violations& bad) {
  object(v, where);
  const std::string family = text(require(v, "family", where), where + ".family");
  try {
    if (family == "exponential") return ServiceLaw::exponential(number(require(v, "rate", where), where + ".rate"));
    if (family == "erlang") {
      const auto phases = count(require(v, "phases", where), where + ".phases");
      return ServiceLaw::erlang(static_cast<int>(phases), number(require(v, "rate", where), where + ".rate"));
    }
    if (family == "hyperexponential")
      return ServiceLaw::hyperexponential(numbers(require(v, "weights", where), where + ".weights"),
                                          numbers(require(v, "rates", where), where + ".rates"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    bad.add(where + ": " + e.detail());
    return std::nullopt;
  }
  parse_fail(where + ".family", "unknown service family '" + family + "'");
}

std::optional<Discipline> parse_discipline(const json& v, const std::string& where,
                                           const std::map<std::string, ClassId>& classes, Violations& bad) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "fifo") return Discipline::fifo();
    if (s == "lifo") return Discipline::lifo_preempt_resume();
    parse_fail(where, "unknown discipline '" + s + "'");
  }
  object(v, where);
  const auto kind = text(require(v, "kind", where), where + ".kind");
  if (kind == "fifo") return Discipline::fifo();
  if (kind == "lifo") return Discipline::lifo_preempt_resume();
  if (kind != "priority") parse_fail(where + ".kind", "unknown discipline '" + kind + "'");
  const auto& ranks = object(require(v, "rank", where), where + ".rank");
  std::vector<int> rank(classes.size(), 0);
  bool ok = true;
  for (const auto& [name, r] : ranks.items()) {
    auto it = classes.find(name);
    if (it == classes.end()) {
      bad.add(where + ".rank: unknown class '" + name + "'");
      ok = false;
      continue;
    }
    if (!r.is_number_integer()) parse_fail(where + ".rank." + name, "expected an integer");
    rank[it->second] = r.get<int>();
  }
  bool preemptive = true;
  if (const json* p = find(v, "preemptive")) {
    if (!p->is_boolean()) parse_fail(where + ".preemptive", "expected a boolean");
    preemptive = p->get<bool>();
  }
  if (!ok) return std::nullopt;
  return Discipline::static_priority(std::move(rank), preemptive);
}

std::optional<NodeId> node_ref(const Graph& g, const json& v, const std::string& where, Violations& bad) {
  const auto name = text(v, where);
  if (!g.contains(name)) {
    bad.add(where + ": unknown node '" + name + "'");
    return std::nullopt;
  }
  return g.index(name);
}

std::optional<ClassId> class_ref(const std::map<std::string, ClassId>& classes, const json& v,
                                 const std::string& where, Violations& bad) {
  const auto name = text(v, where);
  auto it = classes.find(name);
  if (it == classes.end()) {
    bad.add(where + ": unknown class '" + name + "'");
    return std::nullopt;
  }
  return it->second;
}

std::string show(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

std::vector<std::string> check_bounds(const Model& model, const ModelBounds& bounds) {
  std::vector<std::string> out;
  for (const auto& e : model.graph.edges()) {
    if (!(e.swap_rate < bounds.swap_rate))
      out.push_back("swap_rate_bound: swap rate " + show(e.swap_rate) + " on " + model.graph.name(e.a) + "-" +
                    model.graph.name(e.b) + " is not below the bound " + show(bounds.swap_rate));
  }
  if (bounds.degree > 0 && model.graph.max_degree() > bounds.degree)
    out.push_back("degree_bound: max degree " + std::to_string(model.graph.max_degree()) + " exceeds " +
                  std::to_string(bounds.degree));
  for (NodeId v = 0; v < model.num_nodes(); ++v) {
    const double total = model.arrivals.total_at(v);
    if (total > bounds.arrival)
      out.push_back("arrival_bound: total arrival rate " + show(total) + " into " + model.graph.name(v) +
                    " exceeds " + show(bounds.arrival));
  }
  for (ClassId k = 0; k < model.num_classes(); ++k)
    for (NodeId v = 0; v < model.num_nodes(); ++v) {
      const double h = model.law(k, v).hazard_bound();
      const std::string where = "class " + model.classes[k] + " at " + model.graph.name(v);
      if (!std::isfinite(h))
        out.push_back("hazard_bound: hazard of " + where + " is unbounded");
      else if (h > bounds.hazard)
        out.push_back("hazard_bound: hazard bound " + show(h) + " of " + where + " exceeds " + show(bounds.hazard));
    }
  return out;
}

ExperimentConfig parse_config(const json& doc) {
  object(doc, "config");
  const json& schema = require(doc, "schema", "config");
  if (!schema.is_number_integer() || schema.get<int>() != 1)
    parse_fail("config.schema", "unsupported schema version " + schema.dump());

  ExperimentConfig cfg;
  cfg.source = doc;
  Violations bad;
  if (const json* n = find(doc, "name")) cfg.name = text(*n, "config.name");

  if (const json* b = find(doc, "bounds")) {
    object(*b, "bounds");
    cfg.bounds.swap_rate = number_or(*b, "swap_rate", cfg.bounds.swap_rate, "bounds");
    cfg.bounds.arrival = number_or(*b, "arrival", cfg.bounds.arrival, "bounds");
    cfg.bounds.hazard = number_or(*b, "hazard", cfg.bounds.hazard, "bounds");
    cfg.bounds.degree = count_or(*b, "degree", cfg.bounds.degree, "bounds");
  }

  const json& g = object(require(doc, "graph", "config"), "graph");
  GraphSpec spec;
  const json& nodes = array(require(g, "nodes", "graph"), "graph.nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    spec.nodes.push_back(text(nodes[i], "graph.nodes[" + std::to_string(i) + "]"));
  if (const json* edges = find(g, "edges")) {
    for (std::size_t i = 0; i < array(*edges, "graph.edges").size(); ++i) {
      const std::string where = "graph.edges[" + std::to_string(i) + "]";
      const json& e = object((*edges)[i], where);
      spec.edges.push_back({text(require(e, "a", where), where + ".a"), text(require(e, "b", where), where + ".b"),
                            number_or(e, "swap_rate", 0.0, where)});
    }
  }
  try {
    cfg.model.graph = Graph::build(spec);
  } catch (const Error& e) {
    bad.add("graph: " + e.detail());
    bad.raise();
  }
  const Graph& graph = cfg.model.graph;
  const std::size_t nv = graph.size();

  std::map<std::string, ClassId> classes;
  const json& cls = array(require(doc, "classes", "config"), "classes");
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const auto name = text(cls[i], "classes[" + std::to_string(i) + "]");
    if (!classes.emplace(name, static_cast<ClassId>(i)).second) bad.add("classes: '" + name + "' listed twice");
    cfg.model.classes.push_back(name);
  }
  if (cfg.model.classes.empty()) bad.add("classes: at least one class is required");

  if (const json* arr = find(doc, "arrivals")) {
    for (std::size_t i = 0; i < array(*arr, "arrivals").size(); ++i) {
      const std::string where = "arrivals[" + std::to_string(i) + "]";
      const json& a = object((*arr)[i], where);
      const auto k = class_ref(classes, require(a, "class", where), where + ".class", bad);
      const auto v = node_ref(graph, require(a, "node", where), where + ".node", bad);
      const auto d = node_ref(graph, require(a, "dest", where), where + ".dest", bad);
      const double rate = number(require(a, "rate", where), where + ".rate");
      if (!(rate >= 0.0)) {
        bad.add(where + ": arrival rate must be non-negative");
        continue;
      }
      if (k && v && d) cfg.model.arrivals.add(*k, *v, *d, rate);
    }
  }

  cfg.model.laws.assign(cfg.model.classes.size() * nv, ServiceLaw::exponential(1.0));
  const json& service = object(require(doc, "service", "config"), "service");
  if (auto law = parse_law(require(service, "default", "service"), "service.default", bad))
    cfg.model.set_uniform_law(*law);
  if (const json* ov = find(service, "overrides")) {
    for (std::size_t i = 0; i < array(*ov, "service.overrides").size(); ++i) {
      const std::string where = "service.overrides[" + std::to_string(i) + "]";
      const json& o = object((*ov)[i], where);
      const auto k = class_ref(classes, require(o, "class", where), where + ".class", bad);
      const auto v = node_ref(graph, require(o, "node", where), where + ".node", bad);
      auto law = parse_law(require(o, "law", where), where + ".law", bad);
      if (k && v && law) cfg.model.laws[static_cast<std::size_t>(*k) * nv + *v] = *law;
    }
  }

  cfg.model.disciplines.assign(nv, Discipline::fifo());
  if (const json* dis = find(doc, "disciplines")) {
    object(*dis, "disciplines");
    if (const json* d = find(*dis, "default")) {
      if (auto disc = parse_discipline(*d, "disciplines.default", classes, bad)) cfg.model.disciplines.assign(nv, *disc);
    }
    if (const json* per = find(*dis, "nodes")) {
      for (const auto& [name, d] : object(*per, "disciplines.nodes").items()) {
        const std::string where = "disciplines.nodes." + name;
        if (!graph.contains(name)) {
          bad.add(where + ": unknown node '" + name + "'");
          continue;
        }
        if (auto disc = parse_discipline(d, where, classes, bad)) cfg.model.disciplines[graph.index(name)] = *disc;
      }
    }
  }

  cfg.model.transitions = ClassTransitionTable::identity();
  if (const json* tr = find(doc, "transitions")) {
    for (std::size_t i = 0; i < array(*tr, "transitions").size(); ++i) {
      const std::string where = "transitions[" + std::to_string(i) + "]";
      const json& t = object((*tr)[i], where);
      const auto k = class_ref(classes, require(t, "class", where), where + ".class", bad);
      const auto from = node_ref(graph, require(t, "from", where), where + ".from", bad);
      const auto to = node_ref(graph, require(t, "to", where), where + ".to", bad);
      const auto next = class_ref(classes, require(t, "becomes", where), where + ".becomes", bad);
      if (!(k && from && to && next)) continue;
      const auto nb = graph.neighbors(*from);
      if (std::find(nb.begin(), nb.end(), *to) == nb.end()) {
        bad.add(where + ": " + graph.name(*from) + " and " + graph.name(*to) + " are not adjacent");
        continue;
      }
      cfg.model.transitions.set(*k, *from, *to, *next);
    }
  }

  cfg.initial = InitialLaw::empty(nv);
  if (const json* init = find(doc, "initial")) {
    for (const auto& [name, atoms] : object(*init, "initial").items()) {
      const std::string where = "initial." + name;
      if (!graph.contains(name)) {
        bad.add(where + ": unknown node '" + name + "'");
        continue;
      }
      std::vector<InitialLaw::Atom> law;
      bool ok = true;
      for (std::size_t i = 0; i < array(atoms, where).size(); ++i) {
        const std::string aw = where + "[" + std::to_string(i) + "]";
        const json& a = object(atoms[i], aw);
        std::vector<Letter> word;
        const json& letters = array(require(a, "word", aw), aw + ".word");
        for (std::size_t j = 0; j < letters.size(); ++j) {
          const std::string lw = aw + ".word[" + std::to_string(j) + "]";
          const json& l = object(letters[j], lw);
          const auto k = class_ref(classes, require(l, "class", lw), lw + ".class", bad);
          const auto d = node_ref(graph, require(l, "dest", lw), lw + ".dest", bad);
          if (k && d)
            word.push_back({*k, *d});
          else
            ok = false;
        }
        law.emplace_back(std::move(word), number(require(a, "p", aw), aw + ".p"));
      }
      if (!ok) continue;
      try {
        cfg.initial.set(graph.index(name), std::move(law));
      } catch (const Error& e) {
        bad.add(where + ": " + e.detail());
      }
    }
  }

  cfg.truncation = count_or(doc, "truncation", cfg.truncation, "config");
  if (const json* obs = find(doc, "observation")) {
    object(*obs, "observation");
    cfg.observation.depth = count_or(*obs, "depth", cfg.observation.depth, "observation");
    cfg.observation.length_cap = count_or(*obs, "length_cap", cfg.observation.length_cap, "observation");
    if (cfg.observation.length_cap == 0) bad.add("observation.length_cap: must be positive");
  }
  cfg.horizon = number_or(doc, "horizon", cfg.horizon, "config");
  if (!(cfg.horizon >= 0.0)) bad.add("horizon: must be non-negative");
  if (const json* s = find(doc, "snapshots")) cfg.snapshot_times = numbers(*s, "snapshots");
  for (double t : cfg.snapshot_times)
    if (!(t >= 0.0 && t <= cfg.horizon)) bad.add("snapshots: time " + show(t) + " lies outside [0, horizon]");
  if (const json* c = find(doc, "copies")) cfg.copies = counts(*c, "copies");
  for (std::size_t n : cfg.copies)
    if (n == 0) bad.add("copies: N must be at least 1");
  cfg.seeds = count_or(doc, "seeds", cfg.seeds, "config");
  if (const json* s = find(doc, "seed")) {
    if (!s->is_number_unsigned()) parse_fail("config.seed", "expected a non-negative integer");
    cfg.seed = s->get<std::uint64_t>();
  }

  if (const json* ode = find(doc, "ode")) {
    object(*ode, "ode");
    cfg.ode_dt = number_or(*ode, "dt", cfg.ode_dt, "ode");
    cfg.leak_tolerance = number_or(*ode, "leak_tolerance", cfg.leak_tolerance, "ode");
    if (!(cfg.ode_dt > 0.0)) bad.add("ode.dt: must be positive");
  }

  if (const json* p = find(doc, "picard")) {
    object(*p, "picard");
    auto& o = cfg.picard;
    cfg.picard_window = number_or(*p, "window", cfg.picard_window, "picard");
    o.intervals = count_or(*p, "intervals", o.intervals, "picard");
    o.replicas = count_or(*p, "replicas", o.replicas, "picard");
    o.batches = count_or(*p, "batches", o.batches, "picard");
    o.tol = number_or(*p, "tol", o.tol, "picard");
    o.max_iter = count_or(*p, "max_iter", o.max_iter, "picard");
    o.lipschitz = number_or(*p, "lipschitz", o.lipschitz, "picard");
    o.rate_bound = number_or(*p, "rate_bound", o.rate_bound, "picard");
    o.smallness = number_or(*p, "smallness", o.smallness, "picard");
    if (const json* crn = find(*p, "common_random_numbers")) {
      if (!crn->is_boolean()) parse_fail("picard.common_random_numbers", "expected a boolean");
      o.common_random_numbers = crn->get<bool>();
    }
    if (!(cfg.picard_window > 0.0)) bad.add("picard.window: must be positive");
    if (o.intervals == 0) bad.add("picard.intervals: must be positive");
    if (o.batches == 0) bad.add("picard.batches: must be positive");
  }
  cfg.picard.seed = cfg.seed;

  if (const json* gen = find(doc, "generator")) {
    object(*gen, "generator");
    if (const json* c = find(*gen, "copies")) cfg.generator.copies = counts(*c, "generator.copies");
    cfg.generator.samples = count_or(*gen, "samples", cfg.generator.samples, "generator");
    cfg.generator.max_length = count_or(*gen, "max_length", cfg.generator.max_length, "generator");
  }

  bad.add_all(check_bounds(cfg.model, cfg.bounds));
  bad.raise();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace swapnet
