#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace ifcalc::cli {

namespace {

void allow_only(const json& obj, const std::set<std::string>& keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

bool boolean(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  return v.get<bool>();
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, where));
  return out;
}

std::vector<std::string> strings(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(text(e, where));
  return out;
}

}  // namespace

Config parse_config(const json& doc) {
  allow_only(doc,
             {"scenario", "q", "quantile_width", "tol", "seed", "jobs", "verify", "timestamps",
              "eps_grid", "mc", "bias_order", "data", "output", "nw"},
             "config");
  Config c;
  if (doc.contains("scenario")) {
    const json& s = doc["scenario"];
    if (s.is_string()) {
      c.scenarios = {s.get<std::string>()};
    } else if (s.is_array()) {
      c.scenarios = strings(s, "scenario");
    } else if (s.is_object()) {
      allow_only(s, {"estimand", "dgp"}, "scenario");
      if (!s.contains("estimand")) throw ConfigError("scenario: inline spec needs 'estimand'");
      if (!s.contains("dgp")) throw ConfigError("scenario: inline spec needs a 'dgp' object");
      if (!s["dgp"].is_object()) throw ConfigError("scenario.dgp: expected an object");
      c.scenarios = {text(s["estimand"], "scenario.estimand")};
      c.inline_scenario = s;
    } else {
      throw ConfigError("scenario: expected a name, a list of names or an inline spec");
    }
  }
  if (doc.contains("q")) c.q = number(doc["q"], "q");
  if (!(c.q > 0.0 && c.q < 1.0)) throw ConfigError("q: must lie strictly between 0 and 1");
  if (doc.contains("quantile_width")) c.quantile_width = number(doc["quantile_width"], "quantile_width");
  if (!(c.quantile_width >= 0.0)) throw ConfigError("quantile_width: must be non-negative");
  if (doc.contains("tol")) c.tol = number(doc["tol"], "tol");
  if (doc.contains("seed")) {
    const std::int64_t seed = integer(doc["seed"], "seed");
    if (seed < 0) throw ConfigError("seed: must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
  }
  if (doc.contains("jobs")) c.jobs = static_cast<int>(integer(doc["jobs"], "jobs"));
  if (doc.contains("verify")) c.verify = boolean(doc["verify"], "verify");
  if (doc.contains("timestamps")) c.timestamps = boolean(doc["timestamps"], "timestamps");
  if (doc.contains("eps_grid")) {
    const json& g = doc["eps_grid"];
    allow_only(g, {"values", "richardson"}, "eps_grid");
    if (g.contains("values")) c.grid.values = numbers(g["values"], "eps_grid.values");
    if (g.contains("richardson")) c.grid.richardson = boolean(g["richardson"], "eps_grid.richardson");
  }
  if (doc.contains("mc")) {
    const json& m = doc["mc"];
    allow_only(m, {"replications", "sample_size", "coordinate", "misspecification_eps"}, "mc");
    if (m.contains("replications")) c.mc.replications = integer(m["replications"], "mc.replications");
    if (m.contains("sample_size")) c.mc.sample_size = integer(m["sample_size"], "mc.sample_size");
    if (m.contains("coordinate")) c.mc.coordinate = integer(m["coordinate"], "mc.coordinate");
    if (m.contains("misspecification_eps")) {
      c.mc.misspecification_eps = number(m["misspecification_eps"], "mc.misspecification_eps");
    }
  }
  if (doc.contains("bias_order")) {
    const json& b = doc["bias_order"];
    allow_only(b, {"raw", "lr", "direction", "block"}, "bias_order");
    if (b.contains("raw")) c.bias_order.raw = text(b["raw"], "bias_order.raw");
    if (b.contains("lr")) c.bias_order.lr = text(b["lr"], "bias_order.lr");
    if (b.contains("direction")) c.bias_order.direction = numbers(b["direction"], "bias_order.direction");
    if (b.contains("block") && !b["block"].is_null()) {
      c.bias_order.block = integer(b["block"], "bias_order.block");
    }
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    allow_only(d, {"path", "blocks"}, "data");
    if (!d.contains("path") || !d.contains("blocks")) {
      throw ConfigError("data: needs 'path' and 'blocks'");
    }
    DataSettings ds;
    ds.path = text(d["path"], "data.path");
    if (!d["blocks"].is_array() || d["blocks"].empty()) {
      throw ConfigError("data.blocks: expected a non-empty array");
    }
    for (const auto& b : d["blocks"]) {
      allow_only(b, {"name", "columns"}, "data.blocks[]");
      if (!b.contains("name") || !b.contains("columns")) {
        throw ConfigError("data.blocks[]: needs 'name' and 'columns'");
      }
      ds.blocks.push_back({text(b["name"], "data.blocks[].name"),
                           strings(b["columns"], "data.blocks[].columns")});
    }
    c.data = ds;
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    allow_only(o, {"dir", "formats"}, "output");
    if (o.contains("dir")) c.output.dir = text(o["dir"], "output.dir");
    if (o.contains("formats")) c.output.formats = strings(o["formats"], "output.formats");
  }
  if (doc.contains("nw")) {
    const json& n = doc["nw"];
    allow_only(n, {"sample_size", "bandwidth"}, "nw");
    if (n.contains("sample_size")) c.nw_sample_size = integer(n["sample_size"], "nw.sample_size");
    if (n.contains("bandwidth")) c.nw_bandwidth = number(n["bandwidth"], "nw.bandwidth");
  }
  for (const auto& f : c.output.formats) {
    if (f != "json" && f != "csv") throw ConfigError("output.formats: unknown format '" + f + "'");
  }
  if (c.jobs < 0) throw ConfigError("jobs: must be non-negative");
  if (c.mc.replications < 2) throw ConfigError("mc.replications: need at least two");
  if (c.mc.sample_size < 1) throw ConfigError("mc.sample_size: must be positive");
  if (c.mc.coordinate < 0) throw ConfigError("mc.coordinate: must be non-negative");
  if (c.nw_sample_size && *c.nw_sample_size < 1) throw ConfigError("nw.sample_size: must be positive");
  if (c.nw_bandwidth && !(*c.nw_bandwidth > 0.0)) throw ConfigError("nw.bandwidth: must be positive");
  for (const double e : c.grid.values) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("eps_grid.values: entries must lie in (0, 1)");
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  Config c = parse_config(doc);
  // Relative data paths are taken from the config file's directory.
  if (c.data) {
    const std::filesystem::path data_path(c.data->path);
    if (data_path.is_relative()) {
      c.data->path = (std::filesystem::path(path).parent_path() / data_path).lexically_normal().string();
    }
  }
  return c;
}

json to_json(const Config& c) {
  json j;
  if (c.inline_scenario) {
    j["scenario"] = *c.inline_scenario;
  } else if (c.scenarios.size() == 1) {
    j["scenario"] = c.scenarios.front();
  } else if (!c.scenarios.empty()) {
    j["scenario"] = c.scenarios;
  }
  j["q"] = c.q;
  j["quantile_width"] = c.quantile_width;
  if (c.tol) j["tol"] = *c.tol;
  if (c.seed) j["seed"] = *c.seed;
  j["verify"] = c.verify;
  j["timestamps"] = c.timestamps;
  j["eps_grid"] = {{"values", c.grid.values}, {"richardson", c.grid.richardson}};
  json mc = {{"replications", c.mc.replications},
             {"sample_size", c.mc.sample_size},
             {"coordinate", c.mc.coordinate}};
  if (c.mc.misspecification_eps) mc["misspecification_eps"] = *c.mc.misspecification_eps;
  j["mc"] = mc;
  json bo = {{"raw", c.bias_order.raw},
             {"lr", c.bias_order.lr},
             {"direction", c.bias_order.direction}};
  bo["block"] = c.bias_order.block ? json(*c.bias_order.block) : json(nullptr);
  j["bias_order"] = bo;
  if (c.data) {
    json blocks = json::array();
    for (const auto& b : c.data->blocks) blocks.push_back({{"name", b.name}, {"columns", b.columns}});
    j["data"] = {{"path", c.data->path}, {"blocks", blocks}};
  }
  json out = {{"formats", c.output.formats}};
  if (c.output.dir) out["dir"] = *c.output.dir;
  j["output"] = out;
  if (c.nw_sample_size || c.nw_bandwidth) {
    json nw = json::object();
    if (c.nw_sample_size) nw["sample_size"] = *c.nw_sample_size;
    if (c.nw_bandwidth) nw["bandwidth"] = *c.nw_bandwidth;
    j["nw"] = nw;
  }
  return j;
}

}  // namespace ifcalc::cli
