#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifcalc/errors.hpp"

namespace ifcalc::cli {

using nlohmann::json;

// Malformed or inconsistent configuration; exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct GridConfig {
  std::vector<double> values{};  // empty: standard grid
  bool richardson = true;
};

struct McSettings {
  std::int64_t replications = 500;
  std::int64_t sample_size = 1000;
  std::int64_t coordinate = 0;
  std::optional<double> misspecification_eps;
};

struct BiasOrderSettings {
  std::string raw = "ate-ipw";
  std::string lr = "ate-aipw";
  std::vector<double> direction{1.0, 1.0, 3.7};
  std::optional<std::int64_t> block;
};

struct DataBlock {
  std::string name;
  std::vector<std::string> columns;
};

struct DataSettings {
  std::string path;
  std::vector<DataBlock> blocks;
};

struct OutputSettings {
  std::optional<std::string> dir;
  std::vector<std::string> formats{"json"};
};

struct Config {
  std::vector<std::string> scenarios;  // registry names
  std::optional<json> inline_scenario;  // {"estimand": ..., "dgp": {...}}
  double q = 0.5;
  double quantile_width = 0.0;  // data-driven quantile smoothing
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool verify = false;
  bool timestamps = false;
  GridConfig grid;
  McSettings mc;
  BiasOrderSettings bias_order;
  std::optional<DataSettings> data;
  OutputSettings output;
  std::optional<std::int64_t> nw_sample_size;
  std::optional<double> nw_bandwidth;
};

// Parses and validates a config document. Unknown keys and wrong types
// throw ConfigError naming the offending path.
Config parse_config(const json& doc);
Config load_config(const std::string& path);

// Canonical JSON form; parse_config(to_json(c)) reproduces c.
json to_json(const Config& c);

}  // namespace ifcalc::cli
