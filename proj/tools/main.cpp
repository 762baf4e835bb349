#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace ifcalc;
using namespace ifcalc::cli;

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<double> q;
  std::optional<std::string> format;
  std::optional<int> jobs;
  std::vector<std::string> scenarios;
  bool verify = false;
};

Config build_config(const Overrides& o) {
  Config cfg = o.config_path.empty() ? parse_config(json::object()) : load_config(o.config_path);
  if (!o.scenarios.empty()) {
    cfg.scenarios = o.scenarios;
    cfg.inline_scenario.reset();
  }
  if (o.out) cfg.output.dir = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.tol) cfg.tol = *o.tol;
  if (o.q) cfg.q = *o.q;
  if (o.format) cfg.output.formats = {*o.format};
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.verify) cfg.verify = true;
  return cfg;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", o.out, "output directory (default: stdout)");
  sub->add_option("--seed", o.seed, "master seed for sampling");
  sub->add_option("--tol", o.tol, "tolerance override");
  sub->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("-j,--jobs", o.jobs, "worker threads (0: OpenMP default)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("-s,--scenario", o.scenarios, "registry scenario name (repeatable)");
  sub->add_option("--q", o.q, "quantile level")->check(CLI::Range(0.0, 1.0));
}

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidInput*>(&e)) return 2;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Influence functions, orthogonality diagnostics and efficiency bounds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ifcalc 0.1.0");

  Overrides o;
  using Command = Report (*)(const Config&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"influence", "influence function tables with zero-mean certificates", cmd_influence},
      {"check", "local robustness, one-step, two-step and adaptivity conditions", cmd_check},
      {"bias-order", "first-step bias order of raw and corrected estimands", cmd_bias_order},
      {"mc", "Monte Carlo variance against the influence variance", cmd_mc},
      {"bound", "semiparametric efficiency bounds and their ordering", cmd_bound},
      {"audit", "conditions and influence verification on CSV data", cmd_audit},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    if (name == "influence") sub->add_flag("--verify", o.verify, "finite-difference verification");
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const Config cfg = build_config(o);
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) {
        emit(fn(cfg), cfg);
        return 0;
      }
    }
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "ifcalc: " << e.what() << '\n';
    return exit_code_of(e);
  }
}
