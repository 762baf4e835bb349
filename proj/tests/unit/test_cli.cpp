#include <doctest.h>

#include <filesystem>

#include "commands.hpp"
#include "config.hpp"

using namespace ifcalc;
using namespace ifcalc::cli;

namespace {

bool all_claims_pass(const json& body) {
  for (const auto& c : body.at("claims")) {
    if (!c.at("pass").get<bool>()) return false;
  }
  return true;
}

bool claim_passes(const json& body, const std::string& suffix) {
  for (const auto& c : body.at("claims")) {
    const auto name = c.at("name").get<std::string>();
    if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return c.at("pass").get<bool>();
    }
  }
  return false;
}

std::string data_file(const std::string& name) {
  return (std::filesystem::path(IFCALC_TEST_DATA_DIR) / name).string();
}

}  // namespace

TEST_CASE("parse_config") {
  SUBCASE("defaults") {
    const Config c = parse_config(json::object());
    CHECK(c.scenarios.empty());
    CHECK(c.q == 0.5);
    CHECK(c.mc.replications == 500);
    CHECK_FALSE(c.seed.has_value());
  }
  SUBCASE("scenario forms") {
    CHECK(parse_config(json{{"scenario", "mean"}}).scenarios == std::vector<std::string>{"mean"});
    const Config many = parse_config(json{{"scenario", {"mean", "iv-gls"}}});
    CHECK(many.scenarios.size() == 2);
    const Config inl = parse_config(
        json{{"scenario", {{"estimand", "mean"}, {"dgp", {{"support", {0, 1}}, {"mass", {0.5, 0.5}}}}}}});
    CHECK(inl.inline_scenario.has_value());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_config(json{{"unknown", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"mc", {{"replicas", 5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"q", "half"}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"q", 1.5}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"seed", -1}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"scenario", {{"estimand", "mean"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"output", {{"formats", {"xml"}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"mc", {{"replications", 1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"nw", {{"bandwidth", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"eps_grid", {{"values", {2.0}}}}}), ConfigError);
  }
  SUBCASE("round trip") {
    const json doc = {{"scenario", {"ate-ipw", "mean"}},
                      {"q", 0.9},
                      {"seed", 12},
                      {"tol", 1e-6},
                      {"jobs", 2},
                      {"verify", true},
                      {"eps_grid", {{"values", {0.1, 0.01}}, {"richardson", false}}},
                      {"mc", {{"replications", 50}, {"sample_size", 300}, {"misspecification_eps", 0.2}}},
                      {"bias_order", {{"block", 2}}},
                      {"output", {{"dir", "out"}, {"formats", {"json", "csv"}}}},
                      {"nw", {{"sample_size", 500}, {"bandwidth", 0.3}}}};
    const Config c = parse_config(doc);
    const json again = to_json(c);
    CHECK(to_json(parse_config(again)) == again);
    CHECK(c.seed.value() == 12);
    CHECK(c.grid.values.size() == 2);
    CHECK(c.bias_order.block.value() == 2);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError); }
}

TEST_CASE("commands") {
  Config cfg = parse_config(json::object());
  SUBCASE("influence with verification") {
    cfg.scenarios = {"mean", "ate-aipw"};
    cfg.verify = true;
    const Report r = cmd_influence(cfg);
    CHECK(all_claims_pass(r.body));
    CHECK(r.body.at("metadata").at("tool") == "ifcalc");
    CHECK(r.tables.size() == 2);
  }
  SUBCASE("unknown scenario") {
    cfg.scenarios = {"no-such"};
    CHECK_THROWS_AS(cmd_influence(cfg), ConfigError);
  }
  SUBCASE("check on the IPW moment flags local robustness") {
    cfg.scenarios = {"ate-ipw"};
    const Report r = cmd_check(cfg);
    bool saw_failure = false;
    for (const auto& row : r.body.at("results").at(0).at("checks")) {
      if (row.at("name") == "local_robustness") saw_failure = !row.at("pass").get<bool>();
    }
    CHECK(saw_failure);
  }
  SUBCASE("mc needs a seed") {
    cfg.scenarios = {"mean"};
    CHECK_THROWS_AS(cmd_mc(cfg), ConfigError);
    cfg.seed = 5;
    cfg.mc.replications = 20;
    cfg.mc.sample_size = 100;
    CHECK(cmd_mc(cfg).body.at("results").size() == 1);
  }
  SUBCASE("bound ordering") {
    cfg.scenarios = {"iv-unconditional", "iv-gls"};
    CHECK(all_claims_pass(cmd_bound(cfg).body));
  }
  // Structural checks on data are findings; the influence verification is the claim.
  SUBCASE("audit fixtures") {
    for (const auto* name : {"audit_ate.json", "audit_iv.json", "audit_quantile.json"}) {
      const Config audit = load_config(data_file(name));
      const Report r = cmd_audit(audit);
      CHECK_MESSAGE(claim_passes(r.body, ":verify_if"), std::string(name));
    }
  }
  SUBCASE("metadata timestamps are opt-in") {
    CHECK_FALSE(report_metadata("x", cfg).contains("generated_at"));
    cfg.timestamps = true;
    CHECK(report_metadata("x", cfg).contains("generated_at"));
  }
}
