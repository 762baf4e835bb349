#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ifcalc/diagnostics.hpp"
#include "ifcalc/estimands.hpp"
#include "ifcalc/influence.hpp"
#include "ifcalc/oracle.hpp"

namespace ifcalc::cli {

namespace {

using estimands::EstimandScenario;

constexpr const char* kVersion = "0.1.0";

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json claim(const std::string& name, double value, double tol, bool pass, const std::string& rule) {
  return {{"name", name}, {"value", value}, {"tol", tol}, {"pass", pass}, {"rule", rule}};
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

// ---- scenario resolution ----

std::vector<double> get_numbers(const json& dgp, const std::string& key, std::vector<double> fallback) {
  if (!dgp.contains(key)) return fallback;
  const json& v = dgp[key];
  if (!v.is_array()) throw ConfigError("scenario.dgp." + key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("scenario.dgp." + key + ": expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

double get_number(const json& dgp, const std::string& key, double fallback) {
  if (!dgp.contains(key)) return fallback;
  if (!dgp[key].is_number()) throw ConfigError("scenario.dgp." + key + ": expected a number");
  return dgp[key].get<double>();
}

void dgp_keys(const json& dgp, const std::vector<std::string>& keys, const std::string& family) {
  for (const auto& [k, v] : dgp.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("scenario.dgp: unknown key '" + k + "' for " + family);
    }
  }
}

estimands::AteDgp ate_dgp_from(const json& dgp) {
  dgp_keys(dgp,
           {"x_support", "x_mass", "propensity", "tau1", "tau0", "shock_values", "shock_mass",
            "scale_base", "scale_x", "scale_t"},
           "ATE estimands");
  estimands::AteDgp d = estimands::AteDgp::canonical();
  d.x_support = get_numbers(dgp, "x_support", d.x_support);
  d.x_mass = get_numbers(dgp, "x_mass", d.x_mass);
  d.propensity = get_numbers(dgp, "propensity", d.propensity);
  d.tau1 = get_numbers(dgp, "tau1", d.tau1);
  d.tau0 = get_numbers(dgp, "tau0", d.tau0);
  d.shock_values = get_numbers(dgp, "shock_values", d.shock_values);
  d.shock_mass = get_numbers(dgp, "shock_mass", d.shock_mass);
  d.scale_base = get_number(dgp, "scale_base", d.scale_base);
  d.scale_x = get_number(dgp, "scale_x", d.scale_x);
  d.scale_t = get_number(dgp, "scale_t", d.scale_t);
  return d;
}

estimands::IvDgp iv_dgp_from(const json& dgp) {
  dgp_keys(dgp, {"w_values", "w_mass", "gamma", "beta", "u_ratio", "heteroskedastic"}, "IV estimands");
  bool hetero = true;
  if (dgp.contains("heteroskedastic")) {
    if (!dgp["heteroskedastic"].is_boolean()) {
      throw ConfigError("scenario.dgp.heteroskedastic: expected true or false");
    }
    hetero = dgp["heteroskedastic"].get<bool>();
  }
  estimands::IvDgp d = estimands::IvDgp::canonical(hetero);
  d.w_values = get_numbers(dgp, "w_values", d.w_values);
  d.w_mass = get_numbers(dgp, "w_mass", d.w_mass);
  const auto g = get_numbers(dgp, "gamma", {d.gamma(0), d.gamma(1)});
  if (g.size() != 2) throw ConfigError("scenario.dgp.gamma: expected two numbers");
  d.gamma << g[0], g[1];
  d.beta = get_number(dgp, "beta", d.beta);
  d.u_ratio = get_number(dgp, "u_ratio", d.u_ratio);
  return d;
}

dist::DiscreteDistribution scalar_law(const json& dgp) {
  const auto support = get_numbers(dgp, "support", {});
  const auto mass = get_numbers(dgp, "mass", {});
  if (support.empty() || support.size() != mass.size()) {
    throw ConfigError("scenario.dgp: 'support' and 'mass' must be non-empty and of equal length");
  }
  Matrix pts(static_cast<Index>(support.size()), 1);
  Vector m(static_cast<Index>(mass.size()));
  for (size_t i = 0; i < support.size(); ++i) {
    pts(static_cast<Index>(i), 0) = support[i];
    m(static_cast<Index>(i)) = mass[i];
  }
  try {
    return dist::DiscreteDistribution(pts, m, dist::VariableBlocks::single(1, "z"));
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("scenario.dgp: ") + e.what());
  }
}

EstimandScenario inline_scenario(const Config& cfg) {
  const json& spec = *cfg.inline_scenario;
  const std::string name = spec["estimand"].get<std::string>();
  const json& dgp = spec["dgp"];
  if (name.rfind("ate-", 0) == 0) return estimands::ate_scenario(ate_dgp_from(dgp), name);
  if (name == "iv-unconditional") {
    return estimands::iv_scenario(iv_dgp_from(dgp), estimands::IvWeighting::unconditional);
  }
  if (name == "iv-gls") return estimands::iv_scenario(iv_dgp_from(dgp), estimands::IvWeighting::gls);
  if (name == "iv-just") return estimands::iv_scenario(iv_dgp_from(dgp), estimands::IvWeighting::just);
  if (name == "mean") {
    dgp_keys(dgp, {"support", "mass"}, "mean");
    return estimands::mean_scenario(scalar_law(dgp));
  }
  if (name == "avg-density") {
    dgp_keys(dgp, {"support", "mass", "width"}, "avg-density");
    return estimands::avg_density_scenario(scalar_law(dgp), get_number(dgp, "width", 1.0));
  }
  if (name == "quantile") {
    dgp_keys(dgp, {"grid", "cells", "lo", "hi"}, "quantile");
    const std::string grid = dgp.contains("grid") ? dgp["grid"].get<std::string>() : "normal";
    const auto cells = static_cast<Index>(get_number(dgp, "cells", grid == "normal" ? 240 : 100));
    const double lo = get_number(dgp, "lo", grid == "normal" ? -6.0 : 0.0);
    const double hi = get_number(dgp, "hi", grid == "normal" ? 6.0 : 1.0);
    if (grid != "normal" && grid != "uniform") {
      throw ConfigError("scenario.dgp.grid: expected 'normal' or 'uniform'");
    }
    const auto law = grid == "normal" ? estimands::normal_grid(cells, lo, hi)
                                      : estimands::uniform_grid(cells, lo, hi);
    return estimands::quantile_scenario(cfg.q, law, (hi - lo) / static_cast<double>(cells));
  }
  throw ConfigError("scenario.estimand: '" + name + "' has no inline form");
}

EstimandScenario resolve(const Config& cfg, const std::string& name) {
  if (cfg.inline_scenario) return inline_scenario(cfg);
  try {
    return estimands::make_scenario(name, estimands::ScenarioOptions{cfg.q});
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> scenario_list(const Config& cfg) {
  if (cfg.scenarios.empty()) throw ConfigError("no scenario given (use --scenario or 'scenario')");
  return cfg.scenarios;
}

oracle::EpsGrid grid_of(const Config& cfg) {
  try {
    if (cfg.grid.values.empty()) {
      return oracle::EpsGrid(oracle::EpsGrid::standard().values(), cfg.grid.richardson);
    }
    return oracle::EpsGrid(cfg.grid.values, cfg.grid.richardson);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("eps_grid: ") + e.what());
  }
}

std::string influence_csv(const dist::DiscreteDistribution& law, const InfluenceTable& t) {
  std::ostringstream o;
  o << std::setprecision(17);
  for (const auto& c : law.blocks().coordinate_names()) o << c << ',';
  o << "mass";
  for (Index j = 0; j < t.dimension(); ++j) {
    const auto& labels = t.labels();
    o << ",if_" << (static_cast<size_t>(j) < labels.size() ? labels[static_cast<size_t>(j)]
                                                          : std::to_string(j));
  }
  o << '\n';
  for (Index i = 0; i < law.size(); ++i) {
    for (Index j = 0; j < law.dim(); ++j) o << law.points()(i, j) << ',';
    o << law.mass()(i);
    for (Index j = 0; j < t.dimension(); ++j) o << ',' << t.values()(i, j);
    o << '\n';
  }
  return o.str();
}

json verification_json(const oracle::IfVerification& v) {
  json points = json::array();
  for (const auto& p : v.points) {
    points.push_back({{"point", p.point},
                      {"analytic", vector_json(p.analytic)},
                      {"numeric", vector_json(p.numeric)},
                      {"error_estimate", vector_json(p.error_estimate)},
                      {"rel_error", p.rel_error}});
  }
  return {{"max_rel_error", v.max_rel_error},
          {"worst_point", v.worst_point},
          {"tol", v.tol},
          {"pass", v.pass},
          {"points", points}};
}

json nw_report(const Config& cfg, json& claims) {
  if (!cfg.seed) throw ConfigError("scenario 'nw' samples data and needs a seed (--seed)");
  const auto ns = estimands::nw_scenario(*cfg.seed, cfg.nw_sample_size.value_or(10000),
                                         cfg.nw_bandwidth.value_or(0.5));
  const auto inf = influence::if_nonparametric(ns.spec, ns.sample,
                                               influence::NonparametricTarget::regression, ns.point);
  const double rel = std::abs(inf.rescaled_variance - ns.target_variance) / ns.target_variance;
  claims.push_back(claim("nw_rescaled_variance_rel_gap", rel, 0.1, rel <= 0.1,
                         "|b^d <if, if> - sigma^2 / f * int K^2| / target <= tol"));
  return {{"scenario", "nw"},
          {"estimate", inf.estimate},
          {"kernel_mass", inf.kernel_mass},
          {"rescaled_variance", inf.rescaled_variance},
          {"target_variance", ns.target_variance},
          {"mean_certificate", inf.table.mean_certificate()}};
}

json check_json(const diagnostics::ConditionReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"magnitude", c.magnitude},
                      {"tol", c.tol},
                      {"pass", c.pass},
                      {"condition", c.tag}});
  }
  json verdicts = json::object();
  for (const auto& [k, v] : rep.verdicts) verdicts[k] = v;
  return {{"checks", checks},
          {"verdicts", verdicts},
          {"scenario_class", rep.scenario ? diagnostics::to_string(*rep.scenario) : "unknown"}};
}

void append_check_rows(std::ostringstream& csv, const std::string& name,
                       const diagnostics::ConditionReport& rep) {
  for (const auto& c : rep.checks) {
    csv << name << ',' << c.name << ',' << fmt(c.magnitude) << ',' << fmt(c.tol) << ','
        << (c.pass ? "pass" : "fail") << '\n';
  }
}

diagnostics::ConditionReport checks_for(const EstimandScenario& s, double tol) {
  if (!s.model) {
    throw PreconditionError("scenario '" + s.name +
                            "' has no moment-form model; conditions need (m_beta, m_gamma)");
  }
  return diagnostics::run_checks(*s.model, s.law, s.model_truth, tol);
}

}  // namespace

json report_metadata(const std::string& command, const Config& cfg) {
  json meta = {{"tool", "ifcalc"}, {"version", kVersion}, {"command", command},
               {"config", to_json(cfg)}};
  meta["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  if (cfg.timestamps) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    meta["generated_at"] = ts.str();
  }
  return meta;
}

Report cmd_influence(const Config& cfg) {
  Report r;
  r.body["metadata"] = report_metadata("influence", cfg);
  json results = json::array();
  json claims = json::array();
  const double tol = cfg.tol.value_or(kMeanTol);
  for (const auto& name : scenario_list(cfg)) {
    if (name == "nw" && !cfg.inline_scenario) {
      results.push_back(nw_report(cfg, claims));
      continue;
    }
    const EstimandScenario s = resolve(cfg, name);
    const InfluenceTable t = s.influence(s.law);
    const double mean_tol = tol * std::max(1.0, t.values().cwiseAbs().maxCoeff());
    json entry = {{"scenario", s.name},
                  {"estimate", vector_json(s.model ? s.model_truth : s.truth)},
                  {"labels", t.labels()},
                  {"variance", matrix_json(t.second_moment())},
                  {"mean_certificate", t.mean_certificate()},
                  {"mean_tol", mean_tol}};
    claims.push_back(claim(s.name + ":zero_mean", t.mean_certificate(), mean_tol,
                           t.mean_certificate() <= mean_tol, "|P[if]| <= tol"));
    if (s.expected_if) {
      const Index cols = s.expected_if->cols();
      const double gap = (t.values().leftCols(cols) - *s.expected_if).cwiseAbs().maxCoeff();
      entry["closed_form_gap"] = gap;
      claims.push_back(claim(s.name + ":closed_form", gap, 1e-8, gap <= 1e-8,
                             "max |if - closed form| <= tol"));
    }
    if (cfg.verify) {
      const auto v = oracle::verify_if(s, grid_of(cfg), oracle::kVerifyTol, cfg.jobs);
      entry["verify_if"] = verification_json(v);
      claims.push_back(claim(s.name + ":verify_if", v.max_rel_error, v.tol, v.pass,
                             "max relative error of finite differences <= tol"));
    }
    results.push_back(entry);
    r.tables.emplace_back("influence_" + s.name, influence_csv(s.law, t));
  }
  r.body["results"] = results;
  r.body["claims"] = claims;
  return r;
}

Report cmd_check(const Config& cfg) {
  Report r;
  r.body["metadata"] = report_metadata("check", cfg);
  const double tol = cfg.tol.value_or(diagnostics::kStructuralTol);
  json results = json::array();
  json claims = json::array();
  std::ostringstream csv;
  csv << "scenario,check,magnitude,tol,result\n";
  for (const auto& name : scenario_list(cfg)) {
    const EstimandScenario s = resolve(cfg, name);
    const auto rep = checks_for(s, tol);
    json entry = check_json(rep);
    entry["scenario"] = s.name;
    results.push_back(entry);
    for (const auto& c : rep.checks) {
      claims.push_back(claim(s.name + ":" + c.name, c.magnitude, c.tol, c.pass, c.tag));
    }
    append_check_rows(csv, s.name, rep);
  }
  r.body["results"] = results;
  r.body["claims"] = claims;
  r.tables.emplace_back("checks", csv.str());
  return r;
}

Report cmd_bias_order(const Config& cfg) {
  Report r;
  r.body["metadata"] = report_metadata("bias-order", cfg);
  const auto& bo = cfg.bias_order;
  if (bo.raw.rfind("ate-", 0) != 0 || bo.lr.rfind("ate-", 0) != 0) {
    throw ConfigError("bias_order: raw and lr must be ATE estimands");
  }
  estimands::AteDgp dgp = estimands::AteDgp::canonical();
  if (cfg.inline_scenario) {
    const auto& spec = *cfg.inline_scenario;
    if (spec["estimand"].get<std::string>().rfind("ate-", 0) != 0) {
      throw ConfigError("bias-order needs an ATE data-generating process");
    }
    dgp = ate_dgp_from(spec["dgp"]);
  }
  const auto law = dgp.law();
  if (bo.direction.size() != 3) throw ConfigError("bias_order.direction: expected (x, t, y)");
  Vector z(3);
  z << bo.direction[0], bo.direction[1], bo.direction[2];
  const dist::ContaminationPath path{law, dist::DiscreteDistribution::point_mass(z, law.blocks()),
                                     bo.block ? std::optional<Index>(*bo.block) : std::nullopt};
  const auto grid = grid_of(cfg);
  const auto raw = estimands::ate_scenario(dgp, bo.raw);
  const auto lr = estimands::ate_scenario(dgp, bo.lr);
  auto [fit_raw, fit_lr] = oracle::bias_order(*raw.ident, *lr.ident, path, grid);
  std::vector<oracle::BiasOrderResult> fits{fit_raw, fit_lr};

  // Moment form: IPW against its locally robust correction.
  const auto ipw = estimands::ate_scenario(dgp, "ate-ipw");
  const auto corrected = influence::make_lr_moment(*ipw.model, ipw.law, ipw.model_truth);
  auto [m_raw, m_lr] = oracle::bias_order(*ipw.model, corrected, ipw.model_truth, path, grid);
  m_raw.series = "ate-ipw-moment";
  m_lr.series = "ate-ipw-moment-lr";
  fits.push_back(m_raw);
  fits.push_back(m_lr);

  json claims = json::array();
  json results = json::array();
  std::ostringstream fit_csv;
  fit_csv << "series,slope,intercept,r_squared,used_points,inconclusive,reliable\n";
  for (size_t k = 0; k < fits.size(); ++k) {
    const auto& f = fits[k];
    json per = json::array();
    for (const auto& [e, d] : f.per_eps) per.push_back({{"eps", e}, {"delta", d}});
    results.push_back({{"series", f.series},
                       {"slope", f.slope},
                       {"intercept", f.intercept},
                       {"r_squared", f.r_squared},
                       {"used_points", f.used_points},
                       {"inconclusive", f.inconclusive},
                       {"reliable", f.reliable},
                       {"per_eps", per}});
    fit_csv << f.series << ',' << fmt(f.slope) << ',' << fmt(f.intercept) << ','
            << fmt(f.r_squared) << ',' << f.used_points << ',' << f.inconclusive << ','
            << f.reliable << '\n';
    const bool first_order = k % 2 == 0;
    const double lo = first_order ? 0.85 : 1.75;
    const double hi = first_order ? 1.15 : 2.4;
    if (!f.inconclusive) {
      claims.push_back({{"name", f.series + ":slope"},
                        {"value", f.slope},
                        {"tol", json::array({lo, hi})},
                        {"pass", f.slope >= lo && f.slope <= hi},
                        {"rule", "fitted slope inside the interval"}});
    }
    claims.push_back(claim(f.series + ":r_squared", f.r_squared, oracle::kMinRSquared, f.reliable,
                           "r^2 >= tol"));
  }
  r.body["results"] = results;
  r.body["claims"] = claims;
  std::ostringstream curves;
  oracle::write_bias_order_csv(curves, fits);
  r.tables.emplace_back("bias_order", curves.str());
  r.tables.emplace_back("bias_order_fits", fit_csv.str());
  return r;
}

Report cmd_mc(const Config& cfg) {
  if (!cfg.seed) throw ConfigError("mc needs a master seed (--seed or 'seed')");
  Report r;
  r.body["metadata"] = report_metadata("mc", cfg);
  std::vector<oracle::McScenario> scenarios;
  for (const auto& name : scenario_list(cfg)) {
    scenarios.push_back(oracle::mc_scenario(resolve(cfg, name), cfg.mc.coordinate));
  }
  const size_t calibrated = scenarios.size();
  if (cfg.mc.misspecification_eps) {
    estimands::AteDgp dgp = estimands::AteDgp::canonical();
    if (cfg.inline_scenario && (*cfg.inline_scenario)["estimand"].get<std::string>().rfind("ate-", 0) == 0) {
      dgp = ate_dgp_from((*cfg.inline_scenario)["dgp"]);
    }
    for (auto& s : oracle::misspecified_ate(dgp, *cfg.mc.misspecification_eps)) {
      scenarios.push_back(std::move(s));
    }
  }
  oracle::McConfig mc;
  mc.replications = cfg.mc.replications;
  mc.sample_size = cfg.mc.sample_size;
  mc.master_seed = *cfg.seed;
  mc.jobs = cfg.jobs;
  mc.parallel = true;
  const auto rows = oracle::mc_compare(scenarios, mc);
  const double z_tol = cfg.tol.value_or(3.0);
  json results = json::array();
  json claims = json::array();
  for (size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    results.push_back({{"scenario", row.name},
                       {"replications", row.replications},
                       {"failures", row.failures},
                       {"failure_messages", row.failure_messages},
                       {"mean", row.mean},
                       {"bias", row.bias},
                       {"n_variance", row.n_variance},
                       {"n_variance_se", row.n_variance_se},
                       {"if_variance", row.if_variance},
                       {"z_score", row.z_score}});
    if (k < calibrated) {
      claims.push_back(claim(row.name + ":variance_z", std::abs(row.z_score), z_tol,
                             std::abs(row.z_score) <= z_tol,
                             "|n var - <if, if>| / MC standard error <= tol"));
    }
  }
  r.body["results"] = results;
  r.body["claims"] = claims;
  std::ostringstream csv;
  oracle::write_mc_csv(csv, rows);
  r.tables.emplace_back("mc", csv.str());
  return r;
}

Report cmd_bound(const Config& cfg) {
  Report r;
  r.body["metadata"] = report_metadata("bound", cfg);
  const double tol = cfg.tol.value_or(1e-10);
  json results = json::array();
  json claims = json::array();
  std::vector<std::pair<std::string, Matrix>> beta_bounds;
  std::ostringstream csv;
  csv << "scenario,quantity,value\n";
  for (const auto& name : scenario_list(cfg)) {
    const EstimandScenario s = resolve(cfg, name);
    if (!s.model) throw PreconditionError("scenario '" + s.name + "' has no moment-form model");
    const auto sys = moments::block_system(*s.model, s.law, s.model_truth);
    const auto b = diagnostics::efficiency_bound(sys, *s.model, s.law, s.model_truth, s.score);
    const Index d_beta = s.model->partition.d_beta();
    const Matrix beta_block = b.m_bound.topLeftCorner(d_beta, d_beta);
    json entry = {{"scenario", s.name},
                  {"m_bound", matrix_json(b.m_bound)},
                  {"beta_bound", matrix_json(beta_block)},
                  {"inflation_min_eig", b.inflation_min_eig},
                  {"offdiag_magnitude", b.offdiag_magnitude},
                  {"one_step_magnitude", b.one_step_magnitude}};
    csv << s.name << ",beta_bound_00," << fmt(beta_block(0, 0)) << '\n';
    if (b.cramer_rao) {
      entry["cramer_rao"] = matrix_json(*b.cramer_rao);
      entry["gap_min_eig"] = *b.gap_psd_certificate;
      entry["projection_residual"] = *b.projection_residual;
      entry["score_identity_residual"] = *b.score_identity_residual;
      claims.push_back(claim(s.name + ":bound_minus_cramer_rao_psd", *b.gap_psd_certificate, -tol,
                             *b.gap_psd_certificate >= -tol, "min eig >= tol"));
      claims.push_back(claim(s.name + ":score_identity", *b.score_identity_residual, 1e-6,
                             *b.score_identity_residual <= 1e-6, "residual <= tol"));
      csv << s.name << ",gap_min_eig," << fmt(*b.gap_psd_certificate) << '\n';
    }
    results.push_back(entry);
    beta_bounds.emplace_back(s.name, beta_block);
  }
  json ordering = json::array();
  for (size_t i = 0; i < beta_bounds.size(); ++i) {
    for (size_t j = i + 1; j < beta_bounds.size(); ++j) {
      const auto& [na, a] = beta_bounds[i];
      const auto& [nb, bm] = beta_bounds[j];
      if (a.rows() != bm.rows()) continue;
      const double ab = linalg::min_eigenvalue(bm - a);
      const double ba = linalg::min_eigenvalue(a - bm);
      const bool ordered = ab >= -tol || ba >= -tol;
      ordering.push_back({{"first", na},
                          {"second", nb},
                          {"min_eig_second_minus_first", ab},
                          {"min_eig_first_minus_second", ba},
                          {"ordered", ordered},
                          {"smaller", ab >= -tol ? na : (ba >= -tol ? nb : "")}});
      claims.push_back(claim(na + "_vs_" + nb + ":psd_ordered", std::max(ab, ba), -tol, ordered,
                             "one difference of the beta bounds is PSD"));
    }
  }
  r.body["results"] = results;
  r.body["ordering"] = ordering;
  r.body["claims"] = claims;
  r.tables.emplace_back("bounds", csv.str());
  return r;
}

Report cmd_audit(const Config& cfg) {
  if (!cfg.data) throw ConfigError("audit needs a 'data' section with path and blocks");
  Report r;
  r.body["metadata"] = report_metadata("audit", cfg);
  const auto names = scenario_list(cfg);
  if (names.size() != 1) throw ConfigError("audit takes exactly one estimand");
  const std::string& name = names.front();

  dist::CsvTable table;
  try {
    table = dist::read_csv_file(cfg.data->path);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> blocks;
  for (const auto& b : cfg.data->blocks) blocks.emplace_back(b.name, b.columns);
  dist::DiscreteDistribution law = [&] {
    try {
      return dist::sample_from_columns(table, blocks).aggregate();
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }();

  auto build = [&]() -> EstimandScenario {
    if (name == "mean") return estimands::mean_scenario(law);
    if (name == "avg-density") return estimands::avg_density_scenario(law, 1.0);
    if (name == "quantile") return estimands::quantile_scenario(cfg.q, law, cfg.quantile_width);
    if (name.rfind("ate-", 0) == 0) return estimands::ate_scenario_on(law, name);
    if (name == "iv-unconditional") {
      return estimands::iv_scenario_on(law, estimands::IvWeighting::unconditional);
    }
    if (name == "iv-just") return estimands::iv_scenario_on(law, estimands::IvWeighting::just);
    throw ConfigError("audit: estimand '" + name + "' is not available on ingested data");
  };
  const auto s = build();
  json claims = json::array();
  json entry = {{"scenario", s.name},
                {"support_points", law.size()},
                {"observations", table.data.rows()},
                {"estimate", vector_json(s.model ? s.model_truth : s.truth)}};
  std::ostringstream csv;
  csv << "scenario,check,magnitude,tol,result\n";
  if (s.model && s.model->partition.d_gamma() > 0) {
    const auto rep = checks_for(s, diagnostics::kStructuralTol);
    entry["conditions"] = check_json(rep);
    for (const auto& c : rep.checks) {
      claims.push_back(claim(s.name + ":" + c.name, c.magnitude, c.tol, c.pass, c.tag));
    }
    append_check_rows(csv, s.name, rep);
  }
  const auto v = oracle::verify_if(s, grid_of(cfg), cfg.tol.value_or(oracle::kVerifyTol), cfg.jobs);
  entry["verify_if"] = verification_json(v);
  claims.push_back(claim(s.name + ":verify_if", v.max_rel_error, v.tol, v.pass,
                         "max relative error of finite differences <= tol"));
  csv << s.name << ",verify_if," << fmt(v.max_rel_error) << ',' << fmt(v.tol) << ','
      << (v.pass ? "pass" : "fail") << '\n';
  r.body["results"] = json::array({entry});
  r.body["claims"] = claims;
  r.tables.emplace_back("audit", csv.str());
  r.tables.emplace_back("influence_" + s.name, influence_csv(law, s.influence(law)));
  return r;
}

void emit(const Report& report, const Config& cfg) {
  const auto& formats = cfg.output.formats;
  const bool want_json = std::find(formats.begin(), formats.end(), "json") != formats.end();
  const bool want_csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
  if (cfg.output.dir) {
    namespace fs = std::filesystem;
    const fs::path dir(*cfg.output.dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
    if (want_json) {
      std::ofstream out(dir / "report.json");
      if (!out) throw ConfigError("cannot write " + (dir / "report.json").string());
      out << report.body.dump(2) << '\n';
    }
    if (want_csv) {
      for (const auto& [stem, text] : report.tables) {
        std::ofstream out(dir / (stem + ".csv"));
        if (!out) throw ConfigError("cannot write " + (dir / (stem + ".csv")).string());
        out << text;
      }
    }
    return;
  }
  if (want_json) std::cout << report.body.dump(2) << '\n';
  if (want_csv) {
    for (const auto& [stem, text] : report.tables) std::cout << "# " << stem << '\n' << text;
  }
}

}  // namespace ifcalc::cli
