#include "ifcalc/oracle.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ifcalc/errors.hpp"

namespace ifcalc::oracle {

EpsGrid::EpsGrid(std::vector<double> values, bool richardson)
    : values_(std::move(values)), richardson_(richardson) {
  if (values_.empty()) throw InvalidInput("EpsGrid: no step sizes");
  for (size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0 && values_[i] < 1.0)) {
      throw InvalidInput("EpsGrid: step sizes must lie in (0, 1)");
    }
    if (i > 0 && !(values_[i] < values_[i - 1])) {
      throw InvalidInput("EpsGrid: step sizes must be strictly decreasing");
    }
  }
  if (richardson_ && values_.size() < 3) {
    throw InvalidInput("EpsGrid: Richardson extrapolation needs at least three steps");
  }
}

EpsGrid EpsGrid::standard() { return log_spaced(1e-1, 1e-5, 9); }

EpsGrid EpsGrid::log_spaced(double largest, double smallest, Index points, bool richardson) {
  if (points < 2 || !(largest > smallest) || !(smallest > 0.0)) {
    throw InvalidInput("EpsGrid: need points >= 2 and largest > smallest > 0");
  }
  std::vector<double> v;
  const double a = std::log10(largest);
  const double b = std::log10(smallest);
  for (Index i = 0; i < points; ++i) {
    v.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1)));
  }
  return EpsGrid(std::move(v), richardson);
}

GateauxEstimate gateaux_fd(const Functional& functional, const ContaminationPath& path,
                           const Vector& warm, const EpsGrid& grid) {
  const auto& eps = grid.values();
  const auto k = static_cast<Index>(eps.size());
  Vector base;
  try {
    base = functional(path.base, warm);
  } catch (const Error& e) {
    throw OracleError(std::string("functional fails on the base law: ") + e.what());
  }
  Matrix diff(k, base.size());
  Vector prev = base;
  double scale = std::max(1.0, base.lpNorm<Eigen::Infinity>());
  for (Index i = 0; i < k; ++i) {
    const double e = eps[static_cast<size_t>(i)];
    Vector value;
    try {
      value = functional(dist::contaminate(path, e), prev);
    } catch (const Error& err) {
      std::ostringstream msg;
      msg << "functional fails at eps = " << e << ": " << err.what();
      throw OracleError(msg.str());
    }
    if (value.size() != base.size()) throw OracleError("functional changes dimension along the path");
    diff.row(i) = ((value - base) / e).transpose();
    scale = std::max(scale, value.lpNorm<Eigen::Infinity>());
    prev = value;
  }

  GateauxEstimate out;
  out.differences = diff;
  // Rounding in nu(P_eps) - nu(P), divided by eps.
  auto noise = [&](Index i) { return 8.0 * DBL_EPSILON * scale / eps[static_cast<size_t>(i)]; };

  if (!grid.richardson()) {
    out.derivative = diff.row(k - 1).transpose();
    out.chosen_eps = eps.back();
    out.error_estimate = k > 1 ? Vector((diff.row(k - 1) - diff.row(k - 2)).cwiseAbs().transpose())
                               : Vector::Constant(base.size(), noise(k - 1));
    out.error_estimate.array() += noise(k - 1);
    return out;
  }

  // Forward differences carry an O(eps) error; one Richardson step per
  // adjacent pair removes it.
  Matrix rich(k - 1, base.size());
  std::vector<double> amp(static_cast<size_t>(k - 1));
  for (Index i = 0; i + 1 < k; ++i) {
    const double r = eps[static_cast<size_t>(i)] / eps[static_cast<size_t>(i + 1)];
    rich.row(i) = (r * diff.row(i + 1) - diff.row(i)) / (r - 1.0);
    amp[static_cast<size_t>(i)] = (r + 1.0) / (r - 1.0);
  }
  double best = std::numeric_limits<double>::infinity();
  Index pick = 0;
  for (Index i = 0; i + 2 < k; ++i) {
    const double gap = (rich.row(i) - rich.row(i + 1)).lpNorm<Eigen::Infinity>() +
                       amp[static_cast<size_t>(i + 1)] * noise(i + 2);
    if (gap < best) {
      best = gap;
      pick = i;
    }
  }
  out.derivative = rich.row(pick + 1).transpose();
  out.chosen_eps = eps[static_cast<size_t>(pick + 2)];
  out.error_estimate = (rich.row(pick) - rich.row(pick + 1)).cwiseAbs().transpose();
  out.error_estimate.array() += amp[static_cast<size_t>(pick + 1)] * noise(pick + 2);
  return out;
}

double relative_error(const Vector& analytic, const Vector& numeric) {
  if (analytic.size() != numeric.size()) throw InvalidInput("relative_error: size mismatch");
  const double floor = 1e-3 * std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
  double worst = 0.0;
  for (Index j = 0; j < analytic.size(); ++j) {
    const double denom = std::max(std::abs(analytic(j)), floor);
    worst = std::max(worst, std::abs(analytic(j) - numeric(j)) / denom);
  }
  return worst;
}

namespace {

PointCheck check_point(const Functional& functional, const DiscreteDistribution& law,
                       const Vector& warm, const InfluenceTable& analytic, const EpsGrid& grid,
                       Index i) {
  const ContaminationPath path{law, DiscreteDistribution::point_mass(law.point(i), law.blocks()),
                               std::nullopt};
  const GateauxEstimate est = gateaux_fd(functional, path, warm, grid);
  PointCheck pc;
  pc.point = i;
  pc.analytic = analytic.at(i);
  pc.numeric = est.derivative;
  pc.error_estimate = est.error_estimate;
  if (pc.analytic.size() != pc.numeric.size()) {
    throw InvalidInput("verify_if: analytic table and functional differ in dimension");
  }
  pc.rel_error = relative_error(pc.analytic, pc.numeric);
  return pc;
}

IfVerification summarize(std::vector<PointCheck> points, double tol) {
  IfVerification v;
  v.tol = tol;
  v.points = std::move(points);
  for (const auto& p : v.points) {
    if (v.worst_point < 0 || p.rel_error > v.max_rel_error) {
      v.max_rel_error = p.rel_error;
      v.worst_point = p.point;
    }
  }
  v.pass = v.max_rel_error <= tol;
  return v;
}

void require_same_support(const DiscreteDistribution& law, const InfluenceTable& analytic) {
  if (analytic.size() != law.size()) {
    throw InvalidInput("verify_if: analytic table and law have different supports");
  }
}

}  // namespace

IfVerification verify_if_serial(const Functional& functional, const DiscreteDistribution& law,
                                const Vector& warm, const InfluenceTable& analytic,
                                const EpsGrid& grid, double tol) {
  require_same_support(law, analytic);
  std::vector<PointCheck> points;
  for (Index i = 0; i < law.size(); ++i) {
    points.push_back(check_point(functional, law, warm, analytic, grid, i));
  }
  return summarize(std::move(points), tol);
}

IfVerification verify_if(const Functional& functional, const DiscreteDistribution& law,
                         const Vector& warm, const InfluenceTable& analytic, const EpsGrid& grid,
                         double tol, int jobs) {
  require_same_support(law, analytic);
  const Index n = law.size();
  std::vector<PointCheck> points(static_cast<size_t>(n));
  std::vector<std::string> errors(static_cast<size_t>(n));
#ifdef _OPENMP
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#else
  (void)jobs;
#endif
  for (Index i = 0; i < n; ++i) {
    try {
      points[static_cast<size_t>(i)] = check_point(functional, law, warm, analytic, grid, i);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (!errors[static_cast<size_t>(i)].empty()) {
      throw OracleError("support point " + std::to_string(i) + ": " +
                        errors[static_cast<size_t>(i)]);
    }
  }
  return summarize(std::move(points), tol);
}

IfVerification verify_if(const estimands::EstimandScenario& scenario, const EpsGrid& grid,
                         double tol, int jobs) {
  if (!scenario.functional || !scenario.influence) {
    throw InvalidInput("scenario '" + scenario.name + "' has no functional to verify");
  }
  const InfluenceTable table = scenario.influence(scenario.law);
  const Vector warm = scenario.model ? scenario.model_truth : scenario.truth;
  return verify_if(scenario.functional, scenario.law, warm, table, grid, tol, jobs);
}

// ---- bias order ----

BiasOrderResult fit_bias_order(std::string series, std::vector<std::pair<double, double>> per_eps) {
  BiasOrderResult res;
  res.series = std::move(series);
  res.per_eps = std::move(per_eps);
  std::vector<std::pair<double, double>> usable;
  for (const auto& [e, d] : res.per_eps) {
    if (std::abs(d) > kDriftFloor) usable.emplace_back(e, d);
  }
  std::sort(usable.begin(), usable.end());
  if (usable.size() > 5) usable.resize(5);
  res.used_points = static_cast<Index>(usable.size());
  if (usable.size() < 2) {
    res.inconclusive = true;
    return res;
  }
  const auto m = static_cast<double>(usable.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [e, d] : usable) {
    const double x = std::log(e);
    const double y = std::log(std::abs(d));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double vxx = sxx - sx * sx / m;
  const double vxy = sxy - sx * sy / m;
  const double vyy = syy - sy * sy / m;
  res.slope = vxy / vxx;
  res.intercept = (sy - res.slope * sx) / m;
  res.r_squared = vyy > 0.0 ? vxy * vxy / (vxx * vyy) : 1.0;
  res.reliable = res.r_squared >= kMinRSquared;
  return res;
}

std::vector<std::pair<double, double>> direct_drift(const DirectIdentification& ident,
                                                    const ContaminationPath& path,
                                                    const EpsGrid& grid) {
  const DiscreteDistribution& base = path.base;
  const Index n = base.size();
  auto beta_at = [&](const DiscreteDistribution& moved) {
    const moments::DirectEvaluation ev = moments::evaluate_direct(ident, moved);
    Vector mean = Vector::Zero(ident.target_dim);
    for (Index i = 0; i < n; ++i) {
      const Vector t = ident.target(base.point(i), moments::gather_all(ev.nuisance_values, i));
      mean += base.mass()(i) * t;
    }
    return ident.outer ? (*ident.outer)(mean) : mean;
  };
  const Vector beta0 = beta_at(base);
  std::vector<std::pair<double, double>> out;
  for (double e : grid.values()) {
    try {
      out.emplace_back(e, (beta_at(dist::contaminate(path, e)) - beta0)(0));
    } catch (const Error& err) {
      std::ostringstream msg;
      msg << "drift fails at eps = " << e << ": " << err.what();
      throw OracleError(msg.str());
    }
  }
  return out;
}

namespace {

// Gauss-Newton on f(x) = 0 with a central-difference Jacobian.
Vector newton(const std::function<Vector(const Vector&)>& f, Vector x, const std::string& what) {
  for (int it = 0; it < 100; ++it) {
    const Vector fx = f(x);
    Matrix jac(fx.size(), x.size());
    for (Index j = 0; j < x.size(); ++j) {
      const double h = moments::fd_step(x(j));
      Vector xp = x;
      Vector xm = x;
      xp(j) += h;
      xm(j) -= h;
      jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    const Vector step = -linalg::pinv(jac.transpose() * jac) * (jac.transpose() * fx);
    x += step;
    if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) {
      return x;
    }
  }
  if (f(x).lpNorm<Eigen::Infinity>() <= 1e-12) return x;
  throw SolverError(what + ": no convergence");
}

}  // namespace

std::vector<std::pair<double, double>> moment_drift(const MomentModel& model,
                                                    const moments::MomentFn& beta_moment,
                                                    const Vector& nu, const ContaminationPath& path,
                                                    const EpsGrid& grid) {
  const auto& part = model.partition;
  const Vector beta0 = part.beta_of(nu);
  const Vector gamma0 = part.gamma_of(nu);
  const DiscreteDistribution& base = path.base;

  auto beta_given = [&](const Vector& gamma) {
    return newton(
        [&](const Vector& b) {
          return dist::expect(base, [&](const Vector& z) { return beta_moment(z, b, gamma); });
        },
        beta0, "beta step of '" + model.name + "'");
  };
  const Vector ref = beta_given(gamma0);
  std::vector<std::pair<double, double>> out;
  for (double e : grid.values()) {
    try {
      const DiscreteDistribution moved = dist::contaminate(path, e);
      const Vector gamma = newton(
          [&](const Vector& g) {
            return dist::expect(moved, [&](const Vector& z) { return model.m_gamma(z, beta0, g); });
          },
          gamma0, "nuisance step of '" + model.name + "'");
      out.emplace_back(e, (beta_given(gamma) - ref)(0));
    } catch (const Error& err) {
      std::ostringstream msg;
      msg << "drift fails at eps = " << e << ": " << err.what();
      throw OracleError(msg.str());
    }
  }
  return out;
}

std::pair<BiasOrderResult, BiasOrderResult> bias_order(const DirectIdentification& raw,
                                                       const DirectIdentification& lr,
                                                       const ContaminationPath& path,
                                                       const EpsGrid& grid) {
  return {fit_bias_order(raw.name, direct_drift(raw, path, grid)),
          fit_bias_order(lr.name, direct_drift(lr, path, grid))};
}

std::pair<BiasOrderResult, BiasOrderResult> bias_order(const MomentModel& model,
                                                       const influence::CorrectedMoment& lr,
                                                       const Vector& nu,
                                                       const ContaminationPath& path,
                                                       const EpsGrid& grid) {
  return {fit_bias_order(model.name, moment_drift(model, model.m_beta, nu, path, grid)),
          fit_bias_order(model.name + "-lr", moment_drift(model, lr.values, nu, path, grid))};
}

void write_bias_order_csv(std::ostream& out, const std::vector<BiasOrderResult>& results) {
  out << "eps,abs_delta,series\n" << std::setprecision(17);
  for (const auto& r : results) {
    for (const auto& [e, d] : r.per_eps) out << e << ',' << std::abs(d) << ',' << r.series << '\n';
  }
}

// ---- Monte Carlo ----

namespace {

struct RepOutcome {
  double value = 0.0;
  bool ok = false;
  std::string error;
};

RepOutcome run_rep(const McScenario& sc, const McConfig& cfg, Index rep) {
  RepOutcome o;
  try {
    dist::Rng rng = dist::Rng::stream(cfg.master_seed, static_cast<std::uint64_t>(rep));
    const dist::EmpiricalSample s = dist::sample(sc.law, cfg.sample_size, rng);
    o.value = sc.estimator(s);
    o.ok = std::isfinite(o.value);
    if (!o.ok) o.error = "non-finite estimate";
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

McRow aggregate(const McScenario& sc, const McConfig& cfg, const std::vector<RepOutcome>& reps) {
  McRow row;
  row.name = sc.name;
  row.replications = static_cast<Index>(reps.size());
  row.if_variance = sc.if_variance;
  double sum = 0.0;
  Index ok = 0;
  for (const auto& r : reps) {
    if (r.ok) {
      sum += r.value;
      ++ok;
    } else {
      ++row.failures;
      if (row.failure_messages.size() < 5) row.failure_messages.push_back(r.error);
    }
  }
  if (ok < 2) return row;
  const double mean = sum / static_cast<double>(ok);
  double m2 = 0.0;
  double m4 = 0.0;
  for (const auto& r : reps) {
    if (!r.ok) continue;
    const double d = r.value - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  const auto okd = static_cast<double>(ok);
  const double var = m2 / (okd - 1.0);
  const double mu4 = m4 / okd;
  const auto n = static_cast<double>(cfg.sample_size);
  row.mean = mean;
  row.bias = mean - sc.truth;
  row.n_variance = n * var;
  row.n_variance_se = std::sqrt(std::max(0.0, mu4 - var * var) / okd) * n;
  row.z_score = row.n_variance_se > 0.0 ? (row.n_variance - row.if_variance) / row.n_variance_se : 0.0;
  return row;
}

void require_config(const McConfig& cfg) {
  if (cfg.replications < 2) throw InvalidInput("mc: need at least two replications");
  if (cfg.sample_size < 1) throw InvalidInput("mc: sample size must be positive");
}

}  // namespace

std::vector<McRow> mc_compare_serial(const std::vector<McScenario>& scenarios, const McConfig& cfg) {
  require_config(cfg);
  std::vector<McRow> rows;
  for (const auto& sc : scenarios) {
    std::vector<RepOutcome> reps;
    reps.reserve(static_cast<size_t>(cfg.replications));
    for (Index r = 0; r < cfg.replications; ++r) reps.push_back(run_rep(sc, cfg, r));
    rows.push_back(aggregate(sc, cfg, reps));
  }
  return rows;
}

std::vector<McRow> mc_compare(const std::vector<McScenario>& scenarios, const McConfig& cfg) {
  if (!cfg.parallel) return mc_compare_serial(scenarios, cfg);
  require_config(cfg);
  std::vector<McRow> rows;
  for (const auto& sc : scenarios) {
    std::vector<RepOutcome> reps(static_cast<size_t>(cfg.replications));
#ifdef _OPENMP
    const int threads = cfg.jobs > 0 ? cfg.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
#endif
    for (Index r = 0; r < cfg.replications; ++r) reps[static_cast<size_t>(r)] = run_rep(sc, cfg, r);
    rows.push_back(aggregate(sc, cfg, reps));
  }
  return rows;
}

McScenario mc_scenario(const estimands::EstimandScenario& scenario, Index coordinate) {
  if (!scenario.functional || !scenario.influence) {
    throw InvalidInput("scenario '" + scenario.name + "' has no plug-in functional");
  }
  const InfluenceTable table = scenario.influence(scenario.law);
  if (coordinate < 0 || coordinate >= table.dimension()) {
    throw InvalidInput("mc: coordinate out of range for scenario '" + scenario.name + "'");
  }
  const Vector warm = scenario.model ? scenario.model_truth : scenario.truth;
  const auto functional = scenario.functional;
  const Vector truth_nu = scenario.model ? scenario.model_truth : scenario.truth;
  return McScenario{scenario.name, scenario.law,
                    [functional, warm, coordinate](const dist::EmpiricalSample& s) {
                      return functional(s.aggregate(), warm)(coordinate);
                    },
                    truth_nu(coordinate), table.second_moment()(coordinate, coordinate)};
}

std::vector<McScenario> misspecified_ate(const estimands::AteDgp& dgp, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("misspecification eps must lie in [0, 1)");
  const DiscreteDistribution law = dgp.law();
  const auto cells = dgp.x_support.size();
  std::vector<double> wrong(cells);
  for (size_t k = 0; k < cells; ++k) wrong[k] = dgp.propensity[k] + eps * (1.0 - dgp.propensity[k]);

  double if_var = 0.0;
  for (Index i = 0; i < law.size(); ++i) {
    const double v = estimands::h_aipw(dgp, law.point(i)) - dgp.ate();
    if_var += law.mass()(i) * v * v;
  }
  auto cell = [dgp](double x) {
    const Index k = dgp.cell_of(x);
    if (k < 0) throw DomainError("sample covariate outside the support");
    return static_cast<size_t>(k);
  };

  auto ipw = [wrong, cell](const dist::EmpiricalSample& s) {
    double total = 0.0;
    for (Index i = 0; i < s.size(); ++i) {
      const double pi = wrong[cell(s.points()(i, 0))];
      const double t = s.points()(i, 1);
      const double y = s.points()(i, 2);
      total += s.weights()(i) * (t * y / pi - (1.0 - t) * y / (1.0 - pi));
    }
    return total / s.weights().sum();
  };
  auto aipw = [wrong, cell, cells](const dist::EmpiricalSample& s) {
    std::vector<double> sy1(cells, 0.0), n1(cells, 0.0), sy0(cells, 0.0), n0(cells, 0.0);
    for (Index i = 0; i < s.size(); ++i) {
      const size_t k = cell(s.points()(i, 0));
      const double w = s.weights()(i);
      if (s.points()(i, 1) == 1.0) {
        sy1[k] += w * s.points()(i, 2);
        n1[k] += w;
      } else {
        sy0[k] += w * s.points()(i, 2);
        n0[k] += w;
      }
    }
    double total = 0.0;
    for (Index i = 0; i < s.size(); ++i) {
      const size_t k = cell(s.points()(i, 0));
      if (!(n1[k] > 0.0 && n0[k] > 0.0)) throw DomainError("empty treatment arm in a covariate cell");
      const double tau1 = sy1[k] / n1[k];
      const double tau0 = sy0[k] / n0[k];
      const double pi = wrong[k];
      const double t = s.points()(i, 1);
      const double y = s.points()(i, 2);
      total += s.weights()(i) *
               (tau1 - tau0 + t * (y - tau1) / pi - (1.0 - t) * (y - tau0) / (1.0 - pi));
    }
    return total / s.weights().sum();
  };
  return {McScenario{"ate-ipw-misspecified", law, ipw, dgp.ate(), if_var},
          McScenario{"ate-aipw-misspecified", law, aipw, dgp.ate(), if_var}};
}

void write_mc_csv(std::ostream& out, const std::vector<McRow>& rows) {
  out << "scenario,replications,failures,mean,bias,n_variance,n_variance_se,if_variance,z_score\n"
      << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.name << ',' << r.replications << ',' << r.failures << ',' << r.mean << ',' << r.bias
        << ',' << r.n_variance << ',' << r.n_variance_se << ',' << r.if_variance << ','
        << r.z_score << '\n';
  }
}

}  // namespace ifcalc::oracle
