#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ifcalc/distributions.hpp"
#include "ifcalc/estimands.hpp"
#include "ifcalc/influence.hpp"
#include "ifcalc/influence_table.hpp"
#include "ifcalc/moments.hpp"

namespace ifcalc::oracle {

using dist::ContaminationPath;
using dist::DiscreteDistribution;
using moments::DirectIdentification;
using moments::MomentModel;

// Descending step sizes for one-sided differences along a contamination path.
class EpsGrid {
 public:
  // Throws InvalidInput unless strictly decreasing, positive and below 1.
  explicit EpsGrid(std::vector<double> values, bool richardson = true);
  // 1e-1 down to 1e-5, nine log-spaced points.
  static EpsGrid standard();
  static EpsGrid log_spaced(double largest, double smallest, Index points, bool richardson = true);

  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] bool richardson() const { return richardson_; }

 private:
  std::vector<double> values_;
  bool richardson_;
};

using Functional = std::function<Vector(const DiscreteDistribution&, const Vector& warm)>;

struct GateauxEstimate {
  Vector derivative;
  Vector error_estimate;  // grid-consistency bound, per coordinate
  Matrix differences;     // one row per eps: (nu(P_eps) - nu(P)) / eps
  double chosen_eps = 0.0;
};

// d/d eps nu(base + eps (direction - base)) at 0. Each eps is solved from
// the previous eps's value. Throws OracleError naming the eps on failure.
GateauxEstimate gateaux_fd(const Functional& functional, const ContaminationPath& path,
                           const Vector& warm, const EpsGrid& grid = EpsGrid::standard());

struct PointCheck {
  Index point = 0;
  Vector analytic;
  Vector numeric;
  Vector error_estimate;
  double rel_error = 0.0;
};

struct IfVerification {
  std::vector<PointCheck> points;
  double max_rel_error = 0.0;
  Index worst_point = -1;
  double tol = 1e-4;
  bool pass = false;
};

inline constexpr double kVerifyTol = 1e-4;

// |a - b| / max(|a|, 1e-3 max(1, |a|_inf)) with a the analytic vector.
double relative_error(const Vector& analytic, const Vector& numeric);

// Point-mass directions at every support point of `law`. OpenMP over points.
IfVerification verify_if(const Functional& functional, const DiscreteDistribution& law,
                         const Vector& warm, const InfluenceTable& analytic,
                         const EpsGrid& grid = EpsGrid::standard(), double tol = kVerifyTol,
                         int jobs = 0);
IfVerification verify_if_serial(const Functional& functional, const DiscreteDistribution& law,
                                const Vector& warm, const InfluenceTable& analytic,
                                const EpsGrid& grid = EpsGrid::standard(),
                                double tol = kVerifyTol);
// Uses the scenario's own functional and analytic influence on its law.
IfVerification verify_if(const estimands::EstimandScenario& scenario,
                         const EpsGrid& grid = EpsGrid::standard(), double tol = kVerifyTol,
                         int jobs = 0);

// ---- first-step bias order ----

inline constexpr double kDriftFloor = 1e-13;
inline constexpr double kMinRSquared = 0.98;

struct BiasOrderResult {
  std::string series;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> per_eps;  // (eps, delta)
  Index used_points = 0;
  bool inconclusive = false;  // fewer than two drifts above the floor
  bool reliable = false;      // r_squared >= kMinRSquared and conclusive
};

// Least squares of log|delta| on log eps over the five smallest eps with
// |delta| > kDriftFloor.
BiasOrderResult fit_bias_order(std::string series, std::vector<std::pair<double, double>> per_eps);

// beta drift when only the nuisances move: every node is re-identified
// under the contaminated law, then the target is averaged under the base.
std::vector<std::pair<double, double>> direct_drift(const DirectIdentification& ident,
                                                    const ContaminationPath& path,
                                                    const EpsGrid& grid);

// Moment-form drift: gamma solves P_eps[m_gamma] = 0, then beta solves
// P[m(beta, gamma_eps)] = 0 under the base with m = `beta_moment`.
std::vector<std::pair<double, double>> moment_drift(const MomentModel& model,
                                                    const moments::MomentFn& beta_moment,
                                                    const Vector& nu, const ContaminationPath& path,
                                                    const EpsGrid& grid);

// (raw, lr) for two direct identifications of the same beta.
std::pair<BiasOrderResult, BiasOrderResult> bias_order(const DirectIdentification& raw,
                                                       const DirectIdentification& lr,
                                                       const ContaminationPath& path,
                                                       const EpsGrid& grid = EpsGrid::standard());
// (raw m_beta, corrected moment) within one moment model.
std::pair<BiasOrderResult, BiasOrderResult> bias_order(const MomentModel& model,
                                                       const influence::CorrectedMoment& lr,
                                                       const Vector& nu,
                                                       const ContaminationPath& path,
                                                       const EpsGrid& grid = EpsGrid::standard());

// Long format: eps, abs_delta, series.
void write_bias_order_csv(std::ostream& out, const std::vector<BiasOrderResult>& results);

// ---- Monte Carlo ----

struct McConfig {
  Index replications = 500;
  Index sample_size = 1000;
  std::uint64_t master_seed = 0;
  bool parallel = true;
  int jobs = 0;  // 0: OpenMP default
};

struct McScenario {
  std::string name;
  DiscreteDistribution law;  // sampling law
  // Estimate on one sample; failures throw.
  std::function<double(const dist::EmpiricalSample&)> estimator;
  double truth = 0.0;
  double if_variance = 0.0;  // <nu_dot, nu_dot> on `law`
};

struct McRow {
  std::string name;
  Index replications = 0;
  Index failures = 0;
  double mean = 0.0;
  double bias = 0.0;
  double n_variance = 0.0;
  double n_variance_se = 0.0;  // sqrt((mu4 - sigma^4) / R) * n
  double if_variance = 0.0;
  double z_score = 0.0;  // (n_variance - if_variance) / n_variance_se
  std::vector<std::string> failure_messages;  // first few only
};

// Replication r draws from Rng::stream(master_seed, r); results are
// aggregated in replication order.
std::vector<McRow> mc_compare(const std::vector<McScenario>& scenarios, const McConfig& cfg);
std::vector<McRow> mc_compare_serial(const std::vector<McScenario>& scenarios, const McConfig& cfg);

// Plug-in estimator on the aggregated sample for a registry scenario,
// reporting coordinate `coordinate` of nu.
McScenario mc_scenario(const estimands::EstimandScenario& scenario, Index coordinate = 0);

// IPW and AIPW with the propensity replaced by pi + eps (1 - pi); outcome
// means are estimated. Truth and IF variance refer to the correct model.
std::vector<McScenario> misspecified_ate(const estimands::AteDgp& dgp, double eps);

void write_mc_csv(std::ostream& out, const std::vector<McRow>& rows);

}  // namespace ifcalc::oracle
