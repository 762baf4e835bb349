#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ifcalc/distributions.hpp"
#include "ifcalc/influence.hpp"
#include "ifcalc/influence_table.hpp"
#include "ifcalc/moments.hpp"

namespace ifcalc::estimands {

using dist::DiscreteDistribution;
using moments::DirectIdentification;
using moments::MomentModel;

// Law of (X, T, Y) with finite X, binary T and finite-support outcome
// noise: Y = tau_T(X) + scale(X, T) * shock.
struct AteDgp {
  std::vector<double> x_support;
  std::vector<double> x_mass;
  std::vector<double> propensity;  // P(T = 1 | X = x)
  std::vector<double> tau1;
  std::vector<double> tau0;
  std::vector<double> shock_values;  // mean zero under shock_mass
  std::vector<double> shock_mass;
  double scale_base = 0.5;
  double scale_x = 0.25;
  double scale_t = 0.5;

  static AteDgp canonical();
  // Throws ConstructionError when overlap fails or inputs disagree.
  void validate() const;
  [[nodiscard]] double scale(double x, int t) const;
  // Blocks x, t, y; points ordered by x, then t, then shock.
  [[nodiscard]] DiscreteDistribution law() const;
  [[nodiscard]] double ate() const;
  [[nodiscard]] Index cell_of(double x) const;  // -1 when x is not in the support
};

// Random instance with overlap margin `margin` and `cells` covariate values.
AteDgp random_ate_dgp(dist::Rng& rng, Index cells = 3, double margin = 0.05);

// Direct identifications
DirectIdentification ate_ipw_direct();
DirectIdentification ate_nipw_direct();
DirectIdentification ate_reg_direct();
DirectIdentification ate_aipw_direct();

// Indices of the treatment-level nuisances of the regression graph.
std::vector<Index> hahn_treatment_nodes();

enum class AteMoment { ipw, aipw };

// beta moment plus one propensity moment 1{X = x_k}(T - pi_k) per cell;
// outcome means enter at their population values.
MomentModel ate_moment_model(const AteDgp& dgp, AteMoment kind);

// Augmented IPW function at population values.
double h_aipw(const AteDgp& dgp, const Vector& z);

struct EstimandScenario {
  EstimandScenario(std::string name_, DiscreteDistribution law_)
      : name(std::move(name_)), law(std::move(law_)) {}

  std::string name;
  DiscreteDistribution law;
  Vector truth;  // full nu for moment models, beta for direct ones
  std::optional<MomentModel> model;
  Vector model_truth;  // solution of `model` on `law`
  std::optional<DirectIdentification> ident;
  std::optional<Matrix> xi;  // frozen weight for over-identified models
  std::optional<moments::ScoreModel> score;
  std::optional<Matrix> expected_if;
  std::optional<double> grid_width;
  // nu(Q) for laws Q near `law`; `warm` is a starting point.
  std::function<Vector(const DiscreteDistribution&, const Vector& warm)> functional;
  // Analytic influence on a law (normally `law` itself).
  std::function<InfluenceTable(const DiscreteDistribution&)> influence;
};

std::vector<EstimandScenario> ate_quartet(const AteDgp& dgp);
EstimandScenario ate_scenario(const AteDgp& dgp, const std::string& which);

// Cell summary of an (x, t, y) law: covariate masses, propensities and arm
// means, with the canonical shock law. Throws InvalidInput unless t is
// binary and ConstructionError when overlap fails.
AteDgp ate_cells(const DiscreteDistribution& law);
// Same scenarios on an arbitrary (x, t, y) law, e.g. aggregated data.
EstimandScenario ate_scenario_on(const DiscreteDistribution& law, const std::string& which);

EstimandScenario mean_scenario(const DiscreteDistribution& law);

// Equal-width grid laws on cell centers.
DiscreteDistribution uniform_grid(Index cells, double lo = 0.0, double hi = 1.0);
DiscreteDistribution normal_grid(Index cells = 240, double lo = -6.0, double hi = 6.0);

// Quantile through the cell-smoothed indicator; width 0 gives the plain
// indicator. Throws IdentificationError for a flat CDF at q.
MomentModel quantile_model(double q, double width);
EstimandScenario quantile_scenario(double q, const DiscreteDistribution& law, double width);

// Average density sum p^2 / width with density p / width.
double average_density(const DiscreteDistribution& law, double width);
Vector density_values(const DiscreteDistribution& law, double width);
Vector average_density_lr(const DiscreteDistribution& law, double width);  // h^LR per point
EstimandScenario avg_density_scenario(const DiscreteDistribution& law, double width = 1.0);

// Linear IV: W = (1, w), Y2 = W'gamma + e2, Y1 = Y2 beta + u, with
// independent equiprobable e2 = +-s(w), u = +-u_ratio s(w).
struct IvDgp {
  std::vector<double> w_values;
  std::vector<double> w_mass;
  Vector gamma;
  double beta = 2.0;
  double u_ratio = 0.8;
  bool heteroskedastic = true;

  static IvDgp canonical(bool heteroskedastic = true);
  void validate() const;
  [[nodiscard]] double scale(double w) const;  // s(w)
  [[nodiscard]] double v22(double w) const { return scale(w) * scale(w); }
  [[nodiscard]] DiscreteDistribution law() const;  // blocks w, y (= y1, y2)
  [[nodiscard]] Matrix instrument_moment() const;  // E[W W']
};

enum class IvWeighting { unconditional, gls, just };

MomentModel iv_model(const IvDgp& dgp, IvWeighting weighting);
EstimandScenario iv_scenario(const IvDgp& dgp, IvWeighting weighting);
// Unconditional or just-identified IV on a (w, y1, y2) law; the weight of
// the over-identified variant is frozen at a first identity-weighted fit.
// GLS needs the known scale function and throws InvalidInput.
EstimandScenario iv_scenario_on(const DiscreteDistribution& law, IvWeighting weighting);

// Engineered first-step fixtures on (z1, z2, h) with E z1 = E z2 = gamma and
// m_beta = h - beta + c gamma, c chosen so the one-step condition holds.
enum class FirstStepShape { direct, duplicated, rank_overidentified };
EstimandScenario first_step_fixture(FirstStepShape shape);

// Generic violation of the one-step condition.
EstimandScenario one_step_counterexample();

// Score fixtures.
EstimandScenario propensity_score_fixture();
EstimandScenario tilted_mean_fixture();

struct NwScenario {
  dist::EmpiricalSample sample;
  dist::KernelSpec spec;
  Vector point;
  double target_variance = 0.0;  // sigma^2(x) / f(x) * int K^2
};

// X ~ N(0, 9), Y = 1 + e with e ~ N(0, 1), Gaussian kernel, query x = 0.
NwScenario nw_scenario(std::uint64_t seed, Index n = 10000, double bandwidth = 0.5);

std::vector<std::string> scenario_names();
// Engineered fixtures reachable through make_scenario as well.
std::vector<std::string> fixture_names();

struct ScenarioOptions {
  double q = 0.5;
};

// Registry lookup. Throws InvalidInput for unknown names; the sample-based
// "nw" entry is served by nw_scenario.
EstimandScenario make_scenario(const std::string& name, const ScenarioOptions& options = {});

}  // namespace ifcalc::estimands
