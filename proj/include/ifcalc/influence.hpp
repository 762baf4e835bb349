#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ifcalc/distributions.hpp"
#include "ifcalc/influence_table.hpp"
#include "ifcalc/moments.hpp"

namespace ifcalc::influence {

using dist::WeightedPoints;
using moments::DirectIdentification;
using moments::MomentModel;

// -(G' Xi G)^{-1} G' Xi. Throws PreconditionError when G' Xi G is singular.
Matrix gmm_normalizer(const Matrix& jac, const Matrix& xi, const std::string& what);

// Joint influence of nu for the full stacked moment with weight xi.
// Also verifies P[d nu_dot / d nu] = -I within 1e-6.
InfluenceTable if_joint(const MomentModel& model, const WeightedPoints& law, const Vector& nu,
                        const Matrix& xi);

struct TwoStepInfluence {
  InfluenceTable gamma;
  InfluenceTable beta;
};

// Sequential influence: gamma from m_gamma alone, beta from
// m_beta + <d m_beta / d gamma> gamma_dot. Missing weights default to the
// identity. Throws StructureError when <d m_gamma / d beta> exceeds tol.
TwoStepInfluence if_two_step(const MomentModel& model, const WeightedPoints& law,
                             const Vector& nu, const std::optional<Matrix>& xi_bb = std::nullopt,
                             const std::optional<Matrix>& xi_gg = std::nullopt,
                             double structure_tol = 1e-8);

struct MultistepInfluence {
  InfluenceTable beta;
  std::vector<InfluenceTable> nuisance_own;  // h_n - E[h_n | leading blocks]
  std::vector<Matrix> nuisance_terms;        // per node, points x d_beta
  Matrix centered_target;                    // outer' (h - P h), points x d_beta
  double telescoping_residual = 0.0;
};

// Influence of a directly identified beta. Conditional expectations of the
// path derivatives are taken by enumeration at each point's conditioning
// prefix. `own_overrides[n]`, when set, replaces the computed own influence
// of node n. Throws DependencyError when a node has neither an identifying
// function nor an override.
MultistepInfluence if_multistep_direct(
    const DirectIdentification& ident, const WeightedPoints& law,
    const std::vector<std::optional<InfluenceTable>>& own_overrides = {});

// Per-slot gamma influence from the gamma moments alone (weight defaults to
// the identity). Requires <d m_gamma / d beta> = 0.
std::vector<InfluenceTable> nuisance_ifs_from_moments(const MomentModel& model,
                                                      const WeightedPoints& law, const Vector& nu,
                                                      const std::optional<Matrix>& xi_gg = std::nullopt);

// Moment-form multistep influence of beta with one gamma table per slot.
InfluenceTable if_multistep_moment(const MomentModel& model, const WeightedPoints& law,
                                   const Vector& nu, const std::vector<InfluenceTable>& gamma_ifs,
                                   const std::optional<Matrix>& xi_bb = std::nullopt);

enum class CorrectionKind { locally_robust, efficient };

struct CorrectedMoment {
  CorrectionKind kind = CorrectionKind::locally_robust;
  Index rows = 0;
  moments::MomentFn values;
  std::map<std::string, Matrix> provenance;  // frozen blocks used
  double certificate = 0.0;                  // measured defining residual
};

// m_beta + <d m_beta / d gamma> Psi m_gamma with Psi = -(G_gg' Xi G_gg)^{-1} G_gg' Xi
// frozen at nu. Certifies <d m^LR / d gamma> = 0 by central differences;
// throws ConstructionError when the residual exceeds tol.
CorrectedMoment make_lr_moment(const MomentModel& model, const WeightedPoints& law,
                               const Vector& nu, const std::optional<Matrix>& xi_gg = std::nullopt,
                               double tol = 1e-6);

// m_beta - V_bg V_gg^+ m_gamma. Certifies <m^eff, m_gamma'> = 0 and
// <m^eff, m^eff'> = S within tol from the blocks.
CorrectedMoment make_eff_moment(const linalg::BlockSystem& sys, const MomentModel& model,
                                double tol = 1e-8);

// Same model with m_beta replaced by the corrected moment.
MomentModel with_beta_moment(const MomentModel& model, const CorrectedMoment& corrected);

// Values of a corrected moment at nu on every point.
Matrix corrected_values(const CorrectedMoment& corrected, const MomentModel& model,
                        const WeightedPoints& law, const Vector& nu);

enum class NonparametricTarget { density, regression };

struct NonparametricInfluence {
  InfluenceTable table;
  double estimate = 0.0;            // kernel density or NW regression value
  double rescaled_variance = 0.0;   // b^d <gamma_dot, gamma_dot>
  double kernel_mass = 0.0;         // P[k_b]
};

// Kernel-localized influence at `point`. Density: k_b(point - z) - P[k_b].
// Regression (last block is the scalar outcome, kernel over the rest):
// k_b / P[k_b] (Y - gamma_b). Throws SupportError when P[k_b] = 0.
NonparametricInfluence if_nonparametric(const dist::KernelSpec& spec, const WeightedPoints& sample,
                                        NonparametricTarget target, const Vector& point);

}  // namespace ifcalc::influence
