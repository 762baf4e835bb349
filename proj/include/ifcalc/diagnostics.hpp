#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ifcalc/linalg.hpp"
#include "ifcalc/moments.hpp"

namespace ifcalc::diagnostics {

using dist::WeightedPoints;
using moments::MomentModel;

inline constexpr double kStructuralTol = 1e-8;
inline constexpr double kDifferenceTol = 1e-6;

struct ConditionCheck {
  std::string name;
  double magnitude = 0.0;
  double tol = kStructuralTol;
  bool pass = false;
  std::string tag;  // short label of the condition tested
};

ConditionCheck make_check(std::string name, double magnitude, double tol, std::string tag);

enum class Scenario { direct, row_overidentified, rank_overidentified };
std::string to_string(Scenario s);

struct ConditionReport {
  std::vector<ConditionCheck> checks;
  std::map<std::string, bool> verdicts;
  std::optional<Scenario> scenario;

  void add(ConditionCheck check) { checks.push_back(std::move(check)); }
  [[nodiscard]] const ConditionCheck* find(const std::string& name) const;
};

// max |<d m_beta / d gamma>|.
ConditionCheck check_local_robustness(const MomentModel& model, const WeightedPoints& law,
                                      const Vector& nu, double tol = kStructuralTol);

// <d m_beta / d gamma> - V_bg V_gg^+ <d m_gamma / d gamma>.
Matrix one_step_residual(const linalg::BlockSystem& sys);

// Residual above must vanish. Throws PreconditionError when the system is
// not compatible.
ConditionCheck check_one_step(const linalg::BlockSystem& sys, double tol = kStructuralTol);

// Psi = V_bg V_gg^+ - <d m_beta / d gamma> (G_gg' Xi G_gg)^{-1} G_gg' Xi, so that
// m^LR = m^eff + Psi m_gamma.
Matrix psi_matrix(const linalg::BlockSystem& sys, const Matrix& xi_gg);

struct TwoStepCheck {
  ConditionCheck check;  // sup over the support of |Psi m_gamma(z)|
  Scenario scenario = Scenario::direct;
  Matrix psi;
};

// Default weight is V_gg^+.
TwoStepCheck check_two_step(const linalg::BlockSystem& sys, const MomentModel& model,
                            const WeightedPoints& law, const Vector& nu,
                            const std::optional<Matrix>& xi_gg = std::nullopt,
                            double tol = kStructuralTol);

Scenario classify_scenario(const linalg::BlockSystem& sys, const MomentModel& model,
                           double tol = kStructuralTol);

struct AdaptivityChecks {
  ConditionCheck beta_structure;   // <d m_gamma / d beta> = 0
  ConditionCheck beta_efficient;   // one-step residual = 0
  ConditionCheck gamma_structure;  // <d m_beta / d gamma> = 0
  ConditionCheck gamma_efficient;  // mirrored residual = 0
  [[nodiscard]] bool adaptive_beta() const { return beta_structure.pass && beta_efficient.pass; }
  [[nodiscard]] bool adaptive_gamma() const {
    return gamma_structure.pass && gamma_efficient.pass;
  }
};

AdaptivityChecks check_adaptive(const linalg::BlockSystem& sys, double tol = kStructuralTol);

struct BoundReport {
  Matrix m_bound;  // {G' V^+ G}^{-1}
  // Block quantities; empty when d_gamma == 0 or the system is incompatible.
  Matrix sigma_joint_inv;
  Matrix sigma_bb;
  Matrix sigma_bg;
  Matrix sigma_gg;
  Matrix sigma_bb_inv;
  Matrix sigma_gg_inv;
  Matrix general_bb_inv;  // (S_bb - S_bg S_gg^{-1} S_bg')^{-1}
  double inflation_min_eig = 0.0;
  double offdiag_magnitude = 0.0;
  double one_step_magnitude = 0.0;
  std::optional<Matrix> cramer_rao;
  std::optional<double> gap_psd_certificate;    // min eig of m_bound - cramer_rao
  std::optional<double> projection_residual;    // max |Pi(score | m) - score|
  std::optional<double> score_identity_residual;
};

// Throws IdentificationError when G' V^+ G is singular.
BoundReport efficiency_bound(const linalg::BlockSystem& sys, const MomentModel& model,
                             const WeightedPoints& law, const Vector& nu,
                             const std::optional<moments::ScoreModel>& score = std::nullopt);

struct OrderingCertificate {
  Matrix lr_covariance;
  Matrix eff_covariance;
  Matrix difference;
  double min_eigenvalue = 0.0;
  double max_abs = 0.0;
  bool equality = false;  // max_abs <= kStructuralTol
};

// Covariance of m^LR (gamma weighted by V_gg^+) against that of m^eff.
// Throws PreconditionError when the one-step condition fails.
OrderingCertificate variance_ordering(const linalg::BlockSystem& sys, double tol = kStructuralTol);

// Full battery with verdicts locally_robust, eff_is_lr, lr_is_eff,
// adaptive_beta, adaptive_gamma and the scenario label.
ConditionReport run_checks(const MomentModel& model, const WeightedPoints& law, const Vector& nu,
                           double tol = kStructuralTol);

}  // namespace ifcalc::diagnostics
