#include "ifcalc/diagnostics.hpp"

#include <algorithm>

#include "ifcalc/errors.hpp"
#include "ifcalc/influence.hpp"
#include "ifcalc/influence_table.hpp"

namespace ifcalc::diagnostics {

namespace {

void require_jacobian(const linalg::BlockSystem& sys, const char* who) {
  sys.validate();
  if (!sys.has_jacobian()) throw InvalidInput(std::string(who) + ": Jacobian blocks missing");
}

Matrix inverse_checked(const Matrix& a, const std::string& what) {
  if (a.size() == 0) return a;
  if (linalg::numerical_rank(a) < a.rows()) {
    throw IdentificationError(what + " is singular");
  }
  return a.inverse();
}

}  // namespace

ConditionCheck make_check(std::string name, double magnitude, double tol, std::string tag) {
  return ConditionCheck{std::move(name), magnitude, tol, magnitude <= tol, std::move(tag)};
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::direct:
      return "direct";
    case Scenario::row_overidentified:
      return "row_overidentified";
    case Scenario::rank_overidentified:
      return "rank_overidentified";
  }
  return "unknown";
}

const ConditionCheck* ConditionReport::find(const std::string& name) const {
  const auto it = std::find_if(checks.begin(), checks.end(),
                               [&](const ConditionCheck& c) { return c.name == name; });
  return it == checks.end() ? nullptr : &*it;
}

ConditionCheck check_local_robustness(const MomentModel& model, const WeightedPoints& law,
                                      const Vector& nu, double tol) {
  if (model.partition.d_gamma() == 0) {
    throw StructureError("check_local_robustness: model '" + model.name + "' has no nuisance");
  }
  const auto j = moments::jacobian_blocks(model, law, nu);
  return make_check("local_robustness", linalg::max_abs(j.beta_gamma), tol,
                    "first-step derivative of the beta moment");
}

Matrix one_step_residual(const linalg::BlockSystem& sys) {
  require_jacobian(sys, "one_step_residual");
  return sys.dm_beta_dgamma - sys.v_bg * linalg::pinv(sys.v_gg.matrix()) * sys.dm_gamma_dgamma;
}

ConditionCheck check_one_step(const linalg::BlockSystem& sys, double tol) {
  const auto compat = linalg::check_compatibility(sys);
  if (!compat.holds()) {
    throw PreconditionError(
        std::string("check_one_step: blocks are not compatible (") +
        (compat.range_condition ? "" : "range condition ") +
        (compat.schur_condition ? "" : "Schur condition ") + "violated)");
  }
  return make_check("one_step", linalg::max_abs(one_step_residual(sys)), tol,
                    "efficient moment is locally robust");
}

Matrix psi_matrix(const linalg::BlockSystem& sys, const Matrix& xi_gg) {
  require_jacobian(sys, "psi_matrix");
  const Matrix norm = influence::gmm_normalizer(sys.dm_gamma_dgamma, xi_gg, "psi_matrix");
  return sys.v_bg * linalg::pinv(sys.v_gg.matrix()) + sys.dm_beta_dgamma * norm;
}

Scenario classify_scenario(const linalg::BlockSystem& sys, const MomentModel& model, double /*tol*/) {
  require_jacobian(sys, "classify_scenario");
  const Index dg = sys.d_gamma;
  // A square, invertible first step is the direct form after multiplying
  // by the inverse of <d m_gamma / d gamma>.
  const bool direct_shape =
      sys.rows_gamma() == dg && linalg::numerical_rank(sys.dm_gamma_dgamma) == dg;

  if (model.gamma_direct || direct_shape) return Scenario::direct;
  const Index rank = linalg::numerical_rank(sys.v_gg.matrix());
  return rank > dg ? Scenario::rank_overidentified : Scenario::row_overidentified;
}

TwoStepCheck check_two_step(const linalg::BlockSystem& sys, const MomentModel& model,
                            const WeightedPoints& law, const Vector& nu,
                            const std::optional<Matrix>& xi_gg, double tol) {
  require_jacobian(sys, "check_two_step");
  const Matrix w = xi_gg ? *xi_gg : linalg::pinv(sys.v_gg.matrix());
  TwoStepCheck out;
  out.psi = psi_matrix(sys, w);
  out.scenario = classify_scenario(sys, model, tol);
  const Matrix mg = moments::moment_values(model, law, nu).rightCols(model.rows_gamma);
  const Matrix applied = mg * out.psi.transpose();
  double sup = 0.0;
  for (Index i = 0; i < applied.rows(); ++i) {
    sup = std::max(sup, applied.row(i).lpNorm<Eigen::Infinity>());
  }
  out.check = make_check("two_step", sup, tol, "Psi m_gamma vanishes on the support");
  return out;
}

AdaptivityChecks check_adaptive(const linalg::BlockSystem& sys, double tol) {
  require_jacobian(sys, "check_adaptive");
  const Matrix mirrored =
      sys.dm_gamma_dbeta - sys.v_bg.transpose() * linalg::pinv(sys.v_bb.matrix()) *
                               sys.dm_beta_dbeta;
  return AdaptivityChecks{
      make_check("adaptive_beta_structure", linalg::max_abs(sys.dm_gamma_dbeta), tol,
                 "gamma moment free of beta"),
      make_check("adaptive_beta_efficient", linalg::max_abs(one_step_residual(sys)), tol,
                 "efficient beta moment is locally robust"),
      make_check("adaptive_gamma_structure", linalg::max_abs(sys.dm_beta_dgamma), tol,
                 "beta moment free of gamma"),
      make_check("adaptive_gamma_efficient", linalg::max_abs(mirrored), tol,
                 "efficient gamma moment is locally robust"),
  };
}

BoundReport efficiency_bound(const linalg::BlockSystem& sys, const MomentModel& model,
                             const WeightedPoints& law, const Vector& nu,
                             const std::optional<moments::ScoreModel>& score) {
  require_jacobian(sys, "efficiency_bound");
  BoundReport rep;
  const Matrix g = sys.assembled_jacobian();
  const Matrix v = sys.assembled_v();
  const Matrix v_pinv = linalg::pinv(v);
  const Matrix info = g.transpose() * v_pinv * g;
  rep.m_bound = inverse_checked(info, "m-efficiency information G' V^+ G");
  rep.m_bound = 0.5 * (rep.m_bound + rep.m_bound.transpose());

  const Index db = sys.d_beta;
  const Index dg = sys.d_gamma;
  if (dg > 0 && linalg::check_compatibility(sys).holds()) {
    const Matrix proj = sys.v_bg * linalg::pinv(sys.v_gg.matrix());
    const Matrix s_pinv = linalg::schur_pinv(sys);
    const Matrix vgg_pinv = linalg::pinv(sys.v_gg.matrix());
    const Matrix eff_bb = sys.dm_beta_dbeta - proj * sys.dm_gamma_dbeta;
    const Matrix eff_bg = sys.dm_beta_dgamma - proj * sys.dm_gamma_dgamma;
    rep.one_step_magnitude = linalg::max_abs(eff_bg);
    rep.sigma_bb = eff_bb.transpose() * s_pinv * eff_bb;
    rep.sigma_bg = eff_bb.transpose() * s_pinv * eff_bg;
    rep.sigma_gg = sys.dm_gamma_dgamma.transpose() * vgg_pinv * sys.dm_gamma_dgamma;
    rep.sigma_bb_inv = inverse_checked(rep.sigma_bb, "Sigma_bb");
    rep.sigma_gg_inv = inverse_checked(rep.sigma_gg, "Sigma_gg");
    rep.general_bb_inv = inverse_checked(
        rep.sigma_bb - rep.sigma_bg * rep.sigma_gg_inv * rep.sigma_bg.transpose(),
        "Sigma_bb - Sigma_bg Sigma_gg^-1 Sigma_bg'");
    rep.inflation_min_eig = linalg::min_eigenvalue(rep.general_bb_inv - rep.sigma_bb_inv);

    Matrix m(eff_bb.rows() + sys.rows_gamma(), db + dg);
    m << eff_bb, eff_bg, sys.dm_gamma_dbeta, sys.dm_gamma_dgamma;
    Matrix weight = Matrix::Zero(m.rows(), m.rows());
    weight.topLeftCorner(eff_bb.rows(), eff_bb.rows()) = s_pinv;
    weight.bottomRightCorner(sys.rows_gamma(), sys.rows_gamma()) = vgg_pinv;
    rep.sigma_joint_inv = inverse_checked(m.transpose() * weight * m, "Sigma_nu_nu");
    rep.offdiag_magnitude = linalg::max_abs(rep.sigma_joint_inv.topRightCorner(db, dg));
  }

  if (score) {
    const Matrix values = moments::moment_values(model, law, nu);
    const Vector mean = values.transpose() * law.weights();
    const Matrix centered = values.rowwise() - mean.transpose();
    Matrix s(law.size(), nu.size());
    for (Index i = 0; i < law.size(); ++i) s.row(i) = score->score(law.point(i), nu).transpose();
    const Matrix fisher = cross_moment(s, s, law.weights());
    rep.cramer_rao = inverse_checked(fisher, "Fisher information");
    rep.gap_psd_certificate = linalg::min_eigenvalue(rep.m_bound - *rep.cramer_rao);
    const Matrix projected = centered * (cross_moment(s, centered, law.weights()) * v_pinv).transpose();
    rep.projection_residual = linalg::max_abs(projected - s);
    rep.score_identity_residual = moments::score_identity_residual(model, *score, law, nu);
  }
  return rep;
}

OrderingCertificate variance_ordering(const linalg::BlockSystem& sys, double tol) {
  const ConditionCheck one = check_one_step(sys, tol);
  if (!one.pass) {
    throw PreconditionError("variance_ordering: one-step condition fails with magnitude " +
                            std::to_string(one.magnitude));
  }
  const Matrix vgg = sys.v_gg.matrix();
  const Matrix norm =
      influence::gmm_normalizer(sys.dm_gamma_dgamma, linalg::pinv(vgg), "variance_ordering");
  const Matrix k = sys.dm_beta_dgamma * norm;  // m^LR = m_beta + k m_gamma
  OrderingCertificate out;
  out.lr_covariance = sys.v_bb.matrix() + k * sys.v_bg.transpose() + sys.v_bg * k.transpose() +
                      k * vgg * k.transpose();
  out.eff_covariance = linalg::schur_complement(sys).matrix();
  out.difference = out.lr_covariance - out.eff_covariance;
  out.difference = 0.5 * (out.difference + out.difference.transpose());
  out.min_eigenvalue = linalg::min_eigenvalue(out.difference);
  out.max_abs = linalg::max_abs(out.difference);
  out.equality = out.max_abs <= kStructuralTol;
  return out;
}

ConditionReport run_checks(const MomentModel& model, const WeightedPoints& law, const Vector& nu,
                           double tol) {
  const linalg::BlockSystem sys = moments::block_system(model, law, nu);
  ConditionReport rep;
  const ConditionCheck lr = check_local_robustness(model, law, nu, tol);
  rep.add(lr);
  rep.verdicts["locally_robust"] = lr.pass;

  const auto compat = linalg::check_compatibility(sys);
  rep.add(make_check("compatibility_range", compat.range_magnitude, linalg::kCompatibilityTol,
                     "V_bg (I - V_gg^+ V_gg) = 0"));
  rep.add(make_check("compatibility_schur", compat.schur_magnitude, linalg::kCompatibilityTol,
                     "(I - S S^+) V_bg = 0"));
  bool one_pass = false;
  if (compat.holds()) {
    const ConditionCheck one = check_one_step(sys, tol);
    rep.add(one);
    one_pass = one.pass;
  }
  rep.verdicts["eff_is_lr"] = one_pass;

  const TwoStepCheck two = check_two_step(sys, model, law, nu, std::nullopt, tol);
  rep.add(two.check);
  rep.scenario = two.scenario;
  rep.verdicts["lr_is_eff"] = two.check.pass;

  const AdaptivityChecks ad = check_adaptive(sys, tol);
  rep.add(ad.beta_structure);
  rep.add(ad.beta_efficient);
  rep.add(ad.gamma_structure);
  rep.add(ad.gamma_efficient);
  rep.verdicts["adaptive_beta"] = ad.adaptive_beta();
  rep.verdicts["adaptive_gamma"] = ad.adaptive_gamma();
  return rep;
}

}  // namespace ifcalc::diagnostics
