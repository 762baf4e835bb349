#include "ifcalc/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "ifcalc/errors.hpp"
#include "ifcalc/influence_table.hpp"

namespace ifcalc {
namespace linalg {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Matrix pinv(const Matrix& m, double rank_tol) { return pinv(m, rank_tol, 0.0); }

Matrix pinv(const Matrix& m, double rank_tol, double reference_scale) {
  require_finite(m, "pinv");
  if (!(rank_tol > 0.0)) throw InvalidInput("pinv: rank_tol must be positive");
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = rank_tol * std::max(s.size() > 0 ? s(0) : 0.0, reference_scale);
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Index numerical_rank(const Matrix& m, double rank_tol) {
  require_finite(m, "numerical_rank");
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = rank_tol * s(0);
  return static_cast<Index>((s.array() > cutoff).count());
}

double min_eigenvalue(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("min_eigenvalue: matrix not square");
  if (a.size() == 0) return 0.0;
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double PenroseResiduals::worst() const { return std::max({m_p_m, p_m_p, mp_sym, pm_sym}); }

PenroseResiduals penrose_residuals(const Matrix& m, const Matrix& p) {
  if (p.rows() != m.cols() || p.cols() != m.rows()) {
    throw InvalidInput("penrose_residuals: shape mismatch");
  }
  const Matrix mp = m * p;
  const Matrix pm = p * m;
  PenroseResiduals r;
  r.m_p_m = max_abs(mp * m - m) / std::max(1.0, max_abs(m));
  r.p_m_p = max_abs(pm * p - p) / std::max(1.0, max_abs(p));
  r.mp_sym = max_abs(mp.transpose() - mp);
  r.pm_sym = max_abs(pm.transpose() - pm);
  return r;
}

PsdMatrix::PsdMatrix(const Matrix& a, double symmetry_tol, double eig_floor)
    : symmetry_tol_(symmetry_tol), eig_floor_(eig_floor) {
  require_finite(a, "PsdMatrix");
  if (a.rows() != a.cols()) throw InvalidInput("PsdMatrix: matrix not square");
  const double scale = std::max(1.0, max_abs(a));
  const double asym = max_abs(a - a.transpose());
  if (asym > symmetry_tol * scale) {
    throw InvalidInput("PsdMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  m_ = 0.5 * (a + a.transpose());
  const double lo = linalg::min_eigenvalue(m_);
  if (lo < -eig_floor * scale) {
    throw InvalidInput("PsdMatrix: minimum eigenvalue " + std::to_string(lo) + " is negative");
  }
}

double PsdMatrix::min_eigenvalue() const { return linalg::min_eigenvalue(m_); }

BlockSystem BlockSystem::from_covariance(const Matrix& v_bb, const Matrix& v_bg,
                                         const Matrix& v_gg) {
  BlockSystem sys;
  sys.v_bb = PsdMatrix(v_bb);
  sys.v_gg = PsdMatrix(v_gg);
  sys.v_bg = v_bg;
  sys.validate();
  return sys;
}

BlockSystem BlockSystem::from_assembled(const Matrix& v, Index rows_beta) {
  if (v.rows() != v.cols() || rows_beta < 0 || rows_beta > v.rows()) {
    throw InvalidInput("BlockSystem::from_assembled: bad split");
  }
  const Index rg = v.rows() - rows_beta;
  PsdMatrix whole(v);  // certifies joint positive semi-definiteness
  const Matrix& s = whole.matrix();
  return from_covariance(s.topLeftCorner(rows_beta, rows_beta),
                         s.topRightCorner(rows_beta, rg), s.bottomRightCorner(rg, rg));
}

void BlockSystem::validate() const {
  const Index rb = rows_beta();
  const Index rg = rows_gamma();
  if (v_bg.rows() != rb || v_bg.cols() != rg) {
    throw InvalidInput("BlockSystem: v_bg has shape " + std::to_string(v_bg.rows()) + "x" +
                       std::to_string(v_bg.cols()) + ", expected " + std::to_string(rb) + "x" +
                       std::to_string(rg));
  }
  if (has_jacobian()) {
    auto check = [](const Matrix& m, Index r, Index c, const char* name) {
      if (m.rows() != r || m.cols() != c) {
        throw InvalidInput(std::string("BlockSystem: ") + name + " has wrong shape");
      }
    };
    check(dm_beta_dbeta, rb, d_beta, "dm_beta_dbeta");
    check(dm_beta_dgamma, rb, d_gamma, "dm_beta_dgamma");
    check(dm_gamma_dbeta, rg, d_beta, "dm_gamma_dbeta");
    check(dm_gamma_dgamma, rg, d_gamma, "dm_gamma_dgamma");
  }
  if (xi_bb && xi_bb->size() != rb) throw InvalidInput("BlockSystem: xi_bb has wrong size");
  if (xi_gg && xi_gg->size() != rg) throw InvalidInput("BlockSystem: xi_gg has wrong size");
}

Matrix BlockSystem::assembled_v() const {
  const Index rb = rows_beta();
  const Index rg = rows_gamma();
  Matrix v(rb + rg, rb + rg);
  v.topLeftCorner(rb, rb) = v_bb.matrix();
  v.topRightCorner(rb, rg) = v_bg;
  v.bottomLeftCorner(rg, rb) = v_bg.transpose();
  v.bottomRightCorner(rg, rg) = v_gg.matrix();
  return v;
}

Matrix BlockSystem::assembled_jacobian() const {
  const Index rb = rows_beta();
  const Index rg = rows_gamma();
  Matrix g(rb + rg, d_beta + d_gamma);
  g.topLeftCorner(rb, d_beta) = dm_beta_dbeta;
  g.topRightCorner(rb, d_gamma) = dm_beta_dgamma;
  g.bottomLeftCorner(rg, d_beta) = dm_gamma_dbeta;
  g.bottomRightCorner(rg, d_gamma) = dm_gamma_dgamma;
  return g;
}

PsdMatrix schur_complement(const BlockSystem& sys, double rank_tol) {
  sys.validate();
  const Matrix s = sys.v_bb.matrix() -
                   sys.v_bg * pinv(sys.v_gg.matrix(), rank_tol) * sys.v_bg.transpose();
  return PsdMatrix(s, kSymmetryTol, kEigFloor);
}

namespace {

double covariance_scale(const BlockSystem& sys) {
  return std::max({max_abs(sys.v_bb.matrix()), max_abs(sys.v_gg.matrix()), max_abs(sys.v_bg)});
}

}  // namespace

Matrix schur_pinv(const BlockSystem& sys, double rank_tol) {
  return pinv(schur_complement(sys, rank_tol).matrix(), rank_tol, covariance_scale(sys));
}

Compatibility check_compatibility(const BlockSystem& sys, double tol, double rank_tol) {
  sys.validate();
  const Matrix& vgg = sys.v_gg.matrix();
  const Index rg = vgg.rows();
  const Index rb = sys.rows_beta();
  Compatibility c;
  const Matrix range_res =
      sys.v_bg * (Matrix::Identity(rg, rg) - pinv(vgg, rank_tol) * vgg);
  c.range_magnitude = max_abs(range_res);
  // The Schur complement is formed without the PSD certificate so that an
  // incompatible system still reports magnitudes instead of throwing.
  const Matrix s = sys.v_bb.matrix() - sys.v_bg * pinv(vgg, rank_tol) * sys.v_bg.transpose();
  const Matrix schur_res = (Matrix::Identity(rb, rb) - s * pinv(s, rank_tol, covariance_scale(sys))) * sys.v_bg;
  c.schur_magnitude = max_abs(schur_res);
  c.range_condition = c.range_magnitude <= tol;
  c.schur_condition = c.schur_magnitude <= tol;
  return c;
}

Matrix pinv_block(const BlockSystem& sys, double tol, double rank_tol) {
  const Compatibility c = check_compatibility(sys, tol, rank_tol);
  if (!c.range_condition) {
    throw PreconditionError("pinv_block: V_bg (I - V_gg^+ V_gg) = 0 violated, magnitude " +
                            std::to_string(c.range_magnitude));
  }
  if (!c.schur_condition) {
    throw PreconditionError("pinv_block: (I - S S^+) V_bg = 0 violated, magnitude " +
                            std::to_string(c.schur_magnitude));
  }
  const Index rb = sys.rows_beta();
  const Index rg = sys.rows_gamma();
  const Matrix vgg_p = pinv(sys.v_gg.matrix(), rank_tol);
  const Matrix s = sys.v_bb.matrix() - sys.v_bg * vgg_p * sys.v_bg.transpose();
  const Matrix s_p = pinv(s, rank_tol, covariance_scale(sys));

  Matrix left = Matrix::Identity(rb + rg, rb + rg);
  left.bottomLeftCorner(rg, rb) = -vgg_p * sys.v_bg.transpose();
  Matrix middle = Matrix::Zero(rb + rg, rb + rg);
  middle.topLeftCorner(rb, rb) = s_p;
  middle.bottomRightCorner(rg, rg) = vgg_p;
  Matrix right = Matrix::Identity(rb + rg, rb + rg);
  right.topRightCorner(rb, rg) = -sys.v_bg * vgg_p;
  return left * middle * right;
}

}  // namespace linalg

InfluenceTable::InfluenceTable(Matrix values, Vector weights, std::vector<std::string> labels,
                               double tol)
    : values_(std::move(values)), weights_(std::move(weights)), labels_(std::move(labels)),
      tol_(tol) {
  if (values_.rows() != weights_.size()) {
    throw InvalidInput("InfluenceTable: values and weights disagree in length");
  }
  if (!values_.allFinite()) throw InvalidInput("InfluenceTable: non-finite value");
  if (!labels_.empty() && static_cast<Index>(labels_.size()) != values_.cols()) {
    throw InvalidInput("InfluenceTable: label count differs from dimension");
  }
  const Vector mean = values_.transpose() * weights_;
  mean_certificate_ = mean.size() == 0 ? 0.0 : mean.cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, linalg::max_abs(values_));
  if (mean_certificate_ > tol_ * scale) {
    throw PreconditionError("InfluenceTable: weighted mean " + std::to_string(mean_certificate_) +
                            " exceeds tolerance");
  }
}

Matrix InfluenceTable::second_moment() const { return cross_moment(values_, values_, weights_); }

Matrix cross_moment(const Matrix& a, const Matrix& b, const Vector& weights) {
  if (a.rows() != b.rows() || a.rows() != weights.size()) {
    throw InvalidInput("cross_moment: length mismatch");
  }
  return a.transpose() * weights.asDiagonal() * b;
}

Matrix cross_moment(const InfluenceTable& a, const InfluenceTable& b) {
  if (a.weights() != b.weights()) throw InvalidInput("cross_moment: tables use different weights");
  return cross_moment(a.values(), b.values(), a.weights());
}

namespace linalg {

InfluenceTable project(const Matrix& cov_fg, const PsdMatrix& cov_gg, const InfluenceTable& g,
                       double rank_tol) {
  if (cov_fg.cols() != cov_gg.size() || cov_gg.size() != g.dimension()) {
    throw InvalidInput("project: dimension mismatch");
  }
  const Matrix coef = cov_fg * pinv(cov_gg.matrix(), rank_tol);
  return InfluenceTable(g.values() * coef.transpose(), g.weights(), {}, g.tolerance());
}

}  // namespace linalg
}  // namespace ifcalc
