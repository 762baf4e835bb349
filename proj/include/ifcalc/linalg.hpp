#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>

namespace ifcalc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

inline constexpr double kRankTol = 1e-10;
inline constexpr double kCompatibilityTol = 1e-8;
inline constexpr double kSymmetryTol = 1e-8;
inline constexpr double kEigFloor = 1e-10;

// Throws InvalidInput naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

double max_abs(const Matrix& m);

// Moore-Penrose inverse through the SVD. Singular values below
// rank_tol * sigma_max are treated as zero.
Matrix pinv(const Matrix& m, double rank_tol = kRankTol);
// Same with the cutoff rank_tol * max(sigma_max, reference_scale), for a
// matrix derived from a larger one whose scale decides what counts as zero.
Matrix pinv(const Matrix& m, double rank_tol, double reference_scale);

Index numerical_rank(const Matrix& m, double rank_tol = kRankTol);

// Smallest eigenvalue of the symmetric part of a square matrix.
double min_eigenvalue(const Matrix& a);

struct PenroseResiduals {
  double m_p_m = 0.0;   // |M P M - M| / max(1, |M|)
  double p_m_p = 0.0;   // |P M P - P| / max(1, |P|)
  double mp_sym = 0.0;  // |(M P)' - M P|
  double pm_sym = 0.0;  // |(P M)' - P M|
  [[nodiscard]] double worst() const;
};

PenroseResiduals penrose_residuals(const Matrix& m, const Matrix& p);

// Square matrix certified symmetric (within symmetry_tol, relative to its
// scale) with minimum eigenvalue >= -eig_floor * max(1, scale). The stored
// matrix is the symmetrized (A + A')/2.
class PsdMatrix {
 public:
  PsdMatrix() = default;
  explicit PsdMatrix(const Matrix& a, double symmetry_tol = kSymmetryTol,
                     double eig_floor = kEigFloor);

  [[nodiscard]] const Matrix& matrix() const { return m_; }
  [[nodiscard]] Index size() const { return m_.rows(); }
  [[nodiscard]] double symmetry_tol() const { return symmetry_tol_; }
  [[nodiscard]] double eig_floor() const { return eig_floor_; }
  [[nodiscard]] double min_eigenvalue() const;

 private:
  Matrix m_;
  double symmetry_tol_ = kSymmetryTol;
  double eig_floor_ = kEigFloor;
};

// Partitioned Jacobian and covariance of a stacked moment (m_beta, m_gamma).
// Jacobian blocks may be left empty for covariance-only systems.
struct BlockSystem {
  Index d_beta = 0;
  Index d_gamma = 0;
  Matrix dm_beta_dbeta;
  Matrix dm_beta_dgamma;
  Matrix dm_gamma_dbeta;
  Matrix dm_gamma_dgamma;
  PsdMatrix v_bb;
  PsdMatrix v_gg;
  Matrix v_bg;
  std::optional<PsdMatrix> xi_bb;
  std::optional<PsdMatrix> xi_gg;

  // Covariance-only system; Jacobian blocks stay empty.
  static BlockSystem from_covariance(const Matrix& v_bb, const Matrix& v_bg,
                                     const Matrix& v_gg);
  // Splits an assembled covariance after `rows_beta` rows.
  static BlockSystem from_assembled(const Matrix& v, Index rows_beta);

  [[nodiscard]] Index rows_beta() const { return v_bb.size(); }
  [[nodiscard]] Index rows_gamma() const { return v_gg.size(); }
  [[nodiscard]] bool has_jacobian() const { return dm_beta_dbeta.size() > 0; }

  // Throws InvalidInput on any shape disagreement.
  void validate() const;

  [[nodiscard]] Matrix assembled_v() const;
  [[nodiscard]] Matrix assembled_jacobian() const;
};

PsdMatrix schur_complement(const BlockSystem& sys, double rank_tol = kRankTol);
// S^+ with its rank decided on the scale of the covariance blocks, so a
// Schur complement that vanishes up to rounding is treated as zero.
Matrix schur_pinv(const BlockSystem& sys, double rank_tol = kRankTol);

struct Compatibility {
  bool range_condition = false;  // V_bg (I - V_gg^+ V_gg) = 0
  bool schur_condition = false;  // (I - S S^+) V_bg = 0
  double range_magnitude = 0.0;
  double schur_magnitude = 0.0;
  [[nodiscard]] bool holds() const { return range_condition && schur_condition; }
};

Compatibility check_compatibility(const BlockSystem& sys, double tol = kCompatibilityTol,
                                  double rank_tol = kRankTol);

// Three-factor product form of the pseudoinverse of the assembled V.
// Throws PreconditionError naming the violated compatibility condition.
Matrix pinv_block(const BlockSystem& sys, double tol = kCompatibilityTol,
                  double rank_tol = kRankTol);

}  // namespace linalg
}  // namespace ifcalc
