#pragma once

#include <string>
#include <vector>

#include "ifcalc/linalg.hpp"

namespace ifcalc {

inline constexpr double kMeanTol = 1e-10;

// Values of an L2-zero-mean function on a weighted point set: one row per
// support point (or observation), one column per coordinate. Construction
// certifies that the weighted mean is zero.
class InfluenceTable {
 public:
  // Throws PreconditionError when the weighted mean exceeds
  // tol * max(1, max |value|) in any coordinate.
  InfluenceTable(Matrix values, Vector weights, std::vector<std::string> labels = {},
                 double tol = kMeanTol);

  [[nodiscard]] const Matrix& values() const { return values_; }
  [[nodiscard]] const Vector& weights() const { return weights_; }
  [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }
  [[nodiscard]] Index size() const { return values_.rows(); }
  [[nodiscard]] Index dimension() const { return values_.cols(); }
  [[nodiscard]] double mean_certificate() const { return mean_certificate_; }
  [[nodiscard]] double tolerance() const { return tol_; }
  [[nodiscard]] Vector at(Index point) const { return values_.row(point).transpose(); }

  // <this, this'> under the stored weights.
  [[nodiscard]] Matrix second_moment() const;

 private:
  Matrix values_;
  Vector weights_;
  std::vector<std::string> labels_;
  double mean_certificate_ = 0.0;
  double tol_ = kMeanTol;
};

// Weighted cross moment sum_i w_i a_i b_i'. Tables must share weights.
Matrix cross_moment(const InfluenceTable& a, const InfluenceTable& b);
Matrix cross_moment(const Matrix& a, const Matrix& b, const Vector& weights);

namespace linalg {

// Pointwise L2 projection <f,g'><g,g'>^+ g of f onto the span of g.
InfluenceTable project(const Matrix& cov_fg, const PsdMatrix& cov_gg, const InfluenceTable& g,
                       double rank_tol = kRankTol);

}  // namespace linalg
}  // namespace ifcalc
