#include <doctest.h>

#include <limits>

#include "frozen_oracles.hpp"
#include "helpers.hpp"
#include "ifcalc/errors.hpp"
#include "ifcalc/influence_table.hpp"
#include "ifcalc/linalg.hpp"

using namespace ifcalc;
using namespace ifcalc::linalg;
using testing_util::random_rank;

TEST_CASE("pinv of identity and all-ones") {
  CHECK(max_abs(pinv(Matrix::Identity(2, 2)) - Matrix::Identity(2, 2)) < 1e-15);
  const Matrix p = pinv(Matrix::Ones(2, 2));
  CHECK(max_abs(p - Matrix::Constant(2, 2, 0.25)) < 1e-15);
}

TEST_CASE("pinv of a rank-2 5x3 matrix satisfies the Penrose identities") {
  std::mt19937_64 gen(5);
  const Matrix m = random_rank(gen, 5, 3, 2);
  const Matrix p = pinv(m);
  CHECK(numerical_rank(m) == 2);
  CHECK(penrose_residuals(m, p).worst() < 1e-10);
  CHECK(max_abs(m * p * m - m) < 1e-10 * max_abs(m));
  CHECK(max_abs((p * m).transpose() - p * m) < 1e-10);
}

TEST_CASE("pinv involution and transpose") {
  std::mt19937_64 gen(17);
  const Matrix m = random_rank(gen, 6, 4, 3);
  CHECK(max_abs(pinv(pinv(m)) - m) < 1e-9 * std::max(1.0, max_abs(m)));
  CHECK(max_abs(pinv(m.transpose()) - pinv(m).transpose()) < 1e-10);
}

TEST_CASE("pinv rejects non-finite input and bad tolerance") {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pinv(m), InvalidInput);
  CHECK_THROWS_AS(pinv(Matrix::Identity(2, 2), 0.0), InvalidInput);
}

TEST_CASE("zero matrix has zero pseudoinverse") {
  CHECK(max_abs(pinv(Matrix::Zero(3, 2))) == 0.0);
  CHECK(numerical_rank(Matrix::Zero(3, 2)) == 0);
}

TEST_CASE("PsdMatrix symmetrizes and rejects asymmetric or indefinite input") {
  Matrix a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  const PsdMatrix p(a);
  CHECK(p.min_eigenvalue() == doctest::Approx(1.0));
  Matrix asym = a;
  asym(0, 1) = 1.5;
  CHECK_THROWS_AS(PsdMatrix{asym}, InvalidInput);
  Matrix neg(2, 2);
  neg << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(PsdMatrix{neg}, InvalidInput);
  CHECK_THROWS_AS(PsdMatrix{Matrix::Ones(2, 3)}, InvalidInput);
}

TEST_CASE("Schur complement examples") {
  SUBCASE("zero cross covariance") {
    Matrix vbb(2, 2);
    vbb << 2.0, 0.5, 0.5, 1.0;
    const auto sys = BlockSystem::from_covariance(vbb, Matrix::Zero(2, 1), Matrix::Identity(1, 1));
    CHECK(max_abs(schur_complement(sys).matrix() - vbb) < 1e-15);
  }
  SUBCASE("identity of size three") {
    const auto sys = BlockSystem::from_assembled(Matrix::Identity(3, 3), 1);
    CHECK(schur_complement(sys).matrix()(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("singular gamma block") {
    Matrix vbb(1, 1);
    vbb << 2.0;
    Matrix vbg(1, 2);
    vbg << 1.0, 1.0;
    const auto sys = BlockSystem::from_covariance(vbb, vbg, Matrix::Ones(2, 2));
    CHECK(schur_complement(sys).matrix()(0, 0) == doctest::Approx(frozen::kSchurExample).epsilon(1e-12));
  }
}

TEST_CASE("BlockSystem shape validation") {
  CHECK_THROWS_AS(BlockSystem::from_covariance(Matrix::Identity(2, 2), Matrix::Zero(1, 1),
                                               Matrix::Identity(1, 1)),
                  InvalidInput);
  CHECK_THROWS_AS(BlockSystem::from_assembled(Matrix::Identity(3, 3), 4), InvalidInput);
}

TEST_CASE("compatibility") {
  SUBCASE("invertible blocks are compatible") {
    std::mt19937_64 gen(3);
    const Matrix a = random_rank(gen, 4, 4, 4);
    const auto sys = BlockSystem::from_assembled(a * a.transpose(), 2);
    const auto c = check_compatibility(sys);
    CHECK(c.range_condition);
    CHECK(c.schur_condition);
  }
  SUBCASE("zero V_gg with nonzero V_bg fails the range condition") {
    Matrix vbg(1, 1);
    vbg << 1.0;
    const auto sys = BlockSystem::from_covariance(Matrix::Identity(1, 1), vbg, Matrix::Zero(1, 1));
    const auto c = check_compatibility(sys);
    CHECK_FALSE(c.range_condition);
    CHECK(c.range_magnitude == doctest::Approx(1.0));
    CHECK_THROWS_AS(pinv_block(sys), PreconditionError);
  }
  SUBCASE("jointly PSD with singular V_gg meets the range condition") {
    std::mt19937_64 gen(9);
    const Matrix a = random_rank(gen, 4, 2, 2);
    const auto sys = BlockSystem::from_assembled(a * a.transpose(), 1);
    CHECK(numerical_rank(sys.v_gg.matrix()) == 2);
    CHECK(check_compatibility(sys).range_condition);
  }
}

TEST_CASE("pinv_block agrees with the SVD pseudoinverse") {
  SUBCASE("block diagonal") {
    Matrix v = Matrix::Zero(3, 3);
    v(0, 0) = 2.0;
    v.block(1, 1, 2, 2) = Matrix::Ones(2, 2);
    const auto sys = BlockSystem::from_assembled(v, 1);
    Matrix expect = Matrix::Zero(3, 3);
    expect(0, 0) = 0.5;
    expect.block(1, 1, 2, 2) = Matrix::Constant(2, 2, 0.25);
    CHECK(max_abs(pinv_block(sys) - expect) < 1e-12);
  }
  SUBCASE("invertible") {
    Matrix v(3, 3);
    v << 4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0;
    const auto sys = BlockSystem::from_assembled(v, 1);
    CHECK(max_abs(pinv_block(sys) - v.inverse()) < 1e-10);
  }
  SUBCASE("singular compatible") {
    // Rank-one S, rank-two V_gg, and V_bg with columns in range(S) and rows
    // in range(V_gg).
    std::mt19937_64 gen(21);
    const Matrix u = random_rank(gen, 2, 1, 1);
    const Matrix b = random_rank(gen, 3, 2, 2);
    const Matrix d = random_rank(gen, 2, 1, 1);
    const Matrix vgg = b * b.transpose();
    const Matrix vbg = u * (b * d).transpose();
    const Matrix vbb = u * u.transpose() + vbg * pinv(vgg) * vbg.transpose();
    const auto sys = BlockSystem::from_covariance(vbb, vbg, vgg);
    REQUIRE(check_compatibility(sys).holds());
    CHECK(numerical_rank(sys.assembled_v()) == 3);
    CHECK(max_abs(pinv_block(sys) - pinv(sys.assembled_v())) < 1e-8);
  }
  SUBCASE("vanishing Schur complement with V_bg outside its range is incompatible") {
    std::mt19937_64 gen(21);
    const Matrix a = random_rank(gen, 5, 3, 3);
    const auto sys = BlockSystem::from_assembled(a * a.transpose(), 2);
    const auto c = check_compatibility(sys);
    CHECK(c.range_condition);
    CHECK_FALSE(c.schur_condition);
    CHECK_THROWS_AS(pinv_block(sys), PreconditionError);
  }
}

TEST_CASE("projection") {
  const Vector w = Vector::Constant(3, 1.0 / 3.0);
  Matrix g(3, 1);
  g << 1.0, 0.0, -1.0;
  const InfluenceTable gt(g, w);
  SUBCASE("hand-computed coefficient on a 3-point law") {
    Matrix f(3, 1);
    f << 2.0, -1.0, -1.0;
    const Matrix cov_fg = cross_moment(f, g, w);
    const auto proj = project(cov_fg, PsdMatrix(gt.second_moment()), gt);
    CHECK(max_abs(proj.values() - frozen::kProjectionCoefficient * g) < 1e-14);
    // Idempotent.
    const auto again = project(cross_moment(proj.values(), g, w), PsdMatrix(gt.second_moment()), gt);
    CHECK(max_abs(again.values() - proj.values()) < 1e-10);
  }
  SUBCASE("projecting g on itself") {
    const auto proj = project(gt.second_moment(), PsdMatrix(gt.second_moment()), gt);
    CHECK(max_abs(proj.values() - g) < 1e-14);
  }
  SUBCASE("orthogonal f projects to zero") {
    const auto proj = project(Matrix::Zero(1, 1), PsdMatrix(gt.second_moment()), gt);
    CHECK(max_abs(proj.values()) == 0.0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(project(Matrix::Zero(1, 2), PsdMatrix(gt.second_moment()), gt), InvalidInput);
  }
}

TEST_CASE("InfluenceTable certifies a zero mean") {
  const Vector w = Vector::Constant(2, 0.5);
  Matrix ok(2, 1);
  ok << 1.0, -1.0;
  CHECK(InfluenceTable(ok, w).mean_certificate() == 0.0);
  Matrix bad(2, 1);
  bad << 1.0, 0.0;
  CHECK_THROWS_AS(InfluenceTable(bad, w), PreconditionError);
  CHECK_THROWS_AS(InfluenceTable(ok, Vector::Constant(3, 1.0 / 3.0)), InvalidInput);
  CHECK_THROWS_AS(InfluenceTable(ok, w, {"a", "b"}), InvalidInput);
}
