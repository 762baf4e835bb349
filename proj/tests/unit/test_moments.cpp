#include <doctest.h>

#include "frozen_oracles.hpp"
#include "helpers.hpp"
#include "ifcalc/errors.hpp"
#include "ifcalc/estimands.hpp"
#include "ifcalc/moments.hpp"

using namespace ifcalc;
using namespace ifcalc::moments;
using testing_util::scalar_law;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

MomentModel mean_model() {
  MomentModel m;
  m.name = "mean";
  m.rows_beta = 1;
  m.m_beta = [](const Vector& z, const Vector& beta, const Vector&) { return scalar(z(0) - beta(0)); };
  return m;
}

// (z - nu, z^2 - nu^2 - s2) with s2 the true variance.
MomentModel second_moment_model(double s2) {
  MomentModel m;
  m.name = "two-moments";
  m.rows_beta = 2;
  m.m_beta = [s2](const Vector& z, const Vector& beta, const Vector&) {
    Vector out(2);
    out << z(0) - beta(0), z(0) * z(0) - beta(0) * beta(0) - s2;
    return out;
  };
  return m;
}

}  // namespace

TEST_CASE("MomentModel validation") {
  MomentModel m;
  m.rows_beta = 1;
  CHECK_THROWS_AS(m.validate(), InvalidInput);
  m = mean_model();
  CHECK_NOTHROW(m.validate());
  m.rows_gamma = 1;
  CHECK_THROWS_AS(m.validate(), InvalidInput);  // gamma rows without gamma moments
}

TEST_CASE("jacobian of direct forms is minus identity") {
  const auto law = scalar_law({0.0, 1.0, 2.0}, {0.2, 0.3, 0.5});
  const Matrix jac = mean_jacobian(mean_model(), law, scalar(1.3));
  CHECK(jac(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("quantile jacobian equals the grid density") {
  const auto grid = estimands::uniform_grid(100);
  const auto model = estimands::quantile_model(0.5, 0.01);
  const Matrix jac = mean_jacobian(model, grid, scalar(0.5));
  CHECK(jac(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("IV jacobian blocks match hand-computed E[WW'] expressions") {
  const auto dgp = estimands::IvDgp::canonical();
  const auto model = estimands::iv_model(dgp, estimands::IvWeighting::unconditional);
  Vector nu(3);
  nu << dgp.beta, dgp.gamma(0), dgp.gamma(1);
  const auto blocks = jacobian_blocks(model, dgp.law(), nu);
  Matrix eww(2, 2);
  eww << frozen::kIvEww[0][0], frozen::kIvEww[0][1], frozen::kIvEww[1][0], frozen::kIvEww[1][1];
  CHECK(linalg::max_abs(blocks.beta_beta + eww * dgp.gamma) < 1e-12);
  CHECK(linalg::max_abs(blocks.beta_gamma + dgp.beta * eww) < 1e-12);
  CHECK(linalg::max_abs(blocks.gamma_gamma + eww) < 1e-12);
  CHECK(linalg::max_abs(blocks.gamma_beta) == 0.0);
}

TEST_CASE("analytic and finite-difference jacobians agree") {
  const auto dgp = estimands::IvDgp::canonical();
  auto model = estimands::iv_model(dgp, estimands::IvWeighting::gls);
  Vector nu(3);
  nu << 1.7, 0.4, 1.2;
  const Matrix analytic = mean_jacobian(model, dgp.law(), nu);
  model.jacobian.reset();
  const Matrix numeric = mean_jacobian(model, dgp.law(), nu);
  CHECK(linalg::max_abs(analytic - numeric) <= 1e-6 * std::max(1.0, linalg::max_abs(analytic)));
}

TEST_CASE("rank failures are identification errors") {
  MomentModel m = mean_model();
  m.m_beta = [](const Vector& z, const Vector&, const Vector&) { return scalar(z(0)); };
  const auto law = scalar_law({0.0, 1.0}, {0.5, 0.5});
  CHECK_THROWS_AS(jacobian_blocks(m, law, scalar(0.0)), IdentificationError);
  // Constant data: V has rank zero.
  const auto point = scalar_law({2.0}, {1.0});
  CHECK_THROWS_AS(covariance_blocks(mean_model(), point, scalar(2.0)), IdentificationError);
}

TEST_CASE("covariance blocks") {
  SUBCASE("variance on uniform {0, 1, 2}") {
    const auto law = scalar_law({0.0, 1.0, 2.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const auto sys = covariance_blocks(mean_model(), law, scalar(1.0));
    CHECK(sys.v_bb.matrix()(0, 0) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("duplicated moments are rank one") {
    MomentModel dup = mean_model();
    dup.rows_beta = 2;
    dup.m_beta = [](const Vector& z, const Vector& b, const Vector&) {
      return Vector::Constant(2, z(0) - b(0));
    };
    const auto law = scalar_law({0.0, 1.0, 3.0}, {0.5, 0.3, 0.2});
    const auto sys = covariance_blocks(dup, law, scalar(0.9));
    const Matrix v = sys.assembled_v();
    CHECK(linalg::numerical_rank(v) == 1);
    CHECK(v(0, 0) == doctest::Approx(v(0, 1)));
  }
  SUBCASE("AIPW variance on the ATE design") {
    const auto dgp = estimands::AteDgp::canonical();
    const auto model = estimands::ate_moment_model(dgp, estimands::AteMoment::aipw);
    const auto s = estimands::ate_scenario(dgp, "ate-aipw");
    const auto sys = covariance_blocks(model, dgp.law(), s.model_truth);
    CHECK(sys.v_bb.matrix()(0, 0) == doctest::Approx(frozen::kAteAipwVariance).epsilon(1e-12));
  }
}

TEST_CASE("solve_moments") {
  SUBCASE("mean") {
    const auto law = scalar_law({0.0, 1.0, 3.0}, {0.5, 0.3, 0.2});
    const auto r = solve_moments(mean_model(), law, scalar(10.0));
    CHECK(r.nu(0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(r.foc_norm <= 1e-10);
  }
  SUBCASE("median of uniform {1, 2, 3} by the root rule") {
    const auto law = scalar_law({1.0, 2.0, 3.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const auto r = solve_moments(estimands::quantile_model(0.5, 0.0), law, scalar(0.0));
    CHECK(r.bisection);
    CHECK(r.nu(0) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("over-identified with optimal weight recovers the mean") {
    const auto law = scalar_law({-1.0, 0.0, 2.0}, {0.3, 0.4, 0.3});
    const double mu = 0.3;
    const double s2 = 0.3 * 1.0 + 0.3 * 4.0 - mu * mu;
    const auto model = second_moment_model(s2);
    const Vector g = mean_moment(model, law, scalar(mu));
    CHECK(linalg::max_abs(g) < 1e-14);
    const auto sys = covariance_blocks(model, law, scalar(mu));
    SolveOptions opts;
    opts.xi = linalg::pinv(sys.assembled_v());
    const auto r = solve_moments(model, law, scalar(0.0), opts);
    CHECK(r.nu(0) == doctest::Approx(mu).epsilon(1e-10));
  }
  SUBCASE("just-identified solution is invariant to rescaling the weight") {
    const auto s = estimands::make_scenario("iv-just");
    SolveOptions a;
    a.xi = Matrix::Identity(3, 3);
    SolveOptions b;
    Matrix w = Matrix::Identity(3, 3);
    w.diagonal() << 5.0, 0.1, 2.0;
    b.xi = w;
    const Vector start = s.model_truth + Vector::Constant(3, 0.2);
    const Vector na = solve_moments(*s.model, s.law, start, a).nu;
    const Vector nb = solve_moments(*s.model, s.law, start, b).nu;
    CHECK(linalg::max_abs(na - nb) < 1e-10);
  }
  SUBCASE("bad inputs") {
    const auto law = scalar_law({0.0, 1.0}, {0.5, 0.5});
    CHECK_THROWS_AS(solve_moments(mean_model(), law, Vector::Zero(2)), InvalidInput);
    SolveOptions opts;
    opts.xi = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(solve_moments(mean_model(), law, scalar(0.0), opts), InvalidInput);
  }
  SUBCASE("iteration budget exhausted is a solver error") {
    MomentModel m = mean_model();
    m.m_beta = [](const Vector& z, const Vector& b, const Vector&) {
      return scalar(b(0) * b(0) * b(0) - z(0));
    };
    const auto law = scalar_law({1.0, 2.0}, {0.5, 0.5});
    SolveOptions opts;
    opts.max_iterations = 1;
    CHECK_THROWS_AS(solve_moments(m, law, scalar(5.0), opts), SolverError);
  }
}

TEST_CASE("score identity on score-equipped fixtures") {
  for (const auto& s : {estimands::propensity_score_fixture(), estimands::tilted_mean_fixture()}) {
    REQUIRE(s.score.has_value());
    CHECK(score_identity_residual(*s.model, *s.score, s.law, s.model_truth) <= 1e-6);
  }
}

TEST_CASE("direct identification evaluation") {
  const auto dgp = estimands::AteDgp::canonical();
  for (const auto& ident : {estimands::ate_ipw_direct(), estimands::ate_nipw_direct(),
                            estimands::ate_reg_direct(), estimands::ate_aipw_direct()}) {
    CHECK(direct_functional(ident, dgp.law())(0) == doctest::Approx(frozen::kAteTau).epsilon(1e-12));
    CHECK(smoothness_probe(ident, dgp.law()) < 1e-4);
  }
  DirectIdentification broken = estimands::ate_reg_direct();
  broken.nuisances.front().h = nullptr;
  CHECK_THROWS_AS(evaluate_direct(broken, dgp.law()), DependencyError);
  DirectIdentification no_target;
  CHECK_THROWS_AS(no_target.validate(dgp.law().blocks()), InvalidInput);
}
