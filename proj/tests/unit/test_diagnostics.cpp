#include <doctest.h>

#include <cmath>

#include "frozen_oracles.hpp"
#include "helpers.hpp"
#include "ifcalc/diagnostics.hpp"
#include "ifcalc/errors.hpp"
#include "ifcalc/estimands.hpp"

using namespace ifcalc;
using namespace ifcalc::diagnostics;

namespace {

linalg::BlockSystem system_of(const estimands::EstimandScenario& s) {
  return moments::block_system(*s.model, s.law, s.model_truth);
}

}  // namespace

TEST_CASE("local robustness") {
  const auto ipw = estimands::make_scenario("ate-ipw");
  const auto aipw = estimands::make_scenario("ate-aipw");
  const auto bad = check_local_robustness(*ipw.model, ipw.law, ipw.model_truth);
  CHECK_FALSE(bad.pass);
  double expected = 0.0;
  for (const double g : frozen::kAteIpwNuisanceGrad) expected = std::max(expected, std::abs(g));
  CHECK(bad.magnitude == doctest::Approx(expected).epsilon(1e-8));
  CHECK(check_local_robustness(*aipw.model, aipw.law, aipw.model_truth).pass);

  const auto corrected = influence::with_beta_moment(
      *ipw.model, influence::make_lr_moment(*ipw.model, ipw.law, ipw.model_truth));
  CHECK(check_local_robustness(corrected, ipw.law, ipw.model_truth, 1e-6).pass);
}

TEST_CASE("one-step condition") {
  SUBCASE("engineered fixtures hold") {
    for (const auto shape : {estimands::FirstStepShape::direct, estimands::FirstStepShape::duplicated,
                             estimands::FirstStepShape::rank_overidentified}) {
      const auto s = estimands::first_step_fixture(shape);
      CHECK(check_one_step(system_of(s)).pass);
    }
  }
  SUBCASE("generic counterexample fails by a wide margin") {
    const auto s = estimands::one_step_counterexample();
    const auto c = check_one_step(system_of(s));
    CHECK_FALSE(c.pass);
    CHECK(c.magnitude > 0.1);
    CHECK_THROWS_AS(variance_ordering(system_of(s)), PreconditionError);
  }
}

TEST_CASE("two-step condition and scenario labels") {
  SUBCASE("direct first step has Psi = 0") {
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::direct);
    const auto sys = system_of(s);
    const auto t = check_two_step(sys, *s.model, s.law, s.model_truth);
    CHECK(t.check.pass);
    CHECK(t.scenario == Scenario::direct);
    CHECK(linalg::max_abs(t.psi) < 1e-10);
    CHECK(classify_scenario(sys, *s.model) == Scenario::direct);
  }
  SUBCASE("duplicated rows are over-identified by rows and still hold") {
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::duplicated);
    const auto t = check_two_step(system_of(s), *s.model, s.law, s.model_truth);
    CHECK(t.scenario == Scenario::row_overidentified);
    CHECK(t.check.pass);
  }
  SUBCASE("rank over-identification breaks the identity") {
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::rank_overidentified);
    const auto t = check_two_step(system_of(s), *s.model, s.law, s.model_truth);
    CHECK(t.scenario == Scenario::rank_overidentified);
    CHECK_FALSE(t.check.pass);
    CHECK(t.check.magnitude > 1e-3);
  }
  CHECK(to_string(Scenario::row_overidentified) != to_string(Scenario::direct));
}

TEST_CASE("adaptivity") {
  SUBCASE("GLS IV is adaptive for beta") {
    const auto s = estimands::make_scenario("iv-gls");
    const auto a = check_adaptive(system_of(s));
    CHECK(a.beta_structure.pass);
    CHECK(a.beta_efficient.pass);
    CHECK(a.adaptive_beta());
  }
  SUBCASE("unconditional IV: first step free of beta and one-step residual zero") {
    const auto s = estimands::make_scenario("iv-unconditional");
    CHECK(check_adaptive(system_of(s)).adaptive_beta());
  }
  SUBCASE("IPW propensity step is not adaptive for the nuisance") {
    const auto s = estimands::make_scenario("ate-ipw");
    CHECK_FALSE(check_adaptive(system_of(s)).adaptive_gamma());
  }
}

TEST_CASE("efficiency bounds") {
  SUBCASE("IV bounds match frozen values and order") {
    const auto u = estimands::make_scenario("iv-unconditional");
    const auto g = estimands::make_scenario("iv-gls");
    const auto bu = efficiency_bound(system_of(u), *u.model, u.law, u.model_truth);
    const auto bg = efficiency_bound(system_of(g), *g.model, g.law, g.model_truth);
    CHECK(bu.m_bound(0, 0) == doctest::Approx(frozen::kIvBoundUnconditional).epsilon(1e-9));
    CHECK(bg.m_bound(0, 0) == doctest::Approx(frozen::kIvBoundGls).epsilon(1e-9));
    CHECK(bg.m_bound(0, 0) < bu.m_bound(0, 0));
  }
  SUBCASE("homoskedastic IV: GLS and unconditional coincide") {
    const auto dgp = estimands::IvDgp::canonical(false);
    const auto u = estimands::iv_scenario(dgp, estimands::IvWeighting::unconditional);
    const auto g = estimands::iv_scenario(dgp, estimands::IvWeighting::gls);
    const auto bu = efficiency_bound(system_of(u), *u.model, u.law, u.model_truth);
    const auto bg = efficiency_bound(system_of(g), *g.model, g.law, g.model_truth);
    CHECK(bu.m_bound(0, 0) == doctest::Approx(frozen::kIvBoundHomoskedastic).epsilon(1e-9));
    CHECK(bg.m_bound(0, 0) == doctest::Approx(bu.m_bound(0, 0)).epsilon(1e-9));
  }
  SUBCASE("score fixtures") {
    const auto p = estimands::propensity_score_fixture();
    const auto bp = efficiency_bound(system_of(p), *p.model, p.law, p.model_truth, p.score);
    REQUIRE(bp.gap_psd_certificate.has_value());
    CHECK(std::abs(*bp.gap_psd_certificate) < 1e-10);
    CHECK(*bp.score_identity_residual <= 1e-6);

    const auto t = estimands::tilted_mean_fixture();
    const auto bt = efficiency_bound(system_of(t), *t.model, t.law, t.model_truth, t.score);
    CHECK(bt.m_bound(0, 0) == doctest::Approx(frozen::kTiltedMeanBound).epsilon(1e-9));
    CHECK((*bt.cramer_rao)(0, 0) == doctest::Approx(frozen::kTiltedMeanCramerRao).epsilon(1e-9));
    CHECK(*bt.gap_psd_certificate > 0.01);
  }
  SUBCASE("duplicated rows do not change the bound") {
    const auto d = estimands::first_step_fixture(estimands::FirstStepShape::duplicated);
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::direct);
    const auto bd = efficiency_bound(system_of(d), *d.model, d.law, d.model_truth);
    const auto bs = efficiency_bound(system_of(s), *s.model, s.law, s.model_truth);
    CHECK(linalg::max_abs(bd.m_bound - bs.m_bound) < 1e-9);
  }
  SUBCASE("dropping moment rows cannot shrink the bound") {
    const auto law = testing_util::scalar_law({-1.0, 0.0, 2.0}, {0.3, 0.4, 0.3});
    const double mu = 0.3;
    const double s2 = 0.3 + 1.2 - mu * mu;
    moments::MomentModel both;
    both.name = "both";
    both.rows_beta = 2;
    both.m_beta = [s2](const Vector& z, const Vector& b, const Vector&) {
      Vector out(2);
      out << z(0) - b(0), z(0) * z(0) - b(0) * b(0) - s2;
      return out;
    };
    moments::MomentModel first = both;
    first.rows_beta = 1;
    first.m_beta = [](const Vector& z, const Vector& b, const Vector&) {
      return Vector::Constant(1, z(0) - b(0));
    };
    const Vector nu = Vector::Constant(1, mu);
    const auto full = efficiency_bound(moments::block_system(both, law, nu), both, law, nu);
    const auto sub = efficiency_bound(moments::block_system(first, law, nu), first, law, nu);
    CHECK(sub.m_bound(0, 0) >= full.m_bound(0, 0) - 1e-12);
    CHECK(sub.m_bound(0, 0) > full.m_bound(0, 0) + 1e-3);
  }
}

TEST_CASE("variance ordering") {
  SUBCASE("direct: LR and efficient covariances are equal") {
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::direct);
    const auto o = variance_ordering(system_of(s));
    CHECK(o.equality);
    CHECK(o.max_abs <= kStructuralTol);
  }
  SUBCASE("rank over-identified: strict gap") {
    const auto s = estimands::first_step_fixture(estimands::FirstStepShape::rank_overidentified);
    const auto o = variance_ordering(system_of(s));
    CHECK_FALSE(o.equality);
    CHECK(o.min_eigenvalue >= -1e-10);
    CHECK(o.max_abs > 1e-3);
  }
}

TEST_CASE("run_checks verdicts") {
  const auto s = estimands::make_scenario("ate-aipw");
  const auto r = run_checks(*s.model, s.law, s.model_truth);
  CHECK(r.verdicts.at("locally_robust"));
  CHECK(r.find("local_robustness") != nullptr);
  CHECK(r.find("nonexistent") == nullptr);
  const auto m = estimands::make_scenario("mean");
  CHECK_THROWS_AS(run_checks(*m.model, m.law, m.model_truth), StructureError);
}
