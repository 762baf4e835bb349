#include <doctest.h>

#include "frozen_oracles.hpp"
#include "helpers.hpp"
#include "ifcalc/errors.hpp"
#include "ifcalc/estimands.hpp"

using namespace ifcalc;
using namespace ifcalc::estimands;

namespace {

AteDgp binary_dgp(std::vector<double> propensity, std::vector<double> tau1, std::vector<double> tau0) {
  AteDgp dgp = AteDgp::canonical();
  dgp.x_support = {0.0, 1.0};
  dgp.x_mass = {0.4, 0.6};
  dgp.propensity = std::move(propensity);
  dgp.tau1 = std::move(tau1);
  dgp.tau0 = std::move(tau0);
  return dgp;
}

}  // namespace

TEST_CASE("ATE quartet agrees on the truth") {
  SUBCASE("canonical design") {
    for (const auto& s : ate_quartet(AteDgp::canonical())) {
      CHECK(s.truth(0) == doctest::Approx(frozen::kAteTau).epsilon(1e-12));
    }
  }
  SUBCASE("binary covariate with a homogeneous effect") {
    const auto dgp = binary_dgp({0.3, 0.6}, {2.0, 3.0}, {1.0, 2.0});
    CHECK(dgp.ate() == doctest::Approx(1.0));
    for (const auto& s : ate_quartet(dgp)) CHECK(s.truth(0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("balanced assignment") {
    const auto dgp = binary_dgp({0.5, 0.5}, {0.5, 0.5}, {0.0, 0.0});
    for (const auto& s : ate_quartet(dgp)) CHECK(s.truth(0) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("ATE construction errors") {
  auto no_overlap = binary_dgp({1.0, 0.5}, {1.0, 1.0}, {0.0, 0.0});
  CHECK_THROWS_AS(no_overlap.validate(), ConstructionError);
  auto mismatched = binary_dgp({0.5}, {1.0, 1.0}, {0.0, 0.0});
  CHECK_THROWS_AS(mismatched.validate(), ConstructionError);
  CHECK_THROWS_AS(ate_scenario(AteDgp::canonical(), "ate-unknown"), InvalidInput);
}

TEST_CASE("random ATE designs keep overlap") {
  dist::Rng rng(11);
  for (int r = 0; r < 5; ++r) {
    const auto dgp = random_ate_dgp(rng, 3, 0.1);
    CHECK_NOTHROW(dgp.validate());
    for (const double p : dgp.propensity) {
      CHECK(p >= 0.1);
      CHECK(p <= 0.9);
    }
  }
}

TEST_CASE("quantile closed forms") {
  SUBCASE("median of the uniform grid") {
    const auto s = quantile_scenario(0.5, uniform_grid(100), 0.01);
    CHECK(s.truth(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(linalg::max_abs(s.influence(s.law).values() - *s.expected_if) < 1e-8);
  }
  SUBCASE("normal grid density at the median") {
    const auto law = normal_grid();
    const auto s = quantile_scenario(0.5, law, 12.0 / 240.0);
    CHECK(s.truth(0) == doctest::Approx(0.0).epsilon(1e-9));
    const Matrix jac = moments::mean_jacobian(*s.model, law, s.truth);
    CHECK(jac(0, 0) == doctest::Approx(frozen::kNormalGridDensityAtZero).epsilon(1e-8));
  }
  SUBCASE("flat CDF at the requested level") {
    const auto law = testing_util::scalar_law({0.0, 1.0}, {0.5, 0.5});
    CHECK_THROWS_AS(quantile_scenario(0.5, law, 0.1), Error);
  }
  SUBCASE("vector law rejected") {
    CHECK_THROWS_AS(quantile_scenario(0.5, AteDgp::canonical().law(), 0.1), InvalidInput);
  }
}

TEST_CASE("average density") {
  const auto law = testing_util::scalar_law({0.0, 1.0, 2.0}, {0.5, 0.3, 0.2});
  const auto s = avg_density_scenario(law);
  CHECK(s.truth(0) == doctest::Approx(frozen::kAvgDensity));
  const auto t = s.influence(s.law);
  CHECK(t.values()(0, 0) == doctest::Approx(frozen::kAvgDensityIfFirst));
  CHECK_THROWS_AS(density_values(law, 0.0), InvalidInput);
}

TEST_CASE("IV designs") {
  const auto dgp = IvDgp::canonical();
  Matrix eww(2, 2);
  eww << frozen::kIvEww[0][0], frozen::kIvEww[0][1], frozen::kIvEww[1][0], frozen::kIvEww[1][1];
  CHECK(linalg::max_abs(dgp.instrument_moment() - eww) < 1e-14);
  for (const auto w : {IvWeighting::unconditional, IvWeighting::gls, IvWeighting::just}) {
    const auto s = iv_scenario(dgp, w);
    CHECK(s.model_truth(0) == doctest::Approx(dgp.beta).epsilon(1e-10));
  }
  SUBCASE("data-driven IV cannot use the GLS weight") {
    CHECK_THROWS_AS(iv_scenario_on(dgp.law(), IvWeighting::gls), InvalidInput);
  }
  SUBCASE("data-driven variants recover the population values") {
    const auto s = iv_scenario_on(dgp.law(), IvWeighting::unconditional);
    CHECK(s.model_truth(0) == doctest::Approx(dgp.beta).epsilon(1e-8));
  }
  SUBCASE("bad first stage") {
    IvDgp bad = dgp;
    bad.gamma = Vector::Zero(3);
    CHECK_THROWS_AS(bad.validate(), ConstructionError);
  }
}

TEST_CASE("registry") {
  for (const auto& name : scenario_names()) {
    if (name == "nw") continue;
    CHECK_NOTHROW(make_scenario(name));
  }
  for (const auto& name : fixture_names()) CHECK_NOTHROW(make_scenario(name));
  CHECK_THROWS_AS(make_scenario("no-such-scenario"), InvalidInput);
  ScenarioOptions opts;
  opts.q = 0.9;
  const auto s = make_scenario("quantile", opts);
  CHECK(s.truth(0) > 0.0);
}

TEST_CASE("NW scenario is reproducible") {
  const auto a = nw_scenario(3, 500);
  const auto b = nw_scenario(3, 500);
  CHECK(a.sample.observations() == b.sample.observations());
  CHECK(a.target_variance == doctest::Approx(frozen::kNwTargetVariance).epsilon(1e-12));
}
