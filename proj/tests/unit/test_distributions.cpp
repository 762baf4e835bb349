#include <doctest.h>

#include <cmath>
#include <sstream>

#include "frozen_oracles.hpp"
#include "helpers.hpp"
#include "ifcalc/distributions.hpp"
#include "ifcalc/errors.hpp"
#include "ifcalc/estimands.hpp"

using namespace ifcalc;
using namespace ifcalc::dist;
using testing_util::scalar_law;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

// Two binary blocks with a dependent second coordinate.
DiscreteDistribution two_block_law() {
  Matrix pts(4, 2);
  pts << 0, 0, 0, 1, 1, 0, 1, 1;
  Vector mass(4);
  mass << 0.1, 0.3, 0.4, 0.2;
  return DiscreteDistribution(pts, mass, VariableBlocks({1, 1}, {"x", "y"}));
}

}  // namespace

TEST_CASE("DiscreteDistribution validation") {
  Matrix pts(2, 1);
  pts << 0.0, 1.0;
  CHECK_THROWS_AS(DiscreteDistribution(pts, Vector::Constant(2, 0.4), VariableBlocks::single(1)),
                  InvalidInput);
  Vector neg(2);
  neg << 1.5, -0.5;
  CHECK_THROWS_AS(DiscreteDistribution(pts, neg, VariableBlocks::single(1)), InvalidInput);
  Matrix dup(2, 1);
  dup << 1.0, 1.0;
  CHECK_THROWS_AS(DiscreteDistribution(dup, Vector::Constant(2, 0.5), VariableBlocks::single(1)),
                  InvalidInput);
  CHECK_THROWS_AS(DiscreteDistribution(pts, Vector::Constant(2, 0.5), VariableBlocks::single(2)),
                  InvalidInput);
  CHECK_THROWS_AS(VariableBlocks({}, {}), InvalidInput);
}

TEST_CASE("expect") {
  const auto uni = DiscreteDistribution::uniform(
      (Matrix(3, 1) << 0.0, 1.0, 2.0).finished(), VariableBlocks::single(1));
  CHECK(expect(uni, [](const Vector& z) { return z; })(0) == doctest::Approx(1.0));
  CHECK(expect(uni, [](const Vector&) { return scalar(3.5); })(0) == doctest::Approx(3.5));
  const auto law = scalar_law({1.0, 2.0, 3.0}, {0.2, 0.3, 0.5});
  CHECK(expect(law, [](const Vector& z) { return scalar(z(0) * z(0)); })(0) ==
        doctest::Approx(5.9));
  CHECK_THROWS_AS(expect(law, [](const Vector& z) { return scalar(1.0 / (z(0) - 2.0)); }),
                  DomainError);
}

TEST_CASE("conditional laws") {
  SUBCASE("independent blocks") {
    Matrix pts(4, 2);
    pts << 0, 0, 0, 1, 1, 0, 1, 1;
    Vector mass(4);
    mass << 0.12, 0.28, 0.18, 0.42;  // x ~ (0.4, 0.6), y ~ (0.3, 0.7)
    const DiscreteDistribution law(pts, mass, VariableBlocks({1, 1}, {"x", "y"}));
    for (const auto& [key, cond] : conditional(law, 1, 1, 2)) {
      REQUIRE(cond.size() == 2);
      CHECK(cond.mass()(cond.find(scalar(1.0))) == doctest::Approx(0.7));
    }
  }
  SUBCASE("perfect dependence gives point masses") {
    Matrix pts(2, 2);
    pts << 0, 0, 1, 1;
    const DiscreteDistribution law(pts, Vector::Constant(2, 0.5), VariableBlocks({1, 1}, {"a", "b"}));
    for (const auto& [key, cond] : conditional(law, 1, 1, 2)) {
      CHECK(cond.size() == 1);
      CHECK(cond.points()(0, 0) == key[0]);
    }
  }
  SUBCASE("treatment law in the ATE design") {
    const auto dgp = estimands::AteDgp::canonical();
    const auto cond = conditional(dgp.law(), 1, 1, 2);
    for (size_t k = 0; k < dgp.x_support.size(); ++k) {
      const auto& t_law = cond.at({dgp.x_support[k]});
      CHECK(t_law.mass()(t_law.find(scalar(1.0))) == doctest::Approx(dgp.propensity[k]).epsilon(1e-12));
    }
  }
  SUBCASE("round trip marginal times conditional") {
    const auto law = two_block_law();
    const auto marg = law.marginal(0, 1);
    const auto cond = conditional(law, 1, 1, 2);
    double worst = 0.0;
    for (Index i = 0; i < law.size(); ++i) {
      const double x = law.points()(i, 0);
      const auto& c = cond.at({x});
      const double joint = marg.mass()(marg.find(scalar(x))) * c.mass()(c.find(scalar(law.points()(i, 1))));
      worst = std::max(worst, std::abs(joint - law.mass()(i)));
    }
    CHECK(worst <= 1e-14);
  }
  SUBCASE("bad block ranges") { CHECK_THROWS_AS(conditional(two_block_law(), 1, 0, 3), InvalidInput); }
}

TEST_CASE("BlockFactorization conditional mean on a zero-mass group") {
  Matrix pts(2, 2);
  pts << 0, 0, 1, 1;
  Vector mass(2);
  mass << 1.0, 0.0;
  const DiscreteDistribution law(pts, mass, VariableBlocks({1, 1}, {"x", "y"}));
  const BlockFactorization fac(law);
  CHECK(fac.levels() == 2);
  CHECK_THROWS_AS((void)fac.conditional_mean(Matrix::Ones(2, 1), 1), DomainError);
}

TEST_CASE("unconditional contamination") {
  const auto base = DiscreteDistribution::uniform(
      (Matrix(3, 1) << 0.0, 1.0, 2.0).finished(), VariableBlocks::single(1));
  SUBCASE("eps = 0 is the identity") {
    const auto same = contaminate({base, DiscreteDistribution::point_mass(scalar(5.0), base.blocks()), {}}, 0.0);
    for (Index i = 0; i < base.size(); ++i) {
      CHECK(same.mass()(same.find(base.point(i))) == doctest::Approx(base.mass()(i)));
    }
  }
  SUBCASE("point mass at a new point") {
    const auto q = DiscreteDistribution::point_mass(scalar(5.0), base.blocks());
    const auto mix = contaminate({base, q, {}}, 0.1);
    REQUIRE(mix.size() == 4);
    for (Index i = 0; i < 3; ++i) {
      CHECK(mix.points()(i, 0) == base.points()(i, 0));  // base points first
      CHECK(mix.mass()(i) == doctest::Approx(0.3));
    }
    CHECK(mix.mass()(3) == doctest::Approx(0.1));
  }
  SUBCASE("linearity of expectations") {
    const auto q = scalar_law({1.0, 7.0}, {0.25, 0.75});
    auto f = [](const Vector& z) { return scalar(std::sin(z(0)) + z(0) * z(0)); };
    const double eps = 0.37;
    const double lhs = expect(contaminate({base, q, {}}, eps), f)(0);
    const double rhs = (1.0 - eps) * expect(base, f)(0) + eps * expect(q, f)(0);
    CHECK(std::abs(lhs - rhs) < 1e-14);
  }
  SUBCASE("eps outside [0, 1)") {
    const auto q = DiscreteDistribution::point_mass(scalar(0.0), base.blocks());
    CHECK_THROWS_AS(contaminate({base, q, {}}, 1.0), InvalidInput);
    CHECK_THROWS_AS(contaminate({base, q, {}}, -0.1), InvalidInput);
  }
}

TEST_CASE("conditional contamination density identity") {
  const auto p = two_block_law();
  Matrix qpts(3, 2);
  qpts << 0, 1, 1, 0, 1, 1;
  Vector qmass(3);
  qmass << 0.5, 0.2, 0.3;
  const DiscreteDistribution q(qpts, qmass, p.blocks());
  const double eps = 0.2;
  const auto pe = contaminate({p, q, Index{1}}, eps);
  CHECK(pe.mass().sum() == doctest::Approx(1.0));
  // Marginal of x is the mixture; y | x follows the displayed change of measure.
  const auto p_x = p.marginal(0, 1);
  const auto q_x = q.marginal(0, 1);
  const auto pe_x = pe.marginal(0, 1);
  const auto p_cond = conditional(p, 1, 1, 2);
  const auto q_cond = conditional(q, 1, 1, 2);
  const auto pe_cond = conditional(pe, 1, 1, 2);
  double worst = 0.0;
  for (double x : {0.0, 1.0}) {
    const double px = p_x.mass()(p_x.find(scalar(x)));
    const double qx = q_x.mass()(q_x.find(scalar(x)));
    const double pex = (1.0 - eps) * px + eps * qx;
    CHECK(pe_x.mass()(pe_x.find(scalar(x))) == doctest::Approx(px));
    for (double y : {0.0, 1.0}) {
      auto cond_mass = [&](const std::map<PrefixKey, DiscreteDistribution>& c) {
        const auto& d = c.at({x});
        const Index k = d.find(scalar(y));
        return k < 0 ? 0.0 : d.mass()(k);
      };
      const double expected = cond_mass(p_cond) + eps * (cond_mass(q_cond) - cond_mass(p_cond)) * qx / pex;
      worst = std::max(worst, std::abs(cond_mass(pe_cond) - expected));
    }
  }
  CHECK(worst < 1e-14);
  CHECK_THROWS_AS(contaminate({p, q, Index{5}}, 0.1), InvalidInput);
}

TEST_CASE("kernels") {
  const KernelSpec g1(KernelFamily::gaussian, 1.0, 2);
  const Vector c = Vector::Zero(2);
  CHECK(kernel_weight(g1, c, c) == doctest::Approx(1.0 / (2.0 * M_PI)));
  const KernelSpec e(KernelFamily::epanechnikov, 0.5, 1);
  CHECK(kernel_weight(e, scalar(0.0), scalar(0.5)) == 0.0);
  CHECK(kernel_weight(e, scalar(0.0), scalar(0.7)) == 0.0);
  const KernelSpec g(KernelFamily::gaussian, 0.5, 1);
  CHECK(kernel_weight(g, scalar(0.5), scalar(0.0)) ==
        doctest::Approx(frozen::kGaussianKernelHalfOffset).epsilon(1e-14));
  CHECK(kernel_square_integral(KernelSpec(KernelFamily::gaussian, 1.0, 1)) ==
        doctest::Approx(frozen::kGaussianSquareIntegral).epsilon(1e-14));
  CHECK_THROWS_AS(KernelSpec(KernelFamily::gaussian, 0.0, 1), InvalidInput);
  CHECK_THROWS_AS(kernel_weight(g, c, c), InvalidInput);
}

TEST_CASE("Rng streams are reproducible and distinct") {
  auto a = Rng::stream(42, 3);
  auto b = Rng::stream(42, 3);
  auto c = Rng::stream(42, 4);
  bool all_same = true;
  bool differ = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next();
    all_same = all_same && x == b.next();
    differ = differ || x != c.next();
  }
  CHECK(all_same);
  CHECK(differ);
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("sampling and aggregation") {
  const auto law = scalar_law({0.0, 1.0}, {0.25, 0.75});
  Rng rng(8);
  const auto s = sample(law, 4000, rng);
  CHECK(s.size() == 4000);
  const auto agg = s.aggregate();
  CHECK(agg.size() == 2);
  CHECK(agg.mass()(agg.find(scalar(1.0))) == doctest::Approx(0.75).epsilon(0.05));
  CHECK_THROWS_AS(sample(law, 0, rng), InvalidInput);
}

TEST_CASE("CSV ingestion") {
  std::istringstream good("a,b,c\n1,2,3\n4,5,6\n1,2,3\n");
  const auto table = read_csv(good);
  CHECK(table.header == std::vector<std::string>{"a", "b", "c"});
  CHECK(table.data.rows() == 3);
  const auto s = sample_from_columns(table, {{"x", {"c"}}, {"y", {"a", "b"}}});
  CHECK(s.blocks().count() == 2);
  CHECK(s.observations()(1, 0) == 6.0);
  CHECK(s.aggregate().size() == 2);
  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_AS(read_csv(ragged), InvalidInput);
  std::istringstream text("a\nfoo\n");
  CHECK_THROWS_AS(read_csv(text), InvalidInput);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), InvalidInput);
  CHECK_THROWS_AS(sample_from_columns(table, {{"x", {"zz"}}}), InvalidInput);
  CHECK_THROWS_AS(read_csv_file("/nonexistent/file.csv"), InvalidInput);
}

TEST_CASE("CSV round trip") {
  const auto law = two_block_law();
  std::ostringstream out;
  write_law_csv(out, law);
  std::istringstream in(out.str());
  const auto t = read_csv(in);
  CHECK(t.header.back() == "mass");
  CHECK(t.data.rows() == law.size());
  CHECK((t.data.col(2) - law.mass()).cwiseAbs().maxCoeff() < 1e-15);
}
