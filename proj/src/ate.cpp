#include <array>
#include <cmath>
#include <map>

#include "ifcalc/errors.hpp"
#include "ifcalc/estimands.hpp"

namespace ifcalc::estimands {

namespace {

using moments::NuisanceInputs;
using moments::NuisanceSpec;

// Coordinates of an (x, t, y) point.
struct Xty {
  double x;
  double t;
  double y;
};

Xty unpack(const Vector& z) { return Xty{z(0), z(1), z(2)}; }

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector one(double v) { return Vector::Constant(1, v); }

NuisanceSpec propensity_node() {
  NuisanceSpec n;
  n.label = "pi";
  n.level = 1;
  n.h = [](const Vector& z, const NuisanceInputs&) { return one(z(1)); };
  n.grad = [](const Vector&, const NuisanceInputs&) { return std::vector<Matrix>{}; };
  return n;
}

// gamma_Y, gamma_T, gamma_1T, gamma_0T.
std::vector<NuisanceSpec> regression_graph() {
  NuisanceSpec gy;
  gy.label = "gamma_y";
  gy.level = 2;
  gy.h = [](const Vector& z, const NuisanceInputs&) { return one(z(2)); };
  gy.grad = [](const Vector&, const NuisanceInputs&) { return std::vector<Matrix>{}; };

  NuisanceSpec gt = propensity_node();
  gt.label = "gamma_t";

  NuisanceSpec g1;
  g1.label = "gamma_1t";
  g1.level = 1;
  g1.inputs = {0};
  g1.h = [](const Vector& z, const NuisanceInputs& in) { return one(z(1) * in[0](0)); };
  g1.grad = [](const Vector& z, const NuisanceInputs&) {
    return std::vector<Matrix>{scalar(z(1))};
  };

  NuisanceSpec g0;
  g0.label = "gamma_0t";
  g0.level = 1;
  g0.inputs = {0};
  g0.h = [](const Vector& z, const NuisanceInputs& in) { return one((1.0 - z(1)) * in[0](0)); };
  g0.grad = [](const Vector& z, const NuisanceInputs&) {
    return std::vector<Matrix>{scalar(1.0 - z(1))};
  };
  return {gy, gt, g1, g0};
}

}  // namespace

AteDgp AteDgp::canonical() {
  AteDgp d;
  d.x_support = {0.0, 1.0, 2.0};
  d.x_mass = {0.3, 0.45, 0.25};
  d.propensity = {0.3, 0.55, 0.7};
  d.tau1 = {1.0, 2.0, 2.5};
  d.tau0 = {0.2, 0.5, 1.1};
  d.shock_values = {-1.0, 0.5};
  d.shock_mass = {1.0 / 3.0, 2.0 / 3.0};
  return d;
}

void AteDgp::validate() const {
  const size_t k = x_support.size();
  if (k == 0 || x_mass.size() != k || propensity.size() != k || tau1.size() != k ||
      tau0.size() != k) {
    throw ConstructionError("AteDgp: per-cell vectors must share one positive length");
  }
  for (size_t i = 0; i < k; ++i) {
    if (!(propensity[i] > 0.0 && propensity[i] < 1.0)) {
      throw ConstructionError("AteDgp: overlap fails at x = " + std::to_string(x_support[i]) +
                              " (pi = " + std::to_string(propensity[i]) + ")");
    }
    if (!(x_mass[i] > 0.0)) throw ConstructionError("AteDgp: covariate masses must be positive");
  }
  if (shock_values.empty() || shock_values.size() != shock_mass.size()) {
    throw ConstructionError("AteDgp: shock law is malformed");
  }
  double mean = 0.0;
  double total = 0.0;
  for (size_t i = 0; i < shock_values.size(); ++i) {
    mean += shock_values[i] * shock_mass[i];
    total += shock_mass[i];
  }
  if (std::abs(mean) > 1e-14 || std::abs(total - 1.0) > 1e-12) {
    throw ConstructionError("AteDgp: shock law must be a mean-zero probability law");
  }
}

double AteDgp::scale(double x, int t) const {
  return scale_base + scale_x * x + scale_t * static_cast<double>(t);
}

DiscreteDistribution AteDgp::law() const {
  validate();
  const size_t k = x_support.size();
  const size_t s = shock_values.size();
  Matrix pts(static_cast<Index>(k * 2 * s), 3);
  Vector mass(pts.rows());
  Index r = 0;
  for (size_t i = 0; i < k; ++i) {
    for (int t = 0; t <= 1; ++t) {
      const double mu = t == 1 ? tau1[i] : tau0[i];
      const double pt = t == 1 ? propensity[i] : 1.0 - propensity[i];
      for (size_t e = 0; e < s; ++e) {
        pts.row(r) << x_support[i], static_cast<double>(t), mu + scale(x_support[i], t) * shock_values[e];
        mass(r) = x_mass[i] * pt * shock_mass[e];
        ++r;
      }
    }
  }
  mass /= mass.sum();
  return DiscreteDistribution(std::move(pts), std::move(mass),
                              dist::VariableBlocks({1, 1, 1}, {"x", "t", "y"}));
}

double AteDgp::ate() const {
  double tau = 0.0;
  double total = 0.0;
  for (size_t i = 0; i < x_support.size(); ++i) {
    tau += x_mass[i] * (tau1[i] - tau0[i]);
    total += x_mass[i];
  }
  return tau / total;
}

Index AteDgp::cell_of(double x) const {
  for (size_t i = 0; i < x_support.size(); ++i) {
    if (x_support[i] == x) return static_cast<Index>(i);
  }
  return -1;
}

AteDgp random_ate_dgp(dist::Rng& rng, Index cells, double margin) {
  AteDgp d = AteDgp::canonical();
  d.x_support.clear();
  d.x_mass.clear();
  d.propensity.clear();
  d.tau1.clear();
  d.tau0.clear();
  double total = 0.0;
  for (Index i = 0; i < cells; ++i) {
    d.x_support.push_back(static_cast<double>(i));
    d.x_mass.push_back(0.5 + rng.uniform());
    total += d.x_mass.back();
    d.propensity.push_back(margin + (1.0 - 2.0 * margin) * rng.uniform());
    d.tau1.push_back(-2.0 + 4.0 * rng.uniform());
    d.tau0.push_back(-2.0 + 4.0 * rng.uniform());
  }
  for (auto& m : d.x_mass) m /= total;
  return d;
}

DirectIdentification ate_ipw_direct() {
  DirectIdentification id;
  id.name = "ate-ipw";
  id.nuisances = {propensity_node()};
  id.target = [](const Vector& z, const NuisanceInputs& g) {
    const auto [x, t, y] = unpack(z);
    (void)x;
    const double pi = g[0](0);
    return one(t * y / pi - (1.0 - t) * y / (1.0 - pi));
  };
  id.target_grad = [](const Vector& z, const NuisanceInputs& g) {
    const auto [x, t, y] = unpack(z);
    (void)x;
    const double pi = g[0](0);
    return std::vector<Matrix>{
        scalar(-t * y / (pi * pi) - (1.0 - t) * y / ((1.0 - pi) * (1.0 - pi)))};
  };
  return id;
}

DirectIdentification ate_nipw_direct() {
  DirectIdentification id;
  id.name = "ate-nipw";
  id.target_dim = 4;
  id.nuisances = {propensity_node()};
  id.target = [](const Vector& z, const NuisanceInputs& g) {
    const double t = z(1);
    const double y = z(2);
    const double pi = g[0](0);
    Vector v(4);
    v << t * y / pi, t / pi, (1.0 - t) * y / (1.0 - pi), (1.0 - t) / (1.0 - pi);
    return v;
  };
  id.target_grad = [](const Vector& z, const NuisanceInputs& g) {
    const double t = z(1);
    const double y = z(2);
    const double pi = g[0](0);
    const double a = pi * pi;
    const double b = (1.0 - pi) * (1.0 - pi);
    Matrix d(4, 1);
    d << -t * y / a, -t / a, (1.0 - t) * y / b, (1.0 - t) / b;
    return std::vector<Matrix>{d};
  };
  id.outer = [](const Vector& m) { return one(m(0) / m(1) - m(2) / m(3)); };
  id.outer_jacobian = [](const Vector& m) {
    Matrix j(1, 4);
    j << 1.0 / m(1), -m(0) / (m(1) * m(1)), -1.0 / m(3), m(2) / (m(3) * m(3));
    return j;
  };
  return id;
}

DirectIdentification ate_reg_direct() {
  DirectIdentification id;
  id.name = "ate-reg";
  id.nuisances = regression_graph();
  id.target = [](const Vector&, const NuisanceInputs& g) {
    const double gt = g[1](0);
    return one(g[2](0) / gt - g[3](0) / (1.0 - gt));
  };
  id.target_grad = [](const Vector&, const NuisanceInputs& g) {
    const double gt = g[1](0);
    const double g1 = g[2](0);
    const double g0 = g[3](0);
    return std::vector<Matrix>{
        scalar(0.0), scalar(-g1 / (gt * gt) - g0 / ((1.0 - gt) * (1.0 - gt))),
        scalar(1.0 / gt), scalar(-1.0 / (1.0 - gt))};
  };
  return id;
}

DirectIdentification ate_aipw_direct() {
  DirectIdentification id;
  id.name = "ate-aipw";
  id.nuisances = regression_graph();
  // Outcome means enter as tau1 = gamma_1t / gamma_t, tau0 = gamma_0t / (1 - gamma_t)
  // so that both are available at every point.
  id.target = [](const Vector& z, const NuisanceInputs& g) {
    const double t = z(1);
    const double y = z(2);
    const double pi = g[1](0);
    const double tau1 = g[2](0) / pi;
    const double tau0 = g[3](0) / (1.0 - pi);
    return one(tau1 - tau0 + t * (y - tau1) / pi - (1.0 - t) * (y - tau0) / (1.0 - pi));
  };
  id.target_grad = [](const Vector& z, const NuisanceInputs& g) {
    const double t = z(1);
    const double y = z(2);
    const double pi = g[1](0);
    const double a = g[2](0);
    const double c = g[3](0);
    const double tau1 = a / pi;
    const double tau0 = c / (1.0 - pi);
    const double d_tau1 = 1.0 - t / pi;
    const double d_tau0 = -1.0 + (1.0 - t) / (1.0 - pi);
    const double d_pi_explicit =
        -t * (y - tau1) / (pi * pi) - (1.0 - t) * (y - tau0) / ((1.0 - pi) * (1.0 - pi));
    const double d_pi =
        d_pi_explicit - d_tau1 * a / (pi * pi) + d_tau0 * c / ((1.0 - pi) * (1.0 - pi));
    return std::vector<Matrix>{scalar(0.0), scalar(d_pi), scalar(d_tau1 / pi),
                               scalar(d_tau0 / (1.0 - pi))};
  };
  return id;
}

std::vector<Index> hahn_treatment_nodes() { return {1, 2, 3}; }

double h_aipw(const AteDgp& dgp, const Vector& z) {
  const Index k = dgp.cell_of(z(0));
  if (k < 0) throw DomainError("h_aipw: covariate value outside the support");
  const auto i = static_cast<size_t>(k);
  const double t = z(1);
  const double y = z(2);
  const double pi = dgp.propensity[i];
  return dgp.tau1[i] - dgp.tau0[i] + t * (y - dgp.tau1[i]) / pi -
         (1.0 - t) * (y - dgp.tau0[i]) / (1.0 - pi);
}

MomentModel ate_moment_model(const AteDgp& dgp, AteMoment kind) {
  dgp.validate();
  const Index cells = static_cast<Index>(dgp.x_support.size());
  std::vector<moments::NuisanceSlot> slots;
  for (Index k = 0; k < cells; ++k) slots.push_back({"pi_" + std::to_string(k), 1, 0});
  MomentModel m;
  m.name = kind == AteMoment::ipw ? "ate-ipw" : "ate-aipw";
  m.partition = moments::ParamPartition(1, slots);
  m.rows_beta = 1;
  m.rows_gamma = cells;
  const AteDgp d = dgp;
  auto cell = [d](const Vector& z) {
    const Index k = d.cell_of(z(0));
    if (k < 0) throw DomainError("ATE moment: covariate value outside the support");
    return k;
  };
  if (kind == AteMoment::ipw) {
    m.m_beta = [cell](const Vector& z, const Vector& beta, const Vector& gamma) {
      const double pi = gamma(cell(z));
      return one(z(1) * z(2) / pi - (1.0 - z(1)) * z(2) / (1.0 - pi) - beta(0));
    };
  } else {
    m.m_beta = [cell, d](const Vector& z, const Vector& beta, const Vector& gamma) {
      const Index k = cell(z);
      const auto i = static_cast<size_t>(k);
      const double pi = gamma(k);
      const double t = z(1);
      const double y = z(2);
      return one(d.tau1[i] - d.tau0[i] + t * (y - d.tau1[i]) / pi -
                 (1.0 - t) * (y - d.tau0[i]) / (1.0 - pi) - beta(0));
    };
  }
  m.m_gamma = [cell, cells](const Vector& z, const Vector&, const Vector& gamma) {
    Vector out = Vector::Zero(cells);
    const Index k = cell(z);
    out(k) = z(1) - gamma(k);
    return out;
  };
  m.jacobian = [cell, cells, kind, d](const Vector& z, const Vector&, const Vector& gamma) {
    Matrix j = Matrix::Zero(1 + cells, 1 + cells);
    const Index k = cell(z);
    const auto i = static_cast<size_t>(k);
    const double pi = gamma(k);
    const double t = z(1);
    const double y = z(2);
    j(0, 0) = -1.0;
    const double r1 = kind == AteMoment::ipw ? y : y - d.tau1[i];
    const double r0 = kind == AteMoment::ipw ? y : y - d.tau0[i];
    j(0, 1 + k) = -t * r1 / (pi * pi) - (1.0 - t) * r0 / ((1.0 - pi) * (1.0 - pi));
    j(1 + k, 1 + k) = -1.0;
    return j;
  };
  return m;
}

namespace {

DirectIdentification ate_ident(const std::string& which) {
  if (which == "ate-ipw") return ate_ipw_direct();
  if (which == "ate-nipw") return ate_nipw_direct();
  if (which == "ate-reg") return ate_reg_direct();
  if (which == "ate-aipw") return ate_aipw_direct();
  throw InvalidInput("unknown ATE scenario '" + which + "'");
}

EstimandScenario build_ate(DiscreteDistribution law, const AteDgp& cells, double truth,
                           const std::string& which) {
  EstimandScenario s(which, std::move(law));
  s.ident = ate_ident(which);
  s.truth = Vector::Constant(1, truth);
  if (which == "ate-ipw" || which == "ate-aipw") {
    s.model = ate_moment_model(cells, which == "ate-ipw" ? AteMoment::ipw : AteMoment::aipw);
    Vector nu(1 + static_cast<Index>(cells.propensity.size()));
    nu(0) = truth;
    for (size_t k = 0; k < cells.propensity.size(); ++k) {
      nu(static_cast<Index>(k) + 1) = cells.propensity[k];
    }
    s.model_truth = nu;
  }
  Matrix expected(s.law.size(), 1);
  for (Index i = 0; i < s.law.size(); ++i) expected(i, 0) = h_aipw(cells, s.law.point(i)) - truth;
  s.expected_if = expected;
  const DirectIdentification ident = *s.ident;
  s.functional = [ident](const DiscreteDistribution& q, const Vector&) {
    return moments::direct_functional(ident, q);
  };
  s.influence = [ident](const DiscreteDistribution& q) {
    return influence::if_multistep_direct(ident, q).beta;
  };
  return s;
}

}  // namespace

EstimandScenario ate_scenario(const AteDgp& dgp, const std::string& which) {
  return build_ate(dgp.law(), dgp, dgp.ate(), which);
}

AteDgp ate_cells(const DiscreteDistribution& law) {
  if (law.blocks().count() != 3 || law.dim() != 3) {
    throw InvalidInput("ATE data needs three scalar blocks x, t, y");
  }
  std::map<double, std::array<double, 5>> acc;  // mass, treated mass, sum ty, control mass, sum (1-t)y
  for (Index i = 0; i < law.size(); ++i) {
    const double x = law.points()(i, 0);
    const double t = law.points()(i, 1);
    const double y = law.points()(i, 2);
    if (t != 0.0 && t != 1.0) throw InvalidInput("ATE data: treatment column must be 0 or 1");
    auto& a = acc[x];
    const double p = law.mass()(i);
    a[0] += p;
    a[1] += p * t;
    a[2] += p * t * y;
    a[3] += p * (1.0 - t);
    a[4] += p * (1.0 - t) * y;
  }
  AteDgp d = AteDgp::canonical();
  d.x_support.clear();
  d.x_mass.clear();
  d.propensity.clear();
  d.tau1.clear();
  d.tau0.clear();
  for (const auto& [x, a] : acc) {
    d.x_support.push_back(x);
    d.x_mass.push_back(a[0]);
    d.propensity.push_back(a[1] / a[0]);
    d.tau1.push_back(a[1] > 0.0 ? a[2] / a[1] : 0.0);
    d.tau0.push_back(a[3] > 0.0 ? a[4] / a[3] : 0.0);
  }
  d.validate();
  return d;
}

EstimandScenario ate_scenario_on(const DiscreteDistribution& law, const std::string& which) {
  const AteDgp cells = ate_cells(law);
  return build_ate(law, cells, cells.ate(), which);
}

std::vector<EstimandScenario> ate_quartet(const AteDgp& dgp) {
  return {ate_scenario(dgp, "ate-ipw"), ate_scenario(dgp, "ate-nipw"),
          ate_scenario(dgp, "ate-reg"), ate_scenario(dgp, "ate-aipw")};
}

}  // namespace ifcalc::estimands
