#include "ifcalc/estimands.hpp"

#include <algorithm>
#include <cmath>

#include "ifcalc/errors.hpp"

namespace ifcalc::estimands {

namespace {

Vector one(double v) { return Vector::Constant(1, v); }

// Centered second moment of the stacked moment at nu.
Matrix moment_covariance(const MomentModel& model, const dist::WeightedPoints& law,
                         const Vector& nu) {
  const Matrix m = moments::moment_values(model, law, nu);
  const Vector mean = m.transpose() * law.weights();
  return m.transpose() * law.weights().asDiagonal() * m - mean * mean.transpose();
}

// Plug-in functional and joint influence for a moment-model scenario.
void attach_model_maps(EstimandScenario& s) {
  const MomentModel model = *s.model;
  const Matrix xi = s.xi ? *s.xi : Matrix::Identity(model.rows(), model.rows());
  const Vector truth = s.model_truth;
  s.functional = [model, xi, truth](const DiscreteDistribution& q, const Vector& warm) {
    moments::SolveOptions opts;
    opts.xi = xi;
    return moments::solve_moments(model, q, warm.size() == truth.size() ? warm : truth, opts).nu;
  };
  s.influence = [model, xi, truth](const DiscreteDistribution& q) {
    moments::SolveOptions opts;
    opts.xi = xi;
    const Vector nu = moments::solve_moments(model, q, truth, opts).nu;
    return influence::if_joint(model, q, nu, xi);
  };
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Grid density at t: cell mass / width, averaged over the two cells that
// meet when t is a boundary.
double grid_density(const DiscreteDistribution& law, double width, double t) {
  constexpr double kEdge = 1e-9;
  double left = 0.0;
  double right = 0.0;
  for (Index i = 0; i < law.size(); ++i) {
    const double c = law.points()(i, 0);
    const double lo = c - 0.5 * width;
    const double hi = c + 0.5 * width;
    const double p = law.mass()(i) / width;
    if (t > lo + kEdge * width && t < hi - kEdge * width) return p;
    if (std::abs(t - hi) <= kEdge * width) left = p;
    if (std::abs(t - lo) <= kEdge * width) right = p;
  }
  // A flat side means the quantile is not unique.
  if (left == 0.0 || right == 0.0) return 0.0;
  return 0.5 * (left + right);
}

}  // namespace

EstimandScenario mean_scenario(const DiscreteDistribution& law) {
  const Index d = law.dim();
  EstimandScenario s("mean", law);
  MomentModel m;
  m.name = "mean";
  m.partition = moments::ParamPartition(d);
  m.rows_beta = d;
  m.m_beta = [](const Vector& z, const Vector& beta, const Vector&) -> Vector { return z - beta; };
  m.jacobian = [d](const Vector&, const Vector&, const Vector&) -> Matrix {
    return -Matrix::Identity(d, d);
  };
  s.model = m;
  const Vector mean = law.points().transpose() * law.weights();
  s.truth = mean;
  s.model_truth = mean;
  s.expected_if = law.points().rowwise() - mean.transpose();
  attach_model_maps(s);
  return s;
}

DiscreteDistribution uniform_grid(Index cells, double lo, double hi) {
  if (cells < 1 || !(hi > lo)) throw InvalidInput("uniform_grid: need cells >= 1 and hi > lo");
  const double w = (hi - lo) / static_cast<double>(cells);
  Matrix pts(cells, 1);
  for (Index i = 0; i < cells; ++i) pts(i, 0) = lo + (static_cast<double>(i) + 0.5) * w;
  return DiscreteDistribution(pts, Vector::Constant(cells, 1.0 / static_cast<double>(cells)),
                              dist::VariableBlocks::single(1, "z"));
}

DiscreteDistribution normal_grid(Index cells, double lo, double hi) {
  if (cells < 1 || !(hi > lo)) throw InvalidInput("normal_grid: need cells >= 1 and hi > lo");
  const double w = (hi - lo) / static_cast<double>(cells);
  Matrix pts(cells, 1);
  Vector mass(cells);
  for (Index i = 0; i < cells; ++i) {
    const double a = lo + static_cast<double>(i) * w;
    pts(i, 0) = a + 0.5 * w;
    mass(i) = normal_cdf(a + w) - normal_cdf(a);
  }
  mass /= mass.sum();
  return DiscreteDistribution(pts, mass, dist::VariableBlocks::single(1, "z"));
}

MomentModel quantile_model(double q, double width) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("quantile level must lie in (0, 1)");
  if (width < 0.0) throw InvalidInput("quantile smoothing width must be non-negative");
  MomentModel m;
  m.name = "quantile";
  m.partition = moments::ParamPartition(1);
  m.rows_beta = 1;
  m.differentiability = {moments::Differentiability::generalized};
  m.m_beta = [q, width](const Vector& z, const Vector& beta, const Vector&) {
    const double below =
        width == 0.0 ? (z(0) <= beta(0) ? 1.0 : 0.0)
                     : std::clamp((beta(0) - z(0)) / width + 0.5, 0.0, 1.0);
    return one(below - q);
  };
  return m;
}

EstimandScenario quantile_scenario(double q, const DiscreteDistribution& law, double width) {
  if (law.dim() != 1) throw InvalidInput("quantile scenario needs a scalar law");
  EstimandScenario s("quantile", law);
  s.model = quantile_model(q, width);
  const Vector start = one(law.points().col(0).dot(law.weights()));
  const Vector truth = moments::solve_moments(*s.model, law, start).nu;
  s.truth = truth;
  s.model_truth = truth;
  if (width > 0.0) {
    s.grid_width = width;
    const double f = grid_density(law, width, truth(0));
    if (!(f > 0.0)) throw IdentificationError("degenerate quantile: flat CDF at q");
    Matrix expected(law.size(), 1);
    for (Index i = 0; i < law.size(); ++i) {
      const double below = std::clamp((truth(0) - law.points()(i, 0)) / width + 0.5, 0.0, 1.0);
      expected(i, 0) = (q - below) / f;
    }
    s.expected_if = expected;
  }
  attach_model_maps(s);
  return s;
}

Vector density_values(const DiscreteDistribution& law, double width) {
  if (!(width > 0.0)) throw InvalidInput("cell width must be positive");
  return law.mass() / width;
}

double average_density(const DiscreteDistribution& law, double width) {
  return law.mass().dot(density_values(law, width));
}

Vector average_density_lr(const DiscreteDistribution& law, double width) {
  const Vector f = density_values(law, width);
  return 2.0 * f - Vector::Constant(f.size(), law.mass().dot(f));
}

EstimandScenario avg_density_scenario(const DiscreteDistribution& law, double width) {
  EstimandScenario s("avg-density", law);
  s.truth = one(average_density(law, width));
  s.grid_width = width;
  const Vector f = density_values(law, width);
  s.expected_if = Matrix(2.0 * (f.array() - s.truth(0)).matrix());
  s.functional = [width](const DiscreteDistribution& q, const Vector&) {
    return one(average_density(q, width));
  };
  s.influence = [width](const DiscreteDistribution& q) {
    const Vector fq = density_values(q, width);
    const double pf = q.mass().dot(fq);
    return InfluenceTable(Matrix(2.0 * (fq.array() - pf).matrix()), q.mass(), {"beta"});
  };
  return s;
}

IvDgp IvDgp::canonical(bool heteroskedastic) {
  IvDgp d;
  d.w_values = {-1.0, 0.0, 1.0, 2.0};
  d.w_mass = {0.2, 0.3, 0.3, 0.2};
  d.gamma = Vector(2);
  d.gamma << 0.5, 1.0;
  d.heteroskedastic = heteroskedastic;
  return d;
}

void IvDgp::validate() const {
  if (w_values.empty() || w_values.size() != w_mass.size()) {
    throw ConstructionError("IvDgp: instrument support and masses disagree");
  }
  if (gamma.size() != 2) throw ConstructionError("IvDgp: first stage has two coefficients");
  if (!(u_ratio >= 0.0)) throw ConstructionError("IvDgp: u_ratio must be non-negative");
}

double IvDgp::scale(double w) const { return heteroskedastic ? 0.5 + 0.5 * std::abs(w) : 1.0; }

DiscreteDistribution IvDgp::law() const {
  validate();
  const auto k = static_cast<Index>(w_values.size());
  Matrix pts(4 * k, 3);
  Vector mass(4 * k);
  Index r = 0;
  for (Index i = 0; i < k; ++i) {
    const double w = w_values[static_cast<size_t>(i)];
    const double s = scale(w);
    const double fit = gamma(0) + gamma(1) * w;
    for (double e2 : {-s, s}) {
      for (double u : {-u_ratio * s, u_ratio * s}) {
        const double y2 = fit + e2;
        pts.row(r) << w, y2 * beta + u, y2;
        mass(r) = w_mass[static_cast<size_t>(i)] / 4.0;
        ++r;
      }
    }
  }
  mass /= mass.sum();
  return DiscreteDistribution(pts, mass, dist::VariableBlocks({1, 2}, {"w", "y"}));
}

Matrix IvDgp::instrument_moment() const {
  Matrix eww = Matrix::Zero(2, 2);
  double total = 0.0;
  for (size_t i = 0; i < w_values.size(); ++i) {
    Vector w(2);
    w << 1.0, w_values[i];
    eww += w_mass[i] * w * w.transpose();
    total += w_mass[i];
  }
  return eww / total;
}

MomentModel iv_model(const IvDgp& dgp, IvWeighting weighting) {
  dgp.validate();
  MomentModel m;
  m.partition = moments::ParamPartition(1, {{"gamma", 2, 0}});
  m.rows_gamma = 2;
  const IvDgp d = dgp;
  auto instrument = [](const Vector& z) {
    Vector w(2);
    w << 1.0, z(0);
    return w;
  };
  if (weighting == IvWeighting::just) {
    m.name = "iv-just";
    m.rows_beta = 1;
    m.m_beta = [instrument](const Vector& z, const Vector& beta, const Vector& gamma) {
      const double fit = instrument(z).dot(gamma);
      return one(fit * (z(1) - beta(0) * fit));
    };
    m.m_gamma = [instrument](const Vector& z, const Vector&, const Vector& gamma) -> Vector {
      const Vector w = instrument(z);
      return w * (z(2) - w.dot(gamma));
    };
    m.jacobian = [instrument](const Vector& z, const Vector& beta, const Vector& gamma) {
      const Vector w = instrument(z);
      const double fit = w.dot(gamma);
      Matrix j = Matrix::Zero(3, 3);
      j(0, 0) = -fit * fit;
      j.block(0, 1, 1, 2) = (z(1) - 2.0 * beta(0) * fit) * w.transpose();
      j.block(1, 1, 2, 2) = -w * w.transpose();
      return j;
    };
    return m;
  }
  const bool gls = weighting == IvWeighting::gls;
  m.name = gls ? "iv-gls" : "iv-unconditional";
  m.rows_beta = 2;
  auto weight = [d, gls](const Vector& z) { return gls ? 1.0 / d.v22(z(0)) : 1.0; };
  m.m_beta = [instrument, weight](const Vector& z, const Vector& beta, const Vector& gamma) -> Vector {
    const Vector w = instrument(z);
    return weight(z) * w * (z(1) - w.dot(gamma) * beta(0));
  };
  m.m_gamma = [instrument, weight](const Vector& z, const Vector&, const Vector& gamma) -> Vector {
    const Vector w = instrument(z);
    return weight(z) * w * (z(2) - w.dot(gamma));
  };
  m.jacobian = [instrument, weight](const Vector& z, const Vector& beta, const Vector& gamma) {
    const Vector w = instrument(z);
    const double a = weight(z);
    Matrix j = Matrix::Zero(4, 3);
    j.block(0, 0, 2, 1) = -a * w * w.dot(gamma);
    j.block(0, 1, 2, 2) = -a * beta(0) * w * w.transpose();
    j.block(2, 1, 2, 2) = -a * w * w.transpose();
    return j;
  };
  return m;
}

EstimandScenario iv_scenario(const IvDgp& dgp, IvWeighting weighting) {
  EstimandScenario s("", dgp.law());
  s.model = iv_model(dgp, weighting);
  s.name = s.model->name;
  Vector nu(3);
  nu << dgp.beta, dgp.gamma(0), dgp.gamma(1);
  s.truth = nu;
  s.model_truth = nu;
  if (weighting != IvWeighting::just) s.xi = linalg::pinv(moment_covariance(*s.model, s.law, nu));
  attach_model_maps(s);
  return s;
}

namespace {

// GMM influence without assuming P[m] = 0 at the solution. Differentiating
// the first-order condition G' Xi g = 0 gives
//   H nu_dot = -(G' Xi (m(z) - g) + (J(z) - G)' Xi g),  H = d(G' Xi g) / d nu.
InfluenceTable gmm_influence_general(const MomentModel& model, const DiscreteDistribution& law,
                                     const Vector& nu, const Matrix& xi) {
  auto foc = [&](const Vector& v) -> Vector {
    return moments::mean_jacobian(model, law, v).transpose() * xi * moments::mean_moment(model, law, v);
  };
  const Index d = nu.size();
  Matrix h(d, d);
  for (Index k = 0; k < d; ++k) {
    const double step = moments::fd_step(nu(k));
    Vector up = nu;
    Vector down = nu;
    up(k) += step;
    down(k) -= step;
    h.col(k) = (foc(up) - foc(down)) / (2.0 * step);
  }
  const Eigen::FullPivLU<Matrix> lu(h);
  if (!lu.isInvertible()) throw IdentificationError("GMM influence: first-order condition is singular");
  const Matrix g_mat = moments::mean_jacobian(model, law, nu);
  const Vector g = moments::mean_moment(model, law, nu);
  const Matrix values = moments::moment_values(model, law, nu);
  Matrix out(law.size(), d);
  for (Index i = 0; i < law.size(); ++i) {
    const Matrix jz = moments::pointwise_jacobian(model, law.point(i), nu);
    const Vector rhs = g_mat.transpose() * xi * (values.row(i).transpose() - g) +
                       (jz - g_mat).transpose() * xi * g;
    out.row(i) = -lu.solve(rhs).transpose();
  }
  return InfluenceTable(out, law.mass(), influence::if_joint(model, law, nu, xi).labels());
}

}  // namespace

EstimandScenario iv_scenario_on(const DiscreteDistribution& law, IvWeighting weighting) {
  if (weighting == IvWeighting::gls) {
    throw InvalidInput("GLS weighting needs the known scale function of a generated IV law");
  }
  if (law.dim() != 3) throw InvalidInput("IV data needs columns w, y1, y2");
  EstimandScenario s("", law);
  s.model = iv_model(IvDgp::canonical(), weighting);
  s.name = s.model->name;
  // Start from the least-squares first stage and the implied ratio.
  const Index n = law.size();
  Matrix w(n, 2);
  w.col(0).setOnes();
  w.col(1) = law.points().col(0);
  const Matrix ww = w.transpose() * law.mass().asDiagonal() * w;
  const Vector gamma = linalg::pinv(ww) * (w.transpose() * law.mass().cwiseProduct(law.points().col(2)));
  const Vector fit = w * gamma;
  const double fit2 = fit.cwiseProduct(fit).dot(law.mass());
  if (!(fit2 > 0.0)) throw IdentificationError("IV data: first stage fit is identically zero");
  Vector nu(3);
  nu << fit.cwiseProduct(law.points().col(1)).dot(law.mass()) / fit2, gamma(0), gamma(1);
  nu = moments::solve_moments(*s.model, law, nu).nu;
  if (weighting != IvWeighting::just) {
    s.xi = linalg::pinv(moment_covariance(*s.model, law, nu));
    moments::SolveOptions opts;
    opts.xi = s.xi;
    nu = moments::solve_moments(*s.model, law, nu, opts).nu;
  }
  s.truth = nu;
  s.model_truth = nu;
  attach_model_maps(s);
  if (s.xi) {
    const MomentModel model = *s.model;
    const Matrix xi = *s.xi;
    s.influence = [model, xi, nu](const DiscreteDistribution& q) {
      moments::SolveOptions opts;
      opts.xi = xi;
      const Vector at = moments::solve_moments(model, q, nu, opts).nu;
      return gmm_influence_general(model, q, at, xi);
    };
  }
  return s;
}

namespace {

DiscreteDistribution first_step_law() {
  Matrix pts(4, 3);
  pts << 0.0, 1.0, 0.5,  //
      2.0, 0.0, 1.5,     //
      1.0, 3.0, -1.0,    //
      1.4, 0.2, 2.0;
  Vector mass(4);
  mass << 0.2, 0.3, 0.25, 0.25;
  // Shift z2 so both instruments share the mean of z1.
  const double gap = pts.col(0).dot(mass) - pts.col(1).dot(mass);
  pts.col(1).array() += gap;
  return DiscreteDistribution(pts, mass, dist::VariableBlocks({1, 1, 1}, {"z1", "z2", "h"}));
}

double weighted_cov(const Vector& a, const Vector& b, const Vector& w) {
  const double ma = a.dot(w);
  const double mb = b.dot(w);
  return ((a.array() - ma) * (b.array() - mb) * w.array()).sum();
}

EstimandScenario build_first_step(FirstStepShape shape, double c_shift, const std::string& name) {
  const DiscreteDistribution law = first_step_law();
  const Vector z1 = law.points().col(0);
  const Vector z2 = law.points().col(1);
  const Vector h = law.points().col(2);
  const Vector& w = law.mass();

  double c = 0.0;
  if (shape == FirstStepShape::rank_overidentified) {
    Matrix vgg(2, 2);
    vgg << weighted_cov(z1, z1, w), weighted_cov(z1, z2, w), weighted_cov(z1, z2, w),
        weighted_cov(z2, z2, w);
    Eigen::RowVector2d vbg(weighted_cov(h, z1, w), weighted_cov(h, z2, w));
    c = -(vbg * vgg.inverse() * Vector::Ones(2))(0);
  } else {
    c = -weighted_cov(h, z1, w) / weighted_cov(z1, z1, w);
  }
  c += c_shift;

  MomentModel m;
  m.name = name;
  m.partition = moments::ParamPartition(1, {{"gamma", 1, 0}});
  m.rows_beta = 1;
  m.m_beta = [c](const Vector& z, const Vector& beta, const Vector& gamma) {
    return one(z(2) - beta(0) + c * gamma(0));
  };
  switch (shape) {
    case FirstStepShape::direct:
      m.rows_gamma = 1;
      m.gamma_direct = true;
      m.m_gamma = [](const Vector& z, const Vector&, const Vector& gamma) {
        return one(z(0) - gamma(0));
      };
      break;
    case FirstStepShape::duplicated:
      m.rows_gamma = 2;
      m.m_gamma = [](const Vector& z, const Vector&, const Vector& gamma) {
        return Vector::Constant(2, z(0) - gamma(0));
      };
      break;
    case FirstStepShape::rank_overidentified:
      m.rows_gamma = 2;
      m.m_gamma = [](const Vector& z, const Vector&, const Vector& gamma) {
        Vector v(2);
        v << z(0) - gamma(0), z(1) - gamma(0);
        return v;
      };
      break;
  }
  const Index rows = m.rows();
  m.jacobian = [c, rows](const Vector&, const Vector&, const Vector&) {
    Matrix j = Matrix::Zero(rows, 2);
    j(0, 0) = -1.0;
    j(0, 1) = c;
    j.block(1, 1, rows - 1, 1).setConstant(-1.0);
    return j;
  };

  EstimandScenario s(name, law);
  s.model = m;
  const double gamma = z1.dot(w);
  Vector nu(2);
  nu << h.dot(w) + c * gamma, gamma;
  s.truth = nu;
  s.model_truth = nu;
  if (shape != FirstStepShape::direct) s.xi = linalg::pinv(moment_covariance(m, law, nu));
  attach_model_maps(s);
  return s;
}

}  // namespace

EstimandScenario first_step_fixture(FirstStepShape shape) {
  switch (shape) {
    case FirstStepShape::direct:
      return build_first_step(shape, 0.0, "first-step-direct");
    case FirstStepShape::duplicated:
      return build_first_step(shape, 0.0, "first-step-duplicated");
    case FirstStepShape::rank_overidentified:
      break;
  }
  return build_first_step(shape, 0.0, "first-step-rank");
}

EstimandScenario one_step_counterexample() {
  return build_first_step(FirstStepShape::direct, 1.0, "one-step-counterexample");
}

EstimandScenario propensity_score_fixture() {
  const AteDgp dgp = AteDgp::canonical();
  const DiscreteDistribution law = dgp.law().marginal(0, 2);
  const auto cells = static_cast<Index>(dgp.x_support.size());
  auto cell = [dgp](const Vector& z) {
    const Index k = dgp.cell_of(z(0));
    if (k < 0) throw DomainError("propensity fixture: covariate outside the support");
    return k;
  };
  MomentModel m;
  m.name = "propensity";
  m.partition = moments::ParamPartition(cells);
  m.rows_beta = cells;
  m.m_beta = [cell, cells](const Vector& z, const Vector& pi, const Vector&) {
    Vector v = Vector::Zero(cells);
    const Index k = cell(z);
    v(k) = pi(k) - z(1);
    return v;
  };
  m.jacobian = [cell, cells](const Vector& z, const Vector&, const Vector&) {
    Matrix j = Matrix::Zero(cells, cells);
    j(cell(z), cell(z)) = 1.0;
    return j;
  };
  EstimandScenario s("propensity", law);
  s.model = m;
  Vector pi(cells);
  for (Index k = 0; k < cells; ++k) pi(k) = dgp.propensity[static_cast<size_t>(k)];
  s.truth = pi;
  s.model_truth = pi;
  s.score = moments::ScoreModel{[cell, cells](const Vector& z, const Vector& p) {
    Vector v = Vector::Zero(cells);
    const Index k = cell(z);
    v(k) = (z(1) - p(k)) / (p(k) * (1.0 - p(k)));
    return v;
  }};
  attach_model_maps(s);
  return s;
}

EstimandScenario tilted_mean_fixture() {
  Matrix pts(3, 1);
  pts << 0.0, 1.0, 3.0;
  Vector mass(3);
  mass << 0.5, 0.3, 0.2;
  EstimandScenario s = mean_scenario(DiscreteDistribution(pts, mass, dist::VariableBlocks::single(1, "z")));
  s.name = "tilted-mean";
  const Vector z = pts.col(0);
  const Vector t = z.array().square();
  const double t_mean = t.dot(mass);
  const double cov = weighted_cov(z, t, mass);
  s.score = moments::ScoreModel{[t_mean, cov](const Vector& x, const Vector&) {
    return one((x(0) * x(0) - t_mean) / cov);
  }};
  return s;
}

NwScenario nw_scenario(std::uint64_t seed, Index n, double bandwidth) {
  if (n < 2) throw InvalidInput("nw scenario needs at least two observations");
  dist::Rng rng(seed);
  Matrix obs(n, 2);
  for (Index i = 0; i < n; ++i) {
    obs(i, 0) = 3.0 * rng.normal();
    obs(i, 1) = 1.0 + rng.normal();
  }
  const dist::KernelSpec spec(dist::KernelFamily::gaussian, bandwidth, 1);
  const double density_at_zero = 1.0 / (3.0 * std::sqrt(2.0 * M_PI));
  return NwScenario{dist::EmpiricalSample(obs, dist::VariableBlocks({1, 1}, {"x", "y"})), spec,
                    Vector::Zero(1), kernel_square_integral(spec) / density_at_zero};
}

std::vector<std::string> scenario_names() {
  return {"mean",     "quantile",        "avg-density", "ate-ipw", "ate-nipw", "ate-reg",
          "ate-aipw", "iv-unconditional", "iv-gls",      "iv-just", "nw"};
}

std::vector<std::string> fixture_names() {
  return {"first-step-direct", "first-step-duplicated", "first-step-rank",
          "one-step-counterexample", "propensity", "tilted-mean"};
}

EstimandScenario make_scenario(const std::string& name, const ScenarioOptions& options) {
  if (name == "first-step-direct") return first_step_fixture(FirstStepShape::direct);
  if (name == "first-step-duplicated") return first_step_fixture(FirstStepShape::duplicated);
  if (name == "first-step-rank") return first_step_fixture(FirstStepShape::rank_overidentified);
  if (name == "one-step-counterexample") return one_step_counterexample();
  if (name == "propensity") return propensity_score_fixture();
  if (name == "tilted-mean") return tilted_mean_fixture();
  if (name.rfind("ate-", 0) == 0) return ate_scenario(AteDgp::canonical(), name);
  if (name == "mean") {
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 3.0;
    Vector mass(3);
    mass << 0.5, 0.3, 0.2;
    return mean_scenario(DiscreteDistribution(pts, mass, dist::VariableBlocks::single(1, "z")));
  }
  if (name == "quantile") return quantile_scenario(options.q, normal_grid(), 0.05);
  if (name == "avg-density") {
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 2.0;
    Vector mass(3);
    mass << 0.5, 0.3, 0.2;
    return avg_density_scenario(DiscreteDistribution(pts, mass, dist::VariableBlocks::single(1, "z")),
                                1.0);
  }
  if (name == "iv-unconditional") return iv_scenario(IvDgp::canonical(), IvWeighting::unconditional);
  if (name == "iv-gls") return iv_scenario(IvDgp::canonical(), IvWeighting::gls);
  if (name == "iv-just") return iv_scenario(IvDgp::canonical(), IvWeighting::just);
  if (name == "nw") {
    throw InvalidInput("scenario 'nw' is sample based; use the kernel-regression entry point");
  }
  throw InvalidInput("unknown scenario '" + name + "'");
}

}  // namespace ifcalc::estimands
