#include "ifcalc/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ifcalc/errors.hpp"
#include "ifcalc/influence_table.hpp"

namespace ifcalc::moments {

ParamPartition::ParamPartition(Index d_beta, std::vector<NuisanceSlot> layout)
    : d_beta_(d_beta), layout_(std::move(layout)) {
  if (d_beta_ < 1) throw InvalidInput("ParamPartition: d_beta must be positive");
  for (const auto& slot : layout_) {
    if (slot.dim < 1) throw InvalidInput("ParamPartition: slot '" + slot.label + "' has dim < 1");
    if (slot.level < 0) throw InvalidInput("ParamPartition: negative level");
    d_gamma_ += slot.dim;
  }
}

Index ParamPartition::slot_offset(Index k) const {
  if (k < 0 || k > static_cast<Index>(layout_.size())) {
    throw InvalidInput("ParamPartition: slot out of range");
  }
  Index off = 0;
  for (Index j = 0; j < k; ++j) off += layout_[static_cast<size_t>(j)].dim;
  return off;
}

void ParamPartition::validate_against(const VariableBlocks& blocks) const {
  for (const auto& slot : layout_) {
    if (slot.level > blocks.count()) {
      throw InvalidInput("ParamPartition: slot '" + slot.label + "' level " +
                         std::to_string(slot.level) + " exceeds " +
                         std::to_string(blocks.count()) + " blocks");
    }
  }
}

Vector ParamPartition::join(const Vector& beta, const Vector& gamma) const {
  if (beta.size() != d_beta_ || gamma.size() != d_gamma_) {
    throw InvalidInput("ParamPartition::join: wrong lengths");
  }
  Vector nu(d_nu());
  nu << beta, gamma;
  return nu;
}

bool MomentModel::any_generalized() const {
  return std::any_of(differentiability.begin(), differentiability.end(),
                     [](Differentiability d) { return d == Differentiability::generalized; });
}

void MomentModel::validate() const {
  if (!m_beta) throw InvalidInput("MomentModel '" + name + "': missing m_beta");
  if (rows_gamma > 0 && !m_gamma) throw InvalidInput("MomentModel '" + name + "': missing m_gamma");
  if (rows_beta < partition.d_beta()) {
    throw InvalidInput("MomentModel '" + name + "': fewer beta moments than beta parameters");
  }
  if (rows_gamma < partition.d_gamma()) {
    throw InvalidInput("MomentModel '" + name + "': fewer gamma moments than gamma parameters");
  }
  if (!differentiability.empty() && static_cast<Index>(differentiability.size()) != rows()) {
    throw InvalidInput("MomentModel '" + name + "': differentiability flags per row mismatch");
  }
}

Vector MomentModel::evaluate(const Vector& z, const Vector& nu) const {
  const Vector beta = partition.beta_of(nu);
  const Vector gamma = partition.gamma_of(nu);
  Vector out(rows());
  const Vector mb = m_beta(z, beta, gamma);
  if (mb.size() != rows_beta) {
    throw InvalidInput("MomentModel '" + name + "': m_beta returned " +
                       std::to_string(mb.size()) + " rows");
  }
  out.head(rows_beta) = mb;
  if (rows_gamma > 0) {
    const Vector mg = m_gamma(z, beta, gamma);
    if (mg.size() != rows_gamma) {
      throw InvalidInput("MomentModel '" + name + "': m_gamma returned " +
                         std::to_string(mg.size()) + " rows");
    }
    out.tail(rows_gamma) = mg;
  }
  return out;
}

double fd_step(double x) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(x));
}

Matrix moment_values(const MomentModel& model, const WeightedPoints& law, const Vector& nu) {
  Matrix out(law.size(), model.rows());
  for (Index i = 0; i < law.size(); ++i) {
    const Vector m = model.evaluate(law.point(i), nu);
    if (!m.allFinite()) {
      throw DomainError("moment '" + model.name + "' is not finite at support point " +
                        std::to_string(i));
    }
    out.row(i) = m.transpose();
  }
  return out;
}

Vector mean_moment(const MomentModel& model, const WeightedPoints& law, const Vector& nu) {
  return moment_values(model, law, nu).transpose() * law.weights();
}

Matrix pointwise_jacobian(const MomentModel& model, const Vector& z, const Vector& nu) {
  const auto& part = model.partition;
  if (model.jacobian) {
    Matrix j = (*model.jacobian)(z, part.beta_of(nu), part.gamma_of(nu));
    if (j.rows() != model.rows() || j.cols() != part.d_nu()) {
      throw InvalidInput("MomentModel '" + model.name + "': analytic Jacobian has wrong shape");
    }
    return j;
  }
  Matrix j(model.rows(), part.d_nu());
  for (Index c = 0; c < part.d_nu(); ++c) {
    const double h = fd_step(nu(c));
    Vector up = nu;
    Vector dn = nu;
    up(c) += h;
    dn(c) -= h;
    j.col(c) = (model.evaluate(z, up) - model.evaluate(z, dn)) / (up(c) - dn(c));
  }
  return j;
}

Matrix mean_jacobian(const MomentModel& model, const WeightedPoints& law, const Vector& nu) {
  const auto& part = model.partition;
  Matrix g = Matrix::Zero(model.rows(), part.d_nu());
  if (model.jacobian || !model.any_generalized()) {
    for (Index i = 0; i < law.size(); ++i) {
      g += law.weights()(i) * pointwise_jacobian(model, law.point(i), nu);
    }
  }
  if (!model.jacobian && model.any_generalized()) {
    // Differentiate nu -> P[m(., nu)]; identical to the pointwise rule for
    // classical rows, and the only meaningful rule for generalized ones.
    for (Index c = 0; c < part.d_nu(); ++c) {
      const double h = fd_step(nu(c));
      Vector up = nu;
      Vector dn = nu;
      up(c) += h;
      dn(c) -= h;
      g.col(c) = (mean_moment(model, law, up) - mean_moment(model, law, dn)) / (up(c) - dn(c));
    }
  }
  linalg::require_finite(g, "moment Jacobian");
  return g;
}

JacobianBlocks jacobian_blocks(const MomentModel& model, const WeightedPoints& law,
                               const Vector& nu) {
  model.validate();
  const Matrix g = mean_jacobian(model, law, nu);
  const Index rb = model.rows_beta;
  const Index rg = model.rows_gamma;
  const Index db = model.partition.d_beta();
  const Index dg = model.partition.d_gamma();
  JacobianBlocks out{g.topLeftCorner(rb, db), g.topRightCorner(rb, dg),
                     g.bottomLeftCorner(rg, db), g.bottomRightCorner(rg, dg)};
  const Index rank = linalg::numerical_rank(out.beta_beta);
  if (rank < db) {
    throw IdentificationError("model '" + model.name + "': rank <d m_beta / d beta> = " +
                              std::to_string(rank) + " < d_beta = " + std::to_string(db));
  }
  return out;
}

linalg::BlockSystem covariance_blocks(const MomentModel& model, const WeightedPoints& law,
                                      const Vector& nu) {
  model.validate();
  const Matrix values = moment_values(model, law, nu);
  const Vector mean = values.transpose() * law.weights();
  const Matrix centered = values.rowwise() - mean.transpose();
  Matrix v = cross_moment(centered, centered, law.weights());
  v = 0.5 * (v + v.transpose());
  const Index rank = linalg::numerical_rank(v);
  if (rank < model.partition.d_nu()) {
    throw IdentificationError("model '" + model.name + "': rank V = " + std::to_string(rank) +
                              " < d_nu = " + std::to_string(model.partition.d_nu()));
  }
  const Index rb = model.rows_beta;
  const Index rg = model.rows_gamma;
  auto sys = linalg::BlockSystem::from_covariance(
      v.topLeftCorner(rb, rb), v.topRightCorner(rb, rg), v.bottomRightCorner(rg, rg));
  sys.d_beta = model.partition.d_beta();
  sys.d_gamma = model.partition.d_gamma();
  return sys;
}

linalg::BlockSystem block_system(const MomentModel& model, const WeightedPoints& law,
                                 const Vector& nu) {
  linalg::BlockSystem sys = covariance_blocks(model, law, nu);
  JacobianBlocks j = jacobian_blocks(model, law, nu);
  sys.dm_beta_dbeta = std::move(j.beta_beta);
  sys.dm_beta_dgamma = std::move(j.beta_gamma);
  sys.dm_gamma_dbeta = std::move(j.gamma_beta);
  sys.dm_gamma_dgamma = std::move(j.gamma_gamma);
  sys.validate();
  return sys;
}

namespace {

SolveResult bisect_scalar(const MomentModel& model, const WeightedPoints& law, double init,
                          const SolveOptions& options) {
  auto f = [&](double x) { return mean_moment(model, law, Vector::Constant(1, x))(0); };
  double a = init;
  double fa = f(a);
  double step = 0.1 * std::max(1.0, std::abs(init));
  double b = a;
  double fb = fa;
  int expansions = 0;
  // Walk outward in both directions until the sign of P[m] changes.
  while ((fa >= 0.0) == (fb >= 0.0)) {
    if (++expansions > 200) {
      throw SolverError("model '" + model.name + "': no sign change of P[m] near " +
                        std::to_string(init));
    }
    a -= step;
    b += step;
    step *= 2.0;
    const double fa_new = f(a);
    const double fb_new = f(b);
    if ((fa_new >= 0.0) != (fa >= 0.0)) {
      b = a + step / 2.0;
      fb = fa;
      fa = fa_new;
      break;
    }
    if ((fb_new >= 0.0) != (fb >= 0.0)) {
      a = b - step / 2.0;
      fa = fb;
      fb = fb_new;
      break;
    }
    fa = fa_new;
    fb = fb_new;
  }
  // Invariant: sign(f(a)) != sign(f(b)); keep the ">= 0" end as the answer.
  int it = 0;
  while (std::abs(b - a) > 1e-15 * std::max(1.0, std::abs(a)) && it < 400) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    const double fm = f(mid);
    if ((fm >= 0.0) == (fa >= 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
      fb = fm;
    }
    ++it;
  }
  double root = fa >= 0.0 ? a : b;
  // A jump of P[m] sits at a support value; snap to it when one lies in the
  // final bracket.
  if (law.dim() == 1) {
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    for (Index i = 0; i < law.size(); ++i) {
      const double v = law.points()(i, 0);
      if (v >= lo && v <= hi && f(v) >= 0.0) root = v;
    }
  }
  (void)options;
  SolveResult res;
  res.nu = Vector::Constant(1, root);
  res.foc_norm = std::abs(f(root));
  res.iterations = it;
  res.bisection = true;
  return res;
}

}  // namespace

SolveResult solve_moments(const MomentModel& model, const WeightedPoints& law, const Vector& init,
                          const SolveOptions& options) {
  model.validate();
  const Index d = model.partition.d_nu();
  if (init.size() != d) throw InvalidInput("solve_moments: init has the wrong length");
  if (d == 1 && model.rows() == 1 && model.any_generalized()) {
    return bisect_scalar(model, law, init(0), options);
  }
  Matrix xi = options.xi ? *options.xi : Matrix::Identity(model.rows(), model.rows());
  if (xi.rows() != model.rows() || xi.cols() != model.rows()) {
    throw InvalidInput("solve_moments: weighting matrix has the wrong shape");
  }
  xi = linalg::PsdMatrix(xi).matrix();

  Vector nu = init;
  std::ostringstream trace;
  auto objective = [&](const Vector& point) {
    const Vector g = mean_moment(model, law, point);
    return g.dot(xi * g);
  };
  auto foc_at = [&](const Vector& point) -> Vector {
    return mean_jacobian(model, law, point).transpose() * xi * mean_moment(model, law, point);
  };
  auto foc_jacobian = [&](const Vector& point) {
    Matrix h(d, d);
    for (Index k = 0; k < d; ++k) {
      const double step = fd_step(point(k));
      Vector up = point;
      Vector down = point;
      up(k) += step;
      down(k) -= step;
      h.col(k) = (foc_at(up) - foc_at(down)) / (2.0 * step);
    }
    return h;
  };
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector g = mean_moment(model, law, nu);
    const Matrix jac = mean_jacobian(model, law, nu);
    const Vector foc = jac.transpose() * xi * g;
    const double foc_norm = foc.lpNorm<Eigen::Infinity>();
    trace << " [" << it << "] |foc|=" << foc_norm;
    if (foc_norm <= options.foc_tol) {
      // A couple of extra full steps pushes the root to rounding level
      // before returning; they are kept only when the FOC shrinks.
      double best = foc_norm;
      for (int extra = 0; extra < 2 && best > 0.0; ++extra) {
        const Matrix jn = mean_jacobian(model, law, nu);
        const Vector fn = jn.transpose() * xi * mean_moment(model, law, nu);
        const Vector cand = nu - linalg::pinv(jn.transpose() * xi * jn) * fn;
        const double fc =
            (mean_jacobian(model, law, cand).transpose() * xi * mean_moment(model, law, cand))
                .lpNorm<Eigen::Infinity>();
        if (!(fc < best)) break;
        best = fc;
        nu = cand;
      }
      return SolveResult{nu, best, it, false};
    }
    // Near the root, Newton on the FOC itself. Gauss-Newton drops the
    // curvature term <d2 m>' Xi P[m], which slows it to a linear rate when
    // an over-identified P[m] does not vanish.
    if (foc_norm <= 1e-4) {
      const Vector cand = nu - linalg::pinv(foc_jacobian(nu)) * foc;
      if (foc_at(cand).lpNorm<Eigen::Infinity>() < 0.5 * foc_norm) {
        nu = cand;
        continue;
      }
    }
    const Vector step = -linalg::pinv(jac.transpose() * xi * jac) * foc;
    const double q0 = g.dot(xi * g);
    double t = 1.0;
    Vector next = nu + step;
    while (objective(next) > q0 && t > 1e-8) {
      t *= 0.5;
      next = nu + t * step;
    }
    const double moved = (next - nu).lpNorm<Eigen::Infinity>();
    nu = next;
    // Stationary to rounding: the FOC cannot be pushed lower, so accept
    // once it is also small on the square-root scale.
    if (moved <= 1e-13 * std::max(1.0, nu.lpNorm<Eigen::Infinity>()) &&
        foc_norm <= std::sqrt(options.foc_tol)) {
      return SolveResult{nu, foc_norm, it + 1, false};
    }
    if (moved == 0.0) break;
  }
  const Vector g = mean_moment(model, law, nu);
  const double foc_norm =
      (mean_jacobian(model, law, nu).transpose() * xi * g).lpNorm<Eigen::Infinity>();
  if (foc_norm <= options.foc_tol) return SolveResult{nu, foc_norm, options.max_iterations, false};
  throw SolverError("model '" + model.name + "': no convergence; trace:" + trace.str());
}

double score_identity_residual(const MomentModel& model, const ScoreModel& score,
                               const WeightedPoints& law, const Vector& nu) {
  const Matrix jac = mean_jacobian(model, law, nu);
  const Matrix values = moment_values(model, law, nu);
  Matrix scores(law.size(), model.partition.d_nu());
  for (Index i = 0; i < law.size(); ++i) {
    const Vector s = score.score(law.point(i), nu);
    if (s.size() != model.partition.d_nu()) throw InvalidInput("score has the wrong length");
    scores.row(i) = s.transpose();
  }
  return linalg::max_abs(jac + cross_moment(values, scores, law.weights()));
}

// ---- direct identification ----

void DirectIdentification::validate(const VariableBlocks& blocks) const {
  if (!target) throw InvalidInput("identification '" + name + "': missing target function");
  if (target_dim < 1) throw InvalidInput("identification '" + name + "': target_dim < 1");
  if (outer_jacobian && !outer) {
    throw InvalidInput("identification '" + name + "': outer Jacobian without outer map");
  }
  for (size_t n = 0; n < nuisances.size(); ++n) {
    const auto& node = nuisances[n];
    if (node.dim < 1) throw InvalidInput("nuisance '" + node.label + "': dim < 1");
    if (node.level < 0 || node.level > blocks.count()) {
      throw InvalidInput("nuisance '" + node.label + "': level out of range");
    }
    for (Index in : node.inputs) {
      if (in < 0 || static_cast<size_t>(in) >= n) {
        throw InvalidInput("nuisance '" + node.label + "': inputs must precede the node");
      }
    }
  }
}

Index DirectIdentification::d_beta() const {
  if (!outer) return target_dim;
  return (*outer)(Vector::Ones(target_dim)).size();
}

NuisanceInputs gather_inputs(const NuisanceSpec& node, const std::vector<Matrix>& values,
                             Index point) {
  NuisanceInputs in;
  in.reserve(node.inputs.size());
  for (Index k : node.inputs) in.push_back(values[static_cast<size_t>(k)].row(point).transpose());
  return in;
}

NuisanceInputs gather_all(const std::vector<Matrix>& values, Index point) {
  NuisanceInputs in;
  in.reserve(values.size());
  for (const auto& v : values) in.push_back(v.row(point).transpose());
  return in;
}

DirectEvaluation evaluate_direct(const DirectIdentification& ident, const WeightedPoints& law) {
  ident.validate(law.blocks());
  const dist::BlockFactorization fact(law);
  DirectEvaluation out;
  for (const auto& node : ident.nuisances) {
    if (!node.h) {
      throw DependencyError("nuisance '" + node.label + "' has no identifying function");
    }
    Matrix h(law.size(), node.dim);
    for (Index i = 0; i < law.size(); ++i) {
      const Vector v = node.h(law.point(i), gather_inputs(node, out.nuisance_values, i));
      if (v.size() != node.dim) {
        throw InvalidInput("nuisance '" + node.label + "': identifying function has wrong size");
      }
      if (!v.allFinite()) {
        throw DomainError("nuisance '" + node.label + "' is not finite at point " +
                          std::to_string(i));
      }
      h.row(i) = v.transpose();
    }
    out.nuisance_values.push_back(fact.conditional_mean(h, node.level));
  }
  out.target_values.resize(law.size(), ident.target_dim);
  for (Index i = 0; i < law.size(); ++i) {
    const Vector v = ident.target(law.point(i), gather_all(out.nuisance_values, i));
    if (v.size() != ident.target_dim) {
      throw InvalidInput("identification '" + ident.name + "': target has wrong size");
    }
    if (!v.allFinite()) {
      throw DomainError("identification '" + ident.name + "': target not finite at point " +
                        std::to_string(i));
    }
    out.target_values.row(i) = v.transpose();
  }
  out.target_mean = out.target_values.transpose() * law.weights();
  out.beta = ident.outer ? (*ident.outer)(out.target_mean) : out.target_mean;
  return out;
}

Vector direct_functional(const DirectIdentification& ident, const WeightedPoints& law) {
  return evaluate_direct(ident, law).beta;
}

namespace {

std::vector<Matrix> fd_gradients(const NuisanceFn& f, const Vector& z,
                                 const NuisanceInputs& inputs, double scale) {
  std::vector<Matrix> out;
  const Index rows = f(z, inputs).size();
  for (size_t k = 0; k < inputs.size(); ++k) {
    Matrix d(rows, inputs[k].size());
    for (Index c = 0; c < inputs[k].size(); ++c) {
      const double h = scale * fd_step(inputs[k](c));
      NuisanceInputs up = inputs;
      NuisanceInputs dn = inputs;
      up[k](c) += h;
      dn[k](c) -= h;
      d.col(c) = (f(z, up) - f(z, dn)) / (up[k](c) - dn[k](c));
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<Matrix> input_gradients(const NuisanceFn& f, const std::optional<NuisanceGradFn>& grad,
                                    const Vector& z, const NuisanceInputs& inputs) {
  if (grad) {
    std::vector<Matrix> g = (*grad)(z, inputs);
    if (g.size() != inputs.size()) throw InvalidInput("gradient count differs from input count");
    return g;
  }
  return fd_gradients(f, z, inputs, 1.0);
}

Matrix outer_jacobian(const DirectIdentification& ident, const Vector& target_mean) {
  if (!ident.outer) return Matrix::Identity(ident.target_dim, ident.target_dim);
  if (ident.outer_jacobian) return (*ident.outer_jacobian)(target_mean);
  const Index k = target_mean.size();
  const Index d = (*ident.outer)(target_mean).size();
  Matrix j(d, k);
  for (Index c = 0; c < k; ++c) {
    const double h = fd_step(target_mean(c));
    Vector up = target_mean;
    Vector dn = target_mean;
    up(c) += h;
    dn(c) -= h;
    j.col(c) = ((*ident.outer)(up) - (*ident.outer)(dn)) / (up(c) - dn(c));
  }
  return j;
}

double smoothness_probe(const DirectIdentification& ident, const WeightedPoints& law) {
  const DirectEvaluation ev = evaluate_direct(ident, law);
  double worst = 0.0;
  for (Index i = 0; i < law.size(); ++i) {
    const NuisanceInputs in = gather_all(ev.nuisance_values, i);
    const auto fine = fd_gradients(ident.target, law.point(i), in, 1.0);
    const auto coarse = fd_gradients(ident.target, law.point(i), in, 30.0);
    for (size_t k = 0; k < fine.size(); ++k) {
      const double scale = std::max(1.0, linalg::max_abs(fine[k]));
      worst = std::max(worst, linalg::max_abs(fine[k] - coarse[k]) / scale);
    }
  }
  return worst;
}

}  // namespace ifcalc::moments
