#include "ifcalc/influence.hpp"

#include <cmath>
#include <stdexcept>

#include "ifcalc/errors.hpp"

namespace ifcalc::influence {

namespace {

std::vector<std::string> labels_for(const std::string& stem, Index dim) {
  std::vector<std::string> out;
  for (Index k = 0; k < dim; ++k) out.push_back(dim == 1 ? stem : stem + "_" + std::to_string(k));
  return out;
}

Matrix weight_or_identity(const std::optional<Matrix>& xi, Index rows, const char* what) {
  if (!xi) return Matrix::Identity(rows, rows);
  if (xi->rows() != rows || xi->cols() != rows) {
    throw InvalidInput(std::string(what) + " has the wrong shape");
  }
  return linalg::PsdMatrix(*xi).matrix();
}

// Rows of `values` are flattened row-major so conditional_mean can act on
// matrix-valued per-point quantities.
Matrix flatten(const std::vector<Matrix>& per_point) {
  const Index r = per_point.front().rows();
  const Index c = per_point.front().cols();
  Matrix out(static_cast<Index>(per_point.size()), r * c);
  for (size_t i = 0; i < per_point.size(); ++i) {
    for (Index a = 0; a < r; ++a) {
      for (Index b = 0; b < c; ++b) out(static_cast<Index>(i), a * c + b) = per_point[i](a, b);
    }
  }
  return out;
}

Matrix unflatten_row(const Matrix& flat, Index i, Index r, Index c) {
  Matrix out(r, c);
  for (Index a = 0; a < r; ++a) {
    for (Index b = 0; b < c; ++b) out(a, b) = flat(i, a * c + b);
  }
  return out;
}

}  // namespace

Matrix gmm_normalizer(const Matrix& jac, const Matrix& xi, const std::string& what) {
  const Matrix info = jac.transpose() * xi * jac;
  const Index rank = linalg::numerical_rank(info);
  if (rank < info.rows()) {
    throw PreconditionError(what + ": G' Xi G is singular (rank " + std::to_string(rank) + " < " +
                            std::to_string(info.rows()) + ")");
  }
  return -info.inverse() * jac.transpose() * xi;
}

InfluenceTable if_joint(const MomentModel& model, const WeightedPoints& law, const Vector& nu,
                        const Matrix& xi) {
  model.validate();
  const Matrix w = weight_or_identity(xi, model.rows(), "if_joint weight");
  const Matrix jac = moments::mean_jacobian(model, law, nu);
  const Matrix norm = gmm_normalizer(jac, w, "if_joint");
  const double residual =
      linalg::max_abs(norm * jac + Matrix::Identity(nu.size(), nu.size()));
  if (residual > 1e-6) {
    throw PreconditionError("if_joint: P[d nu_dot / d nu] deviates from -I by " +
                            std::to_string(residual));
  }
  const Matrix values = moments::moment_values(model, law, nu) * norm.transpose();
  std::vector<std::string> labels = labels_for("beta", model.partition.d_beta());
  for (const auto& s : model.partition.layout()) {
    for (const auto& l : labels_for(s.label, s.dim)) labels.push_back(l);
  }
  return InfluenceTable(values, law.weights(), labels);
}

TwoStepInfluence if_two_step(const MomentModel& model, const WeightedPoints& law,
                             const Vector& nu, const std::optional<Matrix>& xi_bb,
                             const std::optional<Matrix>& xi_gg, double structure_tol) {
  model.validate();
  if (model.partition.d_gamma() == 0) {
    throw StructureError("if_two_step: model '" + model.name + "' has no nuisance block");
  }
  const auto j = moments::jacobian_blocks(model, law, nu);
  const double cross = linalg::max_abs(j.gamma_beta);
  if (cross > structure_tol) {
    throw StructureError("if_two_step: <d m_gamma / d beta> has magnitude " +
                         std::to_string(cross) + " > " + std::to_string(structure_tol));
  }
  const Matrix wb = weight_or_identity(xi_bb, model.rows_beta, "xi_bb");
  const Matrix wg = weight_or_identity(xi_gg, model.rows_gamma, "xi_gg");
  const Matrix m = moments::moment_values(model, law, nu);
  const Matrix mb = m.leftCols(model.rows_beta);
  const Matrix mg = m.rightCols(model.rows_gamma);
  const Matrix gamma_dot = mg * gmm_normalizer(j.gamma_gamma, wg, "if_two_step gamma").transpose();
  const Matrix lr = mb + gamma_dot * j.beta_gamma.transpose();
  const Matrix beta_dot = lr * gmm_normalizer(j.beta_beta, wb, "if_two_step beta").transpose();
  std::vector<std::string> glabels;
  for (const auto& s : model.partition.layout()) {
    for (const auto& l : labels_for(s.label, s.dim)) glabels.push_back(l);
  }
  return TwoStepInfluence{InfluenceTable(gamma_dot, law.weights(), glabels),
                          InfluenceTable(beta_dot, law.weights(),
                                         labels_for("beta", model.partition.d_beta()))};
}

MultistepInfluence if_multistep_direct(
    const DirectIdentification& ident, const WeightedPoints& law,
    const std::vector<std::optional<InfluenceTable>>& own_overrides) {
  const auto& nodes = ident.nuisances;
  if (!own_overrides.empty() && own_overrides.size() != nodes.size()) {
    throw InvalidInput("if_multistep_direct: one override slot per nuisance expected");
  }
  const Index n_pts = law.size();
  const dist::BlockFactorization fact(law);
  const Index levels = law.blocks().count();

  // Nuisance values: plug-in when identifiable, else the caller must have
  // supplied an override (and the node cannot be evaluated).
  for (size_t n = 0; n < nodes.size(); ++n) {
    const bool overridden = !own_overrides.empty() && own_overrides[n].has_value();
    if (!nodes[n].h && !overridden) {
      throw DependencyError("nuisance '" + nodes[n].label + "' has no influence table");
    }
  }
  const moments::DirectEvaluation ev = moments::evaluate_direct(ident, law);
  const Index k = ident.target_dim;
  const Matrix outer_j = moments::outer_jacobian(ident, ev.target_mean);
  const Index d_beta = outer_j.rows();

  // Telescoping sum of (E[h | blocks <= j] - E[h | blocks < j]).
  Matrix telescoped = Matrix::Zero(n_pts, k);
  Matrix previous = fact.conditional_mean(ev.target_values, 0);
  for (Index level = 1; level <= levels; ++level) {
    const Matrix current = fact.conditional_mean(ev.target_values, level);
    telescoped += current - previous;
    previous = current;
  }
  const Matrix centered = ev.target_values.rowwise() - ev.target_mean.transpose();
  const double scale = std::max(1.0, linalg::max_abs(centered));
  const double tele_residual = linalg::max_abs(telescoped - centered) / scale;
  if (tele_residual > 1e-12) {
    throw std::logic_error("if_multistep_direct: telescoping self-check failed by " +
                           std::to_string(tele_residual));
  }

  // Own-level influence of each node.
  std::vector<Matrix> own(nodes.size());
  std::vector<InfluenceTable> own_tables;
  for (size_t n = 0; n < nodes.size(); ++n) {
    const auto& node = nodes[n];
    if (!own_overrides.empty() && own_overrides[n]) {
      const InfluenceTable& t = *own_overrides[n];
      if (t.size() != n_pts || t.dimension() != node.dim) {
        throw InvalidInput("override for nuisance '" + node.label + "' has the wrong shape");
      }
      own[n] = t.values();
    } else {
      Matrix h(n_pts, node.dim);
      for (Index i = 0; i < n_pts; ++i) {
        h.row(i) = node.h(law.point(i), moments::gather_inputs(node, ev.nuisance_values, i))
                       .transpose();
      }
      own[n] = h - fact.conditional_mean(h, node.level);
    }
    own_tables.emplace_back(own[n], law.weights(), labels_for(node.label, node.dim));
  }

  // Composite path derivatives, from the last node back to the first:
  // D_n = d target / d gamma_n + sum_{m uses n} E[D_m | prefix_m] d h_m / d gamma_n.
  std::vector<std::vector<Matrix>> composite(nodes.size(),
                                             std::vector<Matrix>(static_cast<size_t>(n_pts)));
  for (Index i = 0; i < n_pts; ++i) {
    const Vector z = law.point(i);
    const auto grads = moments::input_gradients(ident.target, ident.target_grad, z,
                                                moments::gather_all(ev.nuisance_values, i));
    for (size_t n = 0; n < nodes.size(); ++n) composite[n][static_cast<size_t>(i)] = grads[n];
  }
  std::vector<Matrix> cond_flat(nodes.size());
  for (size_t back = nodes.size(); back-- > 0;) {
    const auto& node = nodes[back];
    cond_flat[back] = fact.conditional_mean(flatten(composite[back]), node.level);
    if (node.inputs.empty() || !node.h) continue;
    for (Index i = 0; i < n_pts; ++i) {
      const Vector z = law.point(i);
      const auto in = moments::gather_inputs(node, ev.nuisance_values, i);
      const auto grads = moments::input_gradients(node.h, node.grad, z, in);
      const Matrix c = unflatten_row(cond_flat[back], i, k, node.dim);
      for (size_t q = 0; q < node.inputs.size(); ++q) {
        const auto src = static_cast<size_t>(node.inputs[q]);
        composite[src][static_cast<size_t>(i)] += c * grads[q];
      }
    }
  }

  Matrix total = centered;
  std::vector<Matrix> terms;
  for (size_t n = 0; n < nodes.size(); ++n) {
    Matrix term(n_pts, k);
    for (Index i = 0; i < n_pts; ++i) {
      term.row(i) = (unflatten_row(cond_flat[n], i, k, nodes[n].dim) * own[n].row(i).transpose())
                        .transpose();
    }
    total += term;
    terms.push_back(term * outer_j.transpose());
  }
  const Matrix beta_values = total * outer_j.transpose();
  return MultistepInfluence{
      InfluenceTable(beta_values, law.weights(), labels_for("beta", d_beta)),
      std::move(own_tables), std::move(terms), centered * outer_j.transpose(), tele_residual};
}

std::vector<InfluenceTable> nuisance_ifs_from_moments(const MomentModel& model,
                                                      const WeightedPoints& law, const Vector& nu,
                                                      const std::optional<Matrix>& xi_gg) {
  const TwoStepInfluence two = if_two_step(model, law, nu, std::nullopt, xi_gg);
  std::vector<InfluenceTable> out;
  const auto& layout = model.partition.layout();
  for (size_t s = 0; s < layout.size(); ++s) {
    const Index off = model.partition.slot_offset(static_cast<Index>(s));
    out.emplace_back(two.gamma.values().middleCols(off, layout[s].dim), law.weights(),
                     labels_for(layout[s].label, layout[s].dim));
  }
  return out;
}

InfluenceTable if_multistep_moment(const MomentModel& model, const WeightedPoints& law,
                                   const Vector& nu, const std::vector<InfluenceTable>& gamma_ifs,
                                   const std::optional<Matrix>& xi_bb) {
  model.validate();
  const auto& part = model.partition;
  const auto& layout = part.layout();
  part.validate_against(law.blocks());
  if (gamma_ifs.size() != layout.size()) {
    throw DependencyError("if_multistep_moment: expected " + std::to_string(layout.size()) +
                          " nuisance influence tables, got " + std::to_string(gamma_ifs.size()));
  }
  const Index n_pts = law.size();
  const Index rb = model.rows_beta;
  const Index db = part.d_beta();
  for (size_t s = 0; s < layout.size(); ++s) {
    if (gamma_ifs[s].size() != n_pts || gamma_ifs[s].dimension() != layout[s].dim) {
      throw DependencyError("if_multistep_moment: table for '" + layout[s].label +
                            "' has the wrong shape");
    }
  }
  const Matrix wb = weight_or_identity(xi_bb, rb, "xi_bb");
  const auto j = moments::jacobian_blocks(model, law, nu);
  const Matrix norm = gmm_normalizer(j.beta_beta, wb, "if_multistep_moment");

  std::vector<Matrix> point_jac(static_cast<size_t>(n_pts));
  for (Index i = 0; i < n_pts; ++i) {
    point_jac[static_cast<size_t>(i)] = moments::pointwise_jacobian(model, law.point(i), nu);
  }
  const dist::BlockFactorization fact(law);
  Matrix corrected = moments::moment_values(model, law, nu).leftCols(rb);
  for (size_t s = 0; s < layout.size(); ++s) {
    const Index off = db + part.slot_offset(static_cast<Index>(s));
    const Index dim = layout[s].dim;
    std::vector<Matrix> d(static_cast<size_t>(n_pts));
    for (Index i = 0; i < n_pts; ++i) {
      d[static_cast<size_t>(i)] = point_jac[static_cast<size_t>(i)].block(0, off, rb, dim);
    }
    const Matrix cond = fact.conditional_mean(flatten(d), layout[s].level);
    for (Index i = 0; i < n_pts; ++i) {
      corrected.row(i) +=
          (unflatten_row(cond, i, rb, dim) * gamma_ifs[s].at(i)).transpose();
    }
  }
  return InfluenceTable(corrected * norm.transpose(), law.weights(), labels_for("beta", db));
}

CorrectedMoment make_lr_moment(const MomentModel& model, const WeightedPoints& law,
                               const Vector& nu, const std::optional<Matrix>& xi_gg, double tol) {
  model.validate();
  const auto& part = model.partition;
  if (part.d_gamma() == 0) {
    throw StructureError("make_lr_moment: model '" + model.name + "' has no nuisance block");
  }
  const auto j = moments::jacobian_blocks(model, law, nu);
  const Matrix wg = weight_or_identity(xi_gg, model.rows_gamma, "xi_gg");
  const Matrix psi = gmm_normalizer(j.gamma_gamma, wg, "make_lr_moment");
  const Matrix adjust = j.beta_gamma * psi;  // rows_beta x rows_gamma
  const moments::MomentFn mb = model.m_beta;
  const moments::MomentFn mg = model.m_gamma;
  CorrectedMoment out;
  out.kind = CorrectionKind::locally_robust;
  out.rows = model.rows_beta;
  out.values = [mb, mg, adjust](const Vector& z, const Vector& beta, const Vector& gamma) {
    return Vector(mb(z, beta, gamma) + adjust * mg(z, beta, gamma));
  };
  out.provenance["dm_beta_dgamma"] = j.beta_gamma;
  out.provenance["dm_gamma_dgamma"] = j.gamma_gamma;
  out.provenance["xi_gamma"] = wg;
  out.provenance["adjustment"] = adjust;

  // <d m^LR / d gamma> by central differences of P[m^LR].
  const Vector beta = part.beta_of(nu);
  const Vector gamma = part.gamma_of(nu);
  auto mean_lr = [&](const Vector& g) {
    Vector acc = Vector::Zero(out.rows);
    for (Index i = 0; i < law.size(); ++i) acc += law.weights()(i) * out.values(law.point(i), beta, g);
    return acc;
  };
  Matrix deriv(out.rows, part.d_gamma());
  for (Index c = 0; c < part.d_gamma(); ++c) {
    const double h = moments::fd_step(gamma(c));
    Vector up = gamma;
    Vector dn = gamma;
    up(c) += h;
    dn(c) -= h;
    deriv.col(c) = (mean_lr(up) - mean_lr(dn)) / (up(c) - dn(c));
  }
  out.certificate = linalg::max_abs(deriv);
  const double scale = std::max(1.0, linalg::max_abs(j.beta_gamma));
  if (out.certificate > tol * scale) {
    throw ConstructionError("make_lr_moment: <d m^LR / d gamma> has norm " +
                            std::to_string(out.certificate));
  }
  return out;
}

CorrectedMoment make_eff_moment(const linalg::BlockSystem& sys, const MomentModel& model,
                                double tol) {
  sys.validate();
  if (sys.rows_beta() != model.rows_beta || sys.rows_gamma() != model.rows_gamma) {
    throw InvalidInput("make_eff_moment: block system does not match the model");
  }
  const Matrix vgg_pinv = linalg::pinv(sys.v_gg.matrix());
  const Matrix proj = sys.v_bg * vgg_pinv;
  const moments::MomentFn mb = model.m_beta;
  const moments::MomentFn mg = model.m_gamma;
  CorrectedMoment out;
  out.kind = CorrectionKind::efficient;
  out.rows = model.rows_beta;
  if (model.rows_gamma == 0) {
    out.values = mb;
  } else {
    out.values = [mb, mg, proj](const Vector& z, const Vector& beta, const Vector& gamma) {
      return Vector(mb(z, beta, gamma) - proj * mg(z, beta, gamma));
    };
  }
  out.provenance["v_bg"] = sys.v_bg;
  out.provenance["v_gg_pinv"] = vgg_pinv;
  out.provenance["projection"] = proj;
  const Matrix cross = sys.v_bg - proj * sys.v_gg.matrix();
  const Matrix own = sys.v_bb.matrix() - proj * sys.v_bg.transpose() -
                     sys.v_bg * proj.transpose() + proj * sys.v_gg.matrix() * proj.transpose();
  const Matrix schur = linalg::schur_complement(sys).matrix();
  out.certificate = std::max(linalg::max_abs(cross), linalg::max_abs(own - schur));
  const double scale = std::max(1.0, linalg::max_abs(sys.assembled_v()));
  if (out.certificate > tol * scale) {
    throw ConstructionError("make_eff_moment: efficient moment is correlated with m_gamma (" +
                            std::to_string(out.certificate) + ")");
  }
  return out;
}

MomentModel with_beta_moment(const MomentModel& model, const CorrectedMoment& corrected) {
  if (corrected.rows != model.rows_beta) {
    throw InvalidInput("with_beta_moment: row count mismatch");
  }
  MomentModel out = model;
  out.name = model.name + (corrected.kind == CorrectionKind::locally_robust ? "+lr" : "+eff");
  out.m_beta = corrected.values;
  out.jacobian.reset();
  return out;
}

Matrix corrected_values(const CorrectedMoment& corrected, const MomentModel& model,
                        const WeightedPoints& law, const Vector& nu) {
  const Vector beta = model.partition.beta_of(nu);
  const Vector gamma = model.partition.gamma_of(nu);
  Matrix out(law.size(), corrected.rows);
  for (Index i = 0; i < law.size(); ++i) {
    out.row(i) = corrected.values(law.point(i), beta, gamma).transpose();
  }
  return out;
}

NonparametricInfluence if_nonparametric(const dist::KernelSpec& spec, const WeightedPoints& sample,
                                        NonparametricTarget target, const Vector& point) {
  const Index n = sample.size();
  const auto& blocks = sample.blocks();
  Index x_dim = sample.dim();
  if (target == NonparametricTarget::regression) {
    const Index last = blocks.count() - 1;
    if (blocks.dim(last) != 1 || blocks.count() < 2) {
      throw StructureError("if_nonparametric: regression needs a scalar last block");
    }
    x_dim = blocks.offset(last);
  }
  if (point.size() != x_dim || spec.dimension() != x_dim) {
    throw InvalidInput("if_nonparametric: query point or kernel dimension mismatch");
  }
  Vector k(n);
  for (Index i = 0; i < n; ++i) {
    k(i) = dist::kernel_weight(spec, point, sample.points().row(i).head(x_dim).transpose());
  }
  const Vector& w = sample.weights();
  const double pk = w.dot(k);
  if (!(pk > 0.0)) throw SupportError("if_nonparametric: no kernel mass at the query point");
  NonparametricInfluence out{InfluenceTable(Matrix::Zero(n, 1), w), 0.0, 0.0, pk};
  Vector values(n);
  if (target == NonparametricTarget::density) {
    out.estimate = pk;
    values = k.array() - pk;
  } else {
    const Vector y = sample.points().col(sample.dim() - 1);
    const double gamma_b = w.dot(k.cwiseProduct(y)) / pk;
    out.estimate = gamma_b;
    values = (k / pk).cwiseProduct((y.array() - gamma_b).matrix());
  }
  const double b_d = std::pow(spec.bandwidth(), static_cast<double>(x_dim));
  out.rescaled_variance = b_d * w.dot(values.cwiseAbs2());
  out.table = InfluenceTable(values, w, {target == NonparametricTarget::density ? "density"
                                                                                 : "regression"});
  return out;
}

}  // namespace ifcalc::influence
