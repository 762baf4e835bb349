#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ifcalc/distributions.hpp"
#include "ifcalc/linalg.hpp"

namespace ifcalc::moments {

using dist::DiscreteDistribution;
using dist::VariableBlocks;
using dist::WeightedPoints;

// One named nuisance component. `level` is the number of leading Z blocks
// its value depends on; level 0 is an unconditional constant.
struct NuisanceSlot {
  std::string label;
  Index dim = 1;
  Index level = 0;
};

class ParamPartition {
 public:
  // d_gamma is the summed slot dimension and may be zero.
  ParamPartition(Index d_beta, std::vector<NuisanceSlot> layout = {});

  [[nodiscard]] Index d_beta() const { return d_beta_; }
  [[nodiscard]] Index d_gamma() const { return d_gamma_; }
  [[nodiscard]] Index d_nu() const { return d_beta_ + d_gamma_; }
  [[nodiscard]] const std::vector<NuisanceSlot>& layout() const { return layout_; }
  // Position of slot k inside gamma.
  [[nodiscard]] Index slot_offset(Index k) const;

  // Throws InvalidInput when a slot level exceeds the block count.
  void validate_against(const VariableBlocks& blocks) const;

  [[nodiscard]] Vector join(const Vector& beta, const Vector& gamma) const;
  [[nodiscard]] Vector beta_of(const Vector& nu) const { return nu.head(d_beta_); }
  [[nodiscard]] Vector gamma_of(const Vector& nu) const { return nu.tail(d_gamma_); }

 private:
  Index d_beta_;
  Index d_gamma_ = 0;
  std::vector<NuisanceSlot> layout_;
};

enum class Differentiability { classical, generalized };

using MomentFn = std::function<Vector(const Vector& z, const Vector& beta, const Vector& gamma)>;
// Derivative of the stacked (m_beta; m_gamma) with respect to (beta; gamma).
using MomentJacobianFn =
    std::function<Matrix(const Vector& z, const Vector& beta, const Vector& gamma)>;

struct MomentModel {
  std::string name;
  ParamPartition partition{1};
  Index rows_beta = 0;
  Index rows_gamma = 0;
  MomentFn m_beta;
  MomentFn m_gamma;  // unused when rows_gamma == 0
  std::optional<MomentJacobianFn> jacobian;
  // Per stacked row; empty means every row is classical. Generalized rows
  // are differentiated through nu -> P[m(., nu)] only.
  std::vector<Differentiability> differentiability;
  // Declares m_gamma = h_gamma(z) - gamma.
  bool gamma_direct = false;

  [[nodiscard]] Index rows() const { return rows_beta + rows_gamma; }
  [[nodiscard]] bool any_generalized() const;
  // Throws InvalidInput on missing functions or dimension violations.
  void validate() const;
  [[nodiscard]] Vector evaluate(const Vector& z, const Vector& nu) const;
};

// Central-difference step for coordinate value x.
double fd_step(double x);

// One row per point, one column per stacked moment row.
Matrix moment_values(const MomentModel& model, const WeightedPoints& law, const Vector& nu);
Vector mean_moment(const MomentModel& model, const WeightedPoints& law, const Vector& nu);

// Derivative of the stacked moment at a single point (analytic when
// available, else central differences).
Matrix pointwise_jacobian(const MomentModel& model, const Vector& z, const Vector& nu);

// <d m / d nu> = P[dm/dnu]. Generalized rows use differences of P[m].
Matrix mean_jacobian(const MomentModel& model, const WeightedPoints& law, const Vector& nu);

struct JacobianBlocks {
  Matrix beta_beta;    // <d m_beta / d beta>
  Matrix beta_gamma;   // <d m_beta / d gamma>
  Matrix gamma_beta;   // <d m_gamma / d beta>
  Matrix gamma_gamma;  // <d m_gamma / d gamma>
};

// Throws IdentificationError when rank <d m_beta / d beta> < d_beta.
JacobianBlocks jacobian_blocks(const MomentModel& model, const WeightedPoints& law,
                               const Vector& nu);
// Centered covariance blocks only. Throws IdentificationError when
// rank V < d_nu.
linalg::BlockSystem covariance_blocks(const MomentModel& model, const WeightedPoints& law,
                                      const Vector& nu);
// Both parts together, with optional weighting blocks left unset.
linalg::BlockSystem block_system(const MomentModel& model, const WeightedPoints& law,
                                 const Vector& nu);

struct SolveOptions {
  std::optional<Matrix> xi;  // identity when absent
  int max_iterations = 200;
  double foc_tol = 1e-10;
};

struct SolveResult {
  Vector nu;
  double foc_norm = 0.0;
  int iterations = 0;
  bool bisection = false;
};

// Damped Gauss-Newton on <dm>' Xi P[m(nu)] = 0. A scalar model with a
// generalized row is solved by bisection instead, returning the smallest
// root of the sign change (the boundary point where P[m] turns >= 0).
SolveResult solve_moments(const MomentModel& model, const WeightedPoints& law, const Vector& init,
                          const SolveOptions& options = {});

struct ScoreModel {
  std::function<Vector(const Vector& z, const Vector& nu)> score;  // length d_nu
};

// max |<dm/dnu> + <m, score'>|.
double score_identity_residual(const MomentModel& model, const ScoreModel& score,
                               const WeightedPoints& law, const Vector& nu);

// ---- direct identification through a nuisance graph ----

using NuisanceInputs = std::vector<Vector>;
using NuisanceFn = std::function<Vector(const Vector& z, const NuisanceInputs& inputs)>;
// One derivative matrix per input (or per nuisance for the target).
using NuisanceGradFn =
    std::function<std::vector<Matrix>(const Vector& z, const NuisanceInputs& inputs)>;

// gamma_n(z) = E[h(Z, inputs) | first `level` blocks], with the inputs
// evaluated at Z. Inputs must appear earlier in the node list.
struct NuisanceSpec {
  std::string label;
  Index dim = 1;
  Index level = 0;
  std::vector<Index> inputs;
  NuisanceFn h;
  std::optional<NuisanceGradFn> grad;
};

// beta = outer(P[target(Z, gamma_1(Z), ..., gamma_K(Z))]); outer defaults to
// the identity.
struct DirectIdentification {
  std::string name;
  Index target_dim = 1;
  std::vector<NuisanceSpec> nuisances;
  NuisanceFn target;
  std::optional<NuisanceGradFn> target_grad;
  std::optional<std::function<Vector(const Vector&)>> outer;
  std::optional<std::function<Matrix(const Vector&)>> outer_jacobian;

  void validate(const VariableBlocks& blocks) const;
  [[nodiscard]] Index d_beta() const;
};

struct DirectEvaluation {
  std::vector<Matrix> nuisance_values;  // per node: points x dim
  Matrix target_values;                 // points x target_dim
  Vector target_mean;
  Vector beta;
};

// Exact plug-in evaluation on a discrete law. Throws DependencyError when a
// node has no identifying function.
DirectEvaluation evaluate_direct(const DirectIdentification& ident, const WeightedPoints& law);
Vector direct_functional(const DirectIdentification& ident, const WeightedPoints& law);

// Inputs of node n at point i.
NuisanceInputs gather_inputs(const NuisanceSpec& node, const std::vector<Matrix>& values,
                             Index point);
NuisanceInputs gather_all(const std::vector<Matrix>& values, Index point);

// Derivatives of f(z, inputs) with respect to every input (analytic when
// `grad` is given, else central differences).
std::vector<Matrix> input_gradients(const NuisanceFn& f, const std::optional<NuisanceGradFn>& grad,
                                    const Vector& z, const NuisanceInputs& inputs);

Matrix outer_jacobian(const DirectIdentification& ident, const Vector& target_mean);

// Largest disagreement between central differences of the target at two
// step sizes, relative to max(1, |derivative|). Small values indicate a
// continuously differentiable target in each nuisance.
double smoothness_probe(const DirectIdentification& ident, const WeightedPoints& law);

}  // namespace ifcalc::moments
