#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "halp/model.hpp"

namespace halp {

/// Table factor over a small discrete state scope. An empty scope is a
/// single constant (the constant basis is values = {1}).
struct DiscreteFactor {
  std::vector<std::string> scope;
  std::vector<double> values;  // row-major, first scope variable most significant

  std::vector<VarId> ids;
  std::vector<int> sizes;

  double eval(std::span<const double> point) const;
  double max_abs() const;
};

/// Product of per-variable monomials x^degree over continuous state
/// variables. An empty map is the constant 1.
struct MonomialFactor {
  std::vector<std::string> vars;
  std::vector<int> degrees;
  std::vector<VarId> ids;

  double eval(std::span<const double> point) const;
};

/// Product of per-variable 1-D piecewise-linear factors.
struct PwlProductFactor {
  std::vector<PwlTerm> parts;  // var_pos unused; `ids` below is aligned with parts
  std::vector<VarId> ids;

  double eval(std::span<const double> point) const;
};

enum class ContFactorKind { monomial, piecewise_linear };

/// Factored basis function: product of a discrete table factor and a
/// continuous factor, both over small state scopes.
struct BasisFunction {
  std::string name;
  DiscreteFactor discrete;
  ContFactorKind kind = ContFactorKind::monomial;
  MonomialFactor monomial;
  PwlProductFactor pwl;

  double eval(std::span<const double> point) const;
  /// State variables the basis actually depends on (degree-0 monomials are
  /// dropped at bind time).
  std::vector<VarId> state_scope() const;

  static BasisFunction constant(double value = 1.0);
};

/// Resolves names against the model and validates scopes (state variables
/// only, kinds matching the factor type). Returns violations.
std::vector<std::string> bind_basis(const HybridModel& model, BasisFunction& f);
std::vector<std::string> bind_basis_set(const HybridModel& model, std::vector<BasisFunction>& set);

// ---------------------------------------------------------------------------
// state relevance density

struct Marginal {
  enum class Kind { uniform, beta, categorical };
  Kind kind = Kind::uniform;
  double a = 1.0, b = 1.0;          // beta
  std::vector<double> probs;        // categorical

  double moment(int m) const;       // E[x^m] (continuous kinds)
  double pwl_expectation(const PwlTerm& t) const;
  double prob(int value) const;     // categorical mass
};

/// Product density over state variables. The default covers every variable
/// with a uniform (continuous) or uniform-categorical (discrete) marginal.
struct StateRelevanceDensity {
  bool default_uniform = true;
  std::map<std::string, Marginal> marginals;

  static StateRelevanceDensity uniform() { return {}; }
  const Marginal* find(const std::string& var) const;
};

// ---------------------------------------------------------------------------
// backprojections

/// A function of the full (x, a) point that only reads the variables in
/// `scope`. Evaluators are pure and safe to call concurrently.
struct ScopedEvaluator {
  std::vector<VarId> scope;  // sorted, unique
  std::function<double(std::span<const double>)> fn;

  double operator()(std::span<const double> point) const { return fn(point); }
};

/// g_i(x, a) = g_discrete(x, a) * g_continuous(x, a).
struct Backprojection {
  ScopedEvaluator discrete;
  ScopedEvaluator continuous;
  std::vector<VarId> scope;  // union, sorted

  double eval(std::span<const double> point) const {
    return discrete.fn(point) * continuous.fn(point);
  }
};

/// Expected next-step value of a discrete table factor: sum over joint child
/// assignments of the product of per-child transition probabilities times the
/// factor value. Scope is the union of the children's CPF parents.
ScopedEvaluator backproject_discrete(const HybridModel& model, const DiscreteFactor& factor);

/// Closed-form expected next-step value of a monomial factor under beta (or
/// mixture-of-beta) transitions: the product over variables of beta moments
/// E[X^m] evaluated at the shape functions' values.
ScopedEvaluator backproject_monomial(const HybridModel& model, const MonomialFactor& factor);

/// Expected next-step value of a multiplicative piecewise-linear factor,
/// via regularized incomplete beta segment probabilities and restricted
/// first moments.
ScopedEvaluator backproject_piecewise_linear(const HybridModel& model,
                                             const PwlProductFactor& factor);

Backprojection backproject(const HybridModel& model, const BasisFunction& f);

/// F_i(x, a) = f_i(x) - discount * g_i(x, a).
ScopedEvaluator constraint_function(const HybridModel& model, const BasisFunction& f);

/// alpha_i = (sum over the discrete scope of psi * f_discrete) *
///           (product over continuous-scope variables of E_psi[factor]).
double relevance_weight(const HybridModel& model, const StateRelevanceDensity& psi,
                        const BasisFunction& f);

/// Draws a full state assignment from psi (used by sampling oracles).
std::vector<double> sample_state_from_psi(const HybridModel& model,
                                          const StateRelevanceDensity& psi, Rng& rng);

// ---------------------------------------------------------------------------
// Lipschitz analysis (for the grid-resolution rule)

/// Upper bound on the Lipschitz modulus of a reward factor with respect to
/// the max-norm over continuous variables: sum over axes of sup |d/dx|.
double lipschitz_bound(const HybridModel& model, const ScopedFunction& f);

/// Upper bound on the Lipschitz modulus of F_i = f_i - discount * g_i
/// (unscaled by the weight bound). Conservative chain-rule estimate; the
/// shape-function floors keep every factor finite.
double lipschitz_bound_constraint(const HybridModel& model, const BasisFunction& f);

}  // namespace halp
