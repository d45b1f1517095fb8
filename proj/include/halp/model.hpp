#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "halp/rng.hpp"
#include "halp/types.hpp"

namespace halp {

enum class VarKind { continuous, discrete };

/// A state or action variable. Continuous variables range over [0, 1];
/// discrete variables take values in {0, ..., domain_size - 1}.
struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::continuous;
  int domain_size = 0;  // discrete only

  static VariableSpec cont(std::string name) {
    return {std::move(name), VarKind::continuous, 0};
  }
  static VariableSpec disc(std::string name, int domain_size) {
    return {std::move(name), VarKind::discrete, domain_size};
  }
};

/// One additive 1-D piecewise-linear term. Knots are strictly increasing and
/// span [0, 1]; values are linearly interpolated between knots.
struct PwlTerm {
  std::string var;  // name within the owning scope
  std::vector<double> knots;
  std::vector<double> values;
  int var_pos = -1;  // position in the owning continuous scope (set on bind)

  double eval(double x) const;
  double max_abs_slope() const;
  double min_value() const;
  double max_value() const;
};

struct PolyTerm {
  double coef = 0.0;
  std::vector<int> degrees;  // aligned with the owning continuous scope
};

struct GaussComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 1.0;
};

struct GaussTerm {
  std::string var;
  std::vector<GaussComponent> components;
  int var_pos = -1;

  double eval(double x) const;
};

/// A function of the continuous variables of a scope: a constant, a sparse
/// multivariate polynomial, an additive combination of 1-D piecewise-linear
/// terms, or an additive combination of 1-D Gaussian bumps.
struct ContinuousExpr {
  enum class Form { constant, polynomial, piecewise_linear, gaussian_mixture };

  Form form = Form::constant;
  double constant = 0.0;
  std::vector<PolyTerm> poly;
  std::vector<PwlTerm> pwl;
  std::vector<GaussTerm> gauss;

  static ContinuousExpr make_constant(double v);
  static ContinuousExpr make_polynomial(std::vector<PolyTerm> terms);
  static ContinuousExpr make_pwl(std::vector<PwlTerm> terms);
  static ContinuousExpr make_gauss(std::vector<GaussTerm> terms);

  /// xs holds the continuous-scope values in scope order.
  double eval(std::span<const double> xs) const;

  /// Conservative range over the unit hypercube.
  double lower_bound() const;
  double upper_bound() const;

  /// sup |d/dx_j| over the unit hypercube, per continuous-scope position.
  std::vector<double> per_axis_lipschitz(int arity) const;
};

/// A function over a small set of variables: a table indexed by the joint
/// assignment of the discrete scope, whose entries are expressions in the
/// continuous scope. Assignment index is row-major with the first scope
/// variable most significant.
struct ScopedFunction {
  std::vector<std::string> discrete_scope;
  std::vector<std::string> continuous_scope;
  std::vector<ContinuousExpr> table;

  // set on bind()
  std::vector<VarId> disc_ids;
  std::vector<VarId> cont_ids;
  std::vector<int> disc_sizes;

  static ScopedFunction constant(double v);

  bool bound() const { return disc_ids.size() == discrete_scope.size() && !table.empty(); }
  size_t table_index(std::span<const double> point) const;
  double eval(std::span<const double> point) const;

  /// All variables read by this function.
  std::vector<VarId> scope_ids() const;

  double lower_bound() const;
  double upper_bound() const;
  /// Per continuous *axis* (VarId) Lipschitz bound, maxed over table entries.
  std::vector<std::pair<VarId, double>> axis_lipschitz() const;
};

/// Beta transition for a continuous child: X' ~ Beta(h1(u), h2(u)) with both
/// shape functions clamped below by `floor`.
struct BetaCpf {
  std::string child;
  ScopedFunction h1;
  ScopedFunction h2;
  double floor = 1e-3;

  std::pair<double, double> shapes(std::span<const double> point) const;
  double density(double x_next, std::span<const double> point) const;
  double sample(std::span<const double> point, Rng& rng) const;
  double moment(int m, std::span<const double> point) const;
};

struct MixtureBetaCpf {
  struct Component {
    double weight = 1.0;
    BetaCpf beta;
  };
  std::string child;
  std::vector<Component> components;

  double density(double x_next, std::span<const double> point) const;
  double sample(std::span<const double> point, Rng& rng) const;
  double moment(int m, std::span<const double> point) const;
};

/// Discriminant transition for a discrete child: P(X'=j | u) is the j-th
/// discriminant value normalized by the sum over the domain.
struct DiscriminantCpf {
  std::string child;
  std::vector<ScopedFunction> discriminants;
  double floor = 1e-3;

  void probabilities(std::span<const double> point, std::span<double> out) const;
  int sample(std::span<const double> point, Rng& rng) const;
};

using Cpf = std::variant<BetaCpf, MixtureBetaCpf, DiscriminantCpf>;

const std::string& cpf_child(const Cpf& cpf);

/// A hybrid factored MDP: a two-slice DBN with one CPF per state variable
/// and an additively factored reward. Immutable once bound; evaluation and
/// sampling are safe to call concurrently.
struct HybridModel {
  std::vector<VariableSpec> state_vars;
  std::vector<VariableSpec> action_vars;
  std::vector<Cpf> cpfs;  // aligned with state_vars after bind()
  std::vector<ScopedFunction> rewards;
  double discount = 0.95;

  int num_state_vars() const { return static_cast<int>(state_vars.size()); }
  int num_action_vars() const { return static_cast<int>(action_vars.size()); }
  int num_vars() const { return num_state_vars() + num_action_vars(); }

  bool bound() const { return bound_; }
  const VariableSpec& var(VarId id) const;
  /// -1 when the name is unknown.
  VarId var_id(const std::string& name) const;
  bool is_state(VarId id) const { return id < num_state_vars(); }
  const Cpf& cpf_for(VarId state_var) const;

  /// Resolves every name reference and validates all invariants. Returns the
  /// full list of violations; the model is bound (usable) iff it is empty.
  std::vector<std::string> bind();

 private:
  bool bound_ = false;
  std::unordered_map<std::string, VarId> index_;
};

/// Returns every invariant violation found; empty means the model is
/// well-formed (and left bound, ready for evaluation).
std::vector<std::string> validate_model(HybridModel& model);

/// Assembles a full point from per-variable state and action values.
Point make_point(const HybridModel& model, std::span<const double> state,
                 std::span<const double> action);

/// Throws domain_error if any value is outside its variable's domain.
void check_point(const HybridModel& model, std::span<const double> point);

/// Sum of the reward factors at (x, a).
double eval_reward(const HybridModel& model, std::span<const double> point);
double eval_reward(const HybridModel& model, std::span<const double> state,
                   std::span<const double> action);

/// Product over state variables of the per-variable CPF density/probability.
double transition_density(const HybridModel& model, std::span<const double> next_state,
                          std::span<const double> point);

/// Draws each next-state variable independently from its CPF.
std::vector<double> sample_transition(const HybridModel& model, std::span<const double> point,
                                      Rng& rng);

/// Upper bound on |R(x, a)| from per-factor expression bounds.
double reward_magnitude_bound(const HybridModel& model);

}  // namespace halp
