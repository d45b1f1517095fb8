#include "halp/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "halp/special.hpp"

namespace halp {

namespace {

std::vector<VarId> sorted_union(std::vector<VarId> a, const std::vector<VarId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

const BetaCpf* beta_for(const Cpf& cpf) { return std::get_if<BetaCpf>(&cpf); }
const MixtureBetaCpf* mixture_for(const Cpf& cpf) { return std::get_if<MixtureBetaCpf>(&cpf); }

/// E[pwl(X)] for X ~ Beta(a, b): per segment, the constant part weighs the
/// segment probability and the slope part the restricted first moment.
double pwl_beta_expectation(const PwlTerm& t, double a, double b) {
  double total = 0.0;
  for (size_t i = 0; i + 1 < t.knots.size(); ++i) {
    double lo = t.knots[i], hi = t.knots[i + 1];
    double slope = (t.values[i + 1] - t.values[i]) / (hi - lo);
    double intercept = t.values[i] - slope * lo;
    total += intercept * beta_segment_prob(a, b, lo, hi) + slope * beta_segment_mean(a, b, lo, hi);
  }
  return total;
}

double pwl_expectation_under_cpf(const PwlTerm& t, const Cpf& cpf,
                                 std::span<const double> point) {
  if (const auto* bc = beta_for(cpf)) {
    auto [a, b] = bc->shapes(point);
    return pwl_beta_expectation(t, a, b);
  }
  const auto* mx = mixture_for(cpf);
  double v = 0.0;
  for (const auto& c : mx->components) {
    auto [a, b] = c.beta.shapes(point);
    v += c.weight * pwl_beta_expectation(t, a, b);
  }
  return v;
}

double moment_under_cpf(int m, const Cpf& cpf, std::span<const double> point) {
  if (const auto* bc = beta_for(cpf)) return bc->moment(m, point);
  return mixture_for(cpf)->moment(m, point);
}

}  // namespace

// ---------------------------------------------------------------------------
// basis factors

double DiscreteFactor::eval(std::span<const double> point) const {
  size_t idx = 0;
  for (size_t i = 0; i < ids.size(); ++i)
    idx = idx * static_cast<size_t>(sizes[i]) + static_cast<size_t>(point[ids[i]]);
  return values[idx];
}

double DiscreteFactor::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::fabs(v));
  return m;
}

double MonomialFactor::eval(std::span<const double> point) const {
  double v = 1.0;
  for (size_t i = 0; i < ids.size(); ++i) {
    double x = point[ids[i]];
    for (int d = 0; d < degrees[i]; ++d) v *= x;
  }
  return v;
}

double PwlProductFactor::eval(std::span<const double> point) const {
  double v = 1.0;
  for (size_t i = 0; i < parts.size(); ++i) v *= parts[i].eval(point[ids[i]]);
  return v;
}

double BasisFunction::eval(std::span<const double> point) const {
  double d = discrete.eval(point);
  double c = kind == ContFactorKind::monomial ? monomial.eval(point) : pwl.eval(point);
  return d * c;
}

std::vector<VarId> BasisFunction::state_scope() const {
  std::vector<VarId> ids(discrete.ids.begin(), discrete.ids.end());
  const auto& cont = kind == ContFactorKind::monomial ? monomial.ids : pwl.ids;
  return sorted_union(std::move(ids), cont);
}

BasisFunction BasisFunction::constant(double value) {
  BasisFunction f;
  f.name = "const";
  f.discrete.values = {value};
  return f;
}

std::vector<std::string> bind_basis(const HybridModel& model, BasisFunction& f) {
  std::vector<std::string> out;
  std::string where = "basis '" + (f.name.empty() ? std::string("?") : f.name) + "'";

  f.discrete.ids.clear();
  f.discrete.sizes.clear();
  size_t expected = 1;
  for (const auto& name : f.discrete.scope) {
    VarId id = model.var_id(name);
    if (id < 0 || !model.is_state(id)) {
      out.push_back(where + ": '" + name + "' is not a state variable");
      continue;
    }
    if (model.var(id).kind != VarKind::discrete) {
      out.push_back(where + ": discrete factor names continuous variable '" + name + "'");
      continue;
    }
    f.discrete.ids.push_back(id);
    f.discrete.sizes.push_back(model.var(id).domain_size);
    expected *= static_cast<size_t>(model.var(id).domain_size);
  }
  if (f.discrete.scope.empty() && f.discrete.values.empty()) f.discrete.values = {1.0};
  if (out.empty() && f.discrete.values.size() != expected)
    out.push_back(where + ": discrete factor has " + std::to_string(f.discrete.values.size()) +
                  " values, expected " + std::to_string(expected));

  if (f.kind == ContFactorKind::monomial) {
    MonomialFactor kept;
    for (size_t i = 0; i < f.monomial.vars.size(); ++i) {
      const auto& name = f.monomial.vars[i];
      int deg = f.monomial.degrees[i];
      VarId id = model.var_id(name);
      if (id < 0 || !model.is_state(id) || model.var(id).kind != VarKind::continuous) {
        out.push_back(where + ": monomial names non-continuous-state variable '" + name + "'");
        continue;
      }
      if (deg < 0) {
        out.push_back(where + ": negative monomial degree for '" + name + "'");
        continue;
      }
      if (deg == 0) continue;  // x^0 contributes nothing to value or scope
      kept.vars.push_back(name);
      kept.degrees.push_back(deg);
      kept.ids.push_back(id);
    }
    f.monomial = std::move(kept);
  } else {
    f.pwl.ids.clear();
    for (auto& part : f.pwl.parts) {
      VarId id = model.var_id(part.var);
      if (id < 0 || !model.is_state(id) || model.var(id).kind != VarKind::continuous) {
        out.push_back(where + ": piecewise factor names non-continuous-state variable '" +
                      part.var + "'");
        f.pwl.ids.push_back(-1);
        continue;
      }
      f.pwl.ids.push_back(id);
      if (part.knots.size() != part.values.size() || part.knots.size() < 2) {
        out.push_back(where + ": malformed piecewise knots for '" + part.var + "'");
        continue;
      }
      for (size_t i = 0; i + 1 < part.knots.size(); ++i)
        if (!(part.knots[i] < part.knots[i + 1]))
          out.push_back(where + ": piecewise knots not strictly increasing for '" + part.var + "'");
      if (part.knots.front() != 0.0 || part.knots.back() != 1.0)
        out.push_back(where + ": piecewise knots must span [0,1] for '" + part.var + "'");
    }
  }
  return out;
}

std::vector<std::string> bind_basis_set(const HybridModel& model, std::vector<BasisFunction>& set) {
  std::vector<std::string> out;
  for (auto& f : set) {
    auto v = bind_basis(model, f);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// relevance density

double Marginal::moment(int m) const {
  if (m == 0) return 1.0;
  switch (kind) {
    case Kind::uniform:
      return 1.0 / (m + 1);
    case Kind::beta: {
      double v = 1.0;
      for (int k = 0; k < m; ++k) v *= (a + k) / (a + b + k);
      return v;
    }
    case Kind::categorical:
      throw MisuseError("relevance density: categorical marginal on a continuous variable");
  }
  return 0.0;
}

double Marginal::pwl_expectation(const PwlTerm& t) const {
  switch (kind) {
    case Kind::uniform: {
      double total = 0.0;
      for (size_t i = 0; i + 1 < t.knots.size(); ++i)
        total += (t.knots[i + 1] - t.knots[i]) * 0.5 * (t.values[i] + t.values[i + 1]);
      return total;
    }
    case Kind::beta:
      return pwl_beta_expectation(t, a, b);
    case Kind::categorical:
      throw MisuseError("relevance density: categorical marginal on a continuous variable");
  }
  return 0.0;
}

double Marginal::prob(int value) const {
  if (kind != Kind::categorical)
    throw MisuseError("relevance density: continuous marginal on a discrete variable");
  if (value < 0 || static_cast<size_t>(value) >= probs.size())
    throw MisuseError("relevance density: categorical marginal shorter than the domain");
  return probs[static_cast<size_t>(value)];
}

const Marginal* StateRelevanceDensity::find(const std::string& var) const {
  auto it = marginals.find(var);
  return it == marginals.end() ? nullptr : &it->second;
}

namespace {

Marginal resolve_marginal(const StateRelevanceDensity& psi, const HybridModel& model, VarId id) {
  const auto& spec = model.var(id);
  if (const Marginal* m = psi.find(spec.name)) return *m;
  if (!psi.default_uniform)
    throw MisuseError("relevance density: no marginal for variable '" + spec.name + "'");
  Marginal m;
  if (spec.kind == VarKind::discrete) {
    m.kind = Marginal::Kind::categorical;
    m.probs.assign(static_cast<size_t>(spec.domain_size), 1.0 / spec.domain_size);
  }
  return m;
}

}  // namespace

double relevance_weight(const HybridModel& model, const StateRelevanceDensity& psi,
                        const BasisFunction& f) {
  // discrete part: enumerate the joint assignments of the table scope
  double alpha_d = 0.0;
  size_t n_assign = f.discrete.values.size();
  std::vector<Marginal> disc_marginals;
  disc_marginals.reserve(f.discrete.ids.size());
  for (VarId id : f.discrete.ids) disc_marginals.push_back(resolve_marginal(psi, model, id));
  std::vector<int> assign(f.discrete.ids.size(), 0);
  for (size_t idx = 0; idx < n_assign; ++idx) {
    double mass = 1.0;
    for (size_t i = 0; i < assign.size(); ++i) mass *= disc_marginals[i].prob(assign[i]);
    alpha_d += f.discrete.values[idx] * mass;
    for (size_t i = assign.size(); i-- > 0;) {
      if (++assign[i] < f.discrete.sizes[i]) break;
      assign[i] = 0;
    }
  }

  // continuous part: product of per-variable expectations
  double alpha_c = 1.0;
  if (f.kind == ContFactorKind::monomial) {
    for (size_t i = 0; i < f.monomial.ids.size(); ++i) {
      Marginal m = resolve_marginal(psi, model, f.monomial.ids[i]);
      alpha_c *= m.moment(f.monomial.degrees[i]);
    }
  } else {
    for (size_t i = 0; i < f.pwl.parts.size(); ++i) {
      Marginal m = resolve_marginal(psi, model, f.pwl.ids[i]);
      alpha_c *= m.pwl_expectation(f.pwl.parts[i]);
    }
  }
  return alpha_d * alpha_c;
}

std::vector<double> sample_state_from_psi(const HybridModel& model,
                                          const StateRelevanceDensity& psi, Rng& rng) {
  std::vector<double> x(static_cast<size_t>(model.num_state_vars()));
  for (int i = 0; i < model.num_state_vars(); ++i) {
    Marginal m = resolve_marginal(psi, model, i);
    switch (m.kind) {
      case Marginal::Kind::uniform:
        x[static_cast<size_t>(i)] = rng.uniform();
        break;
      case Marginal::Kind::beta:
        x[static_cast<size_t>(i)] = rng.beta(m.a, m.b);
        break;
      case Marginal::Kind::categorical:
        x[static_cast<size_t>(i)] = static_cast<double>(rng.categorical(m.probs));
        break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// backprojections

ScopedEvaluator backproject_discrete(const HybridModel& model, const DiscreteFactor& factor) {
  if (!model.bound()) throw MisuseError("backproject_discrete: model is not bound");
  struct Child {
    const DiscriminantCpf* cpf;
    int domain;
  };
  auto children = std::make_shared<std::vector<Child>>();
  std::vector<VarId> scope;
  for (VarId id : factor.ids) {
    if (model.var(id).kind != VarKind::discrete || !model.is_state(id))
      throw MisuseError("backproject_discrete: factor scope must contain only discrete state "
                        "variables");
    const auto* d = std::get_if<DiscriminantCpf>(&model.cpf_for(id));
    if (!d) throw MisuseError("backproject_discrete: missing discriminant CPF");
    children->push_back({d, model.var(id).domain_size});
    for (const auto& disc : d->discriminants) scope = sorted_union(std::move(scope), disc.scope_ids());
  }

  auto values = std::make_shared<std::vector<double>>(factor.values);
  ScopedEvaluator ev;
  ev.scope = scope;
  ev.fn = [children, values](std::span<const double> point) -> double {
    thread_local std::vector<std::vector<double>> probs;
    size_t n = children->size();
    if (probs.size() < n) probs.resize(n);
    for (size_t i = 0; i < n; ++i) {
      probs[i].resize(static_cast<size_t>((*children)[i].domain));
      (*children)[i].cpf->probabilities(point, probs[i]);
    }
    thread_local std::vector<int> assign;
    assign.assign(n, 0);
    double total = 0.0;
    for (size_t idx = 0; idx < values->size(); ++idx) {
      double mass = 1.0;
      for (size_t i = 0; i < n; ++i) mass *= probs[i][static_cast<size_t>(assign[i])];
      total += mass * (*values)[idx];
      for (size_t i = n; i-- > 0;) {
        if (++assign[i] < (*children)[i].domain) break;
        assign[i] = 0;
      }
    }
    return total;
  };
  return ev;
}

ScopedEvaluator backproject_monomial(const HybridModel& model, const MonomialFactor& factor) {
  if (!model.bound()) throw MisuseError("backproject_monomial: model is not bound");
  struct Child {
    const Cpf* cpf;
    int degree;
  };
  auto children = std::make_shared<std::vector<Child>>();
  std::vector<VarId> scope;
  for (size_t i = 0; i < factor.ids.size(); ++i) {
    if (factor.degrees[i] == 0) continue;
    VarId id = factor.ids[i];
    if (model.var(id).kind != VarKind::continuous || !model.is_state(id))
      throw MisuseError("backproject_monomial: degree on a non-continuous-state variable");
    const Cpf& cpf = model.cpf_for(id);
    if (std::holds_alternative<DiscriminantCpf>(cpf))
      throw MisuseError("backproject_monomial: variable '" + model.var(id).name +
                        "' has no beta CPF");
    children->push_back({&cpf, factor.degrees[i]});
    if (const auto* b = beta_for(cpf)) {
      scope = sorted_union(std::move(scope), b->h1.scope_ids());
      scope = sorted_union(std::move(scope), b->h2.scope_ids());
    } else {
      for (const auto& c : mixture_for(cpf)->components) {
        scope = sorted_union(std::move(scope), c.beta.h1.scope_ids());
        scope = sorted_union(std::move(scope), c.beta.h2.scope_ids());
      }
    }
  }

  ScopedEvaluator ev;
  ev.scope = scope;
  ev.fn = [children](std::span<const double> point) -> double {
    double v = 1.0;
    for (const auto& ch : *children) v *= moment_under_cpf(ch.degree, *ch.cpf, point);
    return v;
  };
  return ev;
}

ScopedEvaluator backproject_piecewise_linear(const HybridModel& model,
                                             const PwlProductFactor& factor) {
  if (!model.bound()) throw MisuseError("backproject_piecewise_linear: model is not bound");
  struct Child {
    PwlTerm term;
    const Cpf* cpf;
  };
  auto children = std::make_shared<std::vector<Child>>();
  std::vector<VarId> scope;
  for (size_t i = 0; i < factor.parts.size(); ++i) {
    VarId id = factor.ids[i];
    if (id < 0 || model.var(id).kind != VarKind::continuous || !model.is_state(id))
      throw MisuseError("backproject_piecewise_linear: factor on a non-continuous-state variable");
    const Cpf& cpf = model.cpf_for(id);
    if (std::holds_alternative<DiscriminantCpf>(cpf))
      throw MisuseError("backproject_piecewise_linear: variable has no beta CPF");
    children->push_back({factor.parts[i], &cpf});
    if (const auto* b = beta_for(cpf)) {
      scope = sorted_union(std::move(scope), b->h1.scope_ids());
      scope = sorted_union(std::move(scope), b->h2.scope_ids());
    } else {
      for (const auto& c : mixture_for(cpf)->components) {
        scope = sorted_union(std::move(scope), c.beta.h1.scope_ids());
        scope = sorted_union(std::move(scope), c.beta.h2.scope_ids());
      }
    }
  }

  ScopedEvaluator ev;
  ev.scope = scope;
  ev.fn = [children](std::span<const double> point) -> double {
    double v = 1.0;
    for (const auto& ch : *children) v *= pwl_expectation_under_cpf(ch.term, *ch.cpf, point);
    return v;
  };
  return ev;
}

Backprojection backproject(const HybridModel& model, const BasisFunction& f) {
  Backprojection bp;
  bp.discrete = backproject_discrete(model, f.discrete);
  bp.continuous = f.kind == ContFactorKind::monomial
                      ? backproject_monomial(model, f.monomial)
                      : backproject_piecewise_linear(model, f.pwl);
  bp.scope = sorted_union(bp.discrete.scope, bp.continuous.scope);
  return bp;
}

ScopedEvaluator constraint_function(const HybridModel& model, const BasisFunction& f) {
  auto bp = std::make_shared<Backprojection>(backproject(model, f));
  auto basis = std::make_shared<BasisFunction>(f);
  double gamma = model.discount;

  ScopedEvaluator ev;
  ev.scope = sorted_union(bp->scope, f.state_scope());
  ev.fn = [bp, basis, gamma](std::span<const double> point) -> double {
    return basis->eval(point) - gamma * bp->eval(point);
  };
  return ev;
}

// ---------------------------------------------------------------------------
// Lipschitz analysis

double lipschitz_bound(const HybridModel&, const ScopedFunction& f) {
  double total = 0.0;
  for (const auto& [id, k] : f.axis_lipschitz()) total += k;
  return total;
}

namespace {

struct ShapeStats {
  double h1_min, h1_max, h2_min, h2_max;
  std::vector<std::pair<VarId, double>> h1_lip, h2_lip;
};

ShapeStats shape_stats(const BetaCpf& b) {
  ShapeStats s;
  s.h1_min = std::max(b.floor, b.h1.lower_bound());
  s.h2_min = std::max(b.floor, b.h2.lower_bound());
  s.h1_max = std::max(s.h1_min, b.h1.upper_bound());
  s.h2_max = std::max(s.h2_min, b.h2.upper_bound());
  s.h1_lip = b.h1.axis_lipschitz();
  s.h2_lip = b.h2.axis_lipschitz();
  return s;
}

// |d E[X^m] / d h1| <= sum_{k<m} 1/(h1+k), |d/d h2| <= sum_{k<m} 1/(h1+h2+k).
void monomial_moment_sensitivity(const ShapeStats& s, int m, double& dh1, double& dh2) {
  dh1 = 0.0;
  dh2 = 0.0;
  for (int k = 0; k < m; ++k) {
    dh1 += 1.0 / (s.h1_min + k);
    dh2 += 1.0 / (s.h1_min + s.h2_min + k);
  }
}

// |d E[pwl(X)] / d h| <= 2 max|pwl| (psi(h1+h2) - psi(h)), bounded with
// psi(y) in [ln y - 1/y, ln y].
void pwl_moment_sensitivity(const ShapeStats& s, double max_abs, double& dh1, double& dh2) {
  double hs_max = s.h1_max + s.h2_max;
  dh1 = 2.0 * max_abs * (std::log(hs_max / s.h1_min) + 1.0 / s.h1_min);
  dh2 = 2.0 * max_abs * (std::log(hs_max / s.h2_min) + 1.0 / s.h2_min);
}

void accumulate(std::map<VarId, double>& acc, const std::vector<std::pair<VarId, double>>& lips,
                double scale) {
  for (const auto& [id, k] : lips) acc[id] += scale * k;
}

double pwl_max_abs(const PwlTerm& t) {
  double m = 0.0;
  for (double v : t.values) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace

double lipschitz_bound_constraint(const HybridModel& model, const BasisFunction& f) {
  std::map<VarId, double> acc;  // per continuous axis

  // basis part f_i
  double disc_max = f.discrete.max_abs();
  if (f.kind == ContFactorKind::monomial) {
    for (size_t i = 0; i < f.monomial.ids.size(); ++i)
      acc[f.monomial.ids[i]] += disc_max * f.monomial.degrees[i];
  } else {
    double prod_all = 1.0;
    std::vector<double> maxes;
    for (const auto& p : f.pwl.parts) {
      maxes.push_back(pwl_max_abs(p));
      prod_all *= maxes.back();
    }
    for (size_t i = 0; i < f.pwl.parts.size(); ++i) {
      double others = maxes[i] > 0 ? prod_all / maxes[i] : 0.0;
      acc[f.pwl.ids[i]] += disc_max * f.pwl.parts[i].max_abs_slope() * others;
    }
  }

  // backprojection part: g = g_D * g_C with |g_D| <= disc_max and each
  // continuous child expectation bounded by its factor magnitude.
  double gamma = model.discount;
  std::vector<double> child_bounds;
  struct ContChild {
    const Cpf* cpf;
    int degree;       // monomial path
    const PwlTerm* term;  // pwl path
  };
  std::vector<ContChild> cont_children;
  if (f.kind == ContFactorKind::monomial) {
    for (size_t i = 0; i < f.monomial.ids.size(); ++i) {
      cont_children.push_back({&model.cpf_for(f.monomial.ids[i]), f.monomial.degrees[i], nullptr});
      child_bounds.push_back(1.0);
    }
  } else {
    for (size_t i = 0; i < f.pwl.parts.size(); ++i) {
      cont_children.push_back({&model.cpf_for(f.pwl.ids[i]), 0, &f.pwl.parts[i]});
      child_bounds.push_back(pwl_max_abs(f.pwl.parts[i]));
    }
  }
  double g_c_bound = 1.0;
  for (double b : child_bounds) g_c_bound *= b;

  // d g_D: discriminant quotient-rule bound per discrete child
  std::map<VarId, double> d_gd;
  for (VarId id : f.discrete.ids) {
    const auto* d = std::get_if<DiscriminantCpf>(&model.cpf_for(id));
    if (!d) continue;
    double s_min = 0.0;
    std::map<VarId, double> k_sum;
    for (const auto& disc : d->discriminants) {
      s_min += std::max(d->floor, disc.lower_bound());
      for (const auto& [vid, k] : disc.axis_lipschitz()) k_sum[vid] += k;
    }
    double dom = static_cast<double>(d->discriminants.size());
    for (const auto& [vid, k] : k_sum) d_gd[vid] += disc_max * (1.0 + dom) * k / s_min;
  }

  // d g_C: chain rule through the shape functions, child by child
  std::map<VarId, double> d_gc;
  for (size_t j = 0; j < cont_children.size(); ++j) {
    double others = 1.0;
    for (size_t k = 0; k < cont_children.size(); ++k)
      if (k != j) others *= child_bounds[k];
    auto add_beta = [&](const BetaCpf& b, double weight) {
      ShapeStats s = shape_stats(b);
      double dh1, dh2;
      if (cont_children[j].term)
        pwl_moment_sensitivity(s, pwl_max_abs(*cont_children[j].term), dh1, dh2);
      else
        monomial_moment_sensitivity(s, cont_children[j].degree, dh1, dh2);
      accumulate(d_gc, s.h1_lip, weight * others * dh1);
      accumulate(d_gc, s.h2_lip, weight * others * dh2);
    };
    if (const auto* b = beta_for(*cont_children[j].cpf))
      add_beta(*b, 1.0);
    else
      for (const auto& c : mixture_for(*cont_children[j].cpf)->components)
        add_beta(c.beta, c.weight);
  }

  for (const auto& [vid, k] : d_gd) acc[vid] += gamma * k * g_c_bound;
  for (const auto& [vid, k] : d_gc) acc[vid] += gamma * disc_max * k;

  double total = 0.0;
  for (const auto& [vid, k] : acc) total += k;
  return total;
}

}  // namespace halp
