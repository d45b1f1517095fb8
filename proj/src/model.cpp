#include "halp/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "halp/special.hpp"

namespace halp {

namespace {
constexpr double kDensityClamp = 1e-9;  // query points pulled into [eps, 1-eps]
constexpr int kMaxContScope = 32;
}  // namespace

// ---------------------------------------------------------------------------
// expressions

double PwlTerm::eval(double x) const {
  if (x <= knots.front()) return values.front();
  if (x >= knots.back()) return values.back();
  auto it = std::upper_bound(knots.begin(), knots.end(), x);
  size_t hi = static_cast<size_t>(it - knots.begin());
  size_t lo = hi - 1;
  double t = (x - knots[lo]) / (knots[hi] - knots[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double PwlTerm::max_abs_slope() const {
  double s = 0.0;
  for (size_t i = 0; i + 1 < knots.size(); ++i)
    s = std::max(s, std::fabs((values[i + 1] - values[i]) / (knots[i + 1] - knots[i])));
  return s;
}

double PwlTerm::min_value() const { return *std::min_element(values.begin(), values.end()); }
double PwlTerm::max_value() const { return *std::max_element(values.begin(), values.end()); }

double GaussTerm::eval(double x) const {
  double v = 0.0;
  for (const auto& c : components) v += gauss_bump(x, c.weight, c.mean, c.variance);
  return v;
}

ContinuousExpr ContinuousExpr::make_constant(double v) {
  ContinuousExpr e;
  e.form = Form::constant;
  e.constant = v;
  return e;
}

ContinuousExpr ContinuousExpr::make_polynomial(std::vector<PolyTerm> terms) {
  ContinuousExpr e;
  e.form = Form::polynomial;
  e.poly = std::move(terms);
  return e;
}

ContinuousExpr ContinuousExpr::make_pwl(std::vector<PwlTerm> terms) {
  ContinuousExpr e;
  e.form = Form::piecewise_linear;
  e.pwl = std::move(terms);
  return e;
}

ContinuousExpr ContinuousExpr::make_gauss(std::vector<GaussTerm> terms) {
  ContinuousExpr e;
  e.form = Form::gaussian_mixture;
  e.gauss = std::move(terms);
  return e;
}

double ContinuousExpr::eval(std::span<const double> xs) const {
  switch (form) {
    case Form::constant:
      return constant;
    case Form::polynomial: {
      double sum = 0.0;
      for (const auto& t : poly) {
        double v = t.coef;
        for (size_t j = 0; j < t.degrees.size(); ++j) {
          double x = xs[j];
          for (int d = 0; d < t.degrees[j]; ++d) v *= x;
        }
        sum += v;
      }
      return sum;
    }
    case Form::piecewise_linear: {
      double sum = 0.0;
      for (const auto& t : pwl) sum += t.eval(xs[t.var_pos]);
      return sum;
    }
    case Form::gaussian_mixture: {
      double sum = 0.0;
      for (const auto& t : gauss) sum += t.eval(xs[t.var_pos]);
      return sum;
    }
  }
  return 0.0;
}

double ContinuousExpr::lower_bound() const {
  switch (form) {
    case Form::constant:
      return constant;
    case Form::polynomial: {
      double lo = 0.0;
      for (const auto& t : poly) {
        bool all_const = true;
        for (int d : t.degrees)
          if (d > 0) all_const = false;
        if (all_const)
          lo += t.coef;
        else
          lo += std::min(0.0, t.coef);
      }
      return lo;
    }
    case Form::piecewise_linear: {
      double lo = 0.0;
      for (const auto& t : pwl) lo += t.min_value();
      return lo;
    }
    case Form::gaussian_mixture: {
      double lo = 0.0;
      for (const auto& t : gauss)
        for (const auto& c : t.components) {
          double near = std::clamp(c.mean, 0.0, 1.0);
          double far = (std::fabs(c.mean) > std::fabs(1.0 - c.mean)) ? 0.0 : 1.0;
          double pmax = gauss_bump(near, 1.0, c.mean, c.variance);
          double pmin = gauss_bump(far, 1.0, c.mean, c.variance);
          lo += c.weight >= 0.0 ? c.weight * pmin : c.weight * pmax;
        }
      return lo;
    }
  }
  return 0.0;
}

double ContinuousExpr::upper_bound() const {
  switch (form) {
    case Form::constant:
      return constant;
    case Form::polynomial: {
      double hi = 0.0;
      for (const auto& t : poly) {
        bool all_const = true;
        for (int d : t.degrees)
          if (d > 0) all_const = false;
        if (all_const)
          hi += t.coef;
        else
          hi += std::max(0.0, t.coef);
      }
      return hi;
    }
    case Form::piecewise_linear: {
      double hi = 0.0;
      for (const auto& t : pwl) hi += t.max_value();
      return hi;
    }
    case Form::gaussian_mixture: {
      double hi = 0.0;
      for (const auto& t : gauss)
        for (const auto& c : t.components) {
          double near = std::clamp(c.mean, 0.0, 1.0);
          double far = (std::fabs(c.mean) > std::fabs(1.0 - c.mean)) ? 0.0 : 1.0;
          double pmax = gauss_bump(near, 1.0, c.mean, c.variance);
          double pmin = gauss_bump(far, 1.0, c.mean, c.variance);
          hi += c.weight >= 0.0 ? c.weight * pmax : c.weight * pmin;
        }
      return hi;
    }
  }
  return 0.0;
}

std::vector<double> ContinuousExpr::per_axis_lipschitz(int arity) const {
  std::vector<double> out(static_cast<size_t>(std::max(arity, 0)), 0.0);
  switch (form) {
    case Form::constant:
      break;
    case Form::polynomial:
      for (const auto& t : poly)
        for (size_t j = 0; j < t.degrees.size() && j < out.size(); ++j)
          out[j] += std::fabs(t.coef) * t.degrees[j];
      break;
    case Form::piecewise_linear:
      for (const auto& t : pwl)
        if (t.var_pos >= 0 && t.var_pos < arity) out[t.var_pos] += t.max_abs_slope();
      break;
    case Form::gaussian_mixture:
      for (const auto& t : gauss)
        if (t.var_pos >= 0 && t.var_pos < arity) {
          const double peak_slope = 0.24197072451914337;  // e^{-1/2}/sqrt(2*pi)
          for (const auto& c : t.components)
            out[t.var_pos] += std::fabs(c.weight) * peak_slope / c.variance;
        }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// scoped functions

ScopedFunction ScopedFunction::constant(double v) {
  ScopedFunction f;
  f.table.push_back(ContinuousExpr::make_constant(v));
  return f;
}

size_t ScopedFunction::table_index(std::span<const double> point) const {
  size_t idx = 0;
  for (size_t i = 0; i < disc_ids.size(); ++i) {
    int v = static_cast<int>(point[disc_ids[i]]);
    idx = idx * static_cast<size_t>(disc_sizes[i]) + static_cast<size_t>(v);
  }
  return idx;
}

double ScopedFunction::eval(std::span<const double> point) const {
  std::array<double, kMaxContScope> xs;
  for (size_t j = 0; j < cont_ids.size(); ++j) xs[j] = point[cont_ids[j]];
  return table[table_index(point)].eval(std::span<const double>(xs.data(), cont_ids.size()));
}

std::vector<VarId> ScopedFunction::scope_ids() const {
  std::vector<VarId> ids(disc_ids.begin(), disc_ids.end());
  ids.insert(ids.end(), cont_ids.begin(), cont_ids.end());
  return ids;
}

double ScopedFunction::lower_bound() const {
  double lo = table.empty() ? 0.0 : table.front().lower_bound();
  for (const auto& e : table) lo = std::min(lo, e.lower_bound());
  return lo;
}

double ScopedFunction::upper_bound() const {
  double hi = table.empty() ? 0.0 : table.front().upper_bound();
  for (const auto& e : table) hi = std::max(hi, e.upper_bound());
  return hi;
}

std::vector<std::pair<VarId, double>> ScopedFunction::axis_lipschitz() const {
  std::vector<std::pair<VarId, double>> out;
  int arity = static_cast<int>(cont_ids.size());
  std::vector<double> acc(static_cast<size_t>(arity), 0.0);
  for (const auto& e : table) {
    auto l = e.per_axis_lipschitz(arity);
    for (int j = 0; j < arity; ++j) acc[j] = std::max(acc[j], l[j]);
  }
  for (int j = 0; j < arity; ++j) out.emplace_back(cont_ids[j], acc[j]);
  return out;
}

// ---------------------------------------------------------------------------
// CPFs

std::pair<double, double> BetaCpf::shapes(std::span<const double> point) const {
  double a = std::max(floor, h1.eval(point));
  double b = std::max(floor, h2.eval(point));
  return {a, b};
}

double BetaCpf::density(double x_next, std::span<const double> point) const {
  auto [a, b] = shapes(point);
  double x = std::clamp(x_next, kDensityClamp, 1.0 - kDensityClamp);
  return beta_pdf(x, a, b);
}

double BetaCpf::sample(std::span<const double> point, Rng& rng) const {
  auto [a, b] = shapes(point);
  return rng.beta(a, b);
}

double BetaCpf::moment(int m, std::span<const double> point) const {
  auto [a, b] = shapes(point);
  return beta_moment(a, b, m);
}

double MixtureBetaCpf::density(double x_next, std::span<const double> point) const {
  double d = 0.0;
  for (const auto& c : components) d += c.weight * c.beta.density(x_next, point);
  return d;
}

double MixtureBetaCpf::sample(std::span<const double> point, Rng& rng) const {
  thread_local std::vector<double> w;
  w.resize(components.size());
  for (size_t i = 0; i < components.size(); ++i) w[i] = components[i].weight;
  size_t pick = rng.categorical(w);
  return components[pick].beta.sample(point, rng);
}

double MixtureBetaCpf::moment(int m, std::span<const double> point) const {
  double v = 0.0;
  for (const auto& c : components) v += c.weight * c.beta.moment(m, point);
  return v;
}

void DiscriminantCpf::probabilities(std::span<const double> point, std::span<double> out) const {
  double total = 0.0;
  for (size_t j = 0; j < discriminants.size(); ++j) {
    double d = std::max(floor, discriminants[j].eval(point));
    out[j] = d;
    total += d;
  }
  for (size_t j = 0; j < discriminants.size(); ++j) out[j] /= total;
}

int DiscriminantCpf::sample(std::span<const double> point, Rng& rng) const {
  thread_local std::vector<double> p;
  p.resize(discriminants.size());
  probabilities(point, p);
  return static_cast<int>(rng.categorical(p));
}

const std::string& cpf_child(const Cpf& cpf) {
  return std::visit([](const auto& c) -> const std::string& { return c.child; }, cpf);
}

// ---------------------------------------------------------------------------
// model binding / validation

namespace {

void bind_scoped(const HybridModel& model, ScopedFunction& f, const std::string& where,
                 std::vector<std::string>& out) {
  f.disc_ids.clear();
  f.cont_ids.clear();
  f.disc_sizes.clear();
  size_t expected = 1;
  bool ok = true;

  for (const auto& name : f.discrete_scope) {
    VarId id = model.var_id(name);
    if (id < 0) {
      out.push_back(where + ": unknown variable '" + name + "'");
      ok = false;
      continue;
    }
    if (model.var(id).kind != VarKind::discrete) {
      out.push_back(where + ": variable '" + name + "' is not discrete");
      ok = false;
      continue;
    }
    f.disc_ids.push_back(id);
    f.disc_sizes.push_back(model.var(id).domain_size);
    expected *= static_cast<size_t>(model.var(id).domain_size);
  }
  for (const auto& name : f.continuous_scope) {
    VarId id = model.var_id(name);
    if (id < 0) {
      out.push_back(where + ": unknown variable '" + name + "'");
      ok = false;
      continue;
    }
    if (model.var(id).kind != VarKind::continuous) {
      out.push_back(where + ": variable '" + name + "' is not continuous");
      ok = false;
      continue;
    }
    f.cont_ids.push_back(id);
  }
  if (f.continuous_scope.size() > kMaxContScope) {
    out.push_back(where + ": continuous scope larger than supported maximum");
    ok = false;
  }
  if (ok && f.table.size() != expected) {
    out.push_back(where + ": table has " + std::to_string(f.table.size()) + " entries, expected " +
                  std::to_string(expected));
    ok = false;
  }

  auto pos_of = [&](const std::string& v) -> int {
    for (size_t j = 0; j < f.continuous_scope.size(); ++j)
      if (f.continuous_scope[j] == v) return static_cast<int>(j);
    return -1;
  };

  for (auto& e : f.table) {
    switch (e.form) {
      case ContinuousExpr::Form::constant:
        break;
      case ContinuousExpr::Form::polynomial:
        for (auto& t : e.poly) {
          if (t.degrees.size() != f.continuous_scope.size())
            out.push_back(where + ": polynomial term degree vector does not match scope size");
          for (int d : t.degrees)
            if (d < 0) out.push_back(where + ": negative polynomial degree");
        }
        break;
      case ContinuousExpr::Form::piecewise_linear:
        for (auto& t : e.pwl) {
          t.var_pos = pos_of(t.var);
          if (t.var_pos < 0)
            out.push_back(where + ": piecewise term names '" + t.var + "' outside the scope");
          if (t.knots.size() != t.values.size() || t.knots.size() < 2)
            out.push_back(where + ": piecewise knot/value lists are malformed");
          else {
            for (size_t i = 0; i + 1 < t.knots.size(); ++i)
              if (!(t.knots[i] < t.knots[i + 1]))
                out.push_back(where + ": piecewise knots are not strictly increasing");
            if (t.knots.front() != 0.0 || t.knots.back() != 1.0)
              out.push_back(where + ": piecewise knots must span [0,1]");
          }
        }
        break;
      case ContinuousExpr::Form::gaussian_mixture:
        for (auto& t : e.gauss) {
          t.var_pos = pos_of(t.var);
          if (t.var_pos < 0)
            out.push_back(where + ": gaussian term names '" + t.var + "' outside the scope");
          for (const auto& c : t.components)
            if (!(c.variance > 0.0)) out.push_back(where + ": gaussian variance must be positive");
        }
        break;
    }
  }
}

}  // namespace

const VariableSpec& HybridModel::var(VarId id) const {
  int n = num_state_vars();
  return id < n ? state_vars[static_cast<size_t>(id)] : action_vars[static_cast<size_t>(id - n)];
}

VarId HybridModel::var_id(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

const Cpf& HybridModel::cpf_for(VarId state_var) const {
  return cpfs[static_cast<size_t>(state_var)];
}

std::vector<std::string> HybridModel::bind() {
  std::vector<std::string> out;
  bound_ = false;
  index_.clear();

  auto declare = [&](const VariableSpec& v, VarId id) {
    if (v.name.empty()) out.push_back("variable with empty name");
    if (v.kind == VarKind::discrete && v.domain_size < 2)
      out.push_back("variable '" + v.name + "': discrete domain_size must be >= 2");
    if (v.kind == VarKind::continuous && v.domain_size != 0)
      out.push_back("variable '" + v.name + "': continuous variables take no domain_size");
    if (!index_.emplace(v.name, id).second)
      out.push_back("variable '" + v.name + "': duplicate name");
  };
  for (size_t i = 0; i < state_vars.size(); ++i) declare(state_vars[i], static_cast<VarId>(i));
  for (size_t i = 0; i < action_vars.size(); ++i)
    declare(action_vars[i], static_cast<VarId>(state_vars.size() + i));

  if (!(discount >= 0.0 && discount < 1.0))
    out.push_back("discount: must lie in [0,1), got " + std::to_string(discount));

  // one CPF per state variable, child kind matching
  std::vector<int> owner(state_vars.size(), -1);
  bool cpfs_ok = true;
  for (size_t c = 0; c < cpfs.size(); ++c) {
    const std::string& child = cpf_child(cpfs[c]);
    VarId id = var_id(child);
    if (id < 0 || !is_state(id)) {
      out.push_back("cpf for '" + child + "': child is not a state variable");
      cpfs_ok = false;
      continue;
    }
    bool is_cont_cpf = !std::holds_alternative<DiscriminantCpf>(cpfs[c]);
    bool is_cont_var = var(id).kind == VarKind::continuous;
    if (is_cont_cpf != is_cont_var) {
      out.push_back("cpf for '" + child + "': CPF type does not match the variable kind");
      cpfs_ok = false;
    }
    if (owner[static_cast<size_t>(id)] >= 0) {
      out.push_back("cpf for '" + child + "': duplicate CPF for this variable");
      cpfs_ok = false;
    }
    owner[static_cast<size_t>(id)] = static_cast<int>(c);
  }
  for (size_t i = 0; i < state_vars.size(); ++i)
    if (owner[i] < 0) {
      out.push_back("state variable '" + state_vars[i].name + "': no CPF");
      cpfs_ok = false;
    }
  if (cpfs_ok && cpfs.size() == state_vars.size()) {
    std::vector<Cpf> aligned;
    aligned.reserve(cpfs.size());
    for (size_t i = 0; i < state_vars.size(); ++i)
      aligned.push_back(std::move(cpfs[static_cast<size_t>(owner[i])]));
    cpfs = std::move(aligned);
  }

  for (auto& cpf : cpfs) {
    const std::string& child = cpf_child(cpf);
    if (auto* b = std::get_if<BetaCpf>(&cpf)) {
      if (!(b->floor > 0.0)) out.push_back("cpf for '" + child + "': floor must be positive");
      bind_scoped(*this, b->h1, "cpf for '" + child + "' (h1)", out);
      bind_scoped(*this, b->h2, "cpf for '" + child + "' (h2)", out);
    } else if (auto* m = std::get_if<MixtureBetaCpf>(&cpf)) {
      if (m->components.empty())
        out.push_back("cpf for '" + child + "': mixture needs at least one component");
      double wsum = 0.0;
      for (size_t k = 0; k < m->components.size(); ++k) {
        auto& comp = m->components[k];
        if (!(comp.weight > 0.0))
          out.push_back("cpf for '" + child + "': mixture weights must be positive");
        wsum += comp.weight;
        if (!(comp.beta.floor > 0.0))
          out.push_back("cpf for '" + child + "': floor must be positive");
        std::string where = "cpf for '" + child + "' (component " + std::to_string(k) + ")";
        bind_scoped(*this, comp.beta.h1, where + " h1", out);
        bind_scoped(*this, comp.beta.h2, where + " h2", out);
      }
      if (!m->components.empty() && std::fabs(wsum - 1.0) > 1e-9)
        out.push_back("cpf for '" + child + "': mixture weights sum to " + std::to_string(wsum) +
                      ", expected 1");
    } else if (auto* d = std::get_if<DiscriminantCpf>(&cpf)) {
      if (!(d->floor > 0.0)) out.push_back("cpf for '" + child + "': floor must be positive");
      VarId id = var_id(child);
      if (id >= 0 && is_state(id) && var(id).kind == VarKind::discrete &&
          static_cast<int>(d->discriminants.size()) != var(id).domain_size)
        out.push_back("cpf for '" + child + "': needs one discriminant per domain value (" +
                      std::to_string(var(id).domain_size) + "), got " +
                      std::to_string(d->discriminants.size()));
      for (size_t j = 0; j < d->discriminants.size(); ++j)
        bind_scoped(*this, d->discriminants[j],
                    "cpf for '" + child + "' (discriminant " + std::to_string(j) + ")", out);
    }
  }

  for (size_t j = 0; j < rewards.size(); ++j)
    bind_scoped(*this, rewards[j], "reward factor " + std::to_string(j), out);

  bound_ = out.empty();
  return out;
}

std::vector<std::string> validate_model(HybridModel& model) { return model.bind(); }

Point make_point(const HybridModel& model, std::span<const double> state,
                 std::span<const double> action) {
  if (static_cast<int>(state.size()) != model.num_state_vars() ||
      static_cast<int>(action.size()) != model.num_action_vars())
    throw MisuseError("make_point: assignment sizes do not match the model");
  Point p(static_cast<size_t>(model.num_vars()));
  std::copy(state.begin(), state.end(), p.begin());
  std::copy(action.begin(), action.end(), p.begin() + model.num_state_vars());
  return p;
}

void check_point(const HybridModel& model, std::span<const double> point) {
  if (static_cast<int>(point.size()) != model.num_vars())
    throw MisuseError("point size does not match the model");
  for (int i = 0; i < model.num_vars(); ++i) {
    const auto& v = model.var(i);
    double x = point[static_cast<size_t>(i)];
    if (v.kind == VarKind::continuous) {
      if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("variable '" + v.name + "' outside [0,1]: " + std::to_string(x));
    } else {
      int k = static_cast<int>(x);
      if (static_cast<double>(k) != x || k < 0 || k >= v.domain_size)
        throw std::domain_error("variable '" + v.name + "' outside its domain: " +
                                std::to_string(x));
    }
  }
}

static void require_bound(const HybridModel& model) {
  if (!model.bound()) throw MisuseError("model is not bound; call validate_model first");
}

double eval_reward(const HybridModel& model, std::span<const double> point) {
  require_bound(model);
  check_point(model, point);
  double r = 0.0;
  for (const auto& f : model.rewards) r += f.eval(point);
  return r;
}

double eval_reward(const HybridModel& model, std::span<const double> state,
                   std::span<const double> action) {
  Point p = make_point(model, state, action);
  return eval_reward(model, p);
}

double transition_density(const HybridModel& model, std::span<const double> next_state,
                          std::span<const double> point) {
  require_bound(model);
  check_point(model, point);
  if (static_cast<int>(next_state.size()) != model.num_state_vars())
    throw MisuseError("transition_density: next-state size does not match the model");
  double density = 1.0;
  for (int i = 0; i < model.num_state_vars(); ++i) {
    const auto& v = model.state_vars[static_cast<size_t>(i)];
    double xn = next_state[static_cast<size_t>(i)];
    if (v.kind == VarKind::continuous) {
      if (!(xn >= 0.0 && xn <= 1.0))
        throw std::domain_error("next value of '" + v.name + "' outside [0,1]");
      density *= std::visit(
          [&](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, DiscriminantCpf>)
              return 0.0;  // unreachable: kind checked at bind
            else
              return c.density(xn, point);
          },
          model.cpf_for(i));
    } else {
      int k = static_cast<int>(xn);
      if (static_cast<double>(k) != xn || k < 0 || k >= v.domain_size)
        throw std::domain_error("next value of '" + v.name + "' outside its domain");
      const auto& d = std::get<DiscriminantCpf>(model.cpf_for(i));
      thread_local std::vector<double> p;
      p.resize(d.discriminants.size());
      d.probabilities(point, p);
      density *= p[static_cast<size_t>(k)];
    }
  }
  return density;
}

std::vector<double> sample_transition(const HybridModel& model, std::span<const double> point,
                                      Rng& rng) {
  require_bound(model);
  check_point(model, point);
  std::vector<double> next(static_cast<size_t>(model.num_state_vars()));
  for (int i = 0; i < model.num_state_vars(); ++i) {
    next[static_cast<size_t>(i)] = std::visit(
        [&](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, DiscriminantCpf>)
            return static_cast<double>(c.sample(point, rng));
          else
            return c.sample(point, rng);
        },
        model.cpf_for(i));
  }
  return next;
}

double reward_magnitude_bound(const HybridModel& model) {
  double total = 0.0;
  for (const auto& f : model.rewards)
    total += std::max(std::fabs(f.lower_bound()), std::fabs(f.upper_bound()));
  return total;
}

}  // namespace halp
