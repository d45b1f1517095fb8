#include "halp/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace halp {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
  throw ParseError(origin + ": " + what);
}

const json& need(const json& j, const char* key, const std::string& origin) {
  auto it = j.find(key);
  if (it == j.end()) fail(origin, std::string("missing key '") + key + "'");
  return *it;
}

// ---- expressions ----------------------------------------------------------

ContinuousExpr expr_from_json(const json& j, const std::string& origin) {
  std::string form = need(j, "form", origin).get<std::string>();
  if (form == "constant") {
    return ContinuousExpr::make_constant(need(j, "value", origin).get<double>());
  }
  if (form == "polynomial") {
    std::vector<PolyTerm> terms;
    for (const auto& t : need(j, "terms", origin)) {
      PolyTerm pt;
      pt.coef = need(t, "coef", origin).get<double>();
      for (const auto& d : need(t, "degrees", origin)) pt.degrees.push_back(d.get<int>());
      terms.push_back(std::move(pt));
    }
    return ContinuousExpr::make_polynomial(std::move(terms));
  }
  if (form == "piecewise_linear") {
    std::vector<PwlTerm> terms;
    for (const auto& t : need(j, "terms", origin)) {
      PwlTerm pt;
      pt.var = need(t, "var", origin).get<std::string>();
      pt.knots = need(t, "knots", origin).get<std::vector<double>>();
      pt.values = need(t, "values", origin).get<std::vector<double>>();
      terms.push_back(std::move(pt));
    }
    return ContinuousExpr::make_pwl(std::move(terms));
  }
  if (form == "gaussian_mixture") {
    std::vector<GaussTerm> terms;
    for (const auto& t : need(j, "terms", origin)) {
      GaussTerm gt;
      gt.var = need(t, "var", origin).get<std::string>();
      for (const auto& c : need(t, "components", origin)) {
        GaussComponent gc;
        gc.weight = need(c, "weight", origin).get<double>();
        gc.mean = need(c, "mean", origin).get<double>();
        gc.variance = need(c, "variance", origin).get<double>();
        gt.components.push_back(gc);
      }
      terms.push_back(std::move(gt));
    }
    return ContinuousExpr::make_gauss(std::move(terms));
  }
  fail(origin, "unknown expression form '" + form + "'");
}

json expr_to_json(const ContinuousExpr& e) {
  json j;
  switch (e.form) {
    case ContinuousExpr::Form::constant:
      j["form"] = "constant";
      j["value"] = e.constant;
      break;
    case ContinuousExpr::Form::polynomial: {
      j["form"] = "polynomial";
      json terms = json::array();
      for (const auto& t : e.poly) terms.push_back({{"coef", t.coef}, {"degrees", t.degrees}});
      j["terms"] = std::move(terms);
      break;
    }
    case ContinuousExpr::Form::piecewise_linear: {
      j["form"] = "piecewise_linear";
      json terms = json::array();
      for (const auto& t : e.pwl)
        terms.push_back({{"var", t.var}, {"knots", t.knots}, {"values", t.values}});
      j["terms"] = std::move(terms);
      break;
    }
    case ContinuousExpr::Form::gaussian_mixture: {
      j["form"] = "gaussian_mixture";
      json terms = json::array();
      for (const auto& t : e.gauss) {
        json comps = json::array();
        for (const auto& c : t.components)
          comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
        terms.push_back({{"var", t.var}, {"components", std::move(comps)}});
      }
      j["terms"] = std::move(terms);
      break;
    }
  }
  return j;
}

ScopedFunction scoped_from_json(const json& j, const std::string& origin) {
  ScopedFunction f;
  if (auto it = j.find("discrete_scope"); it != j.end())
    f.discrete_scope = it->get<std::vector<std::string>>();
  if (auto it = j.find("continuous_scope"); it != j.end())
    f.continuous_scope = it->get<std::vector<std::string>>();
  for (const auto& e : need(j, "table", origin)) f.table.push_back(expr_from_json(e, origin));
  return f;
}

json scoped_to_json(const ScopedFunction& f) {
  json j;
  j["discrete_scope"] = f.discrete_scope;
  j["continuous_scope"] = f.continuous_scope;
  json table = json::array();
  for (const auto& e : f.table) table.push_back(expr_to_json(e));
  j["table"] = std::move(table);
  return j;
}

// ---- variables / CPFs -------------------------------------------------------

VariableSpec var_from_json(const json& j, const std::string& origin) {
  VariableSpec v;
  v.name = need(j, "name", origin).get<std::string>();
  std::string kind = need(j, "kind", origin).get<std::string>();
  if (kind == "continuous") {
    v.kind = VarKind::continuous;
  } else if (kind == "discrete") {
    v.kind = VarKind::discrete;
    v.domain_size = need(j, "domain_size", origin).get<int>();
  } else {
    fail(origin, "unknown variable kind '" + kind + "'");
  }
  return v;
}

json var_to_json(const VariableSpec& v) {
  json j;
  j["name"] = v.name;
  j["kind"] = v.kind == VarKind::continuous ? "continuous" : "discrete";
  if (v.kind == VarKind::discrete) j["domain_size"] = v.domain_size;
  return j;
}

BetaCpf beta_from_json(const json& j, const std::string& child, const std::string& origin) {
  BetaCpf b;
  b.child = child;
  b.floor = j.value("floor", 1e-3);
  b.h1 = scoped_from_json(need(j, "h1", origin), origin);
  b.h2 = scoped_from_json(need(j, "h2", origin), origin);
  return b;
}

json beta_to_json(const BetaCpf& b) {
  json j;
  j["floor"] = b.floor;
  j["h1"] = scoped_to_json(b.h1);
  j["h2"] = scoped_to_json(b.h2);
  return j;
}

Cpf cpf_from_json(const json& j, const std::string& origin) {
  std::string child = need(j, "child", origin).get<std::string>();
  std::string type = need(j, "type", origin).get<std::string>();
  if (type == "beta") return beta_from_json(j, child, origin);
  if (type == "mixture_beta") {
    MixtureBetaCpf m;
    m.child = child;
    for (const auto& c : need(j, "components", origin)) {
      MixtureBetaCpf::Component comp;
      comp.weight = need(c, "weight", origin).get<double>();
      comp.beta = beta_from_json(c, child, origin);
      m.components.push_back(std::move(comp));
    }
    return m;
  }
  if (type == "discriminant") {
    DiscriminantCpf d;
    d.child = child;
    d.floor = j.value("floor", 1e-3);
    for (const auto& f : need(j, "discriminants", origin))
      d.discriminants.push_back(scoped_from_json(f, origin));
    return d;
  }
  fail(origin, "unknown cpf type '" + type + "'");
}

json cpf_to_json(const Cpf& cpf) {
  json j;
  if (const auto* b = std::get_if<BetaCpf>(&cpf)) {
    j = beta_to_json(*b);
    j["child"] = b->child;
    j["type"] = "beta";
  } else if (const auto* m = std::get_if<MixtureBetaCpf>(&cpf)) {
    j["child"] = m->child;
    j["type"] = "mixture_beta";
    json comps = json::array();
    for (const auto& c : m->components) {
      json cj = beta_to_json(c.beta);
      cj["weight"] = c.weight;
      comps.push_back(std::move(cj));
    }
    j["components"] = std::move(comps);
  } else {
    const auto& d = std::get<DiscriminantCpf>(cpf);
    j["child"] = d.child;
    j["type"] = "discriminant";
    j["floor"] = d.floor;
    json discs = json::array();
    for (const auto& f : d.discriminants) discs.push_back(scoped_to_json(f));
    j["discriminants"] = std::move(discs);
  }
  return j;
}

json parse_document(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(origin, e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// model files

HybridModel parse_model(const std::string& json_text, const std::string& origin) {
  json j = parse_document(json_text, origin);
  HybridModel model;
  try {
    for (const auto& v : need(j, "state_vars", origin))
      model.state_vars.push_back(var_from_json(v, origin));
    for (const auto& v : need(j, "action_vars", origin))
      model.action_vars.push_back(var_from_json(v, origin));
    for (const auto& c : need(j, "cpfs", origin)) model.cpfs.push_back(cpf_from_json(c, origin));
    for (const auto& r : need(j, "rewards", origin))
      model.rewards.push_back(scoped_from_json(r, origin));
    model.discount = need(j, "discount", origin).get<double>();
  } catch (const json::exception& e) {
    fail(origin, e.what());
  }
  auto violations = model.bind();
  if (!violations.empty()) {
    std::string what = origin + ": model failed validation (" +
                       std::to_string(violations.size()) +
                       " violations, first: " + violations.front() + ")";
    throw ValidationError(what, violations);
  }
  return model;
}

std::string serialize_model(const HybridModel& model) {
  json j;
  json sv = json::array(), av = json::array(), cp = json::array(), rw = json::array();
  for (const auto& v : model.state_vars) sv.push_back(var_to_json(v));
  for (const auto& v : model.action_vars) av.push_back(var_to_json(v));
  for (const auto& c : model.cpfs) cp.push_back(cpf_to_json(c));
  for (const auto& r : model.rewards) rw.push_back(scoped_to_json(r));
  j["state_vars"] = std::move(sv);
  j["action_vars"] = std::move(av);
  j["cpfs"] = std::move(cp);
  j["rewards"] = std::move(rw);
  j["discount"] = model.discount;
  return j.dump(2) + "\n";
}

HybridModel load_model(const std::string& path) { return parse_model(read_file(path), path); }

// ---------------------------------------------------------------------------
// basis files

BasisFile parse_basis(const std::string& json_text, const HybridModel& model,
                      const std::string& origin) {
  json j = parse_document(json_text, origin);
  BasisFile out;
  try {
    for (const auto& b : need(j, "basis", origin)) {
      BasisFunction f;
      f.name = b.value("name", "");
      if (auto it = b.find("discrete_factor"); it != b.end()) {
        if (auto s = it->find("scope"); s != it->end())
          f.discrete.scope = s->get<std::vector<std::string>>();
        f.discrete.values = need(*it, "values", origin).get<std::vector<double>>();
      } else {
        f.discrete.values = {1.0};
      }
      const json& cf = need(b, "continuous_factor", origin);
      std::string type = need(cf, "type", origin).get<std::string>();
      if (type == "monomial") {
        f.kind = ContFactorKind::monomial;
        if (auto d = cf.find("degrees"); d != cf.end())
          for (auto it2 = d->begin(); it2 != d->end(); ++it2) {
            f.monomial.vars.push_back(it2.key());
            f.monomial.degrees.push_back(it2.value().get<int>());
          }
      } else if (type == "piecewise_linear") {
        f.kind = ContFactorKind::piecewise_linear;
        for (const auto& p : need(cf, "factors", origin)) {
          PwlTerm t;
          t.var = need(p, "var", origin).get<std::string>();
          t.knots = need(p, "knots", origin).get<std::vector<double>>();
          t.values = need(p, "values", origin).get<std::vector<double>>();
          f.pwl.parts.push_back(std::move(t));
        }
      } else {
        fail(origin, "unknown continuous_factor type '" + type + "'");
      }
      out.basis.push_back(std::move(f));
    }
    if (auto it = j.find("psi"); it != j.end()) {
      for (auto m = it->begin(); m != it->end(); ++m) {
        Marginal marg;
        std::string type = need(m.value(), "type", origin).get<std::string>();
        if (type == "uniform") {
          marg.kind = Marginal::Kind::uniform;
        } else if (type == "beta") {
          marg.kind = Marginal::Kind::beta;
          marg.a = need(m.value(), "a", origin).get<double>();
          marg.b = need(m.value(), "b", origin).get<double>();
        } else if (type == "categorical") {
          marg.kind = Marginal::Kind::categorical;
          marg.probs = need(m.value(), "probs", origin).get<std::vector<double>>();
        } else {
          fail(origin, "unknown psi marginal type '" + type + "'");
        }
        out.psi.marginals[m.key()] = std::move(marg);
      }
    }
  } catch (const json::exception& e) {
    fail(origin, e.what());
  }
  auto violations = bind_basis_set(model, out.basis);
  if (!violations.empty())
    throw ValidationError(origin + ": basis failed validation (first: " + violations.front() + ")",
                          violations);
  return out;
}

std::string serialize_basis(const std::vector<BasisFunction>& basis,
                            const StateRelevanceDensity& psi) {
  json j;
  json arr = json::array();
  for (const auto& f : basis) {
    json b;
    if (!f.name.empty()) b["name"] = f.name;
    b["discrete_factor"] = {{"scope", f.discrete.scope}, {"values", f.discrete.values}};
    if (f.kind == ContFactorKind::monomial) {
      json degrees = json::object();
      for (size_t i = 0; i < f.monomial.vars.size(); ++i)
        degrees[f.monomial.vars[i]] = f.monomial.degrees[i];
      b["continuous_factor"] = {{"type", "monomial"}, {"degrees", std::move(degrees)}};
    } else {
      json parts = json::array();
      for (const auto& p : f.pwl.parts)
        parts.push_back({{"var", p.var}, {"knots", p.knots}, {"values", p.values}});
      b["continuous_factor"] = {{"type", "piecewise_linear"}, {"factors", std::move(parts)}};
    }
    arr.push_back(std::move(b));
  }
  j["basis"] = std::move(arr);
  if (!psi.marginals.empty()) {
    json pj = json::object();
    for (const auto& [name, m] : psi.marginals) {
      json mj;
      switch (m.kind) {
        case Marginal::Kind::uniform:
          mj["type"] = "uniform";
          break;
        case Marginal::Kind::beta:
          mj = {{"type", "beta"}, {"a", m.a}, {"b", m.b}};
          break;
        case Marginal::Kind::categorical:
          mj = {{"type", "categorical"}, {"probs", m.probs}};
          break;
      }
      pj[name] = std::move(mj);
    }
    j["psi"] = std::move(pj);
  }
  return j.dump(2) + "\n";
}

BasisFile load_basis(const std::string& path, const HybridModel& model) {
  return parse_basis(read_file(path), model, path);
}

// ---------------------------------------------------------------------------
// solution files

SolutionFile solution_from(const HalpSolution& sol, const std::string& basis_ref) {
  SolutionFile f;
  f.weights = sol.w;
  f.objective = sol.objective;
  f.eps = sol.eps;
  f.measured_delta = sol.measured_delta;
  f.basis_ref = basis_ref;
  f.constraints_added = sol.diagnostics.constraints_added;
  f.search = sol.diagnostics.search == SearchMode::exhaustive ? "exhaustive" : "greedy";
  f.delta_probe = sol.diagnostics.delta_probe;
  f.status = sol.diagnostics.status == GenStatus::ok ? "optimal" : "budget_exceeded";
  return f;
}

std::string serialize_solution(const SolutionFile& sol) {
  json j;
  j["weights"] = sol.weights;
  j["objective"] = sol.objective;
  j["eps"] = sol.eps;
  j["measured_delta"] = sol.measured_delta;
  j["basis_ref"] = sol.basis_ref;
  j["diagnostics"] = {{"constraints_added", sol.constraints_added},
                      {"search", sol.search},
                      {"delta_probe", sol.delta_probe},
                      {"status", sol.status}};
  return j.dump(2) + "\n";
}

SolutionFile parse_solution(const std::string& json_text, const std::string& origin) {
  json j = parse_document(json_text, origin);
  SolutionFile f;
  try {
    f.weights = need(j, "weights", origin).get<std::vector<double>>();
    f.objective = need(j, "objective", origin).get<double>();
    f.eps = need(j, "eps", origin).get<double>();
    f.measured_delta = need(j, "measured_delta", origin).get<double>();
    f.basis_ref = j.value("basis_ref", "");
    if (auto it = j.find("diagnostics"); it != j.end()) {
      f.constraints_added = it->value("constraints_added", 0);
      f.search = it->value("search", "");
      f.delta_probe = it->value("delta_probe", "");
      f.status = it->value("status", "");
    }
  } catch (const json::exception& e) {
    fail(origin, e.what());
  }
  return f;
}

SolutionFile load_solution(const std::string& path) {
  return parse_solution(read_file(path), path);
}

// ---------------------------------------------------------------------------
// files

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace halp
