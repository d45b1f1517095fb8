#include "halp/halp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "halp/rng.hpp"
#include "halp/threading.hpp"

namespace halp {

namespace {

std::vector<int> table_sizes(const EpsGrid& grid, const std::vector<int>& axis_pos) {
  std::vector<int> sizes;
  sizes.reserve(axis_pos.size());
  for (int p : axis_pos) sizes.push_back(grid.axes[static_cast<size_t>(p)].size());
  return sizes;
}

TermTable build_table(const HybridModel& model, const EpsGrid& grid, const ScopedEvaluator& term) {
  TermTable table;
  std::vector<int> axis_of_var(static_cast<size_t>(model.num_vars()), -1);
  for (size_t i = 0; i < grid.axes.size(); ++i)
    axis_of_var[static_cast<size_t>(grid.axes[i].var)] = static_cast<int>(i);
  for (VarId v : term.scope) {
    int pos = axis_of_var[static_cast<size_t>(v)];
    if (pos < 0)
      throw MisuseError("term scope references variable '" + model.var(v).name +
                        "' outside the grid");
    table.axis_pos.push_back(pos);
  }
  std::sort(table.axis_pos.begin(), table.axis_pos.end());

  std::vector<int> sizes = table_sizes(grid, table.axis_pos);
  size_t total = 1;
  for (int s : sizes) total *= static_cast<size_t>(s);
  table.strides.assign(sizes.size(), 1);
  for (size_t i = sizes.size(); i-- > 1;)
    table.strides[i - 1] = table.strides[i] * static_cast<uint64_t>(sizes[i]);
  table.values.resize(total);

  // scratch point: every grid variable starts at its first grid value
  Point point(static_cast<size_t>(model.num_vars()), 0.0);
  std::vector<int> zeros(grid.axes.size(), 0);
  grid.fill_point(zeros, point);

  std::vector<int> assign(sizes.size(), 0);
  for (size_t flat = 0; flat < total; ++flat) {
    for (size_t i = 0; i < sizes.size(); ++i) {
      const auto& axis = grid.axes[static_cast<size_t>(table.axis_pos[i])];
      point[static_cast<size_t>(axis.var)] = axis.values[static_cast<size_t>(assign[i])];
    }
    table.values[flat] = term.fn(point);
    for (size_t i = sizes.size(); i-- > 0;) {
      if (++assign[i] < sizes[i]) break;
      assign[i] = 0;
    }
  }
  return table;
}

std::pair<double, uint64_t> sweep_tables(const std::vector<int>& sizes,
                                         const std::vector<TermTable>& tables, double constant) {
  uint64_t n = 1;
  for (int s : sizes) n *= static_cast<uint64_t>(s);
  struct Best {
    double deficit = -std::numeric_limits<double>::infinity();
    uint64_t flat = 0;
  };
  int chunks = static_cast<int>(std::min<uint64_t>(64, n));
  std::vector<Best> best(static_cast<size_t>(std::max(chunks, 1)));
  parallel_chunks(static_cast<int64_t>(n), chunks, [&](int c, int64_t begin, int64_t end) {
    std::vector<int> z(sizes.size());
    uint64_t f = static_cast<uint64_t>(begin);
    uint64_t rem = f;
    for (size_t i = sizes.size(); i-- > 0;) {
      z[i] = static_cast<int>(rem % static_cast<uint64_t>(sizes[i]));
      rem /= static_cast<uint64_t>(sizes[i]);
    }
    Best b;
    for (int64_t it = begin; it < end; ++it) {
      double sum = constant;
      for (const auto& t : tables) sum += t.value_at(z);
      double deficit = -sum;
      if (deficit > b.deficit) {
        b.deficit = deficit;
        b.flat = static_cast<uint64_t>(it);
      }
      for (size_t i = sizes.size(); i-- > 0;) {
        if (++z[i] < sizes[i]) break;
        z[i] = 0;
      }
    }
    best[static_cast<size_t>(c)] = b;
  });
  Best overall;
  for (const auto& b : best)
    if (b.deficit > overall.deficit || (b.deficit == overall.deficit && b.flat < overall.flat))
      overall = b;
  return {overall.deficit, overall.flat};
}

/// Merge weighted F tables and negated reward tables by identical scope.
void combine_terms(const HalpProgram& program, std::span<const double> w,
                   std::vector<TermTable>& out, double& constant) {
  out.clear();
  constant = 0.0;
  std::map<std::vector<int>, size_t> slot;
  auto fold = [&](const TermTable& t, double scale) {
    if (t.axis_pos.empty()) {
      constant += scale * t.values[0];
      return;
    }
    auto it = slot.find(t.axis_pos);
    if (it == slot.end()) {
      slot.emplace(t.axis_pos, out.size());
      out.push_back(t);
      for (auto& v : out.back().values) v *= scale;
    } else {
      auto& dst = out[it->second].values;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += scale * t.values[i];
    }
  };
  for (size_t i = 0; i < program.f_terms.size(); ++i) fold(program.f_terms[i], w[i]);
  for (const auto& r : program.r_terms) fold(r, -1.0);
}

ScopedEvaluator reward_evaluator(const ScopedFunction& f) {
  auto fp = std::make_shared<ScopedFunction>(f);
  ScopedEvaluator ev;
  ev.scope = fp->scope_ids();
  std::sort(ev.scope.begin(), ev.scope.end());
  ev.fn = [fp](std::span<const double> point) { return fp->eval(point); };
  return ev;
}

void require_bound_basis(const std::vector<BasisFunction>& basis) {
  for (const auto& f : basis)
    if (f.discrete.values.empty() || f.discrete.ids.size() != f.discrete.scope.size())
      throw MisuseError("basis set is not bound; call bind_basis_set first");
}

}  // namespace

std::vector<TermTable> build_term_tables(const HybridModel& model, const EpsGrid& grid,
                                         std::span<const ScopedEvaluator> terms) {
  std::vector<TermTable> tables;
  tables.reserve(terms.size());
  for (const auto& t : terms) tables.push_back(build_table(model, grid, t));
  return tables;
}

HalpProgram build_halp(const HybridModel& model, const std::vector<BasisFunction>& basis,
                       const StateRelevanceDensity& psi, double eps) {
  if (!model.bound()) throw MisuseError("build_halp: model is not bound");
  require_bound_basis(basis);
  if (basis.empty()) throw MisuseError("build_halp: basis set is empty");

  HalpProgram program;
  program.model = &model;
  program.basis = &basis;
  program.grid = make_grid(model, eps, GridVars::state_and_action);

  program.alphas.reserve(basis.size());
  for (const auto& f : basis) program.alphas.push_back(relevance_weight(model, psi, f));

  std::vector<ScopedEvaluator> f_evals;
  f_evals.reserve(basis.size());
  for (const auto& f : basis) f_evals.push_back(constraint_function(model, f));
  program.f_terms = build_term_tables(model, program.grid, f_evals);

  std::vector<ScopedEvaluator> r_evals;
  r_evals.reserve(model.rewards.size());
  for (const auto& r : model.rewards) r_evals.push_back(reward_evaluator(r));
  program.r_terms = build_term_tables(model, program.grid, r_evals);

  program.reward_bound = reward_magnitude_bound(model);
  program.weight_bound = program.reward_bound / (1.0 - model.discount);
  return program;
}

// ---------------------------------------------------------------------------
// oracle

HalpOracle::HalpOracle(const HalpProgram& program) : program_(program) {
  sizes_ = program.grid.sizes();
}

void HalpOracle::row(std::span<const int> z, std::span<double> coeffs, double& rhs) const {
  for (size_t i = 0; i < program_.f_terms.size(); ++i) coeffs[i] = program_.f_terms[i].value_at(z);
  rhs = 0.0;
  for (const auto& r : program_.r_terms) rhs += r.value_at(z);
}

void HalpOracle::refresh_combined(std::span<const double> w) const {
  if (cached_w_.size() == w.size() && std::equal(w.begin(), w.end(), cached_w_.begin())) return;
  cached_w_.assign(w.begin(), w.end());
  combine_terms(program_, w, combined_, combined_constant_);
}

double HalpOracle::deficit(std::span<const double> w, std::span<const int> z) const {
  refresh_combined(w);
  double sum = combined_constant_;
  for (const auto& t : combined_) sum += t.value_at(z);
  return -sum;
}

std::pair<double, uint64_t> HalpOracle::max_deficit_sweep(std::span<const double> w) const {
  refresh_combined(w);
  return sweep_tables(sizes_, combined_, combined_constant_);
}

// ---------------------------------------------------------------------------
// solve / measure / resolution

HalpSolution solve_halp(const HalpProgram& program, SearchMode mode,
                        const SolveHalpOptions& opts) {
  auto start = std::chrono::steady_clock::now();
  HalpOracle oracle(program);
  std::vector<double> lo(program.alphas.size(), -program.weight_bound);
  std::vector<double> hi(program.alphas.size(), program.weight_bound);

  GenerationOptions gen;
  gen.tol = opts.tol;
  gen.seed = opts.seed;
  gen.max_constraints = opts.max_constraints;
  GenerationResult res = solve_with_generation(program.alphas, oracle, lo, hi, mode, gen);

  HalpSolution sol;
  sol.w = res.w;
  sol.objective = res.objective;
  sol.eps = program.grid.eps;
  sol.diagnostics.constraints_added = res.constraints_added;
  sol.diagnostics.status = res.status;
  sol.diagnostics.search = mode;
  if (mode == SearchMode::exhaustive) {
    // the generation loop's final sweep already covered the full grid
    sol.measured_delta = res.max_violation;
    sol.diagnostics.delta_probe = "grid";
  } else {
    sol.measured_delta = measure_infeasibility(
        *program.model, *program.basis, sol.w,
        Probe::sample_probe(opts.sample_probe_points, opts.seed));
    sol.diagnostics.delta_probe = "sample";
  }
  sol.diagnostics.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

Probe Probe::grid_probe(double eps) {
  Probe p;
  p.kind = Kind::grid;
  p.eps = eps;
  return p;
}

Probe Probe::sample_probe(uint64_t n, uint64_t seed) {
  Probe p;
  p.kind = Kind::sample;
  p.samples = n;
  p.seed = seed;
  return p;
}

double measure_infeasibility(const HybridModel& model, const std::vector<BasisFunction>& basis,
                             std::span<const double> w, const Probe& probe) {
  if (!model.bound()) throw MisuseError("measure_infeasibility: model is not bound");
  require_bound_basis(basis);
  if (w.size() != basis.size())
    throw MisuseError("measure_infeasibility: weight count does not match the basis");

  std::vector<ScopedEvaluator> f_evals;
  f_evals.reserve(basis.size());
  for (const auto& f : basis) f_evals.push_back(constraint_function(model, f));

  if (probe.kind == Probe::Kind::grid) {
    EpsGrid grid = make_grid(model, probe.eps, GridVars::state_and_action);
    auto f_tables = build_term_tables(model, grid, f_evals);
    std::vector<ScopedEvaluator> r_evals;
    for (const auto& r : model.rewards) r_evals.push_back(reward_evaluator(r));
    auto r_tables = build_term_tables(model, grid, r_evals);

    HalpProgram scratch;
    scratch.f_terms = std::move(f_tables);
    scratch.r_terms = std::move(r_tables);
    std::vector<TermTable> combined;
    double constant = 0.0;
    combine_terms(scratch, w, combined, constant);
    auto [deficit, flat] = sweep_tables(grid.sizes(), combined, constant);
    (void)flat;
    return std::max(0.0, deficit);
  }

  Rng rng(probe.seed);
  Point point(static_cast<size_t>(model.num_vars()));
  double worst = 0.0;
  for (uint64_t s = 0; s < probe.samples; ++s) {
    for (int v = 0; v < model.num_vars(); ++v) {
      const auto& spec = model.var(v);
      point[static_cast<size_t>(v)] =
          spec.kind == VarKind::continuous
              ? rng.uniform()
              : static_cast<double>(rng.uniform_int(static_cast<uint64_t>(spec.domain_size)));
    }
    double lhs = 0.0;
    for (size_t i = 0; i < f_evals.size(); ++i) lhs += w[i] * f_evals[i].fn(point);
    double deficit = eval_reward(model, point) - lhs;
    if (deficit > worst) worst = deficit;
  }
  return worst;
}

double resolution_for_delta(const HybridModel& model, const std::vector<BasisFunction>& basis,
                            double w_bound, double delta) {
  if (!(delta > 0.0)) throw MisuseError("resolution_for_delta: delta must be positive");
  if (!model.bound()) throw MisuseError("resolution_for_delta: model is not bound");
  require_bound_basis(basis);
  if (w_bound <= 0.0) w_bound = reward_magnitude_bound(model) / (1.0 - model.discount);

  double k_max = 0.0;
  for (const auto& f : basis)
    k_max = std::max(k_max, w_bound * lipschitz_bound_constraint(model, f));
  for (const auto& r : model.rewards) k_max = std::max(k_max, lipschitz_bound(model, r));

  size_t m = basis.size() + model.rewards.size();
  if (!(k_max > 0.0) || m == 0) return 1.0;  // flat terms: any grid covers
  return std::min(1.0, delta / (static_cast<double>(m) * k_max));
}

}  // namespace halp
