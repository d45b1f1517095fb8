#include "halp/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "halp/rng.hpp"
#include "halp/threading.hpp"

namespace halp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotEps = 1e-10;
constexpr double kCostEps = 1e-9;
constexpr double kPhase1Eps = 1e-7;
constexpr int kMaxPivots = 200000;
constexpr int kBlandTrigger = 40;

/// Dense tableau for min c.x, A x = b, x >= 0, b >= 0.
struct Tableau {
  size_t m = 0, n = 0;           // rows, columns (excluding rhs)
  std::vector<double> t;         // m x (n + 1), row-major; last column is rhs
  std::vector<int> basis;        // basic column per row
  std::vector<char> blocked;     // columns barred from entering

  double& at(size_t r, size_t c) { return t[r * (n + 1) + c]; }
  double at(size_t r, size_t c) const { return t[r * (n + 1) + c]; }
  double& rhs(size_t r) { return t[r * (n + 1) + n]; }
  double rhs(size_t r) const { return t[r * (n + 1) + n]; }

  void pivot(size_t pr, size_t pc) {
    double* prow = &t[pr * (n + 1)];
    double inv = 1.0 / prow[pc];
    for (size_t c = 0; c <= n; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (size_t r = 0; r < m; ++r) {
      if (r == pr) continue;
      double* row = &t[r * (n + 1)];
      double f = row[pc];
      if (f == 0.0) continue;
      for (size_t c = 0; c <= n; ++c) row[c] -= f * prow[c];
      row[pc] = 0.0;
    }
    basis[pr] = static_cast<int>(pc);
  }
};

enum class PhaseOutcome { optimal, unbounded, iteration_cap };

/// Runs primal simplex on the tableau against the reduced-cost row `z`
/// (length n + 1; z[n] is the negated objective value and is kept updated).
PhaseOutcome run_simplex(Tableau& tb, std::vector<double>& z) {
  int degenerate_streak = 0;
  bool bland = false;
  for (int iter = 0; iter < kMaxPivots; ++iter) {
    // entering column
    size_t pc = tb.n;
    double best = -kCostEps;
    for (size_t c = 0; c < tb.n; ++c) {
      if (tb.blocked[c]) continue;
      double zc = z[c];
      if (zc < best) {
        if (bland) {
          pc = c;
          break;
        }
        best = zc;
        pc = c;
      }
    }
    if (pc == tb.n) return PhaseOutcome::optimal;

    // ratio test (ties to the lowest basis index, anti-cycling)
    size_t pr = tb.m;
    double best_ratio = kInf;
    for (size_t r = 0; r < tb.m; ++r) {
      double a = tb.at(r, pc);
      if (a > kPivotEps) {
        double ratio = tb.rhs(r) / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && (pr == tb.m || tb.basis[r] < tb.basis[pr]))) {
          best_ratio = ratio;
          pr = r;
        }
      }
    }
    if (pr == tb.m) return PhaseOutcome::unbounded;

    if (best_ratio < 1e-12) {
      if (++degenerate_streak > kBlandTrigger) bland = true;
    } else {
      degenerate_streak = 0;
      bland = false;
    }

    // pivot and update the cost row
    tb.pivot(pr, pc);
    double f = z[pc];
    if (f != 0.0) {
      const double* prow = &tb.t[pr * (tb.n + 1)];
      for (size_t c = 0; c <= tb.n; ++c) z[c] -= f * prow[c];
      z[pc] = 0.0;
    }
  }
  return PhaseOutcome::iteration_cap;
}

std::vector<double> reduced_costs(const Tableau& tb, const std::vector<double>& cost) {
  std::vector<double> z(tb.n + 1, 0.0);
  for (size_t c = 0; c < tb.n; ++c) z[c] = cost[c];
  for (size_t r = 0; r < tb.m; ++r) {
    double cb = cost[static_cast<size_t>(tb.basis[r])];
    if (cb == 0.0) continue;
    for (size_t c = 0; c <= tb.n; ++c) z[c] -= cb * tb.at(r, c);
  }
  return z;
}

}  // namespace

void LinearProgram::add_constraint(std::vector<double> a, double b) {
  constraints.push_back({std::move(a), b});
}

LpSolution solve_lp(const LinearProgram& lp) {
  const size_t nv = lp.objective.size();
  if (lp.lower.size() != nv || lp.upper.size() != nv)
    throw MisuseError("solve_lp: bound vectors do not match the objective dimension");
  for (const auto& c : lp.constraints)
    if (c.a.size() != nv)
      throw MisuseError("solve_lp: constraint dimension does not match the objective");
  for (size_t i = 0; i < nv; ++i)
    if (lp.lower[i] > lp.upper[i]) throw MisuseError("solve_lp: lower bound above upper bound");

  // Variable transform to x >= 0. Each original variable maps to one or two
  // standard-form columns: w = base + sign * x[col] (+ optionally - x[col2]).
  struct VarMap {
    double base = 0.0;
    double sign = 1.0;
    size_t col = 0;
    int col_neg = -1;             // for free variables: w = x[col] - x[col_neg]
    double upper_range = kInf;    // finite => extra row x[col] <= upper_range
  };
  std::vector<VarMap> vmap(nv);
  size_t ns = 0;
  for (size_t i = 0; i < nv; ++i) {
    double lo = lp.lower[i], hi = lp.upper[i];
    VarMap& v = vmap[i];
    if (std::isfinite(lo)) {
      v.base = lo;
      v.sign = 1.0;
      v.col = ns++;
      if (std::isfinite(hi)) v.upper_range = hi - lo;
    } else if (std::isfinite(hi)) {
      v.base = hi;
      v.sign = -1.0;
      v.col = ns++;
    } else {
      v.col = ns++;
      v.col_neg = static_cast<int>(ns++);
    }
  }

  // Transformed rows: original constraints plus upper-range rows, normalized
  // so that rhs >= 0. A row flipped during normalization turns into "<=" and
  // its slack (+1) can start basic; an unflipped ">=" row gets a surplus (-1)
  // and needs an artificial.
  struct Row {
    std::vector<double> a;  // over structural columns
    double b = 0.0;
    bool flipped = false;
  };
  std::vector<Row> rows;
  rows.reserve(lp.constraints.size() + nv);
  auto push_row = [&](Row r) {
    if (r.b < 0.0) {
      for (auto& a : r.a) a = -a;
      r.b = -r.b;
      r.flipped = true;
    }
    rows.push_back(std::move(r));
  };
  for (const auto& c : lp.constraints) {
    Row r;
    r.a.assign(ns, 0.0);
    r.b = c.b;
    for (size_t i = 0; i < nv; ++i) {
      double coef = c.a[i];
      if (coef == 0.0) continue;
      const VarMap& v = vmap[i];
      r.b -= coef * v.base;
      r.a[v.col] += coef * v.sign;
      if (v.col_neg >= 0) r.a[static_cast<size_t>(v.col_neg)] -= coef;
    }
    push_row(std::move(r));
  }
  for (size_t i = 0; i < nv; ++i) {
    if (!std::isfinite(vmap[i].upper_range)) continue;
    Row r;
    r.a.assign(ns, 0.0);
    r.a[vmap[i].col] = -1.0;  // x <= upper encoded as -x >= -upper
    r.b = -vmap[i].upper_range;
    push_row(std::move(r));
  }

  const size_t m = rows.size();
  size_t n_art = 0;
  for (const auto& r : rows)
    if (!r.flipped) ++n_art;

  Tableau tb;
  tb.m = m;
  tb.n = ns + m + n_art;
  tb.t.assign(m * (tb.n + 1), 0.0);
  tb.basis.assign(m, -1);
  tb.blocked.assign(tb.n, 0);

  std::vector<double> phase1_cost(tb.n, 0.0);
  size_t next_art = ns + m;
  for (size_t r = 0; r < m; ++r) {
    for (size_t c = 0; c < ns; ++c) tb.at(r, c) = rows[r].a[c];
    tb.rhs(r) = rows[r].b;
    if (rows[r].flipped) {
      tb.at(r, ns + r) = 1.0;  // slack, starts basic
      tb.basis[r] = static_cast<int>(ns + r);
    } else {
      tb.at(r, ns + r) = -1.0;  // surplus
      size_t ac = next_art++;
      tb.at(r, ac) = 1.0;
      tb.basis[r] = static_cast<int>(ac);
      phase1_cost[ac] = 1.0;
    }
  }

  LpSolution out;

  // Phase 1
  if (n_art > 0) {
    std::vector<double> z = reduced_costs(tb, phase1_cost);
    PhaseOutcome res = run_simplex(tb, z);
    if (res == PhaseOutcome::iteration_cap)
      throw BudgetError("solve_lp: simplex iteration cap exceeded in phase 1");
    double infeas = -z[tb.n];  // phase-1 objective value
    if (infeas > kPhase1Eps) {
      out.status = LpStatus::infeasible;
      return out;
    }
    // Drive remaining artificials out of the basis where possible.
    for (size_t r = 0; r < tb.m; ++r) {
      if (tb.basis[r] < static_cast<int>(ns + m)) continue;
      size_t pc = tb.n;
      for (size_t c = 0; c < ns + m; ++c)
        if (std::fabs(tb.at(r, c)) > kPivotEps) {
          pc = c;
          break;
        }
      if (pc < tb.n) tb.pivot(r, pc);
      // else: redundant row; the artificial stays basic at zero
    }
    for (size_t c = ns + m; c < tb.n; ++c) tb.blocked[c] = 1;
  }

  // Phase 2
  std::vector<double> cost(tb.n, 0.0);
  for (size_t i = 0; i < nv; ++i) {
    const VarMap& v = vmap[i];
    cost[v.col] += lp.objective[i] * v.sign;
    if (v.col_neg >= 0) cost[static_cast<size_t>(v.col_neg)] -= lp.objective[i];
  }
  std::vector<double> z = reduced_costs(tb, cost);
  PhaseOutcome res = run_simplex(tb, z);
  if (res == PhaseOutcome::iteration_cap)
    throw BudgetError("solve_lp: simplex iteration cap exceeded in phase 2");
  if (res == PhaseOutcome::unbounded) {
    out.status = LpStatus::unbounded;
    return out;
  }

  std::vector<double> x(tb.n, 0.0);
  for (size_t r = 0; r < tb.m; ++r)
    if (tb.basis[r] >= 0) x[static_cast<size_t>(tb.basis[r])] = tb.rhs(r);

  out.status = LpStatus::optimal;
  out.w.assign(nv, 0.0);
  for (size_t i = 0; i < nv; ++i) {
    const VarMap& v = vmap[i];
    double val = v.base + v.sign * x[v.col];
    if (v.col_neg >= 0) val -= x[static_cast<size_t>(v.col_neg)];
    out.w[i] = val;
  }
  out.objective = 0.0;
  for (size_t i = 0; i < nv; ++i) out.objective += lp.objective[i] * out.w[i];
  return out;
}

std::string to_lp_text(const LinearProgram& lp) {
  std::ostringstream os;
  os.precision(17);
  auto term = [&](double c, size_t i, bool first) {
    if (c >= 0 && !first) os << " + ";
    if (c < 0) os << (first ? "-" : " - ");
    os << std::fabs(c) << " w" << i;
  };
  os << "Minimize\n obj:";
  bool first = true;
  for (size_t i = 0; i < lp.objective.size(); ++i) {
    if (lp.objective[i] == 0.0) continue;
    os << " ";
    term(lp.objective[i], i, first);
    first = false;
  }
  if (first) os << " 0 w0";
  os << "\nSubject To\n";
  for (size_t r = 0; r < lp.constraints.size(); ++r) {
    os << " c" << r << ":";
    first = true;
    for (size_t i = 0; i < lp.constraints[r].a.size(); ++i) {
      if (lp.constraints[r].a[i] == 0.0) continue;
      os << " ";
      term(lp.constraints[r].a[i], i, first);
      first = false;
    }
    if (first) os << " 0 w0";
    os << " >= " << lp.constraints[r].b << "\n";
  }
  os << "Bounds\n";
  for (size_t i = 0; i < lp.objective.size(); ++i)
    os << " " << lp.lower[i] << " <= w" << i << " <= " << lp.upper[i] << "\n";
  os << "End\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// constraint oracle

uint64_t ConstraintOracle::num_points() const {
  uint64_t n = 1;
  for (int s : axis_sizes()) n *= static_cast<uint64_t>(s);
  return n;
}

void ConstraintOracle::decode(uint64_t flat, std::span<int> z) const {
  const auto& sizes = axis_sizes();
  for (size_t i = sizes.size(); i-- > 0;) {
    z[i] = static_cast<int>(flat % static_cast<uint64_t>(sizes[i]));
    flat /= static_cast<uint64_t>(sizes[i]);
  }
}

uint64_t ConstraintOracle::encode(std::span<const int> z) const {
  const auto& sizes = axis_sizes();
  uint64_t flat = 0;
  for (size_t i = 0; i < sizes.size(); ++i)
    flat = flat * static_cast<uint64_t>(sizes[i]) + static_cast<uint64_t>(z[i]);
  return flat;
}

double ConstraintOracle::signed_slack(std::span<const double> w, std::span<const int> z) const {
  thread_local std::vector<double> coeffs;
  coeffs.resize(static_cast<size_t>(num_weights()));
  double rhs = 0.0;
  row(z, coeffs, rhs);
  double dot = 0.0;
  for (size_t i = 0; i < coeffs.size(); ++i) dot += coeffs[i] * w[i];
  return dot - rhs;
}

double ConstraintOracle::deficit(std::span<const double> w, std::span<const int> z) const {
  return -signed_slack(w, z);
}

std::pair<double, uint64_t> ConstraintOracle::max_deficit_sweep(std::span<const double> w) const {
  const uint64_t n = num_points();
  const size_t dims = axis_sizes().size();
  struct Best {
    double deficit = -kInf;
    uint64_t flat = 0;
  };
  int chunks = std::min<int64_t>(64, static_cast<int64_t>(n));
  std::vector<Best> best(static_cast<size_t>(std::max(chunks, 1)));
  parallel_chunks(static_cast<int64_t>(n), chunks, [&](int c, int64_t begin, int64_t end) {
    std::vector<int> z(dims);
    Best b;
    if (begin < end) decode(static_cast<uint64_t>(begin), z);
    const auto& sizes = axis_sizes();
    for (int64_t f = begin; f < end; ++f) {
      double d = deficit(w, z);
      if (d > b.deficit) {
        b.deficit = d;
        b.flat = static_cast<uint64_t>(f);
      }
      for (size_t i = dims; i-- > 0;) {  // odometer
        if (++z[i] < sizes[i]) break;
        z[i] = 0;
      }
    }
    best[static_cast<size_t>(c)] = b;
  });
  Best overall;
  for (const auto& b : best)
    if (b.deficit > overall.deficit ||
        (b.deficit == overall.deficit && b.flat < overall.flat))
      overall = b;
  return {overall.deficit, overall.flat};
}

std::pair<double, uint64_t> greedy_max_deficit(const ConstraintOracle& oracle,
                                               std::span<const double> w, int restarts,
                                               int max_passes, uint64_t seed) {
  const auto& sizes = oracle.axis_sizes();
  const size_t dims = sizes.size();
  double best_deficit = -kInf;
  uint64_t best_flat = 0;
  std::vector<int> z(dims);
  for (int r = 0; r < restarts; ++r) {
    Rng rng(substream_seed(seed, static_cast<uint64_t>(r)));
    for (size_t i = 0; i < dims; ++i)
      z[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sizes[i])));
    double d = oracle.deficit(w, z);
    for (int pass = 0; pass < max_passes; ++pass) {
      bool improved = false;
      for (size_t axis = 0; axis < dims; ++axis) {
        int keep = z[axis];
        int arg = keep;
        double local = d;
        for (int v = 0; v < sizes[axis]; ++v) {
          if (v == keep) continue;
          z[axis] = v;
          double dv = oracle.deficit(w, z);
          if (dv > local) {
            local = dv;
            arg = v;
          }
        }
        z[axis] = arg;
        if (local > d) {
          d = local;
          improved = true;
        }
      }
      if (!improved) break;
    }
    uint64_t flat = oracle.encode(z);
    if (d > best_deficit || (d == best_deficit && flat < best_flat)) {
      best_deficit = d;
      best_flat = flat;
    }
  }
  return {best_deficit, best_flat};
}

GenerationResult solve_with_generation(const std::vector<double>& objective,
                                       const ConstraintOracle& oracle,
                                       std::span<const double> lower, std::span<const double> upper,
                                       SearchMode mode, const GenerationOptions& opts) {
  const int k = oracle.num_weights();
  if (static_cast<int>(objective.size()) != k)
    throw MisuseError("solve_with_generation: objective size does not match the oracle");
  if (!(opts.tol > 0.0)) throw MisuseError("solve_with_generation: tol must be positive");

  const uint64_t n_points = oracle.num_points();
  const size_t dims = oracle.axis_sizes().size();

  LinearProgram lp;
  lp.objective = objective;
  lp.lower.assign(lower.begin(), lower.end());
  lp.upper.assign(upper.begin(), upper.end());

  std::set<uint64_t> added;
  std::vector<int> z(dims);
  std::vector<double> coeffs(static_cast<size_t>(k));
  auto add_point = [&](uint64_t flat) {
    if (!added.insert(flat).second) return false;
    oracle.decode(flat, z);
    double rhs = 0.0;
    oracle.row(z, coeffs, rhs);
    lp.add_constraint(std::vector<double>(coeffs.begin(), coeffs.end()), rhs);
    return true;
  };

  // initial seed: a small uniform sample of grid points
  {
    Rng rng(substream_seed(opts.seed, 0x5eedull));
    uint64_t want = std::min<uint64_t>(static_cast<uint64_t>(opts.initial_samples), n_points);
    std::set<uint64_t> sample;
    int guard = 0;
    while (sample.size() < want && guard++ < opts.initial_samples * 64)
      sample.insert(rng.uniform_int(n_points));
    for (uint64_t f : sample) add_point(f);
  }

  GenerationResult result;
  for (int iter = 0;; ++iter) {
    // TODO: warm-start from the previous basis instead of a cold two-phase
    // solve after each added row (dual simplex step on the new constraint)
    LpSolution sol = solve_lp(lp);
    if (sol.status == LpStatus::infeasible)
      throw std::runtime_error(
          "solve_with_generation: internal error, generated LP became infeasible");
    if (sol.status == LpStatus::unbounded)
      throw MisuseError("solve_with_generation: LP unbounded; supply finite box bounds");
    result.w = sol.w;
    result.objective = sol.objective;
    result.objective_history.push_back(sol.objective);
    result.constraints_added = static_cast<int>(lp.constraints.size());

    auto [deficit, flat] =
        mode == SearchMode::exhaustive
            ? oracle.max_deficit_sweep(sol.w)
            : greedy_max_deficit(oracle, sol.w, opts.greedy_restarts, opts.greedy_max_passes,
                                 substream_seed(opts.seed, 0x9ull + static_cast<uint64_t>(iter)));

    if (deficit <= opts.tol) {
      if (mode == SearchMode::greedy_coordinate && opts.exhaustive_verify_after_greedy) {
        auto [vd, vf] = oracle.max_deficit_sweep(sol.w);
        if (vd > opts.tol) {
          if (static_cast<int>(lp.constraints.size()) >= opts.max_constraints) {
            result.status = GenStatus::budget_exceeded;
            result.max_violation = std::max(0.0, vd);
            return result;
          }
          add_point(vf);
          continue;
        }
        deficit = vd;
      }
      result.status = GenStatus::ok;
      result.max_violation = std::max(0.0, deficit);
      return result;
    }

    if (static_cast<int>(lp.constraints.size()) >= opts.max_constraints) {
      result.status = GenStatus::budget_exceeded;
      result.max_violation = std::max(0.0, deficit);
      return result;
    }
    if (!add_point(flat)) {
      // The most violated point is already in the working set; the violation
      // is at the LP feasibility tolerance level, so treat it as converged.
      result.status = deficit <= std::max(opts.tol, 1e-7) ? GenStatus::ok
                                                          : GenStatus::budget_exceeded;
      result.max_violation = std::max(0.0, deficit);
      return result;
    }
  }
}

}  // namespace halp
