#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "halp/types.hpp"

namespace halp {

/// minimize c.w  subject to  a.w >= b per row and lo <= w <= hi.
/// Bounds may be +-infinity.
struct LinearProgram {
  struct Constraint {
    std::vector<double> a;
    double b = 0.0;
  };
  std::vector<double> objective;
  std::vector<Constraint> constraints;
  std::vector<double> lower;
  std::vector<double> upper;

  int num_vars() const { return static_cast<int>(objective.size()); }
  void add_constraint(std::vector<double> a, double b);
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> w;
  double objective = 0.0;
};

/// Dense two-phase primal simplex (Dantzig pricing with a Bland fallback on
/// degenerate streaks). On `optimal`, every constraint is satisfied within
/// 1e-8 and the objective is optimal within the same tolerance.
LpSolution solve_lp(const LinearProgram& lp);

/// Fixed-layout LP text dump for inspection with external tools.
std::string to_lp_text(const LinearProgram& lp);

// ---------------------------------------------------------------------------
// constraint generation over an implicitly specified family

/// An exponentially large family of constraints row(z).w >= rhs(z) indexed by
/// the points z of a finite multidimensional grid.
class ConstraintOracle {
 public:
  virtual ~ConstraintOracle() = default;

  virtual int num_weights() const = 0;
  virtual const std::vector<int>& axis_sizes() const = 0;
  /// Fills the k constraint coefficients and the right-hand side at z.
  virtual void row(std::span<const int> z, std::span<double> coeffs, double& rhs) const = 0;

  uint64_t num_points() const;
  void decode(uint64_t flat, std::span<int> z) const;
  uint64_t encode(std::span<const int> z) const;

  /// row(z).w - rhs(z); negative means the constraint is violated.
  double signed_slack(std::span<const double> w, std::span<const int> z) const;
  /// rhs(z) - row(z).w; positive means the constraint is violated by that much.
  virtual double deficit(std::span<const double> w, std::span<const int> z) const;
  /// Max deficit over the whole grid; ties resolved to the lowest flat index.
  virtual std::pair<double, uint64_t> max_deficit_sweep(std::span<const double> w) const;
};

enum class SearchMode { exhaustive, greedy_coordinate };

struct GenerationOptions {
  double tol = 1e-6;
  int max_constraints = 2000;
  uint64_t seed = 0;
  int initial_samples = 32;
  int greedy_restarts = 5;
  int greedy_max_passes = 64;
  /// After greedy convergence, run one exhaustive verification sweep and keep
  /// generating if it still finds a violation above tol.
  bool exhaustive_verify_after_greedy = false;
};

enum class GenStatus { ok, budget_exceeded };

struct GenerationResult {
  GenStatus status = GenStatus::ok;
  std::vector<double> w;
  double objective = 0.0;
  int constraints_added = 0;
  /// Deficit of the most violated constraint found by the final search pass
  /// (floor 0). Exact over the grid in exhaustive mode; a local-search value
  /// in greedy mode.
  double max_violation = 0.0;
  std::vector<double> objective_history;
};

/// Coordinate-ascent search for the most violated constraint, with random
/// restarts. Deterministic for a fixed seed.
std::pair<double, uint64_t> greedy_max_deficit(const ConstraintOracle& oracle,
                                               std::span<const double> w, int restarts,
                                               int max_passes, uint64_t seed);

/// Iteratively solves the LP over the generated constraint set (seeded with
/// box bounds and a small random sample of grid points), adds the most
/// violated constraint found by `mode`, and stops when the found violation is
/// at most tol.
GenerationResult solve_with_generation(const std::vector<double>& objective,
                                       const ConstraintOracle& oracle,
                                       std::span<const double> lower, std::span<const double> upper,
                                       SearchMode mode, const GenerationOptions& opts = {});

}  // namespace halp
