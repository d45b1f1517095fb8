#pragma once

#include <memory>
#include <string>

#include "halp/basis.hpp"
#include "halp/grid.hpp"
#include "halp/lp.hpp"

namespace halp {

/// Values of one restricted-scope term precomputed over the grid slice its
/// scope spans; composed into full-grid rows by index arithmetic.
struct TermTable {
  std::vector<int> axis_pos;       // positions into the grid's axes, ascending
  std::vector<uint64_t> strides;   // strides within `values` per scope axis
  std::vector<double> values;      // row-major over the scope axes

  double value_at(std::span<const int> full_index) const {
    uint64_t f = 0;
    for (size_t i = 0; i < axis_pos.size(); ++i)
      f += strides[i] * static_cast<uint64_t>(full_index[static_cast<size_t>(axis_pos[i])]);
    return values[f];
  }
};

/// The assembled finite LP family: objective coefficients alpha, constraint
/// functions F_i and reward factors R_j cached over their restricted scopes
/// of the eps grid.
struct HalpProgram {
  const HybridModel* model = nullptr;
  const std::vector<BasisFunction>* basis = nullptr;
  EpsGrid grid;
  std::vector<double> alphas;
  std::vector<TermTable> f_terms;  // one per basis function
  std::vector<TermTable> r_terms;  // one per reward factor
  double reward_bound = 0.0;       // R_max
  double weight_bound = 0.0;       // R_max / (1 - discount)

  int num_weights() const { return static_cast<int>(alphas.size()); }
};

HalpProgram build_halp(const HybridModel& model, const std::vector<BasisFunction>& basis,
                       const StateRelevanceDensity& psi, double eps);

/// Precomputes restricted-scope tables for the given terms over a grid
/// (shared by build_halp and the grid infeasibility probe).
std::vector<TermTable> build_term_tables(const HybridModel& model, const EpsGrid& grid,
                                         std::span<const ScopedEvaluator> terms);

/// Constraint oracle over the program's grid. row() composes the cached
/// per-scope tables; the weighted sweeps additionally merge terms with equal
/// scope into combined tables before scanning.
class HalpOracle final : public ConstraintOracle {
 public:
  explicit HalpOracle(const HalpProgram& program);

  int num_weights() const override { return program_.num_weights(); }
  const std::vector<int>& axis_sizes() const override { return sizes_; }
  void row(std::span<const int> z, std::span<double> coeffs, double& rhs) const override;
  double deficit(std::span<const double> w, std::span<const int> z) const override;
  std::pair<double, uint64_t> max_deficit_sweep(std::span<const double> w) const override;

 private:
  void refresh_combined(std::span<const double> w) const;

  const HalpProgram& program_;
  std::vector<int> sizes_;
  mutable std::vector<double> cached_w_;
  mutable std::vector<TermTable> combined_;  // sum of w_i F_i - R_j grouped by scope
  mutable double combined_constant_ = 0.0;   // empty-scope terms
};

struct HalpSolution {
  std::vector<double> w;
  double objective = 0.0;
  double eps = 1.0;
  double measured_delta = 0.0;
  struct Diagnostics {
    int constraints_added = 0;
    double solve_seconds = 0.0;
    GenStatus status = GenStatus::ok;
    SearchMode search = SearchMode::exhaustive;
    std::string delta_probe;  // "grid" (certified) or "sample" (estimate)
  } diagnostics;
};

struct SolveHalpOptions {
  double tol = 1e-6;
  uint64_t seed = 0;
  int max_constraints = 2000;
  uint64_t sample_probe_points = 100000;  // greedy-mode delta estimate
};

/// Solves the program by constraint generation. In exhaustive mode the
/// returned weights violate no grid constraint by more than tol and
/// measured_delta comes from a full grid sweep; in greedy mode
/// measured_delta is a sampled estimate.
HalpSolution solve_halp(const HalpProgram& program, SearchMode mode,
                        const SolveHalpOptions& opts = {});

struct Probe {
  enum class Kind { grid, sample };
  Kind kind = Kind::grid;
  double eps = 0.125;        // grid probe resolution
  uint64_t samples = 100000;  // sample probe size
  uint64_t seed = 0;

  static Probe grid_probe(double eps);
  static Probe sample_probe(uint64_t n, uint64_t seed = 0);
};

/// Max over probe points of R(x, a) - sum_i w_i F_i(x, a), floored at 0
/// (Definition of delta-infeasibility over the probed set).
double measure_infeasibility(const HybridModel& model, const std::vector<BasisFunction>& basis,
                             std::span<const double> w, const Probe& probe);

/// Grid resolution sufficient for delta-infeasibility by the Lipschitz rule:
/// delta / (M * K_max) capped at 1, with M the number of constraint and
/// reward terms and K_max the worst analytic Lipschitz bound (constraint
/// terms scaled by w_bound). w_bound <= 0 selects R_max / (1 - discount).
double resolution_for_delta(const HybridModel& model, const std::vector<BasisFunction>& basis,
                            double w_bound, double delta);

}  // namespace halp
