#pragma once

#include <functional>
#include <string>

#include "halp/basis.hpp"
#include "halp/grid.hpp"

namespace halp {

/// One-step lookahead value R(x, a) + discount * sum_i w_i g_i(x, a), with
/// the expectation over next states computed in closed form through the
/// basis backprojections.
double q_value(const HybridModel& model, std::span<const Backprojection> backprojections,
               std::span<const double> w, std::span<const double> point);
double q_value(const HybridModel& model, const std::vector<BasisFunction>& basis,
               std::span<const double> w, std::span<const double> point);

struct ActionSearch {
  enum class Kind { exhaustive, coordinate_ascent };
  Kind kind = Kind::exhaustive;
  int restarts = 5;
  int max_passes = 32;
};

/// Greedy one-step-lookahead policy induced by HALP weights. Actions are
/// drawn from the action grid; ties resolve to the lexicographically lowest
/// grid point.
class GreedyPolicy {
 public:
  GreedyPolicy(const HybridModel& model, const std::vector<BasisFunction>& basis,
               std::vector<double> w, double action_eps, ActionSearch search = {});

  /// Returns the chosen action-variable values (rng only feeds coordinate
  /// ascent restarts; pass nullptr for the fixed default stream).
  std::vector<double> act(std::span<const double> state, Rng* rng = nullptr) const;
  double q_at(std::span<const double> state, std::span<const double> action) const;

  const EpsGrid& action_grid() const { return grid_; }
  const std::vector<double>& weights() const { return w_; }

 private:
  const HybridModel* model_;
  std::vector<Backprojection> bps_;
  std::vector<double> w_;
  EpsGrid grid_;
  ActionSearch search_;
};

std::vector<double> greedy_action(const GreedyPolicy& policy, std::span<const double> state);

/// A state-feedback controller: maps the current state to action values.
using Controller = std::function<std::vector<double>(std::span<const double>, Rng&)>;

struct NamedController {
  std::string name;
  Controller act;
};

struct RolloutReport {
  double mean = 0.0;    // mean over trajectories of the per-step average reward
  double stddev = 0.0;  // sample standard deviation of the same
  int trajectories = 0;
  int horizon = 0;
  uint64_t seed = 0;
  std::vector<double> per_traj_average;
  std::vector<double> per_traj_discounted;
};

/// Pooled two-sample standard error for comparing rollout means.
double pooled_standard_error(const RolloutReport& a, const RolloutReport& b);

/// Initial-state set drawn once from the seed; share it across every
/// controller compared in one experiment.
std::vector<std::vector<double>> sample_initial_states(const HybridModel& model, int n,
                                                       uint64_t seed);

/// Simulates n_traj trajectories of the controller; trajectory t starts at
/// initial_states[t % size] and uses an independent substream of `seed`, so
/// reports are identical for a fixed seed regardless of the thread budget.
RolloutReport rollout(const HybridModel& model, const Controller& controller, int n_traj,
                      int horizon, uint64_t seed,
                      const std::vector<std::vector<double>>& initial_states);

enum class HeuristicKind { random, local, global };

/// Baseline controllers. `random` picks uniform grid actions; `local`
/// optimizes each action variable against the one-step expected value of the
/// reward factors touching it (other variables at their first grid value);
/// `global` scores `trials` sampled joint actions (enumerating instead when
/// trials covers the whole grid).
NamedController heuristic_controller(const HybridModel& model, HeuristicKind kind,
                                     double action_eps, int trials = 16);

/// One-step expected reward of a factor at (x, a): next-state variables in
/// its scope take their CPF expectation (closed form for constant,
/// polynomial and piecewise-linear entries; one sampled transition for
/// Gaussian entries), action variables stay at the given values.
double expected_factor_value(const HybridModel& model, const ScopedFunction& factor,
                             std::span<const double> point, Rng& rng);

// ---------------------------------------------------------------------------
// value-iteration oracle on a fully discretized model

struct DiscretizedMdp {
  const HybridModel* model = nullptr;
  EpsGrid state_grid;
  EpsGrid action_grid;
  uint64_t n_states = 1;
  uint64_t n_actions = 1;
  std::vector<double> rewards;  // [s * n_actions + a]
  std::vector<double> kernel;   // [(s * n_actions + a) * n_states + s']

  void state_values(uint64_t s, std::span<double> out) const;
  void action_values(uint64_t a, std::span<double> out) const;
  uint64_t nearest_state(std::span<const double> state) const;
};

/// Normalizes the CPF densities over the state grid to obtain a finite MDP.
DiscretizedMdp discretize_model(const HybridModel& model, double state_eps, double action_eps,
                                uint64_t max_states = 1000000);

struct ViResult {
  std::vector<double> values;
  std::vector<uint32_t> greedy;  // best action index per state
  double residual = 0.0;
  int iterations = 0;
};

/// Value iteration to a sup-norm Bellman residual of at most tol.
ViResult value_iteration(const DiscretizedMdp& mdp, double tol, int max_iterations = 1000000);

/// Plays the discretized greedy policy from continuous states by snapping to
/// the nearest grid state.
NamedController vi_controller(const DiscretizedMdp& mdp, const ViResult& vi);

}  // namespace halp
