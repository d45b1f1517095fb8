#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "halp/benchmark.hpp"
#include "halp/halp.hpp"
#include "halp/io.hpp"
#include "halp/policy.hpp"

namespace halp {

enum class OutputFormat { text, json };

struct ExperimentConfig {
  std::string model_path;
  std::string basis_path;
  std::string out_dir = ".";
  std::vector<double> eps_list;
  SearchMode search = SearchMode::exhaustive;
  double tol = 1e-6;
  int max_constraints = 2000;
  int trajectories = 100;
  int horizon = 100;
  uint64_t seed = 0;
  double action_eps = 0.0;  // 0 => use each solution's own eps
  std::vector<std::string> baselines;
  OutputFormat format = OutputFormat::text;
};

struct SolveRow {
  double eps = 0.0;
  double objective = 0.0;
  int constraints = 0;
  double measured_delta = 0.0;
  std::string status;
  double seconds = 0.0;
  std::string solution_path;
};

/// Builds and solves one eps-HALP per entry of eps_list, writes a solution
/// file per eps into out_dir, and prints one report row per eps.
std::vector<SolveRow> run_solve(const ExperimentConfig& config, std::ostream& out);

struct EvalRow {
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;
  double seconds = 0.0;  // rollout wall time (text report only)
};

/// Rolls out each solution's greedy policy and each baseline on a shared
/// seeded initial-state set; writes evaluation.json into out_dir and prints
/// the comparison table.
std::vector<EvalRow> run_evaluate(const ExperimentConfig& config,
                                  const std::vector<std::string>& solution_paths,
                                  std::ostream& out);

struct ScaleRow {
  int n = 0;
  double seconds = 0.0;
  double objective = 0.0;
  int constraints = 0;
  std::string status;
};

struct ScaleReport {
  std::vector<ScaleRow> rows;
  double quad_a = 0.0, quad_b = 0.0, quad_c = 0.0;  // t(n) ~ a n^2 + b n + c
  double r_squared = 0.0;
  std::vector<double> residuals;  // t(n) - fit(n), per solved row
};

/// Generates and solves one benchmark instance per n, reports wall time
/// against n and the least-squares quadratic fit. Timing goes to the stream
/// only; nothing is written into out_dir.
ScaleReport run_scaleup(BenchmarkSpec::Topology topology, const std::vector<int>& n_list,
                        double eps, const ExperimentConfig& config, std::ostream& out);

/// Least-squares quadratic fit helper (exposed for tests).
void fit_quadratic(const std::vector<double>& xs, const std::vector<double>& ys, double& a,
                   double& b, double& c, double& r_squared);

}  // namespace halp
