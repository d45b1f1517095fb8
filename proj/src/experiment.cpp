#include "halp/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include <json.hpp>

namespace halp {

using nlohmann::json;

namespace {

double now_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string eps_tag(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", eps);
  return buf;
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

/// Picks exhaustive action argmax for small joint action grids, coordinate
/// ascent otherwise.
ActionSearch pick_action_search(const EpsGrid& action_grid) {
  ActionSearch s;
  s.kind = action_grid.num_points() <= 4096 ? ActionSearch::Kind::exhaustive
                                            : ActionSearch::Kind::coordinate_ascent;
  return s;
}

NamedController parse_baseline(const HybridModel& model, const std::string& name,
                               double action_eps) {
  if (name == "random") return heuristic_controller(model, HeuristicKind::random, action_eps);
  if (name == "local") return heuristic_controller(model, HeuristicKind::local, action_eps);
  if (name.rfind("global", 0) == 0) {
    int trials = 16;
    auto colon = name.find(':');
    if (colon != std::string::npos) trials = std::stoi(name.substr(colon + 1));
    return heuristic_controller(model, HeuristicKind::global, action_eps, trials);
  }
  throw MisuseError("unknown baseline '" + name + "' (use random, local, global[:N])");
}

}  // namespace

std::vector<SolveRow> run_solve(const ExperimentConfig& config, std::ostream& out) {
  HybridModel model = load_model(config.model_path);
  BasisFile basis = load_basis(config.basis_path, model);
  std::filesystem::create_directories(config.out_dir);

  std::vector<SolveRow> rows;
  bool text = config.format == OutputFormat::text;
  if (text)
    out << "eps        objective  constraints  measured_delta  status           time_s\n";
  json jrows = json::array();
  for (double eps : config.eps_list) {
    auto start = std::chrono::steady_clock::now();
    HalpProgram program = build_halp(model, basis.basis, basis.psi, eps);
    SolveHalpOptions opts;
    opts.tol = config.tol;
    opts.seed = config.seed;
    opts.max_constraints = config.max_constraints;
    HalpSolution sol = solve_halp(program, config.search, opts);

    SolveRow row;
    row.eps = eps;
    row.objective = sol.objective;
    row.constraints = sol.diagnostics.constraints_added;
    row.measured_delta = sol.measured_delta;
    row.status = sol.diagnostics.status == GenStatus::ok ? "optimal" : "budget_exceeded";
    row.seconds = now_seconds(start);
    row.solution_path = join_path(config.out_dir, "solution-eps-" + eps_tag(eps) + ".json");
    write_file(row.solution_path, serialize_solution(solution_from(sol, config.basis_path)));
    rows.push_back(row);

    if (text) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%-9g  %-9.4f  %-11d  %-14.6g  %-15s  %.2f\n", row.eps,
                    row.objective, row.constraints, row.measured_delta, row.status.c_str(),
                    row.seconds);
      out << buf;
    } else {
      jrows.push_back({{"eps", row.eps},
                       {"objective", row.objective},
                       {"constraints", row.constraints},
                       {"measured_delta", row.measured_delta},
                       {"status", row.status},
                       {"solution", row.solution_path}});
    }
  }
  if (!text) out << jrows.dump(2) << "\n";
  return rows;
}

std::vector<EvalRow> run_evaluate(const ExperimentConfig& config,
                                  const std::vector<std::string>& solution_paths,
                                  std::ostream& out) {
  HybridModel model = load_model(config.model_path);
  BasisFile basis = load_basis(config.basis_path, model);
  std::filesystem::create_directories(config.out_dir);

  auto initial = sample_initial_states(model, config.trajectories, config.seed);
  std::vector<EvalRow> rows;
  json jrows = json::array();

  auto run_one = [&](const std::string& method, const Controller& ctrl) {
    auto start = std::chrono::steady_clock::now();
    RolloutReport rep =
        rollout(model, ctrl, config.trajectories, config.horizon, config.seed, initial);
    EvalRow row;
    row.method = method;
    row.mean = rep.mean;
    row.stddev = rep.stddev;
    row.seconds = now_seconds(start);
    rows.push_back(row);
    jrows.push_back({{"method", method}, {"mu", rep.mean}, {"sigma", rep.stddev}});
  };

  for (const auto& path : solution_paths) {
    SolutionFile sol = load_solution(path);
    if (sol.weights.size() != basis.basis.size())
      throw MisuseError(path + ": weight count does not match the basis file '" +
                        config.basis_path + "'");
    double aeps = config.action_eps > 0.0 ? config.action_eps : sol.eps;
    EpsGrid agrid = make_grid(model, aeps, GridVars::action_only);
    auto policy = std::make_shared<GreedyPolicy>(model, basis.basis, sol.weights, aeps,
                                                 pick_action_search(agrid));
    run_one("halp(eps=" + eps_tag(sol.eps) + ")",
            [policy](std::span<const double> x, Rng& rng) { return policy->act(x, &rng); });
  }
  for (const auto& name : config.baselines) {
    double aeps = config.action_eps > 0.0 ? config.action_eps : 0.25;
    NamedController ctrl = parse_baseline(model, name, aeps);
    run_one(ctrl.name, ctrl.act);
  }

  if (config.format == OutputFormat::text) {
    out << "method               mu         sigma      time_s\n";
    for (const auto& row : rows) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%-19s  %-9.4f  %-9.4f  %.2f\n", row.method.c_str(),
                    row.mean, row.stddev, row.seconds);
      out << buf;
    }
  } else {
    out << jrows.dump(2) << "\n";
  }
  write_file(join_path(config.out_dir, "evaluation.json"), jrows.dump(2) + "\n");
  return rows;
}

void fit_quadratic(const std::vector<double>& xs, const std::vector<double>& ys, double& a,
                   double& b, double& c, double& r_squared) {
  // normal equations for [x^2 x 1]
  double s[5] = {0, 0, 0, 0, 0};  // sums of x^k
  double t0 = 0, t1 = 0, t2 = 0;  // sums of y, xy, x^2 y
  for (size_t i = 0; i < xs.size(); ++i) {
    double x = xs[i], y = ys[i];
    double x2 = x * x;
    s[0] += 1;
    s[1] += x;
    s[2] += x2;
    s[3] += x2 * x;
    s[4] += x2 * x2;
    t0 += y;
    t1 += x * y;
    t2 += x2 * y;
  }
  double m[3][4] = {{s[4], s[3], s[2], t2}, {s[3], s[2], s[1], t1}, {s[2], s[1], s[0], t0}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    for (int r = 0; r < 3; ++r) {
      if (r == col || m[col][col] == 0.0) continue;
      double f = m[r][col] / m[col][col];
      for (int cc = col; cc < 4; ++cc) m[r][cc] -= f * m[col][cc];
    }
  }
  a = m[0][0] != 0.0 ? m[0][3] / m[0][0] : 0.0;
  b = m[1][1] != 0.0 ? m[1][3] / m[1][1] : 0.0;
  c = m[2][2] != 0.0 ? m[2][3] / m[2][2] : 0.0;

  double mean = t0 / std::max<size_t>(xs.size(), 1);
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double fit = a * xs[i] * xs[i] + b * xs[i] + c;
    ss_tot += (ys[i] - mean) * (ys[i] - mean);
    ss_res += (ys[i] - fit) * (ys[i] - fit);
  }
  r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

ScaleReport run_scaleup(BenchmarkSpec::Topology topology, const std::vector<int>& n_list,
                        double eps, const ExperimentConfig& config, std::ostream& out) {
  ScaleReport report;
  bool text = config.format == OutputFormat::text;
  if (text) out << "n     time_s     objective   constraints  status\n";
  json jrows = json::array();
  for (int n : n_list) {
    BenchmarkSpec spec = topology == BenchmarkSpec::Topology::ring
                             ? BenchmarkSpec::ring(n)
                             : BenchmarkSpec::ring_of_rings(n);
    ScaleRow row;
    row.n = n;
    try {
      GeneratedBenchmark bench = generate_benchmark(spec);
      auto start = std::chrono::steady_clock::now();
      HalpProgram program = build_halp(bench.model, bench.basis, bench.psi, eps);
      SolveHalpOptions opts;
      opts.tol = config.tol;
      opts.seed = config.seed;
      opts.max_constraints = config.max_constraints;
      HalpSolution sol = solve_halp(program, config.search, opts);
      row.seconds = now_seconds(start);
      row.objective = sol.objective;
      row.constraints = sol.diagnostics.constraints_added;
      row.status = sol.diagnostics.status == GenStatus::ok ? "optimal" : "budget_exceeded";
    } catch (const BudgetError& e) {
      row.status = std::string("budget_error: ") + e.what();
    }
    report.rows.push_back(row);
    if (text) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%-4d  %-9.3f  %-10.4f  %-11d  %s\n", row.n, row.seconds,
                    row.objective, row.constraints, row.status.c_str());
      out << buf;
    } else {
      jrows.push_back({{"n", row.n},
                       {"time_s", row.seconds},
                       {"objective", row.objective},
                       {"constraints", row.constraints},
                       {"status", row.status}});
    }
  }

  std::vector<double> xs, ys;
  for (const auto& row : report.rows)
    if (row.status.rfind("budget_error", 0) != 0) {
      xs.push_back(row.n);
      ys.push_back(row.seconds);
    }
  if (xs.size() >= 3) {
    fit_quadratic(xs, ys, report.quad_a, report.quad_b, report.quad_c, report.r_squared);
    for (size_t i = 0; i < xs.size(); ++i)
      report.residuals.push_back(
          ys[i] - (report.quad_a * xs[i] * xs[i] + report.quad_b * xs[i] + report.quad_c));
    if (text) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "quadratic fit: t(n) = %.4g n^2 + %.4g n + %.4g   (R^2 = %.4f)\n",
                    report.quad_a, report.quad_b, report.quad_c, report.r_squared);
      out << buf;
      out << "residuals:";
      for (double r : report.residuals) {
        std::snprintf(buf, sizeof(buf), " %.4g", r);
        out << buf;
      }
      out << "\n";
    } else {
      json fit = {{"a", report.quad_a},
                  {"b", report.quad_b},
                  {"c", report.quad_c},
                  {"r_squared", report.r_squared},
                  {"residuals", report.residuals}};
      out << json{{"rows", jrows}, {"fit", fit}}.dump(2) << "\n";
    }
  } else if (!text) {
    out << json{{"rows", jrows}}.dump(2) << "\n";
  }
  return report;
}

}  // namespace halp
