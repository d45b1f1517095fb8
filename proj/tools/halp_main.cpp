#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "halp/experiment.hpp"

namespace {

// exit codes: 0 ok, 1 internal, 2 parse error, 3 validation error,
// 4 solver/resource budget error
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitBudget = 4;

halp::BenchmarkSpec::Topology parse_topology(const std::string& name) {
  if (name == "ring") return halp::BenchmarkSpec::Topology::ring;
  if (name == "ring-of-rings" || name == "ring_of_rings")
    return halp::BenchmarkSpec::Topology::ring_of_rings;
  throw halp::MisuseError("unknown topology '" + name + "' (use ring or ring-of-rings)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eps-HALP solver for hybrid factored MDPs"};
  app.require_subcommand(1);

  halp::ExperimentConfig config;
  std::string search_name = "exhaustive";
  std::string format_name = "text";

  // generate
  auto* gen = app.add_subcommand("generate", "emit an irrigation benchmark model + basis");
  std::string topology_name = "ring";
  halp::BenchmarkSpec spec;
  gen->add_option("--topology", topology_name, "ring | ring-of-rings");
  gen->add_option("--n", spec.n, "channel/ring count (>= 3)");
  gen->add_option("--seed", spec.seed, "generator seed (reserved)");
  gen->add_option("--tau", spec.tau, "beta concentration");
  gen->add_option("--pump", spec.pump_rate, "device pump rate");
  gen->add_option("--inflow", spec.inflow, "inlet feed rate");
  gen->add_option("--outflow", spec.outflow, "outlet drain rate");
  gen->add_option("--slope", spec.linear_slope, "outlet linear reward slope");
  gen->add_option("--gauss-std", spec.gauss_std, "interior reward bump std");
  gen->add_option("--out-dir", config.out_dir, "output directory");

  // solve
  auto* solve = app.add_subcommand("solve", "build and solve eps-HALPs");
  solve->add_option("--model", config.model_path, "model JSON path")->required();
  solve->add_option("--basis", config.basis_path, "basis JSON path")->required();
  solve->add_option("--eps", config.eps_list, "grid resolution (repeatable)")->required();
  solve->add_option("--search", search_name, "exhaustive | greedy");
  solve->add_option("--tol", config.tol, "constraint-generation stop tolerance");
  solve->add_option("--max-constraints", config.max_constraints, "generation budget");
  solve->add_option("--seed", config.seed, "solver seed");
  solve->add_option("--out-dir", config.out_dir, "output directory");
  solve->add_option("--format", format_name, "text | json");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "roll out solved policies against baselines");
  std::vector<std::string> solution_paths;
  eval->add_option("--model", config.model_path, "model JSON path")->required();
  eval->add_option("--basis", config.basis_path, "basis JSON path")->required();
  eval->add_option("--solution", solution_paths, "solution JSON path (repeatable)");
  eval->add_option("--baseline", config.baselines, "random | local | global[:N] (repeatable)");
  eval->add_option("--trajectories", config.trajectories, "trajectory count");
  eval->add_option("--horizon", config.horizon, "steps per trajectory");
  eval->add_option("--seed", config.seed, "rollout seed");
  eval->add_option("--action-eps", config.action_eps, "action grid override (0 = solution eps)");
  eval->add_option("--out-dir", config.out_dir, "output directory");
  eval->add_option("--format", format_name, "text | json");

  // scaleup
  auto* scale = app.add_subcommand("scaleup", "solve a topology family across sizes, report time");
  std::vector<int> n_list;
  double scale_eps = 0.25;
  std::string scale_search = "greedy";
  scale->add_option("--topology", topology_name, "ring | ring-of-rings");
  scale->add_option("--n", n_list, "instance size (repeatable)")->required();
  scale->add_option("--eps", scale_eps, "grid resolution");
  scale->add_option("--search", scale_search, "exhaustive | greedy");
  scale->add_option("--tol", config.tol, "constraint-generation stop tolerance");
  scale->add_option("--max-constraints", config.max_constraints, "generation budget");
  scale->add_option("--seed", config.seed, "solver seed");
  scale->add_option("--format", format_name, "text | json");

  // infeasibility
  auto* infeas = app.add_subcommand("infeasibility", "measure delta-infeasibility of weights");
  std::string probe_name = "grid";
  double probe_eps = 0.125;
  uint64_t probe_samples = 100000;
  std::string solution_path;
  infeas->add_option("--model", config.model_path, "model JSON path")->required();
  infeas->add_option("--basis", config.basis_path, "basis JSON path")->required();
  infeas->add_option("--solution", solution_path, "solution JSON path")->required();
  infeas->add_option("--probe", probe_name, "grid | sample");
  infeas->add_option("--probe-eps", probe_eps, "grid probe resolution");
  infeas->add_option("--samples", probe_samples, "sample probe size");
  infeas->add_option("--seed", config.seed, "sample probe seed");
  infeas->add_option("--format", format_name, "text | json");

  CLI11_PARSE(app, argc, argv);

  try {
    config.search = search_name == "greedy" ? halp::SearchMode::greedy_coordinate
                    : search_name == "exhaustive"
                        ? halp::SearchMode::exhaustive
                        : throw halp::MisuseError("unknown search mode '" + search_name + "'");
    config.format = format_name == "json"   ? halp::OutputFormat::json
                    : format_name == "text" ? halp::OutputFormat::text
                                            : throw halp::MisuseError("unknown format '" +
                                                                      format_name + "'");

    if (gen->parsed()) {
      spec.topology = parse_topology(topology_name);
      halp::GeneratedBenchmark bench = halp::generate_benchmark(spec);
      std::filesystem::create_directories(config.out_dir);
      auto model_path = (std::filesystem::path(config.out_dir) / "model.json").string();
      auto basis_path = (std::filesystem::path(config.out_dir) / "basis.json").string();
      halp::write_file(model_path, halp::serialize_model(bench.model));
      halp::write_file(basis_path, halp::serialize_basis(bench.basis, bench.psi));
      std::cout << "wrote " << model_path << "\nwrote " << basis_path << "\n";
      return kExitOk;
    }
    if (solve->parsed()) {
      auto rows = halp::run_solve(config, std::cout);
      for (const auto& row : rows)
        if (row.status != "optimal") return kExitBudget;
      return kExitOk;
    }
    if (eval->parsed()) {
      halp::run_evaluate(config, solution_paths, std::cout);
      return kExitOk;
    }
    if (scale->parsed()) {
      config.search = scale_search == "exhaustive" ? halp::SearchMode::exhaustive
                                                   : halp::SearchMode::greedy_coordinate;
      halp::run_scaleup(parse_topology(topology_name), n_list, scale_eps, config, std::cout);
      return kExitOk;
    }
    if (infeas->parsed()) {
      halp::HybridModel model = halp::load_model(config.model_path);
      halp::BasisFile basis = halp::load_basis(config.basis_path, model);
      halp::SolutionFile sol = halp::load_solution(solution_path);
      halp::Probe probe = probe_name == "sample"
                              ? halp::Probe::sample_probe(probe_samples, config.seed)
                              : halp::Probe::grid_probe(probe_eps);
      double delta = halp::measure_infeasibility(model, basis.basis, sol.weights, probe);
      if (config.format == halp::OutputFormat::json)
        std::cout << "{\"delta\": " << delta << "}\n";
      else
        std::cout << "delta = " << delta << "\n";
      return kExitOk;
    }
  } catch (const halp::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const halp::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    for (const auto& v : e.violations) std::cerr << "  - " << v << "\n";
    return kExitValidation;
  } catch (const halp::BudgetError& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return kExitBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
