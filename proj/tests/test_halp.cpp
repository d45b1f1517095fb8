#include <doctest.h>

#include <cmath>

#include "halp/benchmark.hpp"
#include "halp/halp.hpp"
#include "halp/policy.hpp"
#include "support/models.hpp"

using namespace halp;

TEST_SUITE("halp") {

TEST_CASE("eps grid point counts") {
  CHECK(eps_point_count(1.0) == 2);
  CHECK(eps_point_count(0.5) == 2);
  CHECK(eps_point_count(0.25) == 3);
  CHECK(eps_point_count(0.125) == 5);
  CHECK(eps_point_count(1.0 / 6.0) == 4);
  CHECK_THROWS_AS(eps_point_count(0.0), MisuseError);
  CHECK_THROWS_AS(eps_point_count(1.5), MisuseError);
}

TEST_CASE("grid values are exact lattice fractions and cover the interval") {
  HybridModel m = testsupport::one_channel_model(1.0, 1.0);
  for (double eps : {0.5, 0.25, 0.125}) {
    EpsGrid grid = make_grid(m, eps, GridVars::state_only);
    const auto& axis = grid.axes[0];
    int count = axis.size();
    for (int k = 0; k < count; ++k)
      CHECK(axis.values[static_cast<size_t>(k)] == double(k) / double(count - 1));
    Rng rng(60);
    for (int i = 0; i < 1000; ++i) {
      double x = rng.uniform();
      int idx = grid.nearest_index(0, x);
      CHECK(std::fabs(x - axis.values[static_cast<size_t>(idx)]) <= eps + 1e-12);
    }
  }
}

TEST_CASE("one-variable grid at eps 1/4 is {0, 1/2, 1}") {
  HybridModel m = testsupport::one_channel_model(1.0, 1.0);
  HalpProgram prog = build_halp(m, testsupport::polynomial_basis_set(m, "x0", 1),
                                StateRelevanceDensity::uniform(), 0.25);
  REQUIRE(prog.grid.axes[0].values.size() == 3);
  CHECK(prog.grid.axes[0].values[0] == 0.0);
  CHECK(prog.grid.axes[0].values[1] == 0.5);
  CHECK(prog.grid.axes[0].values[2] == 1.0);
}

TEST_CASE("constant basis has unit relevance weight") {
  HybridModel m = testsupport::one_channel_model(1.0, 1.0, 0.9);
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 0.25);
  REQUIRE(prog.alphas.size() == 1);
  CHECK(prog.alphas[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cached constraint tables match direct evaluation") {
  GeneratedBenchmark bench = generate_benchmark(BenchmarkSpec::ring(3));
  HalpProgram prog = build_halp(bench.model, bench.basis, bench.psi, 0.25);
  HalpOracle oracle(prog);
  auto sizes = oracle.axis_sizes();
  Rng rng(61);
  std::vector<int> z(sizes.size());
  std::vector<double> coeffs(bench.basis.size());
  Point p(static_cast<size_t>(bench.model.num_vars()));
  for (int rep = 0; rep < 50; ++rep) {
    for (size_t i = 0; i < sizes.size(); ++i)
      z[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sizes[i])));
    double rhs = 0.0;
    oracle.row(z, coeffs, rhs);
    prog.grid.fill_point(z, p);
    for (size_t i = 0; i < bench.basis.size(); ++i) {
      auto F = constraint_function(bench.model, bench.basis[i]);
      CHECK(coeffs[i] == doctest::Approx(F.fn(p)).epsilon(1e-12));
    }
    CHECK(rhs == doctest::Approx(eval_reward(bench.model, p)).epsilon(1e-12));
  }
}

TEST_CASE("purely discrete model matches the dense discrete ALP") {
  HybridModel m = testsupport::discrete_toy_model(1.0, 3.0, 0.9);
  std::vector<BasisFunction> basis;
  basis.push_back(BasisFunction::constant());
  BasisFunction ind;
  ind.name = "s0=1";
  ind.discrete.scope = {"s0"};
  ind.discrete.values = {0.0, 1.0};
  basis.push_back(ind);
  REQUIRE(bind_basis_set(m, basis).empty());

  HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 1.0);
  SolveHalpOptions opts;
  opts.tol = 1e-9;
  HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, opts);

  // dense ALP built by hand over the 2x2 state-action space
  LinearProgram lp;
  lp.objective = prog.alphas;
  lp.lower.assign(2, -prog.weight_bound);
  lp.upper.assign(2, prog.weight_bound);
  HalpOracle oracle(prog);
  std::vector<int> z(2);
  std::vector<double> coeffs(2);
  for (uint64_t f = 0; f < oracle.num_points(); ++f) {
    oracle.decode(f, z);
    double rhs = 0.0;
    oracle.row(z, coeffs, rhs);
    lp.add_constraint(std::vector<double>(coeffs.begin(), coeffs.end()), rhs);
  }
  auto direct = solve_lp(lp);
  REQUIRE(direct.status == LpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(direct.objective).epsilon(1e-7));
  CHECK(sol.measured_delta <= opts.tol);
}

TEST_CASE("halving eps never lowers the objective") {
  HybridModel m = testsupport::controlled_channel_model(0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  StateRelevanceDensity psi;
  SolveHalpOptions opts;
  opts.tol = 1e-9;
  double prev = -1e300;
  for (double eps : {0.5, 0.25, 0.125}) {
    HalpProgram prog = build_halp(m, basis, psi, eps);
    HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, opts);
    CHECK(sol.objective >= prev - 1e-9);
    prev = sol.objective;
  }
}

TEST_CASE("solution objective is consistent with alphas") {
  HybridModel m = testsupport::controlled_channel_model(0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 0.25);
  HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, {});
  double dot = 0.0;
  for (size_t i = 0; i < sol.w.size(); ++i) dot += sol.w[i] * prog.alphas[i];
  CHECK(sol.objective == doctest::Approx(dot).epsilon(1e-9));
}

TEST_CASE("measure_infeasibility") {
  HybridModel m = testsupport::controlled_channel_model(0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  SUBCASE("solved weights satisfy their own grid") {
    HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 0.25);
    SolveHalpOptions opts;
    opts.tol = 1e-8;
    HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, opts);
    double delta = measure_infeasibility(m, basis, sol.w, Probe::grid_probe(0.25));
    CHECK(delta <= opts.tol);
  }
  SUBCASE("zero weights expose the maximum reward") {
    std::vector<double> w(basis.size(), 0.0);
    double delta = measure_infeasibility(m, basis, w, Probe::grid_probe(0.125));
    CHECK(delta == doctest::Approx(1.0).epsilon(1e-12));  // max reward r(x)=x on the grid
  }
  SUBCASE("saturated constant weight is feasible everywhere") {
    std::vector<BasisFunction> cbasis = {BasisFunction::constant()};
    REQUIRE(bind_basis_set(m, cbasis).empty());
    double wc = reward_magnitude_bound(m) / (1.0 - m.discount);
    std::vector<double> w = {wc};
    CHECK(measure_infeasibility(m, cbasis, w, Probe::grid_probe(0.125)) == 0.0);
    CHECK(measure_infeasibility(m, cbasis, w, Probe::sample_probe(20000, 3)) == 0.0);
  }
  SUBCASE("weight count mismatch is a misuse error") {
    std::vector<double> w(basis.size() + 1, 0.0);
    CHECK_THROWS_AS(measure_infeasibility(m, basis, w, Probe::grid_probe(0.5)), MisuseError);
  }
}

TEST_CASE("grid resolution rule") {
  SUBCASE("flat terms cap at one") {
    HybridModel m;
    m.state_vars.push_back(VariableSpec::cont("x0"));
    BetaCpf cpf;
    cpf.child = "x0";
    cpf.h1 = testsupport::constant_fn(2.0);
    cpf.h2 = testsupport::constant_fn(2.0);
    m.cpfs.push_back(cpf);
    m.rewards.push_back(testsupport::constant_fn(1.0));
    m.discount = 0.9;
    REQUIRE(validate_model(m).empty());
    std::vector<BasisFunction> basis = {BasisFunction::constant()};
    REQUIRE(bind_basis_set(m, basis).empty());
    CHECK(resolution_for_delta(m, basis, 10.0, 0.5) == 1.0);
  }
  SUBCASE("linear reward with a constant basis gives delta over two") {
    HybridModel m = testsupport::one_channel_model(2.0, 2.0, 0.9);
    std::vector<BasisFunction> basis = {BasisFunction::constant()};
    REQUIRE(bind_basis_set(m, basis).empty());
    // K_max = 1 from the reward slope, M = 2 terms
    CHECK(resolution_for_delta(m, basis, 10.0, 0.01) == doctest::Approx(0.005).epsilon(1e-12));
    SUBCASE("halving delta halves the resolution") {
      double e1 = resolution_for_delta(m, basis, 10.0, 0.01);
      double e2 = resolution_for_delta(m, basis, 10.0, 0.005);
      CHECK(e2 == doctest::Approx(0.5 * e1).epsilon(1e-12));
    }
  }
  SUBCASE("delta must be positive") {
    HybridModel m = testsupport::one_channel_model(1.0, 1.0);
    std::vector<BasisFunction> basis = {BasisFunction::constant()};
    REQUIRE(bind_basis_set(m, basis).empty());
    CHECK_THROWS_AS(resolution_for_delta(m, basis, 1.0, 0.0), MisuseError);
  }
}

TEST_CASE("grid solution upper-bounds the discretized optimum") {
  // Solve on a fine grid, then compare against value iteration on the same
  // grid. The weights are delta-infeasible for the discretized MDP with
  // delta measured below, so Hw + delta/(1-gamma) dominates V*.
  HybridModel m = testsupport::controlled_channel_model(0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 4);
  HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 1.0 / 40.0);
  SolveHalpOptions opts;
  opts.tol = 1e-8;
  HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, opts);

  DiscretizedMdp dmdp = discretize_model(m, 1.0 / 40.0, 1.0);
  REQUIRE(dmdp.n_states == 21);
  ViResult vi = value_iteration(dmdp, 1e-8);

  // delta against the *discretized* kernel
  double delta = 0.0;
  std::vector<double> sv(1), av(1);
  size_t na = static_cast<size_t>(dmdp.n_actions);
  for (uint64_t s = 0; s < dmdp.n_states; ++s) {
    dmdp.state_values(s, sv);
    for (uint64_t a = 0; a < dmdp.n_actions; ++a) {
      dmdp.action_values(a, av);
      Point p = make_point(m, sv, av);
      double hw = 0.0;
      for (size_t i = 0; i < basis.size(); ++i) hw += sol.w[i] * basis[i].eval(p);
      double ghw = 0.0;
      std::vector<double> spv(1);
      for (uint64_t sp = 0; sp < dmdp.n_states; ++sp) {
        dmdp.state_values(sp, spv);
        Point pn = make_point(m, spv, av);
        double hwn = 0.0;
        for (size_t i = 0; i < basis.size(); ++i) hwn += sol.w[i] * basis[i].eval(pn);
        ghw += dmdp.kernel[(s * na + a) * dmdp.n_states + sp] * hwn;
      }
      double deficit = dmdp.rewards[s * na + a] + m.discount * ghw - hw;
      delta = std::max(delta, deficit);
    }
  }

  double slack = delta / (1.0 - m.discount) + 1e-6;
  for (uint64_t s = 0; s < dmdp.n_states; ++s) {
    dmdp.state_values(s, sv);
    Point p = make_point(m, sv, std::vector<double>{0.0});
    double hw = 0.0;
    for (size_t i = 0; i < basis.size(); ++i) hw += sol.w[i] * basis[i].eval(p);
    CHECK(hw >= vi.values[s] - slack);
  }
}

}  // TEST_SUITE
