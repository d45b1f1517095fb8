#include <doctest.h>

#include <cmath>

#include "halp/benchmark.hpp"
#include "halp/halp.hpp"
#include "halp/policy.hpp"
#include "support/models.hpp"

using namespace halp;

namespace {

/// Reward depends directly on the action: factor j pays its own device.
HybridModel device_reward_model(int devices, double discount = 0.9) {
  HybridModel m;
  m.state_vars.push_back(VariableSpec::cont("x0"));
  BetaCpf cpf;
  cpf.child = "x0";
  cpf.h1 = testsupport::constant_fn(2.0);
  cpf.h2 = testsupport::constant_fn(2.0);
  m.cpfs.push_back(cpf);
  for (int d = 0; d < devices; ++d) {
    std::string name = "a" + std::to_string(d);
    m.action_vars.push_back(VariableSpec::disc(name, 3));
    ScopedFunction r;
    r.discrete_scope = {name};
    // value 1 is best for even devices, value 2 for odd ones
    if (d % 2 == 0) {
      r.table = {ContinuousExpr::make_constant(0.0), ContinuousExpr::make_constant(2.0),
                 ContinuousExpr::make_constant(1.0)};
    } else {
      r.table = {ContinuousExpr::make_constant(0.5), ContinuousExpr::make_constant(0.0),
                 ContinuousExpr::make_constant(1.5)};
    }
    m.rewards.push_back(r);
  }
  m.discount = discount;
  auto violations = m.bind();
  REQUIRE(violations.empty());
  return m;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("q value with zero discount equals the reward") {
  HybridModel m = testsupport::controlled_channel_model(0.0);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  std::vector<double> w = {3.0, -1.0, 0.5};
  Rng rng(70);
  for (int i = 0; i < 20; ++i) {
    Point p = make_point(m, std::vector<double>{rng.uniform()},
                         std::vector<double>{double(rng.uniform_int(2))});
    CHECK(q_value(m, basis, w, p) == eval_reward(m, p));
  }
}

TEST_CASE("constant basis shifts q by a constant") {
  HybridModel m = testsupport::controlled_channel_model(0.9);
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  std::vector<double> w = {7.0};
  Point p = make_point(m, std::vector<double>{0.4}, std::vector<double>{1.0});
  CHECK(q_value(m, basis, w, p) ==
        doctest::Approx(eval_reward(m, p) + 0.9 * 7.0).epsilon(1e-12));
}

TEST_CASE("q value matches a Monte Carlo lookahead") {
  HybridModel m = testsupport::controlled_channel_model(0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  std::vector<double> w = {1.0, 2.0, -0.5};
  Point p = make_point(m, std::vector<double>{0.3}, std::vector<double>{1.0});
  double q = q_value(m, basis, w, p);

  Rng rng(71);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto next = sample_transition(m, p, rng);
    Point pn = make_point(m, next, std::vector<double>{0.0});
    double hw = 0.0;
    for (size_t k = 0; k < basis.size(); ++k) hw += w[k] * basis[k].eval(pn);
    double v = eval_reward(m, p) + 0.9 * hw;
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::fabs(q - mean) <= 3.0 * se + 1e-9);
}

TEST_CASE("greedy action picks the dominant mode") {
  HybridModel m = device_reward_model(1, 0.0);
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  GreedyPolicy policy(m, basis, {0.0}, 0.25);
  auto a = greedy_action(policy, std::vector<double>{0.5});
  REQUIRE(a.size() == 1);
  CHECK(a[0] == 1.0);  // reward table (0, 2, 1)
}

TEST_CASE("exhaustive greedy equals dense argmax") {
  HybridModel m = device_reward_model(2, 0.9);
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  std::vector<double> w = {5.0};
  GreedyPolicy policy(m, basis, w, 0.25);
  Rng rng(72);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x = {rng.uniform()};
    auto a = greedy_action(policy, x);
    // dense argmax with lexicographic tie-break
    double best = -1e300;
    std::vector<double> arg;
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v) {
        Point p = make_point(m, x, std::vector<double>{double(u), double(v)});
        double q = q_value(m, basis, w, p);
        if (q > best + 1e-15) {
          best = q;
          arg = {double(u), double(v)};
        }
      }
    CHECK(a == arg);
  }
}

TEST_CASE("coordinate ascent never beats exhaustive and matches it in 1-D") {
  HybridModel m = device_reward_model(1, 0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  std::vector<double> w = {1.0, 0.5, 0.25};
  GreedyPolicy ex(m, basis, w, 0.25, {ActionSearch::Kind::exhaustive, 5, 32});
  GreedyPolicy ca(m, basis, w, 0.25, {ActionSearch::Kind::coordinate_ascent, 5, 32});
  Rng rng(73);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x = {rng.uniform()};
    auto ae = ex.act(x, nullptr);
    auto ac = ca.act(x, &rng);
    double qe = ex.q_at(x, ae);
    double qc = ca.q_at(x, ac);
    CHECK(qc <= qe + 1e-12);
    CHECK(qc == doctest::Approx(qe).epsilon(1e-9));  // one axis: ascent is exhaustive
  }
}

TEST_CASE("argmax is invariant under joint positive scaling") {
  HybridModel m = device_reward_model(2, 0.9);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 2);
  std::vector<double> w = {2.0, -1.0, 0.7};
  const double c = 3.7;
  HybridModel scaled = device_reward_model(2, 0.9);
  for (auto& r : scaled.rewards)
    for (auto& e : r.table)
      e.constant *= c;  // constant tables in this model
  REQUIRE(validate_model(scaled).empty());
  std::vector<double> wc = {c * w[0], c * w[1], c * w[2]};
  auto basis2 = testsupport::polynomial_basis_set(scaled, "x0", 2);

  GreedyPolicy p1(m, basis, w, 0.25);
  GreedyPolicy p2(scaled, basis2, wc, 0.25);
  Rng rng(74);
  for (int i = 0; i < 25; ++i) {
    std::vector<double> x = {rng.uniform()};
    CHECK(p1.act(x, nullptr) == p2.act(x, nullptr));
  }
  SUBCASE("shifting the constant-basis weight changes no decision") {
    std::vector<double> shifted = w;
    shifted[0] += 11.0;
    GreedyPolicy p3(m, basis, shifted, 0.25);
    for (int i = 0; i < 25; ++i) {
      Rng r2(1000 + i);
      std::vector<double> x = {r2.uniform()};
      CHECK(p1.act(x, nullptr) == p3.act(x, nullptr));
    }
  }
}

TEST_CASE("rollout degenerate cases") {
  SUBCASE("zero rewards") {
    HybridModel m = testsupport::one_channel_model(2.0, 2.0);
    m.rewards.clear();
    m.rewards.push_back(testsupport::constant_fn(0.0));
    REQUIRE(validate_model(m).empty());
    auto ctrl = heuristic_controller(m, HeuristicKind::random, 0.25);
    auto init = sample_initial_states(m, 5, 1);
    auto rep = rollout(m, ctrl.act, 5, 10, 1, init);
    CHECK(rep.mean == 0.0);
    CHECK(rep.stddev == 0.0);
  }
  SUBCASE("constant rewards") {
    HybridModel m = testsupport::one_channel_model(2.0, 2.0);
    m.rewards.clear();
    m.rewards.push_back(testsupport::constant_fn(2.5));
    REQUIRE(validate_model(m).empty());
    auto ctrl = heuristic_controller(m, HeuristicKind::random, 0.25);
    auto init = sample_initial_states(m, 5, 1);
    auto rep = rollout(m, ctrl.act, 5, 10, 1, init);
    CHECK(rep.mean == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(rep.stddev == 0.0);
    // discounted sums are logged per trajectory
    double expected = 2.5 * (1.0 - std::pow(0.9, 10)) / (1.0 - 0.9);
    CHECK(rep.per_traj_discounted[0] == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("fixed seed reports are bit-identical") {
    HybridModel m = testsupport::controlled_channel_model(0.9);
    auto ctrl = heuristic_controller(m, HeuristicKind::random, 0.25);
    auto init = sample_initial_states(m, 8, 5);
    auto r1 = rollout(m, ctrl.act, 8, 20, 5, init);
    auto r2 = rollout(m, ctrl.act, 8, 20, 5, init);
    CHECK(r1.per_traj_average == r2.per_traj_average);
    CHECK(r1.per_traj_discounted == r2.per_traj_discounted);
    CHECK(r1.mean == r2.mean);
  }
}

TEST_CASE("random controller is uniform over the action grid") {
  HybridModel m = device_reward_model(1, 0.9);
  auto ctrl = heuristic_controller(m, HeuristicKind::random, 0.25);
  Rng rng(75);
  int counts[3] = {0, 0, 0};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto a = ctrl.act(std::vector<double>{0.5}, rng);
    counts[static_cast<int>(a[0])]++;
  }
  for (int v = 0; v < 3; ++v)
    CHECK(counts[v] / double(n) == doctest::Approx(1.0 / 3.0).epsilon(0.1));
}

TEST_CASE("local heuristic solves separable device rewards exactly") {
  HybridModel m = device_reward_model(3, 0.9);
  auto local = heuristic_controller(m, HeuristicKind::local, 0.25);
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  HybridModel m0 = device_reward_model(3, 0.0);
  GreedyPolicy greedy(m0, basis, {0.0}, 0.25);  // zero discount: pure argmax of R
  Rng rng(76);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x = {rng.uniform()};
    CHECK(local.act(x, rng) == greedy.act(x, nullptr));
  }
}

TEST_CASE("global heuristic with a full trial budget is the one-step argmax") {
  HybridModel m = device_reward_model(2, 0.9);
  auto global = heuristic_controller(m, HeuristicKind::global, 0.25, 9);  // 3*3 joint actions
  std::vector<BasisFunction> basis = {BasisFunction::constant()};
  REQUIRE(bind_basis_set(m, basis).empty());
  HybridModel m0 = device_reward_model(2, 0.0);
  GreedyPolicy greedy(m0, basis, {0.0}, 0.25);
  Rng rng(77);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x = {rng.uniform()};
    CHECK(global.act(x, rng) == greedy.act(x, nullptr));
  }
}

TEST_CASE("value iteration on closed-form cases") {
  SUBCASE("single state geometric series") {
    HybridModel m;
    m.rewards.push_back(testsupport::constant_fn(1.0));
    m.discount = 0.9;
    REQUIRE(validate_model(m).empty());
    DiscretizedMdp dmdp = discretize_model(m, 1.0, 1.0);
    REQUIRE(dmdp.n_states == 1);
    ViResult vi = value_iteration(dmdp, 1e-10);
    CHECK(vi.values[0] == doctest::Approx(10.0).epsilon(1e-8));
  }
  SUBCASE("two-state chain with an absorbing reward state") {
    HybridModel m;
    m.state_vars.push_back(VariableSpec::disc("s0", 2));
    DiscriminantCpf cpf;
    cpf.child = "s0";
    cpf.floor = 1e-12;
    cpf.discriminants.push_back(testsupport::constant_fn(1e-12));
    cpf.discriminants.push_back(testsupport::constant_fn(1.0));
    m.cpfs.push_back(cpf);
    ScopedFunction r;
    r.discrete_scope = {"s0"};
    r.table = {ContinuousExpr::make_constant(0.0), ContinuousExpr::make_constant(1.0)};
    m.rewards.push_back(r);
    m.discount = 0.5;
    REQUIRE(validate_model(m).empty());
    DiscretizedMdp dmdp = discretize_model(m, 1.0, 1.0);
    ViResult vi = value_iteration(dmdp, 1e-10);
    CHECK(vi.values[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(vi.values[1] == doctest::Approx(2.0).epsilon(1e-6));
  }
  SUBCASE("residual contract holds after convergence") {
    HybridModel m = testsupport::controlled_channel_model(0.9);
    DiscretizedMdp dmdp = discretize_model(m, 0.125, 1.0);
    ViResult vi = value_iteration(dmdp, 1e-9);
    CHECK(vi.residual <= 1e-9);
  }
  SUBCASE("state budget is enforced") {
    GeneratedBenchmark bench = generate_benchmark(BenchmarkSpec::ring(6));
    CHECK_THROWS_AS(discretize_model(bench.model, 0.01, 1.0), BudgetError);
  }
}

TEST_CASE("halp policy sits between random and the optimal grid policy") {
  HybridModel m = testsupport::controlled_channel_model(0.95);
  auto basis = testsupport::polynomial_basis_set(m, "x0", 3);
  HalpProgram prog = build_halp(m, basis, StateRelevanceDensity::uniform(), 1.0 / 16.0);
  HalpSolution sol = solve_halp(prog, SearchMode::exhaustive, {});

  GreedyPolicy policy(m, basis, sol.w, 0.25);
  auto halp_ctrl = [&](std::span<const double> x, Rng& rng) { return policy.act(x, &rng); };
  auto rnd = heuristic_controller(m, HeuristicKind::random, 0.25);

  DiscretizedMdp dmdp = discretize_model(m, 1.0 / 32.0, 1.0);
  ViResult vi = value_iteration(dmdp, 1e-9);
  auto opt = vi_controller(dmdp, vi);

  auto init = sample_initial_states(m, 64, 9);
  auto rep_halp = rollout(m, halp_ctrl, 64, 50, 9, init);
  auto rep_rand = rollout(m, rnd.act, 64, 50, 9, init);
  auto rep_opt = rollout(m, opt.act, 64, 50, 9, init);

  CHECK(rep_halp.mean >= rep_rand.mean - 2.0 * pooled_standard_error(rep_halp, rep_rand));
  CHECK(rep_halp.mean <= rep_opt.mean + 2.0 * pooled_standard_error(rep_halp, rep_opt));
}

}  // TEST_SUITE
