#include <doctest.h>

#include <cmath>

#include "halp/basis.hpp"
#include "halp/benchmark.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace halp;
using testsupport::integrate01;

namespace {

BasisFunction bound_basis(const HybridModel& model, BasisFunction f) {
  auto violations = bind_basis(model, f);
  REQUIRE(violations.empty());
  return f;
}

/// Random hybrid model with one discrete and two continuous state variables,
/// action-dependent shapes. Used by the randomized oracle sweeps.
HybridModel random_hybrid_model(Rng& rng) {
  HybridModel m;
  m.state_vars.push_back(VariableSpec::disc("s0", 3));
  m.state_vars.push_back(VariableSpec::cont("x0"));
  m.state_vars.push_back(VariableSpec::cont("x1"));
  m.action_vars.push_back(VariableSpec::disc("a0", 2));

  DiscriminantCpf d;
  d.child = "s0";
  for (int j = 0; j < 3; ++j) {
    ScopedFunction f;
    f.discrete_scope = {"a0"};
    f.continuous_scope = {"x0"};
    for (int mode = 0; mode < 2; ++mode)
      f.table.push_back(ContinuousExpr::make_polynomial(
          {{0.3 + rng.uniform(), {0}}, {rng.uniform(), {1}}}));
    d.discriminants.push_back(f);
  }
  m.cpfs.push_back(d);

  auto beta_child = [&](const std::string& child, const std::string& parent) {
    BetaCpf b;
    b.child = child;
    b.h1.discrete_scope = {"a0"};
    b.h1.continuous_scope = {parent};
    b.h2.discrete_scope = {"a0"};
    b.h2.continuous_scope = {parent};
    for (int mode = 0; mode < 2; ++mode) {
      b.h1.table.push_back(ContinuousExpr::make_polynomial(
          {{1.0 + 3.0 * rng.uniform(), {0}}, {2.0 * rng.uniform(), {1}}}));
      b.h2.table.push_back(ContinuousExpr::make_polynomial(
          {{1.0 + 3.0 * rng.uniform(), {0}}, {2.0 * rng.uniform(), {1}}}));
    }
    return b;
  };
  m.cpfs.push_back(beta_child("x0", "x0"));
  m.cpfs.push_back(beta_child("x1", "x0"));
  m.rewards.push_back(testsupport::constant_fn(0.0));
  m.discount = 0.9;
  auto violations = m.bind();
  REQUIRE(violations.empty());
  return m;
}

Point random_point(const HybridModel& m, Rng& rng) {
  Point p(static_cast<size_t>(m.num_vars()));
  for (int i = 0; i < m.num_vars(); ++i) {
    const auto& v = m.var(i);
    p[static_cast<size_t>(i)] =
        v.kind == VarKind::continuous
            ? rng.uniform()
            : static_cast<double>(rng.uniform_int(static_cast<uint64_t>(v.domain_size)));
  }
  return p;
}

}  // namespace

TEST_SUITE("basis") {

TEST_CASE("discrete backprojection of the all-ones factor is one") {
  HybridModel m = testsupport::discrete_toy_model(1.0, 3.0);
  BasisFunction f;
  f.discrete.scope = {"s0"};
  f.discrete.values = {1.0, 1.0};
  f = bound_basis(m, f);
  auto g = backproject_discrete(m, f.discrete);
  Point p = make_point(m, std::vector<double>{0.0}, std::vector<double>{1.0});
  CHECK(g.fn(p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("discrete backprojection of an indicator is the child probability") {
  HybridModel m = testsupport::discrete_toy_model(1.0, 3.0);
  BasisFunction f;
  f.discrete.scope = {"s0"};
  f.discrete.values = {0.0, 1.0};
  f = bound_basis(m, f);
  auto g = backproject_discrete(m, f.discrete);
  Point p = make_point(m, std::vector<double>{1.0}, std::vector<double>{0.0});
  CHECK(g.fn(p) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("action-dependent discriminants match exhaustive summation") {
  Rng rng(21);
  HybridModel m = random_hybrid_model(rng);
  BasisFunction f;
  f.discrete.scope = {"s0"};
  f.discrete.values = {0.0, 1.0, 0.0};
  f = bound_basis(m, f);
  auto g = backproject_discrete(m, f.discrete);
  const auto& d = std::get<DiscriminantCpf>(m.cpf_for(0));
  for (int i = 0; i < 40; ++i) {
    Point p = random_point(m, rng);
    std::vector<double> probs(3);
    d.probabilities(p, probs);
    CHECK(g.fn(p) == doctest::Approx(probs[1]).epsilon(1e-12));
  }
}

TEST_CASE("discrete backprojection rejects continuous scope variables") {
  HybridModel m = testsupport::one_channel_model(1.0, 1.0);
  DiscreteFactor f;
  f.scope = {"x0"};
  f.values = {1.0};
  f.ids = {0};
  f.sizes = {1};
  CHECK_THROWS_AS(backproject_discrete(m, f), MisuseError);
}

TEST_CASE("monomial backprojection closed forms") {
  SUBCASE("uniform first moment") {
    HybridModel m = testsupport::one_channel_model(1.0, 1.0);
    BasisFunction f = bound_basis(m, testsupport::monomial_basis("x", "x0", 1));
    auto g = backproject_monomial(m, f.monomial);
    Point p = make_point(m, std::vector<double>{0.2}, std::vector<double>{0.0});
    CHECK(g.fn(p) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("uniform second moment is one third") {
    HybridModel m = testsupport::one_channel_model(1.0, 1.0);
    BasisFunction f = bound_basis(m, testsupport::monomial_basis("x2", "x0", 2));
    auto g = backproject_monomial(m, f.monomial);
    Point p = make_point(m, std::vector<double>{0.9}, std::vector<double>{1.0});
    CHECK(g.fn(p) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("third moment of Beta(2,5) against quadrature") {
    HybridModel m = testsupport::one_channel_model(2.0, 5.0);
    BasisFunction f = bound_basis(m, testsupport::monomial_basis("x3", "x0", 3));
    auto g = backproject_monomial(m, f.monomial);
    Point p = make_point(m, std::vector<double>{0.5}, std::vector<double>{0.0});
    double oracle = integrate01(
        [&](double x) { return x * x * x * testsupport::beta_density(x, 2.0, 5.0); });
    CHECK(g.fn(p) == doctest::Approx(oracle).epsilon(1e-9));
  }
  SUBCASE("degree on a discriminant child is a misuse error") {
    HybridModel m = testsupport::discrete_toy_model(1.0, 1.0);
    MonomialFactor f;
    f.vars = {"s0"};
    f.degrees = {1};
    f.ids = {0};
    CHECK_THROWS_AS(backproject_monomial(m, f), MisuseError);
  }
}

TEST_CASE("mixture moments are component-weighted") {
  HybridModel m;
  m.state_vars.push_back(VariableSpec::cont("x0"));
  MixtureBetaCpf mix;
  mix.child = "x0";
  BetaCpf c1;
  c1.child = "x0";
  c1.h1 = testsupport::constant_fn(2.0);
  c1.h2 = testsupport::constant_fn(5.0);
  BetaCpf c2;
  c2.child = "x0";
  c2.h1 = testsupport::constant_fn(6.0);
  c2.h2 = testsupport::constant_fn(2.0);
  mix.components.push_back({0.3, c1});
  mix.components.push_back({0.7, c2});
  m.cpfs.push_back(mix);
  m.rewards.push_back(testsupport::constant_fn(0.0));
  REQUIRE(validate_model(m).empty());

  BasisFunction f = bound_basis(m, testsupport::monomial_basis("x2", "x0", 2));
  auto g = backproject_monomial(m, f.monomial);
  Point p = make_point(m, std::vector<double>{0.5}, std::vector<double>{});
  double oracle = integrate01([&](double x) {
    return x * x *
           (0.3 * testsupport::beta_density(x, 2.0, 5.0) +
            0.7 * testsupport::beta_density(x, 6.0, 2.0));
  });
  CHECK(g.fn(p) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("piecewise-linear backprojection") {
  SUBCASE("constant factor has expectation one") {
    HybridModel m = testsupport::one_channel_model(3.0, 4.0);
    PwlProductFactor f;
    f.parts.push_back({"x0", {0.0, 1.0}, {1.0, 1.0}, -1});
    f.ids = {0};
    auto g = backproject_piecewise_linear(m, f);
    Point p = make_point(m, std::vector<double>{0.5}, std::vector<double>{0.0});
    CHECK(g.fn(p) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("identity under Beta(1,1) is one half") {
    HybridModel m = testsupport::one_channel_model(1.0, 1.0);
    PwlProductFactor f;
    f.parts.push_back({"x0", {0.0, 1.0}, {0.0, 1.0}, -1});
    f.ids = {0};
    auto g = backproject_piecewise_linear(m, f);
    Point p = make_point(m, std::vector<double>{0.2}, std::vector<double>{0.0});
    CHECK(g.fn(p) == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("hat under Beta(2,2) against quadrature") {
    HybridModel m = testsupport::one_channel_model(2.0, 2.0);
    PwlTerm hat{"x0", {0.0, 0.5, 1.0}, {0.0, 1.0, 0.0}, -1};
    PwlProductFactor f;
    f.parts.push_back(hat);
    f.ids = {0};
    auto g = backproject_piecewise_linear(m, f);
    Point p = make_point(m, std::vector<double>{0.8}, std::vector<double>{1.0});
    double oracle = testsupport::pwl_expectation_by_quadrature(
        hat, [&](double x) { return testsupport::beta_density(x, 2, 2); });
    CHECK(g.fn(p) == doctest::Approx(oracle).epsilon(1e-8));
  }
}

TEST_CASE("constraint function composition") {
  SUBCASE("constant basis gives 1 - gamma everywhere") {
    HybridModel m = testsupport::controlled_channel_model(0.9);
    BasisFunction f = bound_basis(m, BasisFunction::constant());
    auto F = constraint_function(m, f);
    Rng rng(31);
    for (int i = 0; i < 10; ++i) {
      Point p = random_point(m, rng);
      CHECK(F.fn(p) == doctest::Approx(0.1).epsilon(1e-12));
    }
  }
  SUBCASE("zero discount reduces to the basis itself") {
    HybridModel m = testsupport::one_channel_model(2.0, 2.0, 0.0);
    BasisFunction f = bound_basis(m, testsupport::monomial_basis("x", "x0", 1));
    auto F = constraint_function(m, f);
    Point p = make_point(m, std::vector<double>{0.3}, std::vector<double>{0.0});
    CHECK(F.fn(p) == doctest::Approx(0.3).epsilon(1e-12));
  }
  SUBCASE("quadratic basis on the uniform channel") {
    HybridModel m = testsupport::one_channel_model(1.0, 1.0, 0.9);
    BasisFunction f = bound_basis(m, testsupport::monomial_basis("x2", "x0", 2));
    auto F = constraint_function(m, f);
    for (double x : {0.0, 0.25, 0.7, 1.0}) {
      Point p = make_point(m, std::vector<double>{x}, std::vector<double>{0.0});
      CHECK(F.fn(p) == doctest::Approx(x * x - 0.9 / 3.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("relevance weights") {
  HybridModel m = testsupport::discrete_toy_model(1.0, 1.0);
  SUBCASE("constant basis has weight one under any density") {
    BasisFunction f = bound_basis(m, BasisFunction::constant());
    CHECK(relevance_weight(m, StateRelevanceDensity::uniform(), f) == doctest::Approx(1.0));
    StateRelevanceDensity psi;
    psi.marginals["s0"] = {Marginal::Kind::categorical, 0, 0, {0.2, 0.8}};
    CHECK(relevance_weight(m, psi, f) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("second moment under the uniform density") {
    HybridModel mc = testsupport::one_channel_model(1.0, 1.0);
    BasisFunction f = bound_basis(mc, testsupport::monomial_basis("x2", "x0", 2));
    CHECK(relevance_weight(mc, StateRelevanceDensity::uniform(), f) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("factored indicator times linear, against Monte Carlo") {
    HybridModel mm;
    mm.state_vars.push_back(VariableSpec::disc("d0", 2));
    mm.state_vars.push_back(VariableSpec::cont("x0"));
    DiscriminantCpf dc;
    dc.child = "d0";
    dc.discriminants.push_back(testsupport::constant_fn(1.0));
    dc.discriminants.push_back(testsupport::constant_fn(1.0));
    mm.cpfs.push_back(dc);
    BetaCpf bc;
    bc.child = "x0";
    bc.h1 = testsupport::constant_fn(1.0);
    bc.h2 = testsupport::constant_fn(1.0);
    mm.cpfs.push_back(bc);
    mm.rewards.push_back(testsupport::constant_fn(0.0));
    REQUIRE(validate_model(mm).empty());

    BasisFunction f;
    f.discrete.scope = {"d0"};
    f.discrete.values = {1.0, 0.0};  // indicator of the 0.3-mass category
    f.monomial.vars = {"x0"};
    f.monomial.degrees = {1};
    f = bound_basis(mm, f);

    StateRelevanceDensity psi;
    psi.marginals["d0"] = {Marginal::Kind::categorical, 0, 0, {0.3, 0.7}};
    psi.marginals["x0"] = {Marginal::Kind::beta, 2.0, 2.0, {}};
    double alpha = relevance_weight(mm, psi, f);
    CHECK(alpha == doctest::Approx(0.15).epsilon(1e-12));

    Rng rng(77);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      auto x = sample_state_from_psi(mm, psi, rng);
      Point p = make_point(mm, x, std::vector<double>{});
      double v = f.eval(p);
      sum += v;
      sq += v * v;
    }
    double mean = sum / n;
    double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::fabs(mean - alpha) <= 3.0 * se + 1e-9);
  }
  SUBCASE("missing marginal is a misuse error") {
    BasisFunction f;
    f.discrete.scope = {"s0"};
    f.discrete.values = {1.0, 2.0};
    f = bound_basis(m, f);
    StateRelevanceDensity psi;
    psi.default_uniform = false;
    CHECK_THROWS_AS(relevance_weight(m, psi, f), MisuseError);
  }
}

TEST_CASE("oracle equivalence on randomized models and bases") {
  Rng rng(91);
  int checked = 0;
  while (checked < 100) {
    HybridModel m = random_hybrid_model(rng);
    BasisFunction f;
    f.discrete.scope = {"s0"};
    f.discrete.values = {rng.uniform(), rng.uniform(), rng.uniform()};
    if (rng.uniform() < 0.5) {
      f.monomial.vars = {"x0", "x1"};
      f.monomial.degrees = {static_cast<int>(rng.uniform_int(4)),
                            static_cast<int>(rng.uniform_int(4))};
    } else {
      f.kind = ContFactorKind::piecewise_linear;
      f.pwl.parts.push_back({"x0", {0.0, 0.5, 1.0}, {rng.uniform(), rng.uniform(), rng.uniform()},
                             -1});
      f.pwl.parts.push_back({"x1", {0.0, 0.4, 1.0}, {rng.uniform(), rng.uniform(), rng.uniform()},
                             -1});
    }
    auto violations = bind_basis(m, f);
    REQUIRE(violations.empty());
    Backprojection g = backproject(m, f);
    for (int k = 0; k < 5; ++k, ++checked) {
      Point p = random_point(m, rng);
      double oracle = testsupport::backprojection_by_quadrature(m, f, p);
      CHECK(g.eval(p) == doctest::Approx(oracle).epsilon(1e-6));
    }
  }
}

TEST_CASE("backprojection scope minimality") {
  Rng rng(92);
  HybridModel m = random_hybrid_model(rng);
  BasisFunction f = bound_basis(m, testsupport::monomial_basis("x1", "x1", 2));
  Backprojection g = backproject(m, f);
  // x1's CPF reads only {a0, x0}; changing s0 and x1 must not move the value
  Point p = random_point(m, rng);
  Point q = p;
  q[0] = 2.0;                   // s0
  q[2] = rng.uniform();         // x1 itself (not a parent)
  CHECK(g.eval(p) == g.eval(q));
}

TEST_CASE("backprojection is linear in the discrete table") {
  Rng rng(93);
  HybridModel m = random_hybrid_model(rng);
  BasisFunction f1;
  f1.discrete.scope = {"s0"};
  f1.discrete.values = {0.1, 0.7, 0.3};
  BasisFunction f2 = f1;
  f2.discrete.values = {0.9, 0.2, 0.5};
  const double c1 = 1.7, c2 = -0.6;
  BasisFunction combo = f1;
  for (size_t i = 0; i < 3; ++i)
    combo.discrete.values[i] = c1 * f1.discrete.values[i] + c2 * f2.discrete.values[i];
  f1 = bound_basis(m, f1);
  f2 = bound_basis(m, f2);
  combo = bound_basis(m, combo);
  auto g1 = backproject_discrete(m, f1.discrete);
  auto g2 = backproject_discrete(m, f2.discrete);
  auto gc = backproject_discrete(m, combo.discrete);
  for (int i = 0; i < 20; ++i) {
    Point p = random_point(m, rng);
    CHECK(gc.fn(p) == doctest::Approx(c1 * g1.fn(p) + c2 * g2.fn(p)).epsilon(1e-12));
  }
}

TEST_CASE("constraint lipschitz bound is safe on the benchmark") {
  // crude check: the analytic bound dominates observed finite differences
  GeneratedBenchmark bench = generate_benchmark(BenchmarkSpec::ring(3));
  Rng rng(94);
  for (size_t bi = 0; bi < bench.basis.size(); bi += 4) {
    const auto& f = bench.basis[bi];
    double bound = lipschitz_bound_constraint(bench.model, f);
    auto F = constraint_function(bench.model, f);
    for (int i = 0; i < 20; ++i) {
      Point p = random_point(bench.model, rng);
      for (int v = 0; v < bench.model.num_state_vars(); ++v) {
        double h = 1e-5;
        Point q = p;
        q[static_cast<size_t>(v)] = std::min(1.0, p[static_cast<size_t>(v)] + h);
        double diff = std::fabs(F.fn(q) - F.fn(p)) /
                      std::max(1e-12, q[static_cast<size_t>(v)] - p[static_cast<size_t>(v)]);
        CHECK(diff <= bound + 1e-6);
      }
    }
  }
}

}  // TEST_SUITE
