#include <doctest.h>

#include "halp/benchmark.hpp"
#include "halp/io.hpp"
#include "support/models.hpp"

using namespace halp;

TEST_SUITE("io") {

TEST_CASE("model round trip is the identity after one normalization") {
  for (auto spec : {BenchmarkSpec::ring(3), BenchmarkSpec::ring_of_rings(3)}) {
    GeneratedBenchmark bench = generate_benchmark(spec);
    std::string once = serialize_model(bench.model);
    HybridModel reparsed = parse_model(once);
    std::string twice = serialize_model(reparsed);
    CHECK(once == twice);
  }
}

TEST_CASE("mixture and discrete CPFs survive the round trip") {
  HybridModel m;
  m.state_vars.push_back(VariableSpec::cont("x0"));
  m.state_vars.push_back(VariableSpec::disc("s0", 2));
  MixtureBetaCpf mix;
  mix.child = "x0";
  BetaCpf b;
  b.child = "x0";
  b.h1 = testsupport::linear_fn("x0", 1.0, 0.5);
  b.h2 = testsupport::constant_fn(2.0);
  mix.components.push_back({0.25, b});
  b.h1 = testsupport::constant_fn(3.0);
  mix.components.push_back({0.75, b});
  m.cpfs.push_back(mix);
  DiscriminantCpf d;
  d.child = "s0";
  d.discriminants.push_back(testsupport::constant_fn(1.0));
  d.discriminants.push_back(testsupport::linear_fn("x0", 0.5, 1.0));
  m.cpfs.push_back(d);
  ScopedFunction gr;
  gr.continuous_scope = {"x0"};
  GaussTerm gt;
  gt.var = "x0";
  gt.components.push_back({1.0, 0.5, 0.01});
  gr.table.push_back(ContinuousExpr::make_gauss({gt}));
  m.rewards.push_back(gr);
  m.discount = 0.9;
  REQUIRE(validate_model(m).empty());

  std::string once = serialize_model(m);
  std::string twice = serialize_model(parse_model(once));
  CHECK(once == twice);
}

TEST_CASE("basis round trip preserves psi") {
  GeneratedBenchmark bench = generate_benchmark(BenchmarkSpec::ring(3));
  StateRelevanceDensity psi;
  psi.marginals["x0"] = {Marginal::Kind::beta, 2.0, 3.0, {}};
  std::string once = serialize_basis(bench.basis, psi);
  BasisFile parsed = parse_basis(once, bench.model);
  CHECK(serialize_basis(parsed.basis, parsed.psi) == once);
  REQUIRE(parsed.psi.find("x0") != nullptr);
  CHECK(parsed.psi.find("x0")->a == 2.0);
}

TEST_CASE("solution round trip") {
  SolutionFile sol;
  sol.weights = {1.5, -2.25, 0.0};
  sol.objective = 3.125;
  sol.eps = 0.125;
  sol.measured_delta = 1e-7;
  sol.basis_ref = "basis.json";
  sol.constraints_added = 42;
  sol.search = "exhaustive";
  sol.delta_probe = "grid";
  sol.status = "optimal";
  std::string text = serialize_solution(sol);
  SolutionFile parsed = parse_solution(text);
  CHECK(parsed.weights == sol.weights);
  CHECK(parsed.objective == sol.objective);
  CHECK(parsed.eps == sol.eps);
  CHECK(parsed.constraints_added == 42);
  CHECK(serialize_solution(parsed) == text);
}

TEST_CASE("malformed json raises ParseError with the origin") {
  try {
    parse_model("{ not json", "input.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("input.json") != std::string::npos);
  }
}

TEST_CASE("missing keys raise ParseError") {
  CHECK_THROWS_AS(parse_model(R"({"state_vars": []})"), ParseError);
  GeneratedBenchmark bench = generate_benchmark(BenchmarkSpec::ring(3));
  CHECK_THROWS_AS(parse_basis(R"({"basis": [{"continuous_factor": {}}]})", bench.model),
                  ParseError);
}

TEST_CASE("invariant violations raise ValidationError with details") {
  std::string text = R"({
    "state_vars": [{"name": "x0", "kind": "continuous"}],
    "action_vars": [],
    "cpfs": [{"child": "x0", "type": "beta", "floor": 0.001,
      "h1": {"continuous_scope": ["x9"], "table": [{"form": "constant", "value": 1.0}]},
      "h2": {"table": [{"form": "constant", "value": 1.0}]}}],
    "rewards": [],
    "discount": 1.0
  })";
  try {
    parse_model(text, "bad.json");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    bool saw_x9 = false, saw_discount = false;
    for (const auto& v : e.violations) {
      if (v.find("x9") != std::string::npos) saw_x9 = true;
      if (v.find("discount") != std::string::npos) saw_discount = true;
    }
    CHECK(saw_x9);
    CHECK(saw_discount);
  }
}

TEST_CASE("missing file raises ParseError naming the path") {
  try {
    load_model("/nonexistent/halp-model.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/halp-model.json") != std::string::npos);
  }
}

}  // TEST_SUITE
