#include "halp/benchmark.hpp"

#include <algorithm>
#include <cmath>

namespace halp {

namespace {

/// Piecewise-linear representation of tau * clip(x + shift, margin, 1-margin)
/// on [0, 1]: the clip breakpoints become interior knots.
PwlTerm clipped_level(const std::string& var, double shift, double tau, double margin) {
  PwlTerm t;
  t.var = var;
  std::vector<double> knots = {0.0, 1.0};
  for (double k : {margin - shift, 1.0 - margin - shift})
    if (k > 1e-9 && k < 1.0 - 1e-9) knots.push_back(k);
  std::sort(knots.begin(), knots.end());
  for (double k : knots) {
    if (!t.knots.empty() && k - t.knots.back() < 1e-9) continue;
    t.knots.push_back(k);
    t.values.push_back(tau * std::clamp(k + shift, margin, 1.0 - margin));
  }
  return t;
}

struct ChannelDynamics {
  std::vector<std::string> devices;   // discrete scope, in order
  std::vector<int> modes;             // domain sizes
  // net flow contribution per (device position, mode)
  std::vector<std::vector<double>> flow;
  double external = 0.0;  // inlet minus outlet feed
};

/// Builds the beta CPF for one channel from the per-device flow tables.
BetaCpf channel_cpf(const std::string& channel, const ChannelDynamics& dyn,
                    const BenchmarkSpec& spec) {
  BetaCpf cpf;
  cpf.child = channel;

  size_t n_assign = 1;
  for (int m : dyn.modes) n_assign *= static_cast<size_t>(m);

  ScopedFunction h1;
  h1.discrete_scope = dyn.devices;
  h1.continuous_scope = {channel};
  ScopedFunction h2 = h1;

  std::vector<int> assign(dyn.devices.size(), 0);
  for (size_t idx = 0; idx < n_assign; ++idx) {
    double flow = dyn.external;
    for (size_t i = 0; i < dyn.devices.size(); ++i)
      flow += dyn.flow[i][static_cast<size_t>(assign[i])];
    PwlTerm up = clipped_level(channel, 0.5 * flow, spec.tau, spec.margin);
    PwlTerm down = up;
    for (auto& v : down.values) v = spec.tau - v;
    h1.table.push_back(ContinuousExpr::make_pwl({up}));
    h2.table.push_back(ContinuousExpr::make_pwl({down}));
    for (size_t i = dyn.devices.size(); i-- > 0;) {
      if (++assign[i] < dyn.modes[i]) break;
      assign[i] = 0;
    }
  }
  cpf.h1 = std::move(h1);
  cpf.h2 = std::move(h2);
  return cpf;
}

ScopedFunction linear_reward(const std::string& channel, double slope) {
  ScopedFunction f;
  f.continuous_scope = {channel};
  PolyTerm t;
  t.coef = slope;
  t.degrees = {1};
  f.table.push_back(ContinuousExpr::make_polynomial({t}));
  return f;
}

ScopedFunction gauss_reward(const std::string& channel, const BenchmarkSpec& spec) {
  ScopedFunction f;
  f.continuous_scope = {channel};
  GaussTerm t;
  t.var = channel;
  t.components.push_back({spec.gauss_weight, spec.gauss_mean, spec.gauss_std * spec.gauss_std});
  f.table.push_back(ContinuousExpr::make_gauss({t}));
  return f;
}

void add_channel_basis(std::vector<BasisFunction>& basis, const std::string& channel) {
  const std::vector<double> knots = {0.0, 0.4, 0.5, 0.6, 1.0};

  BasisFunction lin;
  lin.name = channel + ".lin";
  lin.discrete.values = {1.0};
  lin.monomial.vars = {channel};
  lin.monomial.degrees = {1};
  basis.push_back(std::move(lin));

  // shoulder/tent family: every shape is nonzero on the coarse grids
  // {0, 1/2, 1}, which keeps the weights constrained at low resolutions
  auto add_pwl = [&](const char* tag, std::vector<double> values) {
    BasisFunction f;
    f.name = channel + tag;
    f.discrete.values = {1.0};
    f.kind = ContFactorKind::piecewise_linear;
    f.pwl.parts.push_back({channel, knots, std::move(values), -1});
    basis.push_back(std::move(f));
  };
  add_pwl(".low", {1.0, 1.0, 0.0, 0.0, 0.0});
  add_pwl(".mid", {0.0, 0.0, 1.0, 0.0, 0.0});
  add_pwl(".high", {0.0, 0.0, 0.0, 1.0, 1.0});
}

}  // namespace

GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec) {
  if (spec.n < 3) throw MisuseError("generate_benchmark: ring topologies need n >= 3");

  GeneratedBenchmark out;
  HybridModel& model = out.model;
  model.discount = spec.discount;

  auto ch_name = [](int i) { return "x" + std::to_string(i); };
  auto dev_name = [](int i) { return "a" + std::to_string(i); };

  if (spec.topology == BenchmarkSpec::Topology::ring) {
    // n channels in a cycle; device i pumps channel i into channel i+1
    int n = spec.n;
    int drain = n / 2;
    for (int i = 0; i < n; ++i) model.state_vars.push_back(VariableSpec::cont(ch_name(i)));
    for (int i = 0; i < n; ++i) model.action_vars.push_back(VariableSpec::disc(dev_name(i), 2));

    for (int i = 0; i < n; ++i) {
      ChannelDynamics dyn;
      int prev = (i + n - 1) % n;
      dyn.devices = {dev_name(prev), dev_name(i)};
      dyn.modes = {2, 2};
      dyn.flow = {{0.0, spec.pump_rate}, {0.0, -spec.pump_rate}};
      if (i == 0) dyn.external += spec.inflow;
      if (i == drain) dyn.external -= spec.outflow;
      model.cpfs.push_back(channel_cpf(ch_name(i), dyn, spec));
      model.rewards.push_back(i == drain ? linear_reward(ch_name(i), spec.linear_slope)
                                         : gauss_reward(ch_name(i), spec));
    }
    out.basis.push_back(BasisFunction::constant());
    for (int i = 0; i < n; ++i) add_channel_basis(out.basis, ch_name(i));
  } else {
    // n sub-rings of three channels (A=3r, B=3r+1, C=3r+2); two in-ring
    // devices plus a junction that can route C back to its own A or on to
    // the next ring's A
    int n = spec.n;
    int n_ch = 3 * n;
    int drain = 3 * (n / 2) + 2;
    for (int i = 0; i < n_ch; ++i) model.state_vars.push_back(VariableSpec::cont(ch_name(i)));
    auto dA = [&](int r) { return "a" + std::to_string(3 * r); };      // A_r -> B_r
    auto dB = [&](int r) { return "a" + std::to_string(3 * r + 1); };  // B_r -> C_r
    auto dJ = [&](int r) { return "a" + std::to_string(3 * r + 2); };  // junction
    for (int r = 0; r < n; ++r) {
      model.action_vars.push_back(VariableSpec::disc(dA(r), 2));
      model.action_vars.push_back(VariableSpec::disc(dB(r), 2));
      model.action_vars.push_back(VariableSpec::disc(dJ(r), 3));
    }

    double p = spec.pump_rate;
    for (int r = 0; r < n; ++r) {
      int prev = (r + n - 1) % n;
      int a = 3 * r, b = 3 * r + 1, c = 3 * r + 2;
      {
        // A_r: in from J_{r-1} (mode 1) and J_r (mode 2), out via dA_r
        ChannelDynamics dyn;
        dyn.devices = {dJ(prev), dJ(r), dA(r)};
        dyn.modes = {3, 3, 2};
        dyn.flow = {{0.0, p, 0.0}, {0.0, 0.0, p}, {0.0, -p}};
        if (a == 0) dyn.external += spec.inflow;
        if (a == drain) dyn.external -= spec.outflow;
        model.cpfs.push_back(channel_cpf(ch_name(a), dyn, spec));
      }
      {
        // B_r: in via dA_r, out via dB_r
        ChannelDynamics dyn;
        dyn.devices = {dA(r), dB(r)};
        dyn.modes = {2, 2};
        dyn.flow = {{0.0, p}, {0.0, -p}};
        if (b == drain) dyn.external -= spec.outflow;
        model.cpfs.push_back(channel_cpf(ch_name(b), dyn, spec));
      }
      {
        // C_r: in via dB_r, out whenever J_r pumps (either target)
        ChannelDynamics dyn;
        dyn.devices = {dB(r), dJ(r)};
        dyn.modes = {2, 3};
        dyn.flow = {{0.0, p}, {0.0, -p, -p}};
        if (c == drain) dyn.external -= spec.outflow;
        model.cpfs.push_back(channel_cpf(ch_name(c), dyn, spec));
      }
    }
    for (int i = 0; i < n_ch; ++i)
      model.rewards.push_back(i == drain ? linear_reward(ch_name(i), spec.linear_slope)
                                         : gauss_reward(ch_name(i), spec));
    out.basis.push_back(BasisFunction::constant());
    for (int i = 0; i < n_ch; ++i) add_channel_basis(out.basis, ch_name(i));
  }

  auto violations = model.bind();
  if (!violations.empty())
    throw std::logic_error("generate_benchmark: generated model failed validation: " +
                           violations.front());
  auto bviol = bind_basis_set(model, out.basis);
  if (!bviol.empty())
    throw std::logic_error("generate_benchmark: generated basis failed validation: " +
                           bviol.front());
  return out;
}

}  // namespace halp
