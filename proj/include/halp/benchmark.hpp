#pragma once

#include <string>
#include <vector>

#include "halp/basis.hpp"
#include "halp/model.hpp"

namespace halp {

/// Irrigation-network benchmark family: channels are continuous state
/// variables (water level), regulation devices are discrete action variables
/// whose modes select which incoming/outgoing channel pair to pump between
/// (mode 0 is idle). An uncontrolled inlet feeds the first channel and an
/// uncontrolled outlet drains the channel with the linear reward.
struct BenchmarkSpec {
  enum class Topology { ring, ring_of_rings };
  Topology topology = Topology::ring;
  int n = 6;  // rings have n channels; ring-of-rings has n sub-rings (3n channels)

  // dynamics: h1 = tau * clip(x + 0.5 * net_flow, margin, 1 - margin), h2 = tau - h1
  double tau = 20.0;
  double margin = 0.05;
  double pump_rate = 0.75;  // per active device, in level units per step
  double inflow = 0.25;     // inlet feed into the first channel
  double outflow = 0.25;    // outlet drain from the reward channel

  // rewards: linear on the outlet channel, Gaussian bump elsewhere
  double linear_slope = 1.0;
  double gauss_weight = 1.0;
  double gauss_mean = 0.5;
  double gauss_std = 0.1;

  double discount = 0.95;
  uint64_t seed = 0;  // reserved; generation is fully deterministic

  static BenchmarkSpec ring(int n) { return {Topology::ring, n}; }
  static BenchmarkSpec ring_of_rings(int n) { return {Topology::ring_of_rings, n}; }
};

struct GeneratedBenchmark {
  HybridModel model;
  std::vector<BasisFunction> basis;  // bound against the model
  StateRelevanceDensity psi;         // uniform product density
};

/// Builds the benchmark model and its per-channel basis recipe (constant +
/// linear + piecewise-linear features with knots {0, 0.4, 0.5, 0.6, 1}).
/// The generated model always validates.
GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec);

}  // namespace halp
