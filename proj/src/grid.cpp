#include "halp/grid.hpp"

#include <cmath>

namespace halp {

int eps_point_count(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw MisuseError("eps must lie in (0, 1]");
  return static_cast<int>(std::ceil(1.0 / (2.0 * eps) - 1e-9)) + 1;
}

uint64_t EpsGrid::num_points() const {
  uint64_t n = 1;
  for (const auto& a : axes) n *= static_cast<uint64_t>(a.values.size());
  return n;
}

std::vector<int> EpsGrid::sizes() const {
  std::vector<int> s;
  s.reserve(axes.size());
  for (const auto& a : axes) s.push_back(a.size());
  return s;
}

void EpsGrid::fill_point(std::span<const int> z, std::span<double> point) const {
  for (size_t i = 0; i < axes.size(); ++i)
    point[static_cast<size_t>(axes[i].var)] = axes[i].values[static_cast<size_t>(z[i])];
}

int EpsGrid::nearest_index(int axis, double x) const {
  const auto& vals = axes[static_cast<size_t>(axis)].values;
  int best = 0;
  double dist = std::fabs(x - vals[0]);
  for (size_t i = 1; i < vals.size(); ++i) {
    double d = std::fabs(x - vals[i]);
    if (d < dist) {
      dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

EpsGrid make_grid(const HybridModel& model, double eps, GridVars which) {
  if (!model.bound()) throw MisuseError("make_grid: model is not bound");
  EpsGrid grid;
  grid.eps = eps;
  int count = eps_point_count(eps);
  auto add_axis = [&](VarId id) {
    const auto& spec = model.var(id);
    GridAxis axis;
    axis.var = id;
    if (spec.kind == VarKind::continuous) {
      axis.is_continuous = true;
      axis.values.reserve(static_cast<size_t>(count));
      for (int k = 0; k < count; ++k)
        axis.values.push_back(static_cast<double>(k) / static_cast<double>(count - 1));
    } else {
      axis.is_continuous = false;
      axis.values.reserve(static_cast<size_t>(spec.domain_size));
      for (int k = 0; k < spec.domain_size; ++k) axis.values.push_back(static_cast<double>(k));
    }
    grid.axes.push_back(std::move(axis));
  };
  int n = model.num_state_vars();
  if (which != GridVars::action_only)
    for (VarId id = 0; id < n; ++id) add_axis(id);
  if (which != GridVars::state_only)
    for (VarId id = n; id < model.num_vars(); ++id) add_axis(id);
  return grid;
}

}  // namespace halp
