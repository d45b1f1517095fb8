#pragma once

#include <cstdint>
#include <vector>

#include "halp/model.hpp"

namespace halp {

/// Number of grid values per continuous axis: ceil(1/(2 eps)) + 1, so that
/// every point of [0, 1] lies within eps of a grid value.
int eps_point_count(double eps);

struct GridAxis {
  VarId var = -1;
  bool is_continuous = true;
  std::vector<double> values;  // exact k/(count-1) for continuous axes

  int size() const { return static_cast<int>(values.size()); }
};

/// Per-axis discretization: continuous variables carry the eps grid, discrete
/// variables their full domain. Axis order follows variable ids.
struct EpsGrid {
  double eps = 1.0;
  std::vector<GridAxis> axes;

  uint64_t num_points() const;
  std::vector<int> sizes() const;
  /// Writes the grid point at multi-index z into the full point (only the
  /// axes' variables are touched).
  void fill_point(std::span<const int> z, std::span<double> point) const;
  /// Per-axis index of the nearest grid value.
  int nearest_index(int axis, double x) const;
};

enum class GridVars { state_and_action, state_only, action_only };

EpsGrid make_grid(const HybridModel& model, double eps, GridVars which);

}  // namespace halp
