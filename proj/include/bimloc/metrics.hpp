#pragma once

#include "bimloc/sgraph.hpp"
#include "bimloc/sim.hpp"

#include <vector>

namespace bimloc {

// RMSE of translational differences between nearest-time pose pairs; both
// trajectories already share W, so no alignment step.
double ate(const std::vector<TimedPose>& est, const std::vector<TimedPose>& gt);

struct MapRmseResult {
  double rmse{0.0};
  std::size_t associated{0};
  std::size_t unassociated{0};
};

// Offset-difference RMSE of observed wall nodes against their best prior
// match; prior nodes that received observations contribute zero.
MapRmseResult map_rmse(const SGraph& g, const PriorGraph& prior);

}  // namespace bimloc
