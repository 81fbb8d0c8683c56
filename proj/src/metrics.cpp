#include "bimloc/metrics.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace bimloc {

double ate(const std::vector<TimedPose>& est, const std::vector<TimedPose>& gt) {
  if (est.empty() || gt.empty()) throw std::runtime_error("ate: empty trajectory");
  double frame = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < gt.size(); ++i) frame = std::min(frame, gt[i].t - gt[i - 1].t);
  if (!std::isfinite(frame)) frame = 0.0;

  double sum = 0.0;
  std::size_t matched = 0;
  for (const auto& e : est) {
    const TimedPose* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : gt) {
      const double dt = std::abs(g.t - e.t);
      if (dt < best) {
        best = dt;
        nearest = &g;
      }
    }
    if (!nearest || best > frame + 1e-9) continue;
    sum += (e.pose.t - nearest->pose.t).squaredNorm();
    ++matched;
  }
  if (matched == 0) throw std::runtime_error("ate: no matched timestamps");
  return std::sqrt(sum / static_cast<double>(matched));
}

MapRmseResult map_rmse(const SGraph& g, const PriorGraph& prior) {
  // Wall nodes that actually carry observations.
  std::set<std::string> observed_ids;
  for (const auto& f : g.factors())
    if (f.kind == FactorKind::PlaneObs) observed_ids.insert(f.wall_id);

  MapRmseResult res;
  double sum = 0.0;
  for (const auto& id : observed_ids) {
    const auto& node = g.wall_nodes().at(id);
    if (node.origin == NodeOrigin::Prior) {
      ++res.associated;  // fixed node, zero offset error by construction
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    const WallNode* match = nullptr;
    for (const auto& pw : prior.wall_nodes) {
      if (pw.cls != node.cls) continue;
      const double err = plane_error(to_minimal(node.plane), to_minimal(pw.plane),
                                     MahalanobisGate{Eigen::Vector3d(25, 25, 100).asDiagonal(), 7.81});
      if (err < best) {
        best = err;
        match = &pw;
      }
    }
    if (!match || best >= 7.81) {
      ++res.unassociated;
      continue;
    }
    sum += std::pow(std::abs(node.plane.d - match->plane.d), 2);
    ++res.associated;
  }
  if (res.associated == 0)
    throw std::runtime_error("map_rmse: no associated walls (" +
                             std::to_string(res.unassociated) + " unassociated)");
  res.rmse = std::sqrt(sum / static_cast<double>(res.associated));
  return res;
}

}  // namespace bimloc
