#include "bimloc/mcl.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace bimloc {

namespace {
constexpr double kFloorWeight = 1e-12;
constexpr std::uint64_t kResampleStream = 0x5e5a17ULL;
}  // namespace

int room_index_at(const PriorGraph& prior, const Eigen::Vector2d& p) {
  for (int i = 0; i < static_cast<int>(prior.room_nodes.size()); ++i)
    if (room_contains(prior.room_nodes[i], p)) return i;
  return -1;
}

ParticleSet init_particles(const PriorGraph& prior, int n, std::uint64_t seed) {
  if (prior.room_nodes.empty()) throw std::runtime_error("prior graph has no rooms");
  if (n < 1) throw std::runtime_error("particle count must be >= 1");

  std::vector<double> cum_area;
  double total = 0.0;
  for (const auto& r : prior.room_nodes) {
    total += (r.bbox_max - r.bbox_min).prod();
    cum_area.push_back(total);
  }

  ParticleSet s;
  s.seed = seed;
  s.particles.resize(n);
  Rng rng(derive_seed(seed, 0xB00F));
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const std::size_t ri =
        std::lower_bound(cum_area.begin(), cum_area.end(), pick) - cum_area.begin();
    const auto& r = prior.room_nodes[std::min(ri, prior.room_nodes.size() - 1)];
    const double x = rng.uniform(r.bbox_min.x(), r.bbox_max.x());
    const double y = rng.uniform(r.bbox_min.y(), r.bbox_max.y());
    const double yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
    Particle& p = s.particles[i];
    p.pose = Pose3::from_xy_yaw(x, y, yaw, prior.storey_elevation);
    p.weight = 1.0 / n;
    p.room = room_index_at(prior, {x, y});
  }
  return s;
}

void predict(ParticleSet& s, const OdomIncrement& u, const PredictNoise& noise,
             const PriorGraph& prior) {
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    Rng rng(derive_seed(s.seed, static_cast<std::uint64_t>(s.step_count) + 1, i));
    const Pose3 perturb = Pose3::from_xy_yaw(rng.gaussian(noise.sigma_x),
                                             rng.gaussian(noise.sigma_y),
                                             rng.gaussian(noise.sigma_yaw));
    Particle& p = s.particles[i];
    p.pose = pose_compose(p.pose, pose_compose(u.delta, perturb));
    p.room = room_index_at(prior, {p.pose.t.x(), p.pose.t.y()});
  }
}

namespace {

// Matching against precomputed minimal forms of every prior node; avoids
// re-deriving (phi, theta, d) per candidate inside the particle loop.
std::vector<Match> associate_cached(const Particle& p, const std::vector<Plane>& obs,
                                    const PriorGraph& prior,
                                    const std::vector<PlaneMinimal>& node_min,
                                    const std::vector<std::vector<int>>& room_lookup,
                                    const MahalanobisGate& gate, bool topo,
                                    std::size_t* candidates_checked) {
  // Candidate landmark set: with topological pruning on, only the walls of
  // the particle's room; a particle outside every room gets no candidates
  // (it ends up at floor weight, since no legal pose lies inside a wall or
  // beyond the building footprint). Without pruning, the whole storey.
  if (topo && p.room < 0) return {};
  const bool use_room = topo;
  const std::vector<int>* room_nodes = use_room ? &room_lookup[p.room] : nullptr;

  std::vector<Match> out;
  std::size_t checked = 0;
  for (int oi = 0; oi < static_cast<int>(obs.size()); ++oi) {
    const Plane obs_W = transform_plane(p.pose, obs[oi]);
    const WallClass cls = classify_wall(obs_W);
    if (cls == WallClass::NonWall) continue;
    const PlaneMinimal obs_min = to_minimal(obs_W);

    Match best;
    best.error = std::numeric_limits<double>::infinity();
    auto consider = [&](int ni) {
      if (prior.wall_nodes[ni].cls != cls) return;
      ++checked;
      const double err = plane_error(obs_min, node_min[ni], gate);
      if (err < best.error) {
        best.error = err;
        best.node_index = ni;
      }
    };
    if (use_room) {
      for (int ni : *room_nodes) consider(ni);
    } else {
      for (int ni = 0; ni < static_cast<int>(prior.wall_nodes.size()); ++ni) consider(ni);
    }
    if (best.node_index >= 0 && best.error < gate.threshold) {
      best.obs_index = oi;
      best.delta = minimal_diff(obs_min, node_min[best.node_index]);
      out.push_back(best);
    }
  }
  if (candidates_checked) *candidates_checked += checked;
  return out;
}

std::vector<PlaneMinimal> node_minimals(const PriorGraph& prior) {
  std::vector<PlaneMinimal> m;
  m.reserve(prior.wall_nodes.size());
  for (const auto& n : prior.wall_nodes) m.push_back(to_minimal(n.plane));
  return m;
}

std::vector<std::vector<int>> room_index_lookup(const PriorGraph& prior) {
  std::vector<std::vector<int>> lookup;
  lookup.reserve(prior.room_nodes.size());
  for (const auto& r : prior.room_nodes) lookup.push_back(prior.room_wall_indices(r.id));
  return lookup;
}

}  // namespace

std::vector<Match> associate(const Particle& p, const std::vector<Plane>& obs,
                             const PriorGraph& prior, const MahalanobisGate& gate, bool topo,
                             std::size_t* candidates_checked) {
  return associate_cached(p, obs, prior, node_minimals(prior), room_index_lookup(prior), gate,
                          topo, candidates_checked);
}

UpdateResult update_weights(ParticleSet& s, const std::vector<Plane>& obs, const PriorGraph& prior,
                            const WeightParams& wp, bool topo) {
  UpdateResult res;
  const double mu = wp.mu();
  const double inv_two_sigma2 = 1.0 / (2.0 * wp.sigma * wp.sigma);
  double total = 0.0;
  const auto node_min = node_minimals(prior);
  const auto room_lookup = room_index_lookup(prior);
  for (auto& p : s.particles) {
    // Same association as associate_cached, with the weight accumulated in
    // place to keep the per-particle loop allocation-free.
    if (topo && p.room < 0) {
      p.weight = kFloorWeight;
      total += p.weight;
      continue;
    }
    const bool use_room = topo;
    const std::vector<int>* room_nodes = use_room ? &room_lookup[p.room] : nullptr;
    double w = 1.0;
    std::size_t matched = 0;
    for (const auto& ob : obs) {
      const Plane obs_W = transform_plane(p.pose, ob);
      const WallClass cls = classify_wall(obs_W);
      if (cls == WallClass::NonWall) continue;
      const PlaneMinimal obs_min = to_minimal(obs_W);
      double best_err = std::numeric_limits<double>::infinity();
      int best_ni = -1;
      auto consider = [&](int ni) {
        if (prior.wall_nodes[ni].cls != cls) return;
        ++res.candidates_checked;
        const double err = plane_error(obs_min, node_min[ni], wp.gate);
        if (err < best_err) {
          best_err = err;
          best_ni = ni;
        }
      };
      if (use_room) {
        for (int ni : *room_nodes) consider(ni);
      } else {
        for (int ni = 0; ni < static_cast<int>(prior.wall_nodes.size()); ++ni) consider(ni);
      }
      if (best_ni >= 0 && best_err < wp.gate.threshold) {
        ++matched;
        const Eigen::Vector3d delta = minimal_diff(obs_min, node_min[best_ni]);
        w *= mu * std::exp(-delta.squaredNorm() * inv_two_sigma2);
      }
    }
    res.matches += matched;
    p.weight = (matched == 0) ? kFloorWeight : w;
    total += p.weight;
  }
  if (total <= 0.0) {
    res.status = UpdateStatus::AllZero;
    return res;
  }
  for (auto& p : s.particles) p.weight /= total;
  return res;
}

bool resample(ParticleSet& s, bool force) {
  const std::size_t n = s.particles.size();
  double sq = 0.0;
  for (const auto& p : s.particles) sq += p.weight * p.weight;
  const double n_eff = sq > 0.0 ? 1.0 / sq : 0.0;
  if (!force && n_eff >= static_cast<double>(n) / 2.0) return false;

  Rng rng(derive_seed(s.seed, static_cast<std::uint64_t>(s.step_count) + 1, kResampleStream));
  const double step = 1.0 / static_cast<double>(n);
  double u = rng.uniform() * step;
  std::vector<Particle> out;
  out.reserve(n);
  double cum = s.particles[0].weight;
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (u > cum && i + 1 < n) cum += s.particles[++i].weight;
    Particle p = s.particles[i];
    p.weight = step;
    out.push_back(p);
    u += step;
  }
  s.particles = std::move(out);
  return true;
}

std::optional<Pose3> check_convergence(const ParticleSet& s, const ConvergenceCriteria& c) {
  if (s.step_count < c.min_steps || s.particles.empty()) return std::nullopt;
  const Particle* best = &s.particles.front();
  Eigen::Vector3d mean_t = Eigen::Vector3d::Zero();
  double sin_sum = 0.0, cos_sum = 0.0;
  for (const auto& p : s.particles) {
    if (p.weight > best->weight) best = &p;
    mean_t += p.pose.t;
    sin_sum += std::sin(p.pose.yaw());
    cos_sum += std::cos(p.pose.yaw());
  }
  mean_t /= static_cast<double>(s.particles.size());
  const double mean_yaw = std::atan2(sin_sum, cos_sum);
  if ((best->pose.t - mean_t).norm() < c.pos_tol &&
      std::abs(wrap_angle(best->pose.yaw() - mean_yaw)) < c.yaw_tol)
    return best->pose;
  return std::nullopt;
}

Pose3 initial_transform(const Pose3& best_W, const Pose3& odom_O) {
  return pose_compose(best_W, pose_inverse(odom_O));
}

}  // namespace bimloc
