#include "bimloc/sim.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace bimloc {

namespace {

Eigen::Vector3d horizontal_dir(const Eigen::Vector3d& n) {
  Eigen::Vector3d u(-n.y(), n.x(), 0.0);
  const double norm = u.norm();
  if (norm < 1e-12) return Eigen::Vector3d::UnitY();
  return u / norm;
}

}  // namespace

std::vector<WallFace> build_faces(const Storey& s) {
  std::vector<WallFace> faces;
  for (const auto& w : s.walls) {
    const Plane front = wall_plane(w);
    const Plane back = duplicate_wall(front, w.thickness);
    faces.push_back({w.id + ":front", front, w.start, horizontal_dir(front.n), w.length, w.height});
    faces.push_back({w.id + ":back", back, w.start, horizontal_dir(back.n), w.length, w.height});
  }
  return faces;
}

std::vector<TimedPose> generate_trajectory(const TrajectorySpec& ts) {
  if (ts.waypoints.size() < 2) throw std::runtime_error("trajectory needs at least 2 waypoints");
  if (ts.speed <= 0.0 || ts.rate <= 0.0) throw std::runtime_error("speed and rate must be > 0");

  std::vector<double> seg_len;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < ts.waypoints.size(); ++i) {
    const double dx = ts.waypoints[i + 1].x - ts.waypoints[i].x;
    const double dy = ts.waypoints[i + 1].y - ts.waypoints[i].y;
    const double len = std::hypot(dx, dy);
    if (len < 1e-12) throw std::runtime_error("coincident consecutive waypoints");
    seg_len.push_back(len);
    total += len;
  }

  const double duration = total / ts.speed;
  const int samples = static_cast<int>(std::floor(duration * ts.rate + 1e-9)) + 1;
  std::vector<TimedPose> out;
  out.reserve(samples);
  for (int k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) / ts.rate;
    double s = std::min(ts.speed * t, total);
    std::size_t seg = 0;
    while (seg + 1 < seg_len.size() && s > seg_len[seg]) s -= seg_len[seg++];
    const double alpha = std::clamp(s / seg_len[seg], 0.0, 1.0);
    const Waypoint& a = ts.waypoints[seg];
    const Waypoint& b = ts.waypoints[seg + 1];
    const double x = a.x + alpha * (b.x - a.x);
    const double y = a.y + alpha * (b.y - a.y);
    const double yaw = wrap_angle(a.yaw + alpha * wrap_angle(b.yaw - a.yaw));
    out.push_back({t, Pose3::from_xy_yaw(x, y, yaw)});
  }
  return out;
}

std::vector<TimedPose> simulate_odometry(const std::vector<TimedPose>& gt, const NoiseConfig& nc) {
  if (gt.size() < 2) throw std::runtime_error("need at least 2 ground-truth poses");
  Rng rng(derive_seed(nc.seed, 0x0D03));
  std::vector<TimedPose> out;
  out.reserve(gt.size());
  out.push_back({gt.front().t, Pose3::identity()});
  for (std::size_t i = 1; i < gt.size(); ++i) {
    const Pose3 inc = pose_compose(pose_inverse(gt[i - 1].pose), gt[i].pose);
    const Pose3 perturb = Pose3::from_xy_yaw(rng.gaussian(nc.odom_sigma_x),
                                             rng.gaussian(nc.odom_sigma_y),
                                             rng.gaussian(nc.odom_sigma_yaw));
    out.push_back({gt[i].t, pose_compose(out.back().pose, pose_compose(inc, perturb))});
  }
  return out;
}

std::vector<PlaneObservation> observe_planes(const std::vector<WallFace>& faces, const Pose3& pose,
                                             double max_range, const NoiseConfig& nc, Rng& rng) {
  std::vector<PlaneObservation> out;
  const Pose3 T_LW = pose_inverse(pose);
  for (const auto& f : faces) {
    const double e = f.plane.eval(pose.t);
    if (e >= 0.0 || -e > max_range) continue;  // front side, within range
    const Eigen::Vector3d foot = pose.t - e * f.plane.n;
    const double s = (foot - f.anchor).dot(f.u);
    const double h = foot.z() - f.anchor.z();
    if (s < 0.0 || s > f.length || h < 0.0 || h > f.height) continue;

    Plane obs = transform_plane(T_LW, f.plane);
    if (nc.plane_sigma_angle > 0.0) {
      const Eigen::Vector3d axis(rng.gaussian(nc.plane_sigma_angle),
                                 rng.gaussian(nc.plane_sigma_angle),
                                 rng.gaussian(nc.plane_sigma_angle));
      const double angle = axis.norm();
      if (angle > 0.0)
        obs.n = Eigen::AngleAxisd(angle, axis / angle) * obs.n;
    }
    obs.d += rng.gaussian(nc.plane_sigma_offset);
    obs.n.normalize();
    out.push_back({obs, f.node_id});
  }
  return out;
}

std::vector<Eigen::Vector3d> sample_cloud(const std::vector<WallFace>& faces, const Pose3& pose,
                                          const CloudParams& params, double sigma_point, Rng& rng) {
  std::vector<Eigen::Vector3d> cloud;
  for (int ring = 0; ring < params.rings; ++ring) {
    const double el = params.ring_min + ring * params.ring_step;
    for (int az = 0; az < params.azimuth_steps; ++az) {
      const double a = 2.0 * M_PI * az / params.azimuth_steps;
      const Eigen::Vector3d dir_L(std::cos(el) * std::cos(a), std::cos(el) * std::sin(a),
                                  std::sin(el));
      const Eigen::Vector3d dir_W = pose.q * dir_L;
      double best_t = std::numeric_limits<double>::infinity();
      for (const auto& f : faces) {
        const double denom = f.plane.n.dot(dir_W);
        if (std::abs(denom) < 1e-12) continue;
        const double t = -f.plane.eval(pose.t) / denom;
        if (t <= 1e-9 || t > params.max_range || t >= best_t) continue;
        const Eigen::Vector3d hit = pose.t + t * dir_W;
        const double s = (hit - f.anchor).dot(f.u);
        const double h = hit.z() - f.anchor.z();
        if (s < 0.0 || s > f.length || h < 0.0 || h > f.height) continue;
        best_t = t;
      }
      if (std::isfinite(best_t)) cloud.push_back(dir_L * (best_t + rng.gaussian(sigma_point)));
    }
  }
  return cloud;
}

namespace {

Plane fit_plane_lsq(const std::vector<Eigen::Vector3d>& pts, const std::vector<int>& idx) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i : idx) centroid += pts[i];
  centroid /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : idx) {
    const Eigen::Vector3d d = pts[i] - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d n = es.eigenvectors().col(0).normalized();
  return Plane{n, -n.dot(centroid)};
}

std::vector<int> inliers_of(const std::vector<Eigen::Vector3d>& pts, const std::vector<int>& pool,
                            const Plane& p, double thresh) {
  std::vector<int> in;
  for (int i : pool)
    if (std::abs(p.eval(pts[i])) <= thresh) in.push_back(i);
  return in;
}

}  // namespace

std::vector<Plane> extract_planes_ransac(const std::vector<Eigen::Vector3d>& cloud,
                                         double dist_thresh, int min_inliers, int max_planes,
                                         std::uint64_t seed, int iterations) {
  std::vector<Plane> out;
  if (cloud.empty()) return out;
  Rng rng(derive_seed(seed, 0x4A5C));
  std::vector<int> pool(cloud.size());
  std::iota(pool.begin(), pool.end(), 0);

  for (int round = 0; round < max_planes && static_cast<int>(pool.size()) >= 3; ++round) {
    Plane best_plane;
    std::size_t best_count = 0;
    for (int it = 0; it < iterations; ++it) {
      const int a = pool[rng.index(pool.size())];
      const int b = pool[rng.index(pool.size())];
      const int c = pool[rng.index(pool.size())];
      if (a == b || b == c || a == c) continue;
      const Eigen::Vector3d n = (cloud[b] - cloud[a]).cross(cloud[c] - cloud[a]);
      const double norm = n.norm();
      if (norm < 1e-9) continue;
      const Plane cand{n / norm, -(n / norm).dot(cloud[a])};
      std::size_t count = 0;
      for (int i : pool)
        if (std::abs(cand.eval(cloud[i])) <= dist_thresh) ++count;
      if (count > best_count) {
        best_count = count;
        best_plane = cand;
      }
    }
    if (static_cast<int>(best_count) < min_inliers) break;

    // Least-squares refinement over inliers, then one re-collection pass.
    std::vector<int> in = inliers_of(cloud, pool, best_plane, dist_thresh);
    Plane refined = fit_plane_lsq(cloud, in);
    in = inliers_of(cloud, pool, refined, dist_thresh);
    if (static_cast<int>(in.size()) < min_inliers) break;
    refined = fit_plane_lsq(cloud, in);
    if (refined.eval(Eigen::Vector3d::Zero()) < 0.0) {
      refined.n = -refined.n;
      refined.d = -refined.d;
    }
    out.push_back(refined);

    std::vector<int> remaining;
    std::vector<char> is_in(cloud.size(), 0);
    for (int i : inliers_of(cloud, pool, refined, dist_thresh)) is_in[i] = 1;
    for (int i : pool)
      if (!is_in[i]) remaining.push_back(i);
    pool = std::move(remaining);
  }
  return out;
}

}  // namespace bimloc
