#pragma once

#include "bimloc/geometry.hpp"
#include "bimloc/plan.hpp"
#include "bimloc/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bimloc {

struct Waypoint {
  double x{0.0};
  double y{0.0};
  double yaw{0.0};
};

struct TrajectorySpec {
  std::vector<Waypoint> waypoints;
  double speed{1.0};  // m/s
  double rate{10.0};  // Hz
};

struct NoiseConfig {
  double odom_sigma_x{0.01};
  double odom_sigma_y{0.01};
  double odom_sigma_yaw{0.2 * M_PI / 180.0};
  double plane_sigma_angle{0.5 * M_PI / 180.0};
  double plane_sigma_offset{0.02};
  double cloud_sigma_point{0.01};
  std::uint64_t seed{0};
};

struct TimedPose {
  double t{0.0};
  Pose3 pose;
};

// One visible rectangle of a plan wall, with in-plane extent for ray and
// perpendicular-foot tests.
struct WallFace {
  std::string node_id;
  Plane plane;
  Eigen::Vector3d anchor{Eigen::Vector3d::Zero()};
  Eigen::Vector3d u{Eigen::Vector3d::UnitY()};  // horizontal in-plane direction
  double length{1.0};
  double height{1.0};
};

struct PlaneObservation {
  Plane plane;          // in L_t
  std::string node_id;  // generating face; ground-truth correspondence for oracles
};

struct CloudParams {
  double max_range{20.0};
  int azimuth_steps{360};
  // VLP-16 style rings: -15..15 degrees in 2 degree steps.
  int rings{16};
  double ring_min{-15.0 * M_PI / 180.0};
  double ring_step{2.0 * M_PI / 180.0};
};

std::vector<WallFace> build_faces(const Storey& s);

std::vector<TimedPose> generate_trajectory(const TrajectorySpec& ts);

std::vector<TimedPose> simulate_odometry(const std::vector<TimedPose>& gt, const NoiseConfig& nc);

std::vector<PlaneObservation> observe_planes(const std::vector<WallFace>& faces, const Pose3& pose,
                                             double max_range, const NoiseConfig& nc, Rng& rng);

std::vector<Eigen::Vector3d> sample_cloud(const std::vector<WallFace>& faces, const Pose3& pose,
                                          const CloudParams& params, double sigma_point, Rng& rng);

std::vector<Plane> extract_planes_ransac(const std::vector<Eigen::Vector3d>& cloud,
                                         double dist_thresh, int min_inliers, int max_planes,
                                         std::uint64_t seed, int iterations = 200);

}  // namespace bimloc
