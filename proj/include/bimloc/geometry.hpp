#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace bimloc {

constexpr double kCpEpsilon = 1e-6;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

// Rigid transform: translation + unit quaternion, canonicalized to q.w >= 0.
struct Pose3 {
  Eigen::Vector3d t{Eigen::Vector3d::Zero()};
  Eigen::Quaterniond q{Eigen::Quaterniond::Identity()};

  Pose3() = default;
  Pose3(const Eigen::Vector3d& t_in, const Eigen::Quaterniond& q_in) : t(t_in), q(q_in) {
    canonicalize();
  }

  void canonicalize() {
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  }

  static Pose3 identity() { return {}; }

  // Planar pose helper: z defaults to the floor.
  static Pose3 from_xy_yaw(double x, double y, double yaw, double z = 0.0) {
    return Pose3(Eigen::Vector3d(x, y, z),
                 Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ())));
  }

  double yaw() const {
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  }
};

inline Pose3 pose_compose(const Pose3& a, const Pose3& b) {
  return Pose3(a.t + a.q * b.t, a.q * b.q);
}

inline Pose3 pose_inverse(const Pose3& a) {
  const Eigen::Quaterniond qi = a.q.conjugate();
  return Pose3(-(qi * a.t), qi);
}

// Plane with convention n . p + d = 0, n unit.
struct Plane {
  Eigen::Vector3d n{Eigen::Vector3d::UnitX()};
  double d{0.0};

  Plane() = default;
  Plane(const Eigen::Vector3d& n_in, double d_in) : n(n_in), d(d_in) {}

  double eval(const Eigen::Vector3d& p) const { return n.dot(p) + d; }
};

// (azimuth, elevation, offset) form used for matching and optimization.
struct PlaneMinimal {
  double phi{0.0};
  double theta{0.0};
  double d{0.0};
};

// Closest point of the plane to the origin.
struct CPVector {
  Eigen::Vector3d pi{Eigen::Vector3d::Zero()};
};

struct MahalanobisGate {
  Eigen::Matrix3d info{Eigen::Matrix3d::Identity()};
  double threshold{7.81};
};

enum class WallClass { XVertical, YVertical, NonWall };

struct DegeneratePlaneError : std::runtime_error {
  DegeneratePlaneError() : std::runtime_error("plane passes through the origin; CP form undefined") {}
};

inline CPVector to_cp(const Plane& p) {
  if (std::abs(p.d) <= kCpEpsilon) throw DegeneratePlaneError();
  return CPVector{-p.d * p.n};
}

// Side bit for exact recovery: set when the source plane had d > 0.
inline bool cp_side_flipped(const Plane& p) { return p.d > 0.0; }

// Recovers the plane on the d < 0 side; pass the side bit to undo the joint
// sign flip for planes that had d > 0.
inline Plane from_cp(const CPVector& c, bool flipped = false) {
  const double norm = c.pi.norm();
  if (norm <= kCpEpsilon) throw DegeneratePlaneError();
  Plane p{c.pi / norm, -norm};
  if (flipped) {
    p.n = -p.n;
    p.d = -p.d;
  }
  return p;
}

inline PlaneMinimal to_minimal(const Plane& p) {
  PlaneMinimal m;
  const double h = std::hypot(p.n.x(), p.n.y());
  m.phi = (h < 1e-12) ? 0.0 : std::atan2(p.n.y(), p.n.x());
  m.theta = std::asin(std::clamp(p.n.z(), -1.0, 1.0));
  m.d = p.d;
  return m;
}

inline Plane from_minimal(const PlaneMinimal& m) {
  const double c = std::cos(m.theta);
  return Plane{Eigen::Vector3d(c * std::cos(m.phi), c * std::sin(m.phi), std::sin(m.theta)), m.d};
}

// Maps a plane expressed in frame L to frame W given T_WL.
inline Plane transform_plane(const Pose3& T_WL, const Plane& p_L) {
  const Eigen::Vector3d n_W = T_WL.q * p_L.n;
  return Plane{n_W, p_L.d - n_W.dot(T_WL.t)};
}

inline Eigen::Vector3d minimal_diff(const PlaneMinimal& a, const PlaneMinimal& b) {
  return {wrap_angle(a.phi - b.phi), a.theta - b.theta, a.d - b.d};
}

inline double plane_error(const PlaneMinimal& obs, const PlaneMinimal& map,
                          const MahalanobisGate& g) {
  const Eigen::Vector3d delta = minimal_diff(obs, map);
  return delta.dot(g.info * delta);
}

inline WallClass classify_wall(const Plane& p) {
  if (std::abs(p.n.z()) >= 0.707) return WallClass::NonWall;
  return std::abs(p.n.x()) >= std::abs(p.n.y()) ? WallClass::XVertical : WallClass::YVertical;
}

}  // namespace bimloc
