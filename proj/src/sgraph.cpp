#include "bimloc/sgraph.hpp"

#include <algorithm>
#include <limits>

namespace bimloc {

namespace {

Eigen::Quaterniond exp_quat(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Eigen::Quaterniond::Identity();
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

// 6-dim pose residual: translation difference + 2 * vec of the error quaternion.
Eigen::Matrix<double, 6, 1> pose_residual(const Pose3& pred, const Pose3& meas) {
  Eigen::Matrix<double, 6, 1> r;
  r.head<3>() = pred.t - meas.t;
  Eigen::Quaterniond qe = meas.q.conjugate() * pred.q;
  if (qe.w() < 0.0) qe.coeffs() = -qe.coeffs();
  r.tail<3>() = 2.0 * qe.vec();
  return r;
}

double rotation_angle(const Pose3& p) {
  return 2.0 * std::acos(std::clamp(std::abs(p.q.w()), 0.0, 1.0));
}

// Wall position along its class axis.
double wall_offset(const Plane& p, WallClass cls) {
  return cls == WallClass::XVertical ? -p.d / p.n.x() : -p.d / p.n.y();
}

}  // namespace

struct SGraph::State {
  std::vector<Pose3> kf_poses;
  std::map<std::string, PlaneMinimal> walls;    // observed walls only
  std::map<std::string, Eigen::Vector2d> rooms;  // observed rooms only
};

SGraph::SGraph(const PriorGraph& prior, const Pose3& T_WO, const SGraphParams& params)
    : prior_(prior), T_WO_(T_WO), params_(params) {
  if (prior.wall_nodes.empty()) throw std::runtime_error("prior graph is empty");
  for (const auto& n : prior.wall_nodes)
    wall_nodes_[n.id] = GraphWallNode{n.id, n.plane, n.cls, NodeOrigin::Prior};
  for (const auto& r : prior.room_nodes)
    room_nodes_[r.id] = GraphRoomNode{r.id, r.center, NodeOrigin::Prior};
  index_params();
}

void SGraph::index_params() {
  total_params_ = 0;
  wall_param_.clear();
  room_param_.clear();
  for (const auto& [id, node] : wall_nodes_)
    if (node.origin == NodeOrigin::Observed) {
      wall_param_[id] = total_params_;
      total_params_ += 3;
    }
  for (const auto& [id, node] : room_nodes_)
    if (node.origin == NodeOrigin::Observed) {
      room_param_[id] = total_params_;
      total_params_ += 2;
    }
  kf_param_base_ = total_params_;
  total_params_ += 6 * static_cast<int>(keyframes_.size());
}

int SGraph::param_size() const { return total_params_; }

std::size_t SGraph::observed_wall_count() const {
  std::size_t n = 0;
  for (const auto& [id, node] : wall_nodes_)
    if (node.origin == NodeOrigin::Observed) ++n;
  return n;
}

std::string SGraph::associate_plane(const Plane& obs_L, int kf_id) {
  const Keyframe& kf = keyframes_.at(kf_id);
  const Plane obs_W = transform_plane(kf.pose, obs_L);
  const WallClass cls = classify_wall(obs_W);
  if (cls == WallClass::NonWall) return {};
  const PlaneMinimal obs_min = to_minimal(obs_W);

  std::string best_id;
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& [id, node] : wall_nodes_) {
    if (node.cls != cls) continue;
    const double err = plane_error(obs_min, to_minimal(node.plane), params_.gate);
    if (err < best_err) {
      best_err = err;
      best_id = id;
    }
  }

  std::string target;
  if (!best_id.empty() && best_err < params_.gate.threshold) {
    target = best_id;
  } else {
    target = "obs_wall_" + std::to_string(next_obs_wall_++);
    wall_nodes_[target] = GraphWallNode{target, obs_W, cls, NodeOrigin::Observed};
    index_params();
  }

  Factor f;
  f.kind = FactorKind::PlaneObs;
  f.kf_a = kf_id;
  f.wall_id = target;
  f.plane_meas = to_minimal(obs_L);
  f.sqrt_info = Eigen::Matrix3d(params_.gate.info.llt().matrixL().transpose());
  factors_.push_back(std::move(f));
  return target;
}

std::optional<RoomCandidate> SGraph::detect_room(int kf_id) const {
  // Walls associated with this keyframe via plane factors.
  std::vector<const GraphWallNode*> walls;
  for (const auto& f : factors_)
    if (f.kind == FactorKind::PlaneObs && f.kf_a == kf_id) {
      auto it = wall_nodes_.find(f.wall_id);
      if (it != wall_nodes_.end()) walls.push_back(&it->second);
    }
  if (walls.empty()) return std::nullopt;

  const Eigen::Vector3d at = keyframes_.at(kf_id).pose.t;
  auto pick = [&](WallClass cls, bool positive) -> const GraphWallNode* {
    const GraphWallNode* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto* w : walls) {
      if (w->cls != cls) continue;
      const double comp = cls == WallClass::XVertical ? w->plane.n.x() : w->plane.n.y();
      if ((comp > 0.0) != positive) continue;
      const double dist = std::abs(w->plane.eval(at));
      if (dist < best_dist) {
        best_dist = dist;
        best = w;
      }
    }
    return best;
  };

  const GraphWallNode* xp = pick(WallClass::XVertical, true);
  const GraphWallNode* xn = pick(WallClass::XVertical, false);
  const GraphWallNode* yp = pick(WallClass::YVertical, true);
  const GraphWallNode* yn = pick(WallClass::YVertical, false);
  if (!xp || !xn || !yp || !yn) return std::nullopt;

  RoomCandidate cand;
  cand.center.x() = 0.5 * (wall_offset(xp->plane, WallClass::XVertical) +
                           wall_offset(xn->plane, WallClass::XVertical));
  cand.center.y() = 0.5 * (wall_offset(yp->plane, WallClass::YVertical) +
                           wall_offset(yn->plane, WallClass::YVertical));
  cand.wall_node_ids = {xp->id, xn->id, yp->id, yn->id};
  return cand;
}

std::string SGraph::associate_room(const RoomCandidate& cand_in) {
  RoomCandidate cand = cand_in;

  std::string best_id;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& [id, node] : room_nodes_) {
    const double dist = (node.center - cand.center).norm();
    if (dist > params_.room_tol) continue;
    if (dist < best_dist || (dist == best_dist && id < best_id)) {
      best_dist = dist;
      best_id = id;
    }
  }

  if (best_id.empty()) {
    best_id = "obs_room_" + std::to_string(next_obs_room_++);
    room_nodes_[best_id] = GraphRoomNode{best_id, cand.center, NodeOrigin::Observed};
    index_params();
  } else if (room_nodes_.at(best_id).origin == NodeOrigin::Prior) {
    // Merge observed walls duplicating a prior wall of the matched room.
    const auto prior_walls = prior_.room_wall_indices(best_id);
    for (auto& wid : cand.wall_node_ids) {
      auto it = wall_nodes_.find(wid);
      if (it == wall_nodes_.end() || it->second.origin != NodeOrigin::Observed) continue;
      std::string merge_into;
      double merge_err = std::numeric_limits<double>::infinity();
      for (int pi : prior_walls) {
        const WallNode& pw = prior_.wall_nodes[pi];
        if (pw.cls != it->second.cls) continue;
        const double err =
            plane_error(to_minimal(it->second.plane), to_minimal(pw.plane), params_.gate);
        if (err < params_.gate.threshold && err < merge_err) {
          merge_err = err;
          merge_into = pw.id;
        }
      }
      if (merge_into.empty()) continue;
      for (auto& f : factors_) {
        if (f.wall_id == wid) f.wall_id = merge_into;
        for (auto& rw : f.room_walls)
          if (rw == wid) rw = merge_into;
      }
      wall_nodes_.erase(it);
      wid = merge_into;
      index_params();
    }
  }

  // One binding factor per (room, wall set).
  for (const auto& f : factors_)
    if (f.kind == FactorKind::RoomWall && f.room_id == best_id && f.room_walls == cand.wall_node_ids)
      return best_id;
  Factor f;
  f.kind = FactorKind::RoomWall;
  f.room_id = best_id;
  f.room_walls = cand.wall_node_ids;
  f.sqrt_info = Eigen::Matrix2d(Eigen::Matrix2d::Identity() * 2.0);
  factors_.push_back(std::move(f));
  return best_id;
}

std::optional<int> SGraph::add_frame(double t, const Pose3& odom, const std::vector<Plane>& obs) {
  last_odom_ = odom;
  has_frames_ = true;

  Pose3 rel;
  if (!keyframes_.empty()) {
    rel = pose_compose(pose_inverse(keyframes_.back().odom), odom);
    if (rel.t.norm() < params_.kf_dist && rotation_angle(rel) < params_.kf_rot)
      return std::nullopt;
  }

  Keyframe kf;
  kf.id = static_cast<int>(keyframes_.size());
  kf.t = t;
  kf.odom = odom;
  kf.pose = pose_compose(T_WO_, odom);
  keyframes_.push_back(kf);
  index_params();

  if (kf.id == 0) {
    Factor f;
    f.kind = FactorKind::PosePrior;
    f.kf_a = 0;
    f.pose_meas = kf.pose;
    f.sqrt_info = Eigen::MatrixXd::Identity(6, 6);
    factors_.push_back(std::move(f));
  } else {
    Factor f;
    f.kind = FactorKind::Odometry;
    f.kf_a = kf.id - 1;
    f.kf_b = kf.id;
    f.pose_meas = rel;
    Eigen::VectorXd w(6);
    w << 20.0, 20.0, 20.0, 50.0, 50.0, 50.0;
    f.sqrt_info = w.asDiagonal();
    factors_.push_back(std::move(f));
  }

  for (const auto& p : obs) associate_plane(p, kf.id);
  if (auto cand = detect_room(kf.id)) associate_room(*cand);
  return kf.id;
}

SGraph::State SGraph::retract(const Eigen::VectorXd& delta) const {
  State st;
  st.kf_poses.reserve(keyframes_.size());
  for (const auto& kf : keyframes_) st.kf_poses.push_back(kf.pose);
  for (const auto& [id, off] : wall_param_) st.walls[id] = to_minimal(wall_nodes_.at(id).plane);
  for (const auto& [id, off] : room_param_) st.rooms[id] = room_nodes_.at(id).center;
  if (delta.size() == 0) return st;

  for (const auto& [id, off] : wall_param_) {
    PlaneMinimal& m = st.walls[id];
    m.phi = wrap_angle(m.phi + delta[off]);
    m.theta += delta[off + 1];
    m.d += delta[off + 2];
  }
  for (const auto& [id, off] : room_param_) st.rooms[id] += delta.segment<2>(off);
  for (std::size_t k = 0; k < keyframes_.size(); ++k) {
    const int off = kf_param_base_ + 6 * static_cast<int>(k);
    Pose3& p = st.kf_poses[k];
    p.t += delta.segment<3>(off);
    p.q = p.q * exp_quat(delta.segment<3>(off + 3));
    p.canonicalize();
  }
  return st;
}

Eigen::VectorXd SGraph::residuals_of(const State& st) const {
  auto wall_plane_of = [&](const std::string& id) -> Plane {
    auto it = st.walls.find(id);
    if (it != st.walls.end()) return from_minimal(it->second);
    return wall_nodes_.at(id).plane;  // prior, fixed
  };
  auto room_center_of = [&](const std::string& id) -> Eigen::Vector2d {
    auto it = st.rooms.find(id);
    if (it != st.rooms.end()) return it->second;
    return room_nodes_.at(id).center;
  };

  int dim = 0;
  for (const auto& f : factors_)
    dim += f.kind == FactorKind::PlaneObs ? 3 : (f.kind == FactorKind::RoomWall ? 2 : 6);
  Eigen::VectorXd r(dim);
  int at = 0;
  for (const auto& f : factors_) {
    switch (f.kind) {
      case FactorKind::PosePrior: {
        r.segment<6>(at) = f.sqrt_info * pose_residual(st.kf_poses[f.kf_a], f.pose_meas);
        at += 6;
        break;
      }
      case FactorKind::Odometry: {
        const Pose3 pred = pose_compose(pose_inverse(st.kf_poses[f.kf_a]), st.kf_poses[f.kf_b]);
        r.segment<6>(at) = f.sqrt_info * pose_residual(pred, f.pose_meas);
        at += 6;
        break;
      }
      case FactorKind::PlaneObs: {
        const Plane pred_L =
            transform_plane(pose_inverse(st.kf_poses[f.kf_a]), wall_plane_of(f.wall_id));
        r.segment<3>(at) = f.sqrt_info * minimal_diff(to_minimal(pred_L), f.plane_meas);
        at += 3;
        break;
      }
      case FactorKind::RoomWall: {
        const Plane x1 = wall_plane_of(f.room_walls[0]);
        const Plane x2 = wall_plane_of(f.room_walls[1]);
        const Plane y1 = wall_plane_of(f.room_walls[2]);
        const Plane y2 = wall_plane_of(f.room_walls[3]);
        Eigen::Vector2d mid(
            0.5 * (wall_offset(x1, WallClass::XVertical) + wall_offset(x2, WallClass::XVertical)),
            0.5 * (wall_offset(y1, WallClass::YVertical) + wall_offset(y2, WallClass::YVertical)));
        r.segment<2>(at) = f.sqrt_info * (room_center_of(f.room_id) - mid);
        at += 2;
        break;
      }
    }
  }
  return r;
}

Eigen::VectorXd SGraph::eval_residuals(const Eigen::VectorXd& delta) const {
  return residuals_of(retract(delta));
}

Eigen::MatrixXd SGraph::jacobian() const {
  const int n = total_params_;
  const Eigen::VectorXd r0 = eval_residuals(Eigen::VectorXd::Zero(n));
  Eigen::MatrixXd J(r0.size(), n);
  const double h = 1e-6;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    delta[j] = h;
    const Eigen::VectorXd rp = eval_residuals(delta);
    delta[j] = -h;
    const Eigen::VectorXd rm = eval_residuals(delta);
    delta[j] = 0.0;
    J.col(j) = (rp - rm) / (2.0 * h);
  }
  return J;
}

void SGraph::apply(const State& st) {
  for (std::size_t k = 0; k < keyframes_.size(); ++k) keyframes_[k].pose = st.kf_poses[k];
  for (const auto& [id, m] : st.walls) wall_nodes_.at(id).plane = from_minimal(m);
  for (const auto& [id, c] : st.rooms) room_nodes_.at(id).center = c;
}

OptReport SGraph::optimize(int max_iters) {
  OptReport rep;
  if (keyframes_.empty()) throw std::runtime_error("graph has no keyframes");
  Eigen::VectorXd r = eval_residuals(Eigen::VectorXd::Zero(total_params_));
  double cost = 0.5 * r.squaredNorm();
  rep.initial_cost = cost;
  if (cost < 1e-12 || total_params_ == 0) {
    rep.final_cost = cost;
    rep.converged = true;
    return rep;
  }

  double lambda = 1e-4;
  for (int it = 0; it < max_iters; ++it) {
    ++rep.iterations;
    const Eigen::MatrixXd J = jacobian();
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;

    bool accepted = false;
    while (lambda < 1e10) {
      Eigen::MatrixXd damped = H;
      damped.diagonal().array() += lambda;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      if (ldlt.info() != Eigen::Success) {
        rep.singular = true;
        rep.final_cost = cost;
        return rep;
      }
      const Eigen::VectorXd delta = ldlt.solve(-g);
      if (!delta.allFinite()) {
        rep.singular = true;
        rep.final_cost = cost;
        return rep;
      }
      const State cand = retract(delta);
      const Eigen::VectorXd rc = residuals_of(cand);
      const double cand_cost = 0.5 * rc.squaredNorm();
      if (cand_cost < cost) {
        apply(cand);
        const double rel = (cost - cand_cost) / cost;
        cost = cand_cost;
        r = rc;
        lambda = std::max(lambda / 3.0, 1e-9);
        ++rep.accepted_steps;
        accepted = true;
        if (rel < 1e-6) {
          rep.converged = true;
          rep.final_cost = cost;
          return rep;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  rep.final_cost = cost;
  return rep;
}

Pose3 SGraph::current_pose() const {
  if (keyframes_.empty()) throw std::runtime_error("graph has no keyframes");
  const Keyframe& kf = keyframes_.back();
  return pose_compose(kf.pose, pose_compose(pose_inverse(kf.odom), last_odom_));
}

nlohmann::ordered_json SGraph::snapshot() const {
  nlohmann::ordered_json j;
  j["wall_nodes"] = nlohmann::ordered_json::array();
  for (const auto& [id, n] : wall_nodes_) {
    nlohmann::ordered_json w;
    w["id"] = id;
    w["origin"] = n.origin == NodeOrigin::Prior ? "prior" : "observed";
    w["n"] = {n.plane.n.x(), n.plane.n.y(), n.plane.n.z()};
    w["d"] = n.plane.d;
    j["wall_nodes"].push_back(std::move(w));
  }
  j["room_nodes"] = nlohmann::ordered_json::array();
  for (const auto& [id, n] : room_nodes_) {
    nlohmann::ordered_json rn;
    rn["id"] = id;
    rn["origin"] = n.origin == NodeOrigin::Prior ? "prior" : "observed";
    rn["center"] = {n.center.x(), n.center.y()};
    j["room_nodes"].push_back(std::move(rn));
  }
  j["keyframes"] = nlohmann::ordered_json::array();
  for (const auto& kf : keyframes_) {
    nlohmann::ordered_json k;
    k["id"] = kf.id;
    k["t"] = kf.t;
    k["pose"] = {kf.pose.t.x(), kf.pose.t.y(), kf.pose.t.z(),
                 kf.pose.q.w(), kf.pose.q.x(), kf.pose.q.y(), kf.pose.q.z()};
    j["keyframes"].push_back(std::move(k));
  }
  const Eigen::VectorXd r = eval_residuals(Eigen::VectorXd::Zero(total_params_));
  j["factors"] = nlohmann::ordered_json::array();
  int at = 0;
  for (const auto& f : factors_) {
    const int dim = f.kind == FactorKind::PlaneObs ? 3 : (f.kind == FactorKind::RoomWall ? 2 : 6);
    nlohmann::ordered_json fj;
    switch (f.kind) {
      case FactorKind::PosePrior: fj["kind"] = "pose_prior"; break;
      case FactorKind::Odometry: fj["kind"] = "odometry"; break;
      case FactorKind::PlaneObs: fj["kind"] = "plane_obs"; break;
      case FactorKind::RoomWall: fj["kind"] = "room_wall"; break;
    }
    if (f.kf_a >= 0) fj["kf"] = f.kf_a;
    if (f.kf_b >= 0) fj["kf_b"] = f.kf_b;
    if (!f.wall_id.empty()) fj["wall"] = f.wall_id;
    if (!f.room_id.empty()) fj["room"] = f.room_id;
    fj["residual_norm"] = r.segment(at, dim).norm();
    at += dim;
    j["factors"].push_back(std::move(fj));
  }
  return j;
}

}  // namespace bimloc
