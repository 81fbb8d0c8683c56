#pragma once

#include "bimloc/geometry.hpp"
#include "bimloc/plan.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bimloc {

struct Keyframe {
  int id{0};
  double t{0.0};
  Pose3 pose;  // estimate in W
  Pose3 odom;  // odometry pose at creation, in O
};

enum class NodeOrigin { Prior, Observed };

struct GraphWallNode {
  std::string id;
  Plane plane;
  WallClass cls{WallClass::XVertical};
  NodeOrigin origin{NodeOrigin::Prior};
};

struct GraphRoomNode {
  std::string id;
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  NodeOrigin origin{NodeOrigin::Prior};
};

enum class FactorKind { PosePrior, Odometry, PlaneObs, RoomWall };

struct Factor {
  FactorKind kind{FactorKind::PlaneObs};
  int kf_a{-1};
  int kf_b{-1};
  std::string wall_id;
  std::string room_id;
  std::vector<std::string> room_walls;  // RoomWall: x-pair then y-pair
  Pose3 pose_meas;                      // PosePrior / Odometry
  PlaneMinimal plane_meas;              // PlaneObs, in the keyframe frame
  Eigen::MatrixXd sqrt_info;
};

struct RoomCandidate {
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  std::vector<std::string> wall_node_ids;  // x-pair then y-pair
};

struct OptReport {
  double initial_cost{0.0};
  double final_cost{0.0};
  int iterations{0};
  int accepted_steps{0};
  bool converged{false};
  bool singular{false};
};

struct SGraphParams {
  double kf_dist{1.0};
  double kf_rot{15.0 * M_PI / 180.0};
  MahalanobisGate gate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  double room_tol{2.0};
  int max_iters{20};
};

class SGraph {
 public:
  SGraph(const PriorGraph& prior, const Pose3& T_WO, const SGraphParams& params);

  // Keyframe gating, plane association, room detection/association.
  std::optional<int> add_frame(double t, const Pose3& odom, const std::vector<Plane>& obs);

  OptReport optimize(int max_iters);
  OptReport optimize() { return optimize(params_.max_iters); }

  Pose3 current_pose() const;

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const std::map<std::string, GraphWallNode>& wall_nodes() const { return wall_nodes_; }
  const std::map<std::string, GraphRoomNode>& room_nodes() const { return room_nodes_; }
  const std::vector<Factor>& factors() const { return factors_; }
  const Pose3& initial_alignment() const { return T_WO_; }

  std::size_t observed_wall_count() const;

  nlohmann::ordered_json snapshot() const;

  // Association / detection primitives, exposed for direct testing.
  std::string associate_plane(const Plane& obs_L, int kf_id);
  std::optional<RoomCandidate> detect_room(int kf_id) const;
  std::string associate_room(const RoomCandidate& cand);

  // Residual stack at a state offset from the current estimate; delta of size
  // param_size(). Used by the optimizer and by Jacobian cross-checks.
  Eigen::VectorXd eval_residuals(const Eigen::VectorXd& delta) const;
  int param_size() const;
  Eigen::MatrixXd jacobian() const;  // central differences, as used by optimize()

 private:
  struct State;
  State retract(const Eigen::VectorXd& delta) const;
  Eigen::VectorXd residuals_of(const State& st) const;
  void apply(const State& st);
  void index_params();

  PriorGraph prior_;
  Pose3 T_WO_;
  SGraphParams params_;
  std::vector<Keyframe> keyframes_;
  std::map<std::string, GraphWallNode> wall_nodes_;
  std::map<std::string, GraphRoomNode> room_nodes_;
  std::vector<Factor> factors_;
  Pose3 last_odom_;
  bool has_frames_{false};
  int next_obs_wall_{0};
  int next_obs_room_{0};

  // Parameter layout (rebuilt when the node set changes).
  std::map<std::string, int> wall_param_;  // observed walls -> offset
  std::map<std::string, int> room_param_;  // observed rooms -> offset
  int kf_param_base_{0};
  int total_params_{0};
};

}  // namespace bimloc
