#pragma once

#include "bimloc/geometry.hpp"
#include "bimloc/plan.hpp"
#include "bimloc/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bimloc {

struct Particle {
  Pose3 pose;
  double weight{0.0};
  int room{-1};  // index into PriorGraph::room_nodes, -1 when outside every room
};

struct ParticleSet {
  std::vector<Particle> particles;
  std::uint64_t seed{0};
  int step_count{0};
};

struct WeightParams {
  double sigma{0.1};
  MahalanobisGate gate;
  double mu() const { return 1.0 / std::sqrt(2.0 * M_PI * sigma * sigma); }
};

struct OdomIncrement {
  Pose3 delta;  // pose at t expressed in the frame of pose at t-1
};

struct PredictNoise {
  double sigma_x{0.0};
  double sigma_y{0.0};
  double sigma_yaw{0.0};
};

struct ConvergenceCriteria {
  double pos_tol{0.5};
  double yaw_tol{10.0 * M_PI / 180.0};
  int min_steps{5};
};

struct Match {
  int obs_index{-1};
  int node_index{-1};              // into PriorGraph::wall_nodes
  Eigen::Vector3d delta{Eigen::Vector3d::Zero()};  // wrapped minimal difference
  double error{0.0};
};

enum class UpdateStatus { Ok, AllZero };

struct UpdateResult {
  UpdateStatus status{UpdateStatus::Ok};
  std::size_t candidates_checked{0};
  std::size_t matches{0};
};

ParticleSet init_particles(const PriorGraph& prior, int n, std::uint64_t seed);

void predict(ParticleSet& s, const OdomIncrement& u, const PredictNoise& noise,
             const PriorGraph& prior);

std::vector<Match> associate(const Particle& p, const std::vector<Plane>& obs,
                             const PriorGraph& prior, const MahalanobisGate& gate, bool topo,
                             std::size_t* candidates_checked = nullptr);

UpdateResult update_weights(ParticleSet& s, const std::vector<Plane>& obs, const PriorGraph& prior,
                            const WeightParams& wp, bool topo);

// Systematic resampling; runs only when N_eff < N/2 unless forced.
bool resample(ParticleSet& s, bool force = false);

std::optional<Pose3> check_convergence(const ParticleSet& s, const ConvergenceCriteria& c);

// T_WO such that T_WO (+) odom = best.
Pose3 initial_transform(const Pose3& best_W, const Pose3& odom_O);

int room_index_at(const PriorGraph& prior, const Eigen::Vector2d& p);

}  // namespace bimloc
