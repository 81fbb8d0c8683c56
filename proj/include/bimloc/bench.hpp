#pragma once

#include "bimloc/mcl.hpp"
#include "bimloc/metrics.hpp"
#include "bimloc/sgraph.hpp"
#include "bimloc/sim.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace bimloc {

struct ObsFrame {
  double t{0.0};
  Pose3 odom;
  std::vector<Plane> planes;
};

std::string obs_frame_to_json_line(const ObsFrame& f);
ObsFrame obs_frame_from_json_line(const std::string& line);
std::vector<ObsFrame> load_obs_log(const std::string& path);
void save_obs_log(const std::string& path, const std::vector<ObsFrame>& frames);

struct MclParams {
  int particles{1000};
  double sigma{0.1};
  MahalanobisGate gate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  PredictNoise noise{0.05, 0.05, 1.0 * M_PI / 180.0};
  ConvergenceCriteria conv;
  bool topo{true};
  double timeout{120.0};
};

struct MclRunResult {
  bool converged{false};
  double time{0.0};
  int frame{-1};
  Pose3 T_WO;
  Pose3 pose_at_convergence;
  std::string room_id;
  std::size_t association_ops{0};
  int reinit_count{0};
};

MclRunResult run_mcl(const PriorGraph& prior, const std::vector<ObsFrame>& frames,
                     const MclParams& params, std::uint64_t seed);

struct SGraphRunResult {
  std::vector<TimedPose> keyframe_trajectory;
  OptReport last_report;
  std::size_t observed_walls{0};
};

// Tracks frames starting at first_frame; optimizes after each new keyframe.
SGraphRunResult run_sgraph(SGraph& graph, const std::vector<ObsFrame>& frames,
                           std::size_t first_frame);

struct BenchConfig {
  std::string plan_path;
  TrajectorySpec trajectory;
  NoiseConfig noise;
  MclParams mcl;
  SGraphParams sgraph;
  double max_range{8.0};
  std::vector<std::uint64_t> seeds;
  bool topo{true};
  double timeout{120.0};
};

BenchConfig load_bench_config(const std::string& path);

struct RunReport {
  std::uint64_t seed{0};
  bool converged{false};
  double convergence_time{0.0};
  std::string converged_room;
  bool correct_room{false};
  double initial_pos_error{0.0};
  std::optional<double> ate_rmse;
  std::optional<double> map_rmse;
  std::size_t association_ops{0};
  std::size_t duplicate_walls{0};
};

struct BenchmarkReport {
  std::vector<RunReport> runs;
  int localized{0};
  int correct_room{0};
  std::optional<double> mean_ate;
  std::optional<double> mean_convergence_time;
};

BenchmarkReport run_benchmark(const BenchConfig& config);

nlohmann::ordered_json report_to_json(const BenchmarkReport& r);

// Simulates one seed of the configured scenario.
struct SimulatedRun {
  std::vector<TimedPose> gt;
  std::vector<ObsFrame> frames;
};
SimulatedRun simulate_run(const PriorGraph& prior, const Storey& storey, const BenchConfig& config,
                          std::uint64_t seed);

}  // namespace bimloc
