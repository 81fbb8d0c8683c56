#include "bimloc/bench.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bimloc {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json pose_to_json(const Pose3& p) {
  return json::array({p.t.x(), p.t.y(), p.t.z(), p.q.w(), p.q.x(), p.q.y(), p.q.z()});
}

Pose3 pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw std::runtime_error("pose must be [x,y,z,qw,qx,qy,qz]");
  return Pose3(Eigen::Vector3d(j[0], j[1], j[2]),
               Eigen::Quaterniond(j[3], j[4], j[5], j[6]));
}

constexpr double kDeg = M_PI / 180.0;

}  // namespace

std::string obs_frame_to_json_line(const ObsFrame& f) {
  ordered_json j;
  j["t"] = f.t;
  j["odom"] = pose_to_json(f.odom);
  j["planes"] = json::array();
  for (const auto& p : f.planes) j["planes"].push_back({p.n.x(), p.n.y(), p.n.z(), p.d});
  return j.dump();
}

ObsFrame obs_frame_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  ObsFrame f;
  f.t = j.at("t");
  f.odom = pose_from_json(j.at("odom"));
  for (const auto& pj : j.at("planes")) {
    if (!pj.is_array() || pj.size() != 4) throw std::runtime_error("plane must be [nx,ny,nz,d]");
    Plane p{Eigen::Vector3d(pj[0], pj[1], pj[2]), pj[3]};
    const double norm = p.n.norm();
    if (norm < 0.99 || norm > 1.01) throw std::runtime_error("observation normal is not unit");
    p.n /= norm;
    f.planes.push_back(p);
  }
  return f;
}

std::vector<ObsFrame> load_obs_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observation log: " + path);
  std::vector<ObsFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    frames.push_back(obs_frame_from_json_line(line));
  }
  if (frames.empty()) throw std::runtime_error("observation log is empty: " + path);
  return frames;
}

void save_obs_log(const std::string& path, const std::vector<ObsFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write observation log: " + path);
  for (const auto& f : frames) out << obs_frame_to_json_line(f) << "\n";
}

MclRunResult run_mcl(const PriorGraph& prior, const std::vector<ObsFrame>& frames,
                     const MclParams& params, std::uint64_t seed) {
  MclRunResult res;
  if (frames.empty()) return res;
  WeightParams wp{params.sigma, params.gate};

  ParticleSet set = init_particles(prior, params.particles, seed);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const ObsFrame& frame = frames[i];
    if (frame.t - frames.front().t > params.timeout) break;
    if (i > 0) {
      const OdomIncrement u{pose_compose(pose_inverse(frames[i - 1].odom), frame.odom)};
      predict(set, u, params.noise, prior);
    }
    const UpdateResult ur = update_weights(set, frame.planes, prior, wp, params.topo);
    res.association_ops += ur.candidates_checked;
    if (ur.status == UpdateStatus::AllZero) {
      ++res.reinit_count;
      set = init_particles(prior, params.particles,
                           derive_seed(seed, 0xF00D, static_cast<std::uint64_t>(res.reinit_count)));
      continue;
    }
    ++set.step_count;

    // Convergence is judged on the informative (pre-resample) weights; after
    // resampling the best-by-weight particle would be an arbitrary index.
    if (auto best = check_convergence(set, params.conv)) {
      res.converged = true;
      res.time = frame.t - frames.front().t;
      res.frame = static_cast<int>(i);
      res.pose_at_convergence = *best;
      res.T_WO = initial_transform(*best, frame.odom);
      const int ri = room_index_at(prior, {best->t.x(), best->t.y()});
      if (ri >= 0) res.room_id = prior.room_nodes[ri].id;
      break;
    }
    resample(set);
  }
  return res;
}

SGraphRunResult run_sgraph(SGraph& graph, const std::vector<ObsFrame>& frames,
                           std::size_t first_frame) {
  SGraphRunResult res;
  for (std::size_t i = first_frame; i < frames.size(); ++i) {
    if (graph.add_frame(frames[i].t, frames[i].odom, frames[i].planes))
      res.last_report = graph.optimize();
  }
  for (const auto& kf : graph.keyframes()) res.keyframe_trajectory.push_back({kf.t, kf.pose});
  res.observed_walls = graph.observed_wall_count();
  return res;
}

BenchConfig load_bench_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;

  BenchConfig c;
  c.plan_path = j.at("plan");
  for (const auto& wj : j.at("trajectory").at("waypoints")) {
    Waypoint w;
    w.x = wj.at(0);
    w.y = wj.at(1);
    if (wj.size() > 2) w.yaw = wj.at(2);
    c.trajectory.waypoints.push_back(w);
  }
  // Waypoints without explicit yaw face the next waypoint.
  for (std::size_t i = 0; i < c.trajectory.waypoints.size(); ++i) {
    const auto& wj = j.at("trajectory").at("waypoints").at(i);
    if (wj.size() > 2) continue;
    auto& w = c.trajectory.waypoints[i];
    const auto& ref = c.trajectory.waypoints[i + 1 < c.trajectory.waypoints.size() ? i + 1 : i - 1];
    const auto& from = i + 1 < c.trajectory.waypoints.size() ? w : c.trajectory.waypoints[i - 1];
    w.yaw = std::atan2(ref.y - from.y, ref.x - from.x);
  }
  c.trajectory.speed = j.at("trajectory").value("speed", 1.0);
  c.trajectory.rate = j.at("trajectory").value("rate", 10.0);

  if (j.contains("noise")) {
    const auto& n = j["noise"];
    c.noise.odom_sigma_x = n.value("odom_sigma_xy", 0.01);
    c.noise.odom_sigma_y = n.value("odom_sigma_xy", 0.01);
    c.noise.odom_sigma_yaw = n.value("odom_sigma_yaw_deg", 0.2) * kDeg;
    c.noise.plane_sigma_angle = n.value("plane_sigma_angle_deg", 0.5) * kDeg;
    c.noise.plane_sigma_offset = n.value("plane_sigma_offset", 0.02);
    c.noise.cloud_sigma_point = n.value("cloud_sigma_point", 0.01);
  }
  if (j.contains("mcl")) {
    const auto& m = j["mcl"];
    c.mcl.particles = m.value("particles", 1000);
    c.mcl.sigma = m.value("sigma", 0.1);
    c.mcl.gate.threshold = m.value("gate_threshold", 7.81);
    if (m.contains("lambda")) {
      const auto& l = m["lambda"];
      c.mcl.gate.info = Eigen::Vector3d(l.at(0), l.at(1), l.at(2)).asDiagonal();
    }
    if (m.contains("predict_sigma")) {
      const auto& p = m["predict_sigma"];
      c.mcl.noise = {p.at(0), p.at(1), static_cast<double>(p.at(2)) * kDeg};
    }
    c.mcl.conv.pos_tol = m.value("pos_tol", 0.5);
    c.mcl.conv.yaw_tol = m.value("yaw_tol_deg", 10.0) * kDeg;
    c.mcl.conv.min_steps = m.value("min_steps", 5);
  }
  if (j.contains("sgraph")) {
    const auto& s = j["sgraph"];
    c.sgraph.kf_dist = s.value("kf_dist", 1.0);
    c.sgraph.kf_rot = s.value("kf_rot_deg", 15.0) * kDeg;
    c.sgraph.room_tol = s.value("room_tol", 2.0);
    c.sgraph.max_iters = s.value("max_iters", 20);
    c.sgraph.gate = c.mcl.gate;
  }
  c.max_range = j.value("max_range", 8.0);
  for (const auto& s : j.at("seeds")) c.seeds.push_back(s.get<std::uint64_t>());
  c.topo = j.value("topo", true);
  c.timeout = j.value("timeout", 120.0);
  c.mcl.topo = c.topo;
  c.mcl.timeout = c.timeout;
  return c;
}

SimulatedRun simulate_run(const PriorGraph& prior, const Storey& storey, const BenchConfig& config,
                          std::uint64_t seed) {
  SimulatedRun run;
  run.gt = generate_trajectory(config.trajectory);
  NoiseConfig nc = config.noise;
  nc.seed = derive_seed(seed, 0x0D01);
  const auto odom = simulate_odometry(run.gt, nc);
  const auto faces = build_faces(storey);
  Rng obs_rng(derive_seed(seed, 0x0B50));
  for (std::size_t i = 0; i < run.gt.size(); ++i) {
    ObsFrame f;
    f.t = run.gt[i].t;
    f.odom = odom[i].pose;
    for (const auto& o : observe_planes(faces, run.gt[i].pose, config.max_range, nc, obs_rng))
      f.planes.push_back(o.plane);
    run.frames.push_back(std::move(f));
  }
  return run;
}

BenchmarkReport run_benchmark(const BenchConfig& config) {
  const BuildingPlan plan = load_plan(config.plan_path);
  const Storey& storey = plan.storeys.front();
  const PriorGraph prior = build_prior_layers(storey);

  std::vector<std::uint64_t> seeds = config.seeds;
  std::sort(seeds.begin(), seeds.end());

  BenchmarkReport report;
  double ate_sum = 0.0, time_sum = 0.0;
  int ate_count = 0;
  for (std::uint64_t seed : seeds) {
    const SimulatedRun sim = simulate_run(prior, storey, config, seed);

    RunReport rr;
    rr.seed = seed;
    const MclRunResult mcl = run_mcl(prior, sim.frames, config.mcl, seed);
    rr.association_ops = mcl.association_ops;
    if (mcl.converged) {
      rr.converged = true;
      rr.convergence_time = mcl.time;
      rr.converged_room = mcl.room_id;
      const Pose3& gt_pose = sim.gt[mcl.frame].pose;
      rr.initial_pos_error = (mcl.pose_at_convergence.t - gt_pose.t).norm();
      const int gt_room = room_index_at(prior, {gt_pose.t.x(), gt_pose.t.y()});
      rr.correct_room = rr.initial_pos_error < 0.5 && gt_room >= 0 &&
                        prior.room_nodes[gt_room].id == mcl.room_id;

      SGraph graph(prior, mcl.T_WO, config.sgraph);
      const SGraphRunResult track =
          run_sgraph(graph, sim.frames, static_cast<std::size_t>(mcl.frame));
      if (!track.keyframe_trajectory.empty()) {
        rr.ate_rmse = ate(track.keyframe_trajectory, sim.gt);
        ate_sum += *rr.ate_rmse;
        ++ate_count;
      }
      try {
        rr.map_rmse = map_rmse(graph, prior).rmse;
      } catch (const std::runtime_error&) {
        rr.map_rmse = std::nullopt;
      }
      for (const auto& [id, node] : graph.wall_nodes()) {
        if (node.origin != NodeOrigin::Observed) continue;
        for (const auto& pw : prior.wall_nodes) {
          if (pw.cls != node.cls) continue;
          if (plane_error(to_minimal(node.plane), to_minimal(pw.plane), config.sgraph.gate) <
              config.sgraph.gate.threshold) {
            ++rr.duplicate_walls;
            break;
          }
        }
      }
      ++report.localized;
      if (rr.correct_room) ++report.correct_room;
      time_sum += mcl.time;
    }
    report.runs.push_back(std::move(rr));
  }
  if (ate_count > 0) report.mean_ate = ate_sum / ate_count;
  if (report.localized > 0) report.mean_convergence_time = time_sum / report.localized;
  return report;
}

nlohmann::ordered_json report_to_json(const BenchmarkReport& r) {
  ordered_json j;
  j["runs"] = ordered_json::array();
  for (const auto& run : r.runs) {
    ordered_json rj;
    rj["seed"] = run.seed;
    rj["localized"] = run.converged;
    if (run.converged) {
      rj["convergence_time"] = run.convergence_time;
      rj["converged_room"] = run.converged_room;
      rj["correct_room"] = run.correct_room;
      rj["initial_pos_error"] = run.initial_pos_error;
    } else {
      rj["convergence_time"] = nullptr;
      rj["converged_room"] = "N.L.";
      rj["correct_room"] = false;
      rj["initial_pos_error"] = nullptr;
    }
    rj["ate_rmse"] = run.ate_rmse ? ordered_json(*run.ate_rmse) : ordered_json(nullptr);
    rj["map_rmse"] = run.map_rmse ? ordered_json(*run.map_rmse) : ordered_json(nullptr);
    rj["association_ops"] = run.association_ops;
    rj["duplicate_walls"] = run.duplicate_walls;
    j["runs"].push_back(std::move(rj));
  }
  j["localized"] = r.localized;
  j["correct_room"] = r.correct_room;
  j["runs_total"] = r.runs.size();
  j["mean_ate"] = r.mean_ate ? ordered_json(*r.mean_ate) : ordered_json(nullptr);
  j["mean_convergence_time"] =
      r.mean_convergence_time ? ordered_json(*r.mean_convergence_time) : ordered_json(nullptr);
  return j;
}

}  // namespace bimloc
