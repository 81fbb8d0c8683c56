#include "bimloc/bench.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

int kExitOk = 0;
int kExitUsage = 1;
int kExitData = 2;
int kExitNotLocalized = 3;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

bimloc::TrajectorySpec load_traj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  json j;
  in >> j;
  bimloc::TrajectorySpec ts;
  for (const auto& wj : j.at("waypoints")) {
    bimloc::Waypoint w;
    w.x = wj.at(0);
    w.y = wj.at(1);
    if (wj.size() > 2) w.yaw = wj.at(2);
    ts.waypoints.push_back(w);
  }
  for (std::size_t i = 0; i < ts.waypoints.size(); ++i) {
    if (j.at("waypoints").at(i).size() > 2) continue;
    auto& w = ts.waypoints[i];
    const auto& nxt = ts.waypoints[i + 1 < ts.waypoints.size() ? i + 1 : i - 1];
    const auto& from = i + 1 < ts.waypoints.size() ? w : ts.waypoints[i - 1];
    w.yaw = std::atan2(nxt.y - from.y, nxt.x - from.x);
  }
  ts.speed = j.value("speed", 1.0);
  ts.rate = j.value("rate", 10.0);
  return ts;
}

bimloc::NoiseConfig load_noise(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open noise config: " + path);
  json j;
  in >> j;
  bimloc::NoiseConfig nc;
  constexpr double kDeg = M_PI / 180.0;
  nc.odom_sigma_x = j.value("odom_sigma_xy", 0.01);
  nc.odom_sigma_y = j.value("odom_sigma_xy", 0.01);
  nc.odom_sigma_yaw = j.value("odom_sigma_yaw_deg", 0.2) * kDeg;
  nc.plane_sigma_angle = j.value("plane_sigma_angle_deg", 0.5) * kDeg;
  nc.plane_sigma_offset = j.value("plane_sigma_offset", 0.02);
  nc.cloud_sigma_point = j.value("cloud_sigma_point", 0.01);
  return nc;
}

json pose_json(const bimloc::Pose3& p) {
  return json::array({p.t.x(), p.t.y(), p.t.z(), p.q.w(), p.q.x(), p.q.y(), p.q.z()});
}

bimloc::Pose3 pose_of(const json& j) {
  return bimloc::Pose3(Eigen::Vector3d(j.at(0), j.at(1), j.at(2)),
                       Eigen::Quaterniond(j.at(3), j.at(4), j.at(5), j.at(6)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Building-plan-driven robot localization toolkit"};
  app.require_subcommand(1);

  // plan parse
  auto* plan_cmd = app.add_subcommand("plan", "Plan file operations");
  plan_cmd->require_subcommand(1);
  auto* plan_parse = plan_cmd->add_subcommand("parse", "Validate a plan and emit the prior graph");
  std::string plan_file, prior_out;
  plan_parse->add_option("plan-file", plan_file)->required();
  plan_parse->add_option("--out", prior_out, "Prior graph JSON output");

  // sim run
  auto* sim_cmd = app.add_subcommand("sim", "Simulator");
  sim_cmd->require_subcommand(1);
  auto* sim_run = sim_cmd->add_subcommand("run", "Generate an observation log");
  std::string sim_plan, sim_traj, sim_noise, sim_out, sim_gt, sim_cloud_dir;
  std::uint64_t sim_seed = 0;
  double sim_range = 8.0;
  bool sim_clouds = false;
  sim_run->add_option("--plan", sim_plan)->required();
  sim_run->add_option("--traj", sim_traj)->required();
  sim_run->add_option("--noise", sim_noise);
  sim_run->add_option("--seed", sim_seed);
  sim_run->add_option("--max-range", sim_range);
  sim_run->add_option("--out", sim_out)->required();
  sim_run->add_option("--gt", sim_gt, "Also write the ground-truth trajectory");
  sim_run->add_flag("--clouds", sim_clouds, "Also write per-frame point clouds (CSV)");
  sim_run->add_option("--cloud-dir", sim_cloud_dir)->default_val("clouds");

  // loc mcl
  auto* loc_cmd = app.add_subcommand("loc", "Localization");
  loc_cmd->require_subcommand(1);
  auto* loc_mcl = loc_cmd->add_subcommand("mcl", "Global localization via particle filter");
  std::string mcl_plan, mcl_obs, mcl_out;
  std::uint64_t mcl_seed = 0;
  bool no_topo = false;
  int mcl_particles = 1000;
  double mcl_sigma = 0.1;
  loc_mcl->add_option("--plan", mcl_plan)->required();
  loc_mcl->add_option("--obs", mcl_obs)->required();
  loc_mcl->add_option("--seed", mcl_seed);
  loc_mcl->add_flag("--no-topo", no_topo, "Disable room-aware candidate pruning");
  loc_mcl->add_option("--particles", mcl_particles);
  loc_mcl->add_option("--sigma", mcl_sigma);
  loc_mcl->add_option("--out", mcl_out)->required();

  // loc sgraph
  auto* loc_sg = loc_cmd->add_subcommand("sgraph", "Track and refine with the situational graph");
  std::string sg_plan, sg_obs, sg_init, sg_out;
  loc_sg->add_option("--plan", sg_plan)->required();
  loc_sg->add_option("--obs", sg_obs)->required();
  loc_sg->add_option("--init", sg_init, "MCL result JSON")->required();
  loc_sg->add_option("--out", sg_out)->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark");
  bench_cmd->require_subcommand(1);
  auto* bench_run = bench_cmd->add_subcommand("run", "Run the configured benchmark");
  std::string bench_config, bench_out;
  bench_run->add_option("--config", bench_config)->required();
  bench_run->add_option("--out", bench_out)->required();
  auto* bench_plot = bench_cmd->add_subcommand("plot", "Emit CSV + gnuplot scripts for a report");
  std::string plot_report, plot_dir;
  bench_plot->add_option("--report", plot_report)->required();
  bench_plot->add_option("--out-dir", plot_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*plan_parse) {
      const auto plan = bimloc::load_plan(plan_file);
      const auto prior = bimloc::build_prior_layers(plan.storeys.front());
      const std::string text = bimloc::prior_to_json(prior).dump(2) + "\n";
      if (prior_out.empty())
        std::cout << text;
      else
        write_text(prior_out, text);
      std::cerr << "parsed " << plan.storeys.size() << " storey(s), "
                << prior.wall_nodes.size() << " wall node(s), " << prior.room_nodes.size()
                << " room node(s)\n";
    } else if (*sim_run) {
      const auto plan = bimloc::load_plan(sim_plan);
      const auto& storey = plan.storeys.front();
      const auto faces = bimloc::build_faces(storey);
      const auto ts = load_traj(sim_traj);
      bimloc::NoiseConfig nc = sim_noise.empty() ? bimloc::NoiseConfig{} : load_noise(sim_noise);
      nc.seed = bimloc::derive_seed(sim_seed, 0x0D01);
      const auto gt = bimloc::generate_trajectory(ts);
      const auto odom = bimloc::simulate_odometry(gt, nc);
      bimloc::Rng obs_rng(bimloc::derive_seed(sim_seed, 0x0B50));
      std::vector<bimloc::ObsFrame> frames;
      if (sim_clouds) std::filesystem::create_directories(sim_cloud_dir);
      bimloc::Rng cloud_rng(bimloc::derive_seed(sim_seed, 0xC10D));
      for (std::size_t i = 0; i < gt.size(); ++i) {
        bimloc::ObsFrame f;
        f.t = gt[i].t;
        f.odom = odom[i].pose;
        for (const auto& o : bimloc::observe_planes(faces, gt[i].pose, sim_range, nc, obs_rng))
          f.planes.push_back(o.plane);
        frames.push_back(std::move(f));
        if (sim_clouds) {
          bimloc::CloudParams cp;
          cp.max_range = sim_range;
          const auto cloud =
              bimloc::sample_cloud(faces, gt[i].pose, cp, nc.cloud_sigma_point, cloud_rng);
          std::ofstream out(sim_cloud_dir + "/cloud_" + std::to_string(i) + ".csv");
          for (const auto& p : cloud) out << p.x() << "," << p.y() << "," << p.z() << "\n";
        }
      }
      bimloc::save_obs_log(sim_out, frames);
      if (!sim_gt.empty()) {
        json gj = json::array();
        for (const auto& p : gt) gj.push_back({{"t", p.t}, {"pose", pose_json(p.pose)}});
        write_text(sim_gt, gj.dump(2) + "\n");
      }
      std::cerr << "wrote " << frames.size() << " frames to " << sim_out << "\n";
    } else if (*loc_mcl) {
      const auto plan = bimloc::load_plan(mcl_plan);
      const auto prior = bimloc::build_prior_layers(plan.storeys.front());
      const auto frames = bimloc::load_obs_log(mcl_obs);
      bimloc::MclParams params;
      params.particles = mcl_particles;
      params.sigma = mcl_sigma;
      params.topo = !no_topo;
      const auto res = bimloc::run_mcl(prior, frames, params, mcl_seed);
      nlohmann::ordered_json j;
      j["converged"] = res.converged;
      j["time"] = res.converged ? json(res.time) : json(nullptr);
      j["frame"] = res.frame;
      j["T_WO"] = res.converged ? pose_json(res.T_WO) : json(nullptr);
      j["room"] = res.converged ? json(res.room_id) : json("N.L.");
      j["association_ops"] = res.association_ops;
      write_text(mcl_out, j.dump(2) + "\n");
      if (!res.converged) {
        std::cerr << "not localized\n";
        return kExitNotLocalized;
      }
      std::cerr << "localized at t=" << res.time << " in room " << res.room_id << "\n";
    } else if (*loc_sg) {
      const auto plan = bimloc::load_plan(sg_plan);
      const auto prior = bimloc::build_prior_layers(plan.storeys.front());
      const auto frames = bimloc::load_obs_log(sg_obs);
      std::ifstream in(sg_init);
      if (!in) throw std::runtime_error("cannot open init: " + sg_init);
      json init;
      in >> init;
      if (!init.at("converged").get<bool>())
        throw std::runtime_error("MCL result is not localized; cannot start tracking");
      bimloc::SGraph graph(prior, pose_of(init.at("T_WO")), bimloc::SGraphParams{});
      const auto res =
          bimloc::run_sgraph(graph, frames, init.value("frame", 0) < 0 ? 0 : init.value("frame", 0));
      write_text(sg_out, graph.snapshot().dump(2) + "\n");
      std::cerr << "tracked " << graph.keyframes().size() << " keyframes, final cost "
                << res.last_report.final_cost << "\n";
    } else if (*bench_run) {
      const auto config = bimloc::load_bench_config(bench_config);
      const auto report = bimloc::run_benchmark(config);
      write_text(bench_out, bimloc::report_to_json(report).dump(2) + "\n");
      std::cerr << "localized " << report.localized << "/" << report.runs.size() << " runs\n";
      if (config.seeds.size() == 1 && report.localized == 0) return kExitNotLocalized;
    } else if (*bench_plot) {
      std::ifstream in(plot_report);
      if (!in) throw std::runtime_error("cannot open report: " + plot_report);
      json rep;
      in >> rep;
      std::filesystem::create_directories(plot_dir);
      {
        std::ofstream csv(plot_dir + "/runs.csv");
        csv << "seed,localized,convergence_time,ate_rmse,map_rmse,correct_room\n";
        for (const auto& run : rep.at("runs")) {
          csv << run.at("seed") << "," << (run.at("localized").get<bool>() ? 1 : 0) << ","
              << (run.at("convergence_time").is_null() ? "" : run.at("convergence_time").dump())
              << "," << (run.at("ate_rmse").is_null() ? "" : run.at("ate_rmse").dump()) << ","
              << (run.at("map_rmse").is_null() ? "" : run.at("map_rmse").dump()) << ","
              << (run.at("correct_room").get<bool>() ? 1 : 0) << "\n";
        }
      }
      write_text(plot_dir + "/ate.gp",
                 "set datafile separator ','\n"
                 "set terminal pngcairo size 800,500\n"
                 "set output 'ate.png'\n"
                 "set xlabel 'seed'\nset ylabel 'ATE RMSE [m]'\n"
                 "plot 'runs.csv' using 1:4 every ::1 with points pt 7 title 'ATE'\n");
      write_text(plot_dir + "/convergence.gp",
                 "set datafile separator ','\n"
                 "set terminal pngcairo size 800,500\n"
                 "set output 'convergence.png'\n"
                 "set xlabel 'seed'\nset ylabel 'convergence time [s]'\n"
                 "plot 'runs.csv' using 1:3 every ::1 with points pt 7 title 'convergence'\n");
      std::cerr << "wrote plot data to " << plot_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
