#include <doctest.h>

#include "bimloc/metrics.hpp"
#include "bimloc/sgraph.hpp"
#include "bimloc/sim.hpp"

using namespace bimloc;

namespace {

const char* kRoomPlan = R"(storey s0 0.0
wall a_l s0 0 4 0 -1 0 0 0.1 4 3
wall a_r s0 5 0 0 1 0 0 0.1 4 3
wall a_b s0 0 0 0 0 -1 0 0.1 5 3
wall a_t s0 5 4 0 0 1 0 0.1 5 3
room ra s0 2.5 2 0 0 5 4 a_l a_r a_b a_t
)";

PriorGraph room_prior() { return build_prior_layers(parse_plan(kRoomPlan).storeys[0]); }

struct Run {
  std::vector<TimedPose> gt;
  std::vector<TimedPose> odom;
  std::vector<std::vector<Plane>> obs;
};

// Simulated loop inside the room; zero noise unless a config is passed.
Run simulate(const Storey& storey, const NoiseConfig& nc, std::uint64_t seed = 7) {
  TrajectorySpec ts;
  ts.waypoints = {{1.0, 1.0, 0.0}, {4.0, 1.0, 0.0}, {4.0, 3.0, 0.0}, {1.5, 3.0, 0.0}};
  ts.speed = 1.0;
  ts.rate = 10.0;
  Run run;
  run.gt = generate_trajectory(ts);
  NoiseConfig seeded = nc;
  seeded.seed = seed;
  run.odom = simulate_odometry(run.gt, seeded);
  const auto faces = build_faces(storey);
  Rng rng(derive_seed(seed, 0xfeed));
  for (const auto& tp : run.gt) {
    std::vector<Plane> planes;
    for (const auto& po : observe_planes(faces, tp.pose, 10.0, seeded, rng))
      planes.push_back(po.plane);
    run.obs.push_back(std::move(planes));
  }
  return run;
}

NoiseConfig zero_noise() {
  NoiseConfig nc;
  nc.odom_sigma_x = nc.odom_sigma_y = nc.odom_sigma_yaw = 0.0;
  nc.plane_sigma_angle = nc.plane_sigma_offset = 0.0;
  return nc;
}

SGraph feed(const PriorGraph& prior, const Run& run, const Pose3& T_WO,
            const SGraphParams& params) {
  SGraph g(prior, T_WO, params);
  for (std::size_t i = 0; i < run.gt.size(); ++i)
    g.add_frame(run.gt[i].t, run.odom[i].pose, run.obs[i]);
  return g;
}

}  // namespace

TEST_CASE("construction mirrors the prior layers with no free parameters") {
  const PriorGraph prior = room_prior();
  SGraph g(prior, Pose3{}, SGraphParams{});
  CHECK(g.wall_nodes().size() == prior.wall_nodes.size());
  CHECK(g.room_nodes().size() == prior.room_nodes.size());
  for (const auto& [id, n] : g.wall_nodes()) CHECK(n.origin == NodeOrigin::Prior);
  CHECK(g.observed_wall_count() == 0);
  CHECK(g.param_size() == 0);
  CHECK(g.keyframes().empty());
}

TEST_CASE("keyframes are gated by translation and rotation") {
  const PriorGraph prior = room_prior();
  SGraph g(prior, Pose3{}, SGraphParams{});
  const std::vector<Plane> no_obs;
  CHECK(g.add_frame(0.0, Pose3::from_xy_yaw(1.0, 1.0, 0.0), no_obs) == 0);
  // Below both thresholds: no keyframe.
  CHECK(!g.add_frame(0.5, Pose3::from_xy_yaw(1.5, 1.0, 0.0), no_obs));
  CHECK(g.keyframes().size() == 1);
  // Past the distance threshold.
  CHECK(g.add_frame(1.1, Pose3::from_xy_yaw(2.1, 1.0, 0.0), no_obs) == 1);
  // Pure rotation past the angular threshold.
  CHECK(g.add_frame(1.5, Pose3::from_xy_yaw(2.1, 1.0, 0.4), no_obs) == 2);
  CHECK(g.keyframes().size() == 3);
  // First factor is the pose prior, later ones odometry links.
  CHECK(g.factors()[0].kind == FactorKind::PosePrior);
  CHECK(g.factors()[1].kind == FactorKind::Odometry);
  CHECK(g.factors()[1].kf_a == 0);
  CHECK(g.factors()[1].kf_b == 1);
}

TEST_CASE("noiseless observations associate to prior walls without duplicates") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  const Run run = simulate(plan.storeys[0], zero_noise());
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  CHECK(g.keyframes().size() >= 3);
  CHECK(g.observed_wall_count() == 0);
  std::size_t plane_factors = 0;
  for (const auto& f : g.factors())
    if (f.kind == FactorKind::PlaneObs) {
      ++plane_factors;
      CHECK(g.wall_nodes().at(f.wall_id).origin == NodeOrigin::Prior);
    }
  CHECK(plane_factors >= 4);
}

TEST_CASE("noiseless graph starts at numerically zero cost and skips iteration") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  const Run run = simulate(plan.storeys[0], zero_noise());
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  const OptReport rep = g.optimize();
  CHECK(rep.initial_cost < 1e-12);
  CHECK(rep.iterations == 0);
  CHECK(rep.converged);
}

TEST_CASE("room is detected from four surrounding walls and bound to the prior room") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  const Run run = simulate(plan.storeys[0], zero_noise());
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  const auto cand = g.detect_room(0);
  REQUIRE(cand.has_value());
  CHECK(cand->center.x() == doctest::Approx(2.5).epsilon(1e-9));
  CHECK(cand->center.y() == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(g.associate_room(*cand) == "ra");
  bool has_room_factor = false;
  for (const auto& f : g.factors())
    if (f.kind == FactorKind::RoomWall && f.room_id == "ra") has_room_factor = true;
  CHECK(has_room_factor);
  // No observed room node was invented for a match against the prior layer.
  CHECK(g.room_nodes().size() == prior.room_nodes.size());
}

TEST_CASE("an unmatched plane spawns an observed wall node") {
  const PriorGraph prior = room_prior();
  SGraph g(prior, Pose3{}, SGraphParams{});
  std::vector<Plane> obs;
  g.add_frame(0.0, Pose3::from_xy_yaw(2.5, 2.0, 0.0), obs);
  const int before = g.param_size();
  // A vertical plane at x = 1.5: no plan wall within the gate.
  const std::string id = g.associate_plane(Plane{{-1.0, 0.0, 0.0}, 1.5}, 0);
  CHECK(id.substr(0, 9) == "obs_wall_");
  CHECK(g.wall_nodes().at(id).origin == NodeOrigin::Observed);
  CHECK(g.observed_wall_count() == 1);
  CHECK(g.param_size() == before + 3);  // minimal plane parameters
}

TEST_CASE("room association merges refined duplicate walls into the prior") {
  // Start tracking with a 0.35 m alignment error along x: both x-wall
  // observations miss the gate and spawn observed duplicates, while the
  // y walls still associate. The fixed prior room center then pulls the
  // duplicates onto the true walls during optimization, after which room
  // association replaces them with the prior nodes.
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  const Run run = simulate(plan.storeys[0], zero_noise());
  const Pose3 shift = pose_compose(Pose3::from_xy_yaw(0.35, 0.0, 0.0), run.gt.front().pose);
  SGraph g = feed(prior, run, shift, SGraphParams{});
  CHECK(g.observed_wall_count() >= 2);
  const std::size_t factors_before = g.factors().size();

  const OptReport rep = g.optimize();
  CHECK(rep.final_cost < rep.initial_cost);
  const auto cand = g.detect_room(static_cast<int>(g.keyframes().size()) - 1);
  REQUIRE(cand.has_value());
  g.associate_room(*cand);
  CHECK(g.observed_wall_count() == 0);
  // Merging rewires factors, it never drops measurements (at most one new
  // room binding is appended).
  CHECK(g.factors().size() >= factors_before);
  for (const auto& f : g.factors())
    if (f.kind == FactorKind::PlaneObs) CHECK(g.wall_nodes().count(f.wall_id) == 1);
}

TEST_CASE("optimization reduces cost under noisy odometry and never increases it") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  NoiseConfig nc = zero_noise();
  nc.odom_sigma_x = nc.odom_sigma_y = 0.01;
  nc.odom_sigma_yaw = 0.5 * M_PI / 180.0;
  const Run run = simulate(plan.storeys[0], nc);
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});

  const OptReport rep = g.optimize();
  CHECK(rep.initial_cost > 0.0);
  CHECK(rep.accepted_steps >= 1);
  CHECK(rep.final_cost < rep.initial_cost);
  // Re-running starts from the refined state and cannot make it worse.
  const OptReport again = g.optimize();
  CHECK(again.initial_cost == doctest::Approx(rep.final_cost).epsilon(1e-9));
  CHECK(again.final_cost <= again.initial_cost + 1e-12);
}

TEST_CASE("prior nodes are fixed through optimization") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  NoiseConfig nc = zero_noise();
  nc.odom_sigma_x = nc.odom_sigma_y = 0.02;
  const Run run = simulate(plan.storeys[0], nc);
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  g.optimize();
  for (const auto& pw : prior.wall_nodes) {
    const auto& node = g.wall_nodes().at(pw.id);
    CHECK(node.plane.n == pw.plane.n);
    CHECK(node.plane.d == pw.plane.d);
  }
  for (const auto& pr : prior.room_nodes)
    CHECK(g.room_nodes().at(pr.id).center == pr.center);
}

TEST_CASE("jacobian matches independent directional finite differences") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  NoiseConfig nc = zero_noise();
  nc.odom_sigma_x = nc.odom_sigma_y = 0.01;
  nc.plane_sigma_offset = 0.01;
  nc.plane_sigma_angle = 0.3 * M_PI / 180.0;
  const Run run = simulate(plan.storeys[0], nc);
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  REQUIRE(g.param_size() > 0);

  const Eigen::MatrixXd J = g.jacobian();
  Rng rng(12345);
  const double h = 1e-6;
  for (int trial = 0; trial < 8; ++trial) {
    Eigen::VectorXd v(g.param_size());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.gaussian(1.0);
    v.normalize();
    const Eigen::VectorXd dr = (g.eval_residuals(h * v) - g.eval_residuals(-h * v)) / (2.0 * h);
    const Eigen::VectorXd Jv = J * v;
    CHECK((dr - Jv).norm() <= 1e-5 * std::max(1.0, Jv.norm()));
  }
}

TEST_CASE("current pose extrapolates odometry from the last keyframe") {
  const PriorGraph prior = room_prior();
  SGraph g(prior, Pose3::from_xy_yaw(1.0, 1.0, 0.0), SGraphParams{});
  const std::vector<Plane> no_obs;
  g.add_frame(0.0, Pose3{}, no_obs);
  // Below the keyframe gate: tracked by dead reckoning from keyframe 0.
  g.add_frame(0.5, Pose3::from_xy_yaw(0.4, 0.0, 0.0), no_obs);
  CHECK(g.keyframes().size() == 1);
  const Pose3 cur = g.current_pose();
  CHECK(cur.t.x() == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(cur.t.y() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("snapshot serializes nodes, keyframes and factor residuals") {
  const auto plan = parse_plan(kRoomPlan);
  const PriorGraph prior = build_prior_layers(plan.storeys[0]);
  const Run run = simulate(plan.storeys[0], zero_noise());
  SGraph g = feed(prior, run, run.gt.front().pose, SGraphParams{});
  const auto j = g.snapshot();
  CHECK(j["wall_nodes"].size() == prior.wall_nodes.size());
  CHECK(j["room_nodes"].size() == prior.room_nodes.size());
  CHECK(j["keyframes"].size() == g.keyframes().size());
  CHECK(j["factors"].size() == g.factors().size());
  for (const auto& f : j["factors"]) CHECK(f["residual_norm"].get<double>() < 1e-6);
  CHECK(g.snapshot().dump() == j.dump());
}
