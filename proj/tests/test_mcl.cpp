#include <doctest.h>

#include "bimloc/mcl.hpp"
#include "bimloc/sim.hpp"

using namespace bimloc;

namespace {

const char* kTwoRoomPlan = R"(storey s0 0.0
wall a_l s0 0 4 0 -1 0 0 0.1 4 3
wall a_r s0 5 0 0 1 0 0 0.1 4 3
wall a_b s0 0 0 0 0 -1 0 0.1 5 3
wall a_t s0 5 4 0 0 1 0 0.1 5 3
wall b_l s0 5 4 0 -1 0 0 0.1 4 3
wall b_r s0 15 0 0 1 0 0 0.1 4 3
wall b_b s0 5 0 0 0 -1 0 0.1 10 3
wall b_t s0 15 4 0 0 1 0 0.1 10 3
room ra s0 2.5 2 0 0 5 4 a_l a_r a_b a_t
room rb s0 10 2 5 0 15 4 b_l b_r b_b b_t
)";

PriorGraph two_room_prior() {
  return build_prior_layers(parse_plan(kTwoRoomPlan).storeys[0]);
}

}  // namespace

TEST_CASE("initialization is deterministic and respects room bounds") {
  const PriorGraph g = two_room_prior();
  const ParticleSet a = init_particles(g, 500, 99);
  const ParticleSet b = init_particles(g, 500, 99);
  REQUIRE(a.particles.size() == 500);
  for (std::size_t i = 0; i < a.particles.size(); ++i) {
    CHECK(a.particles[i].pose.t == b.particles[i].pose.t);
    CHECK(a.particles[i].weight == doctest::Approx(1.0 / 500));
    CHECK(a.particles[i].room >= 0);
    const auto& r = g.room_nodes[a.particles[i].room];
    CHECK(a.particles[i].pose.t.x() >= r.bbox_min.x());
    CHECK(a.particles[i].pose.t.x() <= r.bbox_max.x());
    CHECK(a.particles[i].pose.t.y() >= r.bbox_min.y());
    CHECK(a.particles[i].pose.t.y() <= r.bbox_max.y());
    CHECK(std::abs(a.particles[i].pose.yaw()) <= M_PI + 1e-12);
  }
  const ParticleSet c = init_particles(g, 500, 100);
  bool differs = false;
  for (std::size_t i = 0; i < c.particles.size(); ++i)
    if (c.particles[i].pose.t != a.particles[i].pose.t) differs = true;
  CHECK(differs);
}

TEST_CASE("initialization splits mass by room area") {
  // ra is 5x4 = 20 m^2, rb is 10x4 = 40 m^2 -> expect a 1:2 split
  const PriorGraph g = two_room_prior();
  const ParticleSet s = init_particles(g, 9000, 1);
  int in_a = 0;
  for (const auto& p : s.particles)
    if (p.pose.t.x() <= 5.0) in_a++;
  // binomial(9000, 1/3): sigma ~ 44.7; allow 5 sigma
  CHECK(in_a > 3000 - 224);
  CHECK(in_a < 3000 + 224);
}

TEST_CASE("predict applies the odometry increment exactly at zero noise") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 50, 5);
  const std::vector<Pose3> before = [&] {
    std::vector<Pose3> v;
    for (const auto& p : s.particles) v.push_back(p.pose);
    return v;
  }();
  OdomIncrement u{Pose3::from_xy_yaw(0.5, 0.0, 0.1)};
  predict(s, u, PredictNoise{0.0, 0.0, 0.0}, g);
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    const Pose3 expect = pose_compose(before[i], u.delta);
    CHECK((s.particles[i].pose.t - expect.t).norm() < 1e-12);
    CHECK(std::abs(wrap_angle(s.particles[i].pose.yaw() - expect.yaw())) < 1e-12);
  }
}

TEST_CASE("predict moves along the particle heading, not the world axes") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 1, 5);
  s.particles[0].pose = Pose3::from_xy_yaw(2.0, 2.0, M_PI / 2.0);
  predict(s, OdomIncrement{Pose3::from_xy_yaw(1.0, 0.0, 0.0)}, PredictNoise{}, g);
  CHECK(s.particles[0].pose.t.x() == doctest::Approx(2.0));
  CHECK(s.particles[0].pose.t.y() == doctest::Approx(3.0));
}

TEST_CASE("predict noise has the configured spread") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 20000, 5);
  for (auto& p : s.particles) p.pose = Pose3::from_xy_yaw(7.0, 2.0, 0.0);
  predict(s, OdomIncrement{Pose3::identity()}, PredictNoise{0.05, 0.02, 0.01}, g);
  double mx = 0, my = 0, vx = 0, vy = 0;
  for (const auto& p : s.particles) {
    mx += p.pose.t.x() - 7.0;
    my += p.pose.t.y() - 2.0;
  }
  mx /= s.particles.size();
  my /= s.particles.size();
  for (const auto& p : s.particles) {
    vx += std::pow(p.pose.t.x() - 7.0 - mx, 2);
    vy += std::pow(p.pose.t.y() - 2.0 - my, 2);
  }
  CHECK(std::abs(mx) < 0.002);
  CHECK(std::abs(my) < 0.002);
  CHECK(std::sqrt(vx / s.particles.size()) == doctest::Approx(0.05).epsilon(0.05));
  CHECK(std::sqrt(vy / s.particles.size()) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("predict refreshes the room index") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 1, 5);
  s.particles[0].pose = Pose3::from_xy_yaw(4.8, 2.0, 0.0);
  s.particles[0].room = 0;
  predict(s, OdomIncrement{Pose3::from_xy_yaw(1.0, 0.0, 0.0)}, PredictNoise{}, g);
  CHECK(s.particles[0].room == 1);  // crossed into rb
}

TEST_CASE("association matches a perfectly placed particle to its room walls") {
  const PriorGraph g = two_room_prior();
  const auto faces = build_faces(parse_plan(kTwoRoomPlan).storeys[0]);
  NoiseConfig quiet;
  quiet.plane_sigma_angle = 0.0;
  quiet.plane_sigma_offset = 0.0;
  Rng rng(1);
  const Pose3 gt = Pose3::from_xy_yaw(2.0, 2.0, 0.3);
  const auto obs = observe_planes(faces, gt, 10.0, quiet, rng);
  REQUIRE(obs.size() == 4);
  std::vector<Plane> planes;
  for (const auto& o : obs) planes.push_back(o.plane);

  Particle p;
  p.pose = gt;
  p.room = 0;
  MahalanobisGate gate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  std::size_t checked = 0;
  const auto matches = associate(p, planes, g, gate, true, &checked);
  REQUIRE(matches.size() == 4);
  for (const auto& m : matches) {
    CHECK(g.wall_nodes[m.node_index].id == obs[m.obs_index].node_id);
    CHECK(m.error < 1e-9);
  }
  CHECK(checked <= 8 * 4);
}

TEST_CASE("topological association checks fewer candidates") {
  const PriorGraph g = two_room_prior();
  Particle p;
  p.pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);
  p.room = 0;
  const std::vector<Plane> obs = {Plane{Eigen::Vector3d(-1, 0, 0), -2.0}};
  MahalanobisGate gate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  std::size_t topo_checked = 0, full_checked = 0;
  associate(p, obs, g, gate, true, &topo_checked);
  associate(p, obs, g, gate, false, &full_checked);
  CHECK(topo_checked < full_checked);
  CHECK(full_checked == 8);  // 8 of 16 nodes are XVertical
  CHECK(topo_checked == 4);  // 4 of the room's 8 nodes are XVertical
}

TEST_CASE("gated observations are dropped") {
  const PriorGraph g = two_room_prior();
  Particle p;
  p.pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);
  p.room = 0;
  // a wall one meter away from every x-plane in room ra
  const std::vector<Plane> obs = {Plane{Eigen::Vector3d(-1, 0, 0), -1.0}};
  MahalanobisGate gate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  CHECK(associate(p, obs, g, gate, true).empty());
}

TEST_CASE("weight update: hand-computed factor and normalization") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 2, 7);
  s.particles[0].pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);
  s.particles[0].room = 0;
  s.particles[1].pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);
  s.particles[1].room = 0;
  // single observation matching a_l exactly for both particles
  const std::vector<Plane> obs = {Plane{Eigen::Vector3d(-1, 0, 0), -2.0}};
  WeightParams wp;
  wp.sigma = 0.1;
  wp.gate = MahalanobisGate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 7.81};
  const UpdateResult r = update_weights(s, obs, g, wp, true);
  CHECK(r.status == UpdateStatus::Ok);
  // mu = 1/sqrt(2 pi sigma^2) = 3.98942 with a zero-error match; normalized halves
  CHECK(wp.mu() == doctest::Approx(3.9894228040143).epsilon(1e-9));
  CHECK(s.particles[0].weight == doctest::Approx(0.5));
  CHECK(s.particles[1].weight == doctest::Approx(0.5));
}

TEST_CASE("weight ratio between exact and offset matches") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 2, 7);
  s.particles[0].pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);  // exact
  s.particles[1].pose = Pose3::from_xy_yaw(2.2, 2.0, 0.0);  // 0.2 m off
  for (auto& p : s.particles) p.room = 0;
  const std::vector<Plane> obs = {Plane{Eigen::Vector3d(-1, 0, 0), -2.0}};
  WeightParams wp;
  wp.sigma = 0.1;
  wp.gate = MahalanobisGate{Eigen::Vector3d::Ones().asDiagonal(), 100.0};
  update_weights(s, obs, g, wp, true);
  // delta d = 0.2, sigma 0.1 -> factor ratio exp(-0.04/0.02) = e^-2
  CHECK(s.particles[1].weight / s.particles[0].weight ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-6));
}

TEST_CASE("particles with no matches get the floor weight") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 2, 7);
  s.particles[0].pose = Pose3::from_xy_yaw(2.0, 2.0, 0.0);
  s.particles[0].room = 0;
  s.particles[1].pose = Pose3::from_xy_yaw(2.0, 2.0, M_PI / 4.0);  // rotated off all walls
  s.particles[1].room = 0;
  const std::vector<Plane> obs = {Plane{Eigen::Vector3d(-1, 0, 0), -2.0}};
  WeightParams wp;
  wp.sigma = 0.1;
  wp.gate = MahalanobisGate{Eigen::Vector3d(25.0, 25.0, 100.0).asDiagonal(), 0.5};
  update_weights(s, obs, g, wp, true);
  // particle 1's best candidate is gated out; its raw weight is the floor
  CHECK(s.particles[1].weight / s.particles[0].weight < 1e-10);
}

TEST_CASE("resampling is gated on effective sample size") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 100, 11);
  // uniform weights: N_eff = N, no resample
  CHECK_FALSE(resample(s));
  // concentrated weights: N_eff ~ 1, resample
  for (auto& p : s.particles) p.weight = 0.0;
  s.particles[3].weight = 1.0;
  CHECK(resample(s));
  for (const auto& p : s.particles) {
    CHECK(p.pose.t == s.particles[3].pose.t);
    CHECK(p.weight == doctest::Approx(0.01));
  }
}

TEST_CASE("forced systematic resampling preserves proportions") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 1000, 13);
  for (std::size_t i = 0; i < s.particles.size(); ++i)
    s.particles[i].weight = (i < 500) ? 0.0015 : 0.0005;
  CHECK(resample(s, true));
  // systematic resampling reproduces 3:1 mass split within one particle per stratum
  int low_half = 0;
  ParticleSet ref = init_particles(g, 1000, 13);
  for (const auto& p : s.particles) {
    // count copies originating from the first half by matching positions
    bool from_low = false;
    for (std::size_t i = 0; i < 500; ++i)
      if (p.pose.t == ref.particles[i].pose.t) { from_low = true; break; }
    if (from_low) low_half++;
  }
  CHECK(low_half >= 749);
  CHECK(low_half <= 751);
}

TEST_CASE("convergence requires a tight cloud and enough steps") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 100, 17);
  for (auto& p : s.particles) {
    p.pose = Pose3::from_xy_yaw(2.0, 2.0, 0.5);
    p.weight = 0.01;
  }
  ConvergenceCriteria c;
  c.min_steps = 5;
  s.step_count = 4;
  CHECK_FALSE(check_convergence(s, c).has_value());
  s.step_count = 5;
  const auto pose = check_convergence(s, c);
  REQUIRE(pose.has_value());
  CHECK((pose->t - Eigen::Vector3d(2.0, 2.0, 0.0)).norm() < 1e-9);

  // split cloud: mean sits between the modes, far from the best particle
  for (std::size_t i = 0; i < 50; ++i) s.particles[i].pose = Pose3::from_xy_yaw(12.0, 2.0, 0.5);
  CHECK_FALSE(check_convergence(s, c).has_value());
}

TEST_CASE("circular yaw mean does not false-negative around the wrap") {
  const PriorGraph g = two_room_prior();
  ParticleSet s = init_particles(g, 100, 17);
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    const double yaw = (i % 2 == 0) ? M_PI - 0.05 : -M_PI + 0.05;
    s.particles[i].pose = Pose3::from_xy_yaw(2.0, 2.0, yaw);
    s.particles[i].weight = 0.01;
  }
  ConvergenceCriteria c;
  c.min_steps = 0;
  s.step_count = 1;
  CHECK(check_convergence(s, c).has_value());
}

TEST_CASE("initial transform satisfies T_WO * odom = best") {
  const Pose3 best = Pose3::from_xy_yaw(3.0, 1.0, 0.7);
  const Pose3 odom = Pose3::from_xy_yaw(1.0, -0.5, -0.3);
  const Pose3 T = initial_transform(best, odom);
  const Pose3 recomposed = pose_compose(T, odom);
  CHECK((recomposed.t - best.t).norm() < 1e-12);
  CHECK(std::abs(wrap_angle(recomposed.yaw() - best.yaw())) < 1e-12);

  // identity odometry: the transform is the best pose itself
  const Pose3 T2 = initial_transform(best, Pose3::identity());
  CHECK((T2.t - best.t).norm() < 1e-15);
}

TEST_CASE("room lookup by position") {
  const PriorGraph g = two_room_prior();
  CHECK(room_index_at(g, {2.0, 2.0}) == 0);
  CHECK(room_index_at(g, {10.0, 2.0}) == 1);
  CHECK(room_index_at(g, {-1.0, 2.0}) == -1);
}
