// Copyright 2026 The s2r Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "s2r/error.hpp"
#include "s2r/scenario.hpp"

namespace s2r::scene {
namespace {

Vehicle make_vehicle(double x, double y, double yaw = 0, double vx = 0, double vy = 0) {
  Vehicle v;
  v.x = x;
  v.y = y;
  v.z = 0.8;
  v.yaw = yaw;
  v.vx = vx;
  v.vy = vy;
  return v;
}

/// Ego at the origin, a parked CAV at (0, 10) and a car moving along +x.
Scenario moving_car_scene(double speed) {
  Scenario sc;
  sc.vehicles = {make_vehicle(0, 0), make_vehicle(0, 10), make_vehicle(15, 0, 0, speed, 0)};
  sc.agents = {0, 1};
  sc.duration = 2.0;
  sc.seed = 17;
  return sc;
}

/// Box containment in the box frame, with a margin.
bool inside(const Box3D& b, const geom::Point& p, double margin) {
  const double dx = p.x - b.x, dy = p.y - b.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * b.l + margin && std::abs(v) <= 0.5 * b.w + margin &&
         p.z >= b.z - 0.5 * b.h - margin && p.z <= b.z + 0.5 * b.h + margin;
}

TEST(GenerateScenario, Deterministic) {
  SceneConfig cfg;
  EXPECT_EQ(generate_scenario(cfg, 42), generate_scenario(cfg, 42));
  EXPECT_FALSE(generate_scenario(cfg, 42) == generate_scenario(cfg, 43));
}

TEST(GenerateScenario, Cardinality) {
  SceneConfig cfg;
  cfg.vehicles = 8;
  cfg.agents = 2;
  const Scenario sc = generate_scenario(cfg, 1);
  EXPECT_EQ(sc.vehicles.size(), 8u);
  ASSERT_EQ(sc.agents.size(), 2u);
  EXPECT_NE(sc.agents[0], sc.agents[1]);
}

TEST(GenerateScenario, NoOverlapAndDistinctAgents) {
  SceneConfig cfg;
  cfg.agents = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario sc = generate_scenario(cfg, seed);
    EXPECT_EQ(std::set<int>(sc.agents.begin(), sc.agents.end()).size(), sc.agents.size());
    for (std::size_t i = 0; i < sc.vehicles.size(); ++i) {
      EXPECT_GT(sc.vehicles[i].l, 0);
      for (std::size_t j = i + 1; j < sc.vehicles.size(); ++j) {
        const auto a = geom::box_corners(sc.vehicles[i].box_at(0));
        const auto b = geom::box_corners(sc.vehicles[j].box_at(0));
        const double overlap = geom::polygon_area(
            geom::convex_clip(geom::Polygon(a.begin(), a.end()), geom::Polygon(b.begin(), b.end())));
        EXPECT_EQ(overlap, 0.0);
      }
    }
  }
}

TEST(GenerateScenario, TooFewVehicles) {
  SceneConfig cfg;
  cfg.vehicles = 1;
  cfg.agents = 2;
  EXPECT_THROW(generate_scenario(cfg, 0), GenerationError);
}

TEST(GenerateScenario, AgentCountBounds) {
  SceneConfig cfg;
  cfg.agents = 6;
  EXPECT_THROW(generate_scenario(cfg, 0), ConfigError);
  cfg.agents = 0;
  EXPECT_THROW(generate_scenario(cfg, 0), ConfigError);
}

TEST(RenderLidar, EmptyWorldGivesOnlyClutter) {
  Scenario sc;
  sc.duration = 1.0;
  Rng rng(4);
  std::vector<int> owner;
  const auto pts = render_lidar(sc, {}, DomainProfile::sim(), 0.5, rng, {}, &owner);
  ASSERT_FALSE(pts.empty());
  EXPECT_TRUE(std::all_of(owner.begin(), owner.end(), [](int o) { return o == -1; }));
}

TEST(RenderLidar, SimDenserThanReal) {
  SceneConfig cfg;
  double sim = 0, real = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario sc = generate_scenario(cfg, seed);
    const geom::Pose pose = sc.agent_pose(0, 1.0);
    Rng a(seed), b(seed);
    sim += static_cast<double>(render_lidar(sc, pose, DomainProfile::sim(), 1.0, a).size());
    real += static_cast<double>(render_lidar(sc, pose, DomainProfile::real(), 1.0, b).size());
  }
  EXPECT_GT(sim / 20, real / 20);
}

TEST(RenderLidar, SameSeedSameCloud) {
  const Scenario sc = generate_scenario({}, 3);
  Rng a(8), b(8);
  const geom::Pose pose = sc.agent_pose(0, 1.0);
  EXPECT_EQ(render_lidar(sc, pose, DomainProfile::real(), 1.0, a),
            render_lidar(sc, pose, DomainProfile::real(), 1.0, b));
}

TEST(RenderLidar, VehiclePointsStayNearTheirBox) {
  for (RenderMode mode : {RenderMode::kSurface, RenderMode::kRay}) {
    const Scenario sc = generate_scenario({}, 9);
    const DomainProfile profile = DomainProfile::real();
    RenderOptions opts;
    opts.mode = mode;
    Rng rng(1);
    std::vector<int> owner;
    const geom::Pose pose = sc.agent_pose(0, 1.0);
    const auto pts = render_lidar(sc, pose, profile, 1.0, rng, opts, &owner);
    int on_vehicles = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (owner[i] < 0) continue;
      ++on_vehicles;
      const auto world = geom::project_points({pts[i]}, pose, {})[0];
      const Box3D b = sc.vehicles[static_cast<std::size_t>(owner[i])].box_at(1.0);
      EXPECT_TRUE(inside(b, world, 3 * profile.range_noise + 1e-9)) << "point " << i;
    }
    EXPECT_GT(on_vehicles, 0);
  }
}

TEST(RenderLidar, OutsideDurationIsOutOfRange) {
  const Scenario sc = moving_car_scene(10);
  Rng rng(1);
  EXPECT_THROW(render_lidar(sc, {}, DomainProfile::sim(), 2.5, rng), OutOfRange);
}

TEST(GroundTruth, RangeAndEgoExclusion) {
  Scenario sc;
  sc.vehicles = {make_vehicle(0, 0), make_vehicle(5, 1), make_vehicle(150, 0)};
  sc.agents = {0};
  sc.duration = 1;
  const auto boxes = ground_truth_boxes(sc, 0, {});
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_DOUBLE_EQ(boxes[0].x, 5);
  EXPECT_DOUBLE_EQ(boxes[0].y, 1);
  EXPECT_TRUE(ground_truth_boxes(Scenario{}, 0, {}).empty());
}

TEST(GroundTruth, EgoFrameAndCount) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scenario sc = generate_scenario({}, seed);
    const auto boxes = ground_truth_boxes(sc, 1.0, {-100, 100, -100, 100});
    EXPECT_LE(boxes.size(), sc.vehicles.size() - 1);
    const geom::Pose ego = sc.agent_pose(0, 1.0);
    for (const Box3D& b : boxes) {
      const auto w = geom::project_points({{b.x, b.y, 0, 0}}, ego, {})[0];
      const bool matches = std::any_of(sc.vehicles.begin(), sc.vehicles.end(), [&](const Vehicle& v) {
        const Box3D vb = v.box_at(1.0);
        return std::abs(vb.x - w.x) < 1e-9 && std::abs(vb.y - w.y) < 1e-9;
      });
      EXPECT_TRUE(matches);
    }
  }
}

TEST(StaleFrame, ZeroLatencyEqualsLiveFrame) {
  const Scenario sc = moving_car_scene(10);
  const AgentFrame live = stale_frame(sc, 1, 1.0, 0.0, DomainProfile::sim());
  Rng rng(render_seed(sc, 1));
  EXPECT_EQ(live.points, render_lidar(sc, sc.agent_pose(1, 1.0), DomainProfile::sim(), 1.0, rng));
  EXPECT_EQ(live.pose, sc.agent_pose(1, 1.0));
}

TEST(StaleFrame, MovingCarAppearsBehind) {
  const Scenario sc = moving_car_scene(10);
  DomainProfile exact = DomainProfile::sim();
  exact.range_noise = 0;
  exact.clutter_rate = 0;
  const AgentFrame stale = stale_frame(sc, 1, 1.0, 0.1, exact);
  EXPECT_DOUBLE_EQ(stale.capture_time, 0.9);
  const Box3D live_box = sc.vehicles[2].box_at(1.0);
  Box3D behind = live_box;
  behind.x -= 1.0;
  int car_points = 0, inside_live = 0;
  for (const auto& p : geom::project_points(stale.points, stale.pose, {})) {
    if (std::abs(p.y) > 5) continue;  // points of the parked ego car lie at y ~ 0, x ~ 0
    if (p.x < 5) continue;
    ++car_points;
    EXPECT_TRUE(inside(behind, p, 1e-9));
    inside_live += inside(live_box, p, 1e-9) && !inside(behind, p, 1e-9);
  }
  EXPECT_GT(car_points, 0);
  EXPECT_EQ(inside_live, 0);
}

TEST(StaleFrame, EgoNeverLags) {
  const Scenario sc = moving_car_scene(10);
  EXPECT_DOUBLE_EQ(stale_frame(sc, 0, 1.0, 0.5, DomainProfile::sim()).capture_time, 1.0);
}

TEST(StaleFrame, LatencyBeforeStartIsOutOfRange) {
  const Scenario sc = moving_car_scene(10);
  EXPECT_THROW(stale_frame(sc, 1, 0.05, 0.1, DomainProfile::sim()), OutOfRange);
}

TEST(DomainProfile, DefaultsDifferInFeatureGap) {
  const auto sim = DomainProfile::sim(), real = DomainProfile::real();
  EXPECT_EQ(sim.beams, 64);
  EXPECT_EQ(real.beams, 16);
  EXPECT_EQ(sim.dropout, 0.0);
  EXPECT_EQ(real.dropout, 0.2);
  EXPECT_EQ(sim.range_noise, 0.01);
  EXPECT_EQ(real.range_noise, 0.05);
  EXPECT_THROW(DomainProfile::named("lab"), ConfigError);
}

}  // namespace
}  // namespace s2r::scene
