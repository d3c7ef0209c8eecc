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

#ifndef S2R_SCENARIO_HPP_
#define S2R_SCENARIO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "s2r/geometry.hpp"
#include "s2r/types.hpp"

namespace s2r::scene {

struct Vehicle {
  double x = 0, y = 0, z = 0;  // box center at t = 0
  double l = 4.5, w = 1.9, h = 1.6;
  double yaw = 0;
  double vx = 0, vy = 0;  // m/s, constant

  /// Box at time t under constant-velocity motion.
  Box3D box_at(double t) const { return {x + vx * t, y + vy * t, z, l, w, h, yaw}; }
  bool operator==(const Vehicle&) const = default;
};

/// LiDAR characteristics of one data domain.
struct DomainProfile {
  std::string name = "sim";
  int beams = 64;
  int points_per_beam = 512;  // azimuth samples per revolution
  double dropout = 0.0;
  double range_noise = 0.01;   // m, radial std
  double clutter_rate = 0.03;  // ground points per m^2

  void validate() const;
  bool operator==(const DomainProfile&) const = default;

  static DomainProfile sim();
  static DomainProfile real();
  /// "sim" or "real"; anything else is a config error.
  static DomainProfile named(const std::string& name);
};

enum class RenderMode { kSurface, kRay };

/// Sensor model shared by both domains.
struct RenderOptions {
  RenderMode mode = RenderMode::kSurface;
  double max_range = 60.0;      // m
  double fov_up_deg = 3.0;
  double fov_down_deg = -25.0;
  double sensor_height = 1.8;   // m above ground
  double clutter_extent = 40.0; // half side of the clutter square around the sensor, m

  bool operator==(const RenderOptions&) const = default;
};

struct SceneConfig {
  int vehicles = 12;
  int agents = 2;
  double duration = 2.0;      // s
  double frame_time = 1.0;    // s, time at which dataset frames are captured
  double spawn_x = 45.0;      // half extent along the road, m
  int lanes_per_direction = 3;
  double lane_width = 3.5;
  double speed_min = 4.0;
  double speed_max = 14.0;
  double parked_fraction = 0.15;  // random-yaw, zero-speed vehicles
  double agent_radius = 30.0;     // CAVs are chosen within this distance of the ego
  int max_retries = 400;

  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

/// A world of vehicles under constant-velocity motion. agents[0] is the ego.
struct Scenario {
  std::vector<Vehicle> vehicles;
  std::vector<int> agents;
  double duration = 0;
  std::uint64_t seed = 0;

  /// Sensor pose of agent slot `slot` at time t.
  geom::Pose agent_pose(std::size_t slot, double t) const;
  bool operator==(const Scenario&) const = default;
};

Scenario generate_scenario(const SceneConfig& config, std::uint64_t seed);

/// Points in the sensor frame of `agent_pose`. Any vehicle whose footprint
/// contains the sensor is treated as the carrier and not rendered. When
/// `owner` is given it receives the vehicle index of each point (-1 for
/// ground clutter).
geom::PointCloud render_lidar(const Scenario& scenario, const geom::Pose& agent_pose,
                              const DomainProfile& profile, double t, Rng& rng,
                              const RenderOptions& options = {},
                              std::vector<int>* owner = nullptr);

/// Ego-frame boxes at time t of every non-ego vehicle whose center lies in
/// `range`.
std::vector<Box3D> ground_truth_boxes(const Scenario& scenario, double t, const BevRange& range);

/// One agent's capture: points in its own sensor frame, its pose and time.
struct AgentFrame {
  std::size_t slot = 0;
  geom::Pose pose;
  double capture_time = 0;
  geom::PointCloud points;
};

/// Seed of the render stream of an agent; independent of time so that a
/// zero-latency re-render reproduces the live capture exactly.
std::uint64_t render_seed(const Scenario& scenario, std::size_t slot);

/// The frame agent `slot` would share at time t when its data is `latency`
/// seconds old: rendered at t - latency with the pose of t - latency. The ego
/// (slot 0) never lags.
AgentFrame stale_frame(const Scenario& scenario, std::size_t slot, double t, double latency,
                       const DomainProfile& profile, const RenderOptions& options = {});

}  // namespace s2r::scene

#endif  // S2R_SCENARIO_HPP_
