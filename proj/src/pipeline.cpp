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

#include "s2r/pipeline.hpp"

#include <algorithm>

#include "s2r/error.hpp"

namespace s2r::pipeline {

std::vector<geom::PointCloud> ego_frame_clouds(const data::FrameRecord& frame, const SensorContext& sensor,
                                               const geom::NoiseSpec& noise, Rng& rng, int max_agents) {
  noise.validate();
  const std::size_t k = std::min<std::size_t>(frame.points.size(), static_cast<std::size_t>(max_agents));
  if (k == 0) throw InvalidInput("frame has no agents");
  std::vector<geom::PointCloud> out;
  out.reserve(k);
  out.push_back(frame.points[0]);
  const geom::Pose& ego = frame.poses[0];
  for (std::size_t slot = 1; slot < k; ++slot) {
    geom::Pose shared = frame.poses[slot];
    geom::PointCloud points;
    if (noise.latency > 0) {
      scene::AgentFrame stale =
          scene::stale_frame(frame.scenario, slot, frame.time, noise.latency, sensor.profile, sensor.render);
      shared = stale.pose;
      points = std::move(stale.points);
    } else {
      points = frame.points[slot];
    }
    shared = geom::perturb_pose(shared, noise, rng);
    out.push_back(geom::project_points(points, shared, ego));
  }
  return out;
}

PreparedFrame prepare_frame(const data::FrameRecord& frame, const SensorContext& sensor,
                            const pillars::BEVGridSpec& grid, const geom::NoiseSpec& noise, Rng& rng,
                            int max_agents) {
  PreparedFrame p;
  for (const auto& cloud : ego_frame_clouds(frame, sensor, noise, rng, max_agents)) {
    p.agents.push_back(pillars::pillarize(cloud, grid));
  }
  p.ground_truth = scene::ground_truth_boxes(frame.scenario, frame.time, grid.range);
  return p;
}

}  // namespace s2r::pipeline
