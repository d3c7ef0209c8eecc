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

// What the ego sees of a dataset frame: every agent's cloud moved into the
// ego frame using the pose that agent shared, under an optional deployment
// gap (noisy transmitter poses, stale transmissions).

#ifndef S2R_PIPELINE_HPP_
#define S2R_PIPELINE_HPP_

#include <vector>

#include "s2r/dataset.hpp"
#include "s2r/geometry.hpp"
#include "s2r/pillars.hpp"

namespace s2r::pipeline {

/// Sensor settings needed to re-render stale transmissions.
struct SensorContext {
  scene::DomainProfile profile;
  scene::RenderOptions render;
};

inline SensorContext sensor_context(const data::Dataset& ds) { return {ds.profile, ds.render}; }

/// Ego first; at most `max_agents` clouds. Slot 0 is never perturbed. For
/// every other slot the capture is `noise.latency` seconds old and its shared
/// pose gets perturb_pose noise drawn from `rng` (three normals per slot,
/// drawn in slot order).
std::vector<geom::PointCloud> ego_frame_clouds(const data::FrameRecord& frame, const SensorContext& sensor,
                                               const geom::NoiseSpec& noise, Rng& rng, int max_agents);

struct PreparedFrame {
  std::vector<pillars::PillarStats> agents;
  std::vector<Box3D> ground_truth;
};

PreparedFrame prepare_frame(const data::FrameRecord& frame, const SensorContext& sensor,
                            const pillars::BEVGridSpec& grid, const geom::NoiseSpec& noise, Rng& rng,
                            int max_agents);

/// Noise stream of frame `index` for a given master seed.
inline Rng frame_noise_rng(std::uint64_t seed, std::size_t index) {
  return Rng(derive_seed(seed, 0x4e4f4953ULL /* "NOIS" */, index));
}

}  // namespace s2r::pipeline

#endif  // S2R_PIPELINE_HPP_
