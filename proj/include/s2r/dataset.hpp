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

// On-disk synthetic datasets.
//
// A dataset directory holds `manifest.txt` (key = value text: split label,
// seeds, scene/profile/render settings, frame list) and `frames/NNNNNN.s2rd`
// binary records:
//
//   "S2RD" | u32 version | u32 kind=1
//   u64 scenario seed | f32 capture time | f32 scenario duration
//   u32 agent count | u32 vehicle index per agent
//   per agent: f32 array of points (x, y, z, intensity)*
//   f32 array of poses (x, y, yaw, t) per agent
//   f32 array of vehicles (x, y, z, l, w, h, yaw, vx, vy) at t = 0

#ifndef S2R_DATASET_HPP_
#define S2R_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2r/config.hpp"
#include "s2r/scenario.hpp"

namespace s2r::data {

inline constexpr const char* kSplitSource = "source-labeled";
inline constexpr const char* kSplitTarget = "target-unlabeled";
inline constexpr const char* kSplitEval = "eval-labeled";

struct FrameRecord {
  scene::Scenario scenario;
  double time = 0;
  std::vector<geom::Pose> poses;          // per agent, at `time`
  std::vector<geom::PointCloud> points;   // per agent, own sensor frame

  bool operator==(const FrameRecord&) const = default;
};

std::vector<char> encode_frame(const FrameRecord& frame);
FrameRecord decode_frame(std::span<const char> bytes);

/// Renders one frame. All values are rounded to binary32 so the in-memory
/// record equals its decoded file image.
FrameRecord make_frame(const scene::SceneConfig& scene, const scene::DomainProfile& profile,
                       const scene::RenderOptions& render, std::uint64_t frame_seed);

struct GenerateOptions {
  scene::SceneConfig scene;
  scene::DomainProfile profile = scene::DomainProfile::sim();
  scene::RenderOptions render;
  std::uint64_t seed = 0;
  int frames = 10;
  std::string split = kSplitSource;
  int threads = 1;
};

struct Dataset {
  std::string split = kSplitSource;
  std::uint64_t seed = 0;
  scene::SceneConfig scene;
  scene::DomainProfile profile;
  scene::RenderOptions render;
  std::vector<FrameRecord> frames;
};

std::uint64_t frame_seed(std::uint64_t master, std::size_t index);

/// Frames are rendered in parallel when threads > 1; the result does not
/// depend on the thread count.
Dataset generate_dataset(const GenerateOptions& options);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Config mapping shared by the manifest and CLI config files.
KeyValues scene_to_kv(const scene::SceneConfig& c);
scene::SceneConfig scene_from_kv(const KeyValues& kv);
KeyValues profile_to_kv(const scene::DomainProfile& p);
scene::DomainProfile profile_from_kv(const KeyValues& kv, const scene::DomainProfile& base);
KeyValues render_to_kv(const scene::RenderOptions& r);
scene::RenderOptions render_from_kv(const KeyValues& kv);

}  // namespace s2r::data

#endif  // S2R_DATASET_HPP_
