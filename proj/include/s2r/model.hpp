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

// The cooperative detector: per-agent pillar encoders, stacked fusion
// blocks, kC -> C fusion, detection head, plus the two domain
// discriminators used during adaptation.
//
// Checkpoint record (kind 2): the model config as key = value text, then
// u32 count and per parameter: name, u32 rank, u32 dims, f32 array.

#ifndef S2R_MODEL_HPP_
#define S2R_MODEL_HPP_

#include <filesystem>
#include <memory>
#include <vector>

#include "s2r/afa.hpp"
#include "s2r/config.hpp"
#include "s2r/detection.hpp"
#include "s2r/pillars.hpp"
#include "s2r/s2r_uvit.hpp"

namespace s2r::model {

struct ModelConfig {
  pillars::BEVGridSpec grid;
  uvit::AttentionSpec attention;
  int max_agents = 5;
  bool shared_encoder = true;
  bool use_uam = true;
  bool fuse_identity_init = true;
  double cls_prior = 0.01;
  std::uint64_t init_seed = 0;

  void validate() const;
  KeyValues to_kv() const;
  /// Reads keys relative to the prefix-stripped view; unknown keys are errors.
  static ModelConfig from_kv(const KeyValues& kv);
  bool operator==(const ModelConfig&) const = default;
};

/// grid.* keys <-> BEVGridSpec (also used by CLI config files).
KeyValues grid_to_kv(const pillars::BEVGridSpec& g);
pillars::BEVGridSpec grid_from_kv(const KeyValues& kv);

template <typename T>
struct ForwardResult {
  std::vector<ag::Var<T>> agent_maps;  // pre-fusion, one per agent
  pillars::StackedFeatureMap<T> stacked;
  ag::Var<T> fused;                    // [H, W, C]
  det::HeadOutput<T> head;
};

template <typename T>
class CooperativeDetector {
 public:
  explicit CooperativeDetector(const ModelConfig& config);
  CooperativeDetector(const CooperativeDetector&) = delete;
  CooperativeDetector& operator=(const CooperativeDetector&) = delete;

  /// One frame; `agents` holds per-agent pillar statistics in the ego grid,
  /// ego first, at most max_agents entries.
  ForwardResult<T> forward(const std::vector<pillars::PillarStats>& agents,
                           ag::AttentionTrace<T>* trace = nullptr) const;

  ag::Var<T> discriminate_inter(const ag::Var<T>& agent_map) const { return inter_disc_(agent_map); }
  ag::Var<T> discriminate_ego(const ag::Var<T>& fused) const { return ego_disc_(fused); }

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& parameters() { return store_; }
  const nn::ParameterStore<T>& parameters() const { return store_; }

  /// Zeroes every residual branch of the fusion blocks.
  void zero_residual_branches() const;

 private:
  ModelConfig config_;
  nn::ParameterStore<T> store_;
  std::vector<pillars::PillarEncoder<T>> encoders_;
  std::vector<uvit::S2RBlock<T>> blocks_;
  uvit::Fuse<T> fuse_;
  det::DetectionHead<T> head_;
  afa::Discriminator<T> inter_disc_, ego_disc_;
};

std::vector<char> encode_checkpoint(const CooperativeDetector<float>& model);
std::unique_ptr<CooperativeDetector<float>> decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const CooperativeDetector<float>& model, const std::filesystem::path& path);
std::unique_ptr<CooperativeDetector<float>> load_checkpoint(const std::filesystem::path& path);

}  // namespace s2r::model

#endif  // S2R_MODEL_HPP_
