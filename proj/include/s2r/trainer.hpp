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

// Training and evaluation.
//
// Objective per step: w1 * L_det + w2 * L_afa, with L_det on labeled source
// frames only and L_afa on source and target frames through gradient
// reversal. Adam, step decay of the learning rate per epoch.

#ifndef S2R_TRAINER_HPP_
#define S2R_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2r/dataset.hpp"
#include "s2r/evalkit.hpp"
#include "s2r/model.hpp"
#include "s2r/pipeline.hpp"

namespace s2r::train {

struct TrainConfig {
  double w1 = 0.9;
  double w2 = 0.1;
  double lr0 = 1e-3;
  int decay_every = 10;      // epochs
  double decay_factor = 0.1;
  int epochs = 20;
  int batch_size = 2;        // source frames per step; target batches match
  std::uint64_t seed = 0;    // shuffling and augmentation
  double lambda_max = 0.1;   // gradient reversal strength after the ramp
  double lambda_ramp = 0.2;  // fraction of all steps spent ramping
  geom::NoiseSpec augment;   // pose noise / latency on source frames, zero = off
  det::LossOptions loss;
  nn::AdamOptions adam;
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only

  bool afa_enabled() const { return w2 > 0; }
  /// Throws ConfigError; in particular w1 + w2 must equal 1.
  void validate() const;
  KeyValues to_kv() const;
  static TrainConfig from_kv(const KeyValues& kv);
};

/// w1 * det + w2 * afa. Throws ConfigError unless w1, w2 >= 0 and w1 + w2 = 1.
double total_loss(double det, double afa, double w1, double w2);
void check_loss_weights(double w1, double w2);

/// lr0 * decay_factor ^ floor(epoch / decay_every).
double lr_schedule(const TrainConfig& config, int epoch);

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double lambda = 0;
  double l_det = 0;
  std::optional<double> l_afa;  // absent when adaptation is off
  double total = 0;
};

/// Header plus one tab-separated row per step.
std::string log_tsv(const std::vector<StepMetrics>& log);

class Trainer {
 public:
  Trainer(const model::ModelConfig& model_config, const TrainConfig& config);
  /// Continues from an existing model (takes ownership).
  Trainer(std::unique_ptr<model::CooperativeDetector<float>> model, const TrainConfig& config);

  /// One optimizer step. `target` may be empty only when adaptation is off.
  StepMetrics train_step(const std::vector<const pipeline::PreparedFrame*>& source,
                         const std::vector<const pipeline::PreparedFrame*>& target, double lr, double lambda);

  model::CooperativeDetector<float>& model() { return *model_; }
  std::unique_ptr<model::CooperativeDetector<float>> release() { return std::move(model_); }
  std::int64_t steps() const { return step_; }

 private:
  TrainConfig config_;
  std::unique_ptr<model::CooperativeDetector<float>> model_;
  nn::Adam<float> adam_;
  std::int64_t step_ = 0;
};

struct FitOptions {
  std::filesystem::path checkpoint;  // final checkpoint; empty = do not write
  std::filesystem::path log;         // training log TSV; empty = do not write
  bool verbose = false;
};

struct FitResult {
  std::unique_ptr<model::CooperativeDetector<float>> model;
  std::vector<StepMetrics> log;
};

/// Trains from scratch. With epochs = 0 returns the initialized model.
/// `target` is required iff adaptation is enabled.
FitResult fit(const model::ModelConfig& model_config, const TrainConfig& config, const data::Dataset& source,
              const data::Dataset* target, const FitOptions& options = {});

struct EvalOptions {
  geom::NoiseSpec noise;
  std::uint64_t seed = 0;        // noise stream master seed
  double score_thresh = 0.05;
  double nms_iou = 0.15;
  std::size_t max_detections = 100;  // per frame, after NMS
};

struct EvalOutput {
  eval::ApResult ap;
  std::vector<std::vector<Detection>> detections;
  std::vector<std::vector<Box3D>> ground_truth;
};

EvalOutput evaluate(const model::CooperativeDetector<float>& model, const data::Dataset& dataset,
                    const EvalOptions& options = {});

/// Detections of one prepared frame.
std::vector<Detection> detect(const model::CooperativeDetector<float>& model,
                              const pipeline::PreparedFrame& frame, const EvalOptions& options);

}  // namespace s2r::train

#endif  // S2R_TRAINER_HPP_
