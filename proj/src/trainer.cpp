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

#include "s2r/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "s2r/error.hpp"

namespace s2r::train {

namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546ULL;   // "SHUF"
constexpr std::uint64_t kTargetStream = 0x54415247ULL;    // "TARG"
constexpr std::uint64_t kAugmentStream = 0x41554730ULL;   // "AUG0"

ag::Var<float> mean_of(const std::vector<ag::Var<float>>& terms) {
  ag::Var<float> s = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) s = ag::add(s, terms[i]);
  return ag::scale(s, 1.0f / static_cast<float>(terms.size()));
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<pipeline::PreparedFrame> prepare_all(const data::Dataset& ds, const pillars::BEVGridSpec& grid,
                                                 const geom::NoiseSpec& noise, std::uint64_t seed,
                                                 int max_agents) {
  const auto ctx = pipeline::sensor_context(ds);
  std::vector<pipeline::PreparedFrame> out;
  out.reserve(ds.frames.size());
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    Rng rng = pipeline::frame_noise_rng(seed, i);
    out.push_back(pipeline::prepare_frame(ds.frames[i], ctx, grid, noise, rng, max_agents));
  }
  return out;
}

}  // namespace

void check_loss_weights(double w1, double w2) {
  if (!(w1 >= 0) || !(w2 >= 0) || std::abs(w1 + w2 - 1.0) > 1e-9) {
    throw ConfigError("loss weights must be non-negative and sum to 1 (got w1=" + format_double(w1) +
                      ", w2=" + format_double(w2) + ")");
  }
}

double total_loss(double det, double afa, double w1, double w2) {
  check_loss_weights(w1, w2);
  return w1 * det + w2 * afa;
}

void TrainConfig::validate() const {
  check_loss_weights(w1, w2);
  if (!(lr0 > 0)) throw ConfigError("train: lr0 must be positive");
  if (decay_every < 1) throw ConfigError("train: decay_every must be >= 1");
  if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("train: decay_factor must be in (0, 1]");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lambda_max >= 0) || !(lambda_ramp >= 0)) throw ConfigError("train: lambda settings must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  augment.validate();
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("w1", w1);
  kv.set("w2", w2);
  kv.set("lr0", lr0);
  kv.set("decay_every", decay_every);
  kv.set("decay_factor", decay_factor);
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  kv.set("seed", seed);
  kv.set("lambda_max", lambda_max);
  kv.set("lambda_ramp", lambda_ramp);
  kv.set("augment_sigma_pos", augment.sigma_pos);
  kv.set("augment_sigma_head_deg", augment.sigma_head_deg);
  kv.set("augment_latency", augment.latency);
  kv.set("focal_alpha", loss.alpha);
  kv.set("focal_gamma", loss.gamma);
  kv.set("smooth_l1_beta", loss.beta);
  kv.set("adam_beta1", adam.beta1);
  kv.set("adam_beta2", adam.beta2);
  kv.set("adam_eps", adam.eps);
  kv.set("checkpoint_every", checkpoint_every);
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  kv.require_known({"w1", "w2", "lr0", "decay_every", "decay_factor", "epochs", "batch_size", "seed",
                    "lambda_max", "lambda_ramp", "augment_sigma_pos", "augment_sigma_head_deg",
                    "augment_latency", "focal_alpha", "focal_gamma", "smooth_l1_beta", "adam_beta1",
                    "adam_beta2", "adam_eps", "checkpoint_every"});
  TrainConfig c;
  c.w1 = kv.get_double("w1", c.w1);
  c.w2 = kv.get_double("w2", c.w2);
  c.lr0 = kv.get_double("lr0", c.lr0);
  c.decay_every = static_cast<int>(kv.get_int("decay_every", c.decay_every));
  c.decay_factor = kv.get_double("decay_factor", c.decay_factor);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.seed = kv.get_u64("seed", c.seed);
  c.lambda_max = kv.get_double("lambda_max", c.lambda_max);
  c.lambda_ramp = kv.get_double("lambda_ramp", c.lambda_ramp);
  c.augment.sigma_pos = kv.get_double("augment_sigma_pos", c.augment.sigma_pos);
  c.augment.sigma_head_deg = kv.get_double("augment_sigma_head_deg", c.augment.sigma_head_deg);
  c.augment.latency = kv.get_double("augment_latency", c.augment.latency);
  c.loss.alpha = kv.get_double("focal_alpha", c.loss.alpha);
  c.loss.gamma = kv.get_double("focal_gamma", c.loss.gamma);
  c.loss.beta = kv.get_double("smooth_l1_beta", c.loss.beta);
  c.adam.beta1 = kv.get_double("adam_beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("adam_beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("adam_eps", c.adam.eps);
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.validate();
  return c;
}

double lr_schedule(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw InvalidInput("lr_schedule: epoch must be >= 0");
  return config.lr0 * std::pow(config.decay_factor, epoch / config.decay_every);
}

std::string log_tsv(const std::vector<StepMetrics>& log) {
  std::string out = "step\tepoch\tlr\tlambda\tL_det\tL_AFA\ttotal\n";
  for (const auto& m : log) {
    out += std::to_string(m.step) + '\t' + std::to_string(m.epoch) + '\t' + format_double(m.lr) + '\t' +
           format_double(m.lambda) + '\t' + format_double(m.l_det) + '\t' +
           (m.l_afa ? format_double(*m.l_afa) : std::string("-")) + '\t' + format_double(m.total) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const model::ModelConfig& model_config, const TrainConfig& config)
    : Trainer(std::make_unique<model::CooperativeDetector<float>>(model_config), config) {}

Trainer::Trainer(std::unique_ptr<model::CooperativeDetector<float>> model, const TrainConfig& config)
    : config_(config), model_(std::move(model)), adam_(model_->parameters(), config.adam) {
  config_.validate();
}

StepMetrics Trainer::train_step(const std::vector<const pipeline::PreparedFrame*>& source,
                                const std::vector<const pipeline::PreparedFrame*>& target, double lr,
                                double lambda) {
  if (source.empty()) throw ConfigError("train_step: empty source batch");
  const bool afa_on = config_.afa_enabled();
  if (afa_on && target.empty()) throw ConfigError("train_step: adaptation enabled but no target batch");
  const auto& grid = model_->config().grid;
  const auto lam = static_cast<float>(lambda);

  std::vector<ag::Var<float>> det_terms, inter_logits, ego_logits;
  std::vector<afa::Domain> inter_labels, ego_labels;
  auto add_domain_terms = [&](const model::ForwardResult<float>& fwd, afa::Domain d) {
    for (const auto& m : fwd.agent_maps) {
      inter_logits.push_back(model_->discriminate_inter(afa::grl(m, lam)));
      inter_labels.push_back(d);
    }
    ego_logits.push_back(model_->discriminate_ego(afa::grl(fwd.fused, lam)));
    ego_labels.push_back(d);
  };

  for (const auto* f : source) {
    auto fwd = model_->forward(f->agents);
    const det::Targets targets = det::assign_targets(f->ground_truth, grid);
    det_terms.push_back(det::detection_loss(fwd.head, targets, config_.loss).total);
    if (afa_on) add_domain_terms(fwd, afa::Domain::kSource);
  }
  if (afa_on) {
    for (const auto* f : target) add_domain_terms(model_->forward(f->agents), afa::Domain::kTarget);
  }

  StepMetrics m;
  m.lr = lr;
  m.lambda = afa_on ? lambda : 0.0;
  ag::Var<float> l_det = mean_of(det_terms);
  ag::Var<float> total = ag::scale(l_det, static_cast<float>(config_.w1));
  m.l_det = l_det.value()[0];
  if (afa_on) {
    ag::Var<float> l_afa = afa::afa_loss(inter_logits, inter_labels, ego_logits, ego_labels);
    m.l_afa = l_afa.value()[0];
    total = ag::add(total, ag::scale(l_afa, static_cast<float>(config_.w2)));
  }
  m.total = total.value()[0];

  model_->parameters().zero_grad();
  ag::backward(total);
  adam_.step(lr);
  m.step = step_++;
  return m;
}

// ---------------------------------------------------------------------------

FitResult fit(const model::ModelConfig& model_config, const TrainConfig& config, const data::Dataset& source,
              const data::Dataset* target, const FitOptions& options) {
  config.validate();
  model_config.validate();
  if (config.afa_enabled() && (target == nullptr || target->frames.empty())) {
    throw ConfigError("adaptation (w2 > 0) requires a nonempty target dataset");
  }
  if (config.epochs > 0 && source.frames.empty()) throw ConfigError("source dataset has no frames");

  Trainer trainer(model_config, config);
  FitResult result;
  const int max_agents = model_config.max_agents;
  const auto& grid = model_config.grid;
  const bool augment = !config.augment.is_zero();

  std::vector<pipeline::PreparedFrame> src_frames, tgt_frames;
  if (config.epochs > 0 && !augment) src_frames = prepare_all(source, grid, {}, 0, max_agents);
  if (config.epochs > 0 && config.afa_enabled()) tgt_frames = prepare_all(*target, grid, {}, 0, max_agents);

  const std::size_t n = source.frames.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  std::vector<std::size_t> tgt_order;
  std::size_t tgt_cursor = 0, tgt_round = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (augment) {
      src_frames = prepare_all(source, grid, config.augment, derive_seed(config.seed, kAugmentStream, epoch),
                               max_agents);
    }
    const double lr = lr_schedule(config, epoch);
    const auto order = shuffled(n, derive_seed(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t b = 0; b < n; b += batch) {
      std::vector<const pipeline::PreparedFrame*> src, tgt;
      for (std::size_t i = b; i < std::min(n, b + batch); ++i) src.push_back(&src_frames[order[i]]);
      if (config.afa_enabled()) {
        for (std::size_t i = 0; i < src.size(); ++i) {
          if (tgt_cursor == tgt_order.size()) {
            tgt_order = shuffled(tgt_frames.size(), derive_seed(config.seed, kTargetStream, tgt_round++));
            tgt_cursor = 0;
          }
          tgt.push_back(&tgt_frames[tgt_order[tgt_cursor++]]);
        }
      }
      const double lambda = afa::grl_lambda(trainer.steps(), total_steps, config.lambda_max, config.lambda_ramp);
      StepMetrics m = trainer.train_step(src, tgt, lr, lambda);
      m.epoch = epoch;
      result.log.push_back(m);
    }
    if (options.verbose && !result.log.empty()) {
      const auto& last = result.log.back();
      std::cerr << "epoch " << epoch << " lr " << lr << " L_det " << last.l_det
                << (last.l_afa ? " L_AFA " + format_double(*last.l_afa) : std::string()) << "\n";
    }
    if (config.checkpoint_every > 0 && !options.checkpoint.empty() && (epoch + 1) % config.checkpoint_every == 0) {
      auto p = options.checkpoint;
      p += ".epoch" + std::to_string(epoch + 1);
      model::save_checkpoint(trainer.model(), p);
    }
  }
  if (!options.checkpoint.empty()) model::save_checkpoint(trainer.model(), options.checkpoint);
  if (!options.log.empty()) {
    std::ofstream out(options.log, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + options.log.string());
    out << log_tsv(result.log);
  }
  result.model = trainer.release();
  return result;
}

// ---------------------------------------------------------------------------

std::vector<Detection> detect(const model::CooperativeDetector<float>& model, const pipeline::PreparedFrame& frame,
                              const EvalOptions& options) {
  ag::NoGradGuard no_grad;
  auto fwd = model.forward(frame.agents);
  auto dets = det::decode(fwd.head.cls.value(), fwd.head.reg.value(), model.config().grid, options.score_thresh);
  dets = det::nms(dets, options.nms_iou);
  if (dets.size() > options.max_detections) dets.resize(options.max_detections);
  return dets;
}

EvalOutput evaluate(const model::CooperativeDetector<float>& model, const data::Dataset& dataset,
                    const EvalOptions& options) {
  options.noise.validate();
  const auto ctx = pipeline::sensor_context(dataset);
  EvalOutput out;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    Rng rng = pipeline::frame_noise_rng(options.seed, i);
    const auto frame = pipeline::prepare_frame(dataset.frames[i], ctx, model.config().grid, options.noise, rng,
                                               model.config().max_agents);
    out.detections.push_back(detect(model, frame, options));
    out.ground_truth.push_back(frame.ground_truth);
  }
  out.ap = eval::ap_at_standard_thresholds(out.detections, out.ground_truth);
  return out;
}

}  // namespace s2r::train
