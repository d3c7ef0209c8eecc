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

// Anchor-free single-class BEV head.
//
// Each output cell predicts one objectness logit and eight regression
// channels: (dx, dy) offset of the box center from the cell center in units
// of the output cell, z, log(l / 3.9), log(w / 1.6), log(h / 1.56),
// sin(yaw), cos(yaw).

#ifndef S2R_DETECTION_HPP_
#define S2R_DETECTION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "s2r/autograd.hpp"
#include "s2r/nn.hpp"
#include "s2r/pillars.hpp"
#include "s2r/types.hpp"

namespace s2r::det {

inline constexpr int kRegChannels = 8;
inline constexpr double kRefLength = 3.9;
inline constexpr double kRefWidth = 1.6;
inline constexpr double kRefHeight = 1.56;

template <typename T>
struct HeadOutput {
  ag::Var<T> cls;  // [H, W, 1] logits
  ag::Var<T> reg;  // [H, W, 8]
};

template <typename T>
class DetectionHead {
 public:
  DetectionHead() = default;
  /// `prior` sets the initial objectness probability via the class bias.
  DetectionHead(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels, double prior,
                nn::Rng& rng);

  HeadOutput<T> operator()(const ag::Var<T>& features) const;
  void zero_init() const;

 private:
  nn::Linear<T> cls_, reg_;
};

struct Targets {
  std::int64_t h = 0, w = 0;
  std::vector<std::uint8_t> cls;   // [H * W]
  Tensor<double> reg;              // [H * W, 8], zero where cls = 0
  std::int64_t positives() const;
};

/// The output cell containing each box center is positive; a cell claimed by
/// several boxes keeps the one with the larger footprint (first on ties).
/// Boxes outside the grid range are ignored.
Targets assign_targets(const std::vector<Box3D>& boxes, const pillars::BEVGridSpec& grid);

/// Regression encoding of `box` relative to output cell (i, j).
std::array<double, kRegChannels> encode_box(const Box3D& box, std::int64_t i, std::int64_t j,
                                            const pillars::BEVGridSpec& grid);
Box3D decode_box(const double* reg, std::int64_t i, std::int64_t j, const pillars::BEVGridSpec& grid);

/// -alpha_t (1 - p_t)^gamma log(p_t) for one prediction; p is clamped to
/// [1e-6, 1 - 1e-6].
double focal_loss(double p, int y, double alpha = 0.25, double gamma = 2.0);

/// Mean of focal_loss over cells.
double focal_loss_mean(const std::vector<double>& p, const std::vector<std::uint8_t>& y, double alpha = 0.25,
                       double gamma = 2.0);

double smooth_l1(double x, double beta = 1.0);

struct LossOptions {
  double alpha = 0.25;
  double gamma = 2.0;
  double beta = 1.0;
};

template <typename T>
struct DetectionLoss {
  ag::Var<T> total;  // cls + reg
  ag::Var<T> cls;
  ag::Var<T> reg;
};

/// Focal loss summed over cells and smooth L1 summed over the channels of
/// positive cells, both divided by max(1, positives).
template <typename T>
DetectionLoss<T> detection_loss(const HeadOutput<T>& out, const Targets& targets, const LossOptions& opts = {});

/// Cells with sigmoid(logit) > score_thresh, in row-major cell order.
template <typename T>
std::vector<Detection> decode(const Tensor<T>& cls, const Tensor<T>& reg, const pillars::BEVGridSpec& grid,
                              double score_thresh);

/// Greedy suppression in descending score order (stable); a box is dropped
/// if its BEV IoU with an already kept box exceeds `iou_thresh`.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh = 0.15);

}  // namespace s2r::det

#endif  // S2R_DETECTION_HPP_
