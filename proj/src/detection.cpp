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

#include "s2r/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2r/error.hpp"
#include "s2r/evalkit.hpp"

namespace s2r::det {

template <typename T>
DetectionHead<T>::DetectionHead(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels,
                                double prior, nn::Rng& rng)
    : cls_(store, name + ".cls", channels, 1, rng), reg_(store, name + ".reg", channels, kRegChannels, rng) {
  if (!(prior > 0 && prior < 1)) throw ConfigError("head: prior must be in (0, 1)");
  cls_.bias().node()->value.fill(static_cast<T>(-std::log((1 - prior) / prior)));
}

template <typename T>
HeadOutput<T> DetectionHead<T>::operator()(const ag::Var<T>& features) const {
  return {cls_(features), reg_(features)};
}

template <typename T>
void DetectionHead<T>::zero_init() const {
  for (const auto* l : {&cls_, &reg_}) {
    nn::zero_fill(l->weight());
    nn::zero_fill(l->bias());
  }
}

std::int64_t Targets::positives() const {
  return std::count(cls.begin(), cls.end(), std::uint8_t{1});
}

std::array<double, kRegChannels> encode_box(const Box3D& b, std::int64_t i, std::int64_t j,
                                            const pillars::BEVGridSpec& grid) {
  const double oc = grid.out_cell();
  const double cx = grid.range.x_min + (static_cast<double>(i) + 0.5) * oc;
  const double cy = grid.range.y_min + (static_cast<double>(j) + 0.5) * oc;
  return {(b.x - cx) / oc,
          (b.y - cy) / oc,
          b.z,
          std::log(b.l / kRefLength),
          std::log(b.w / kRefWidth),
          std::log(b.h / kRefHeight),
          std::sin(b.yaw),
          std::cos(b.yaw)};
}

Box3D decode_box(const double* r, std::int64_t i, std::int64_t j, const pillars::BEVGridSpec& grid) {
  const double oc = grid.out_cell();
  const double cx = grid.range.x_min + (static_cast<double>(i) + 0.5) * oc;
  const double cy = grid.range.y_min + (static_cast<double>(j) + 0.5) * oc;
  auto size = [](double v) { return std::exp(std::clamp(v, -4.0, 4.0)); };
  return {cx + r[0] * oc,         cy + r[1] * oc,         r[2], kRefLength * size(r[3]),
          kRefWidth * size(r[4]), kRefHeight * size(r[5]), normalize_angle(std::atan2(r[6], r[7]))};
}

Targets assign_targets(const std::vector<Box3D>& boxes, const pillars::BEVGridSpec& grid) {
  Targets t;
  t.h = grid.out_h();
  t.w = grid.out_w();
  t.cls.assign(static_cast<std::size_t>(t.h * t.w), 0);
  t.reg = Tensor<double>(Shape{t.h * t.w, kRegChannels});
  std::vector<double> owner_area(static_cast<std::size_t>(t.h * t.w), -1.0);
  const double oc = grid.out_cell();
  for (const auto& b : boxes) {
    if (!grid.range.contains(b.x, b.y)) continue;
    const auto i = static_cast<std::int64_t>(std::floor((b.x - grid.range.x_min) / oc));
    const auto j = static_cast<std::int64_t>(std::floor((b.y - grid.range.y_min) / oc));
    if (i < 0 || i >= t.h || j < 0 || j >= t.w) continue;
    const std::int64_t cell = i * t.w + j;
    const double area = b.l * b.w;
    if (area <= owner_area[static_cast<std::size_t>(cell)]) continue;
    owner_area[static_cast<std::size_t>(cell)] = area;
    t.cls[static_cast<std::size_t>(cell)] = 1;
    const auto enc = encode_box(b, i, j, grid);
    std::copy(enc.begin(), enc.end(), t.reg.data() + cell * kRegChannels);
  }
  return t;
}

double focal_loss(double p, int y, double alpha, double gamma) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  const double pt = y ? p : 1 - p;
  const double at = y ? alpha : 1 - alpha;
  return -at * std::pow(1 - pt, gamma) * std::log(pt);
}

double focal_loss_mean(const std::vector<double>& p, const std::vector<std::uint8_t>& y, double alpha,
                       double gamma) {
  if (p.size() != y.size() || p.empty()) throw InvalidInput("focal_loss: size mismatch or empty input");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += focal_loss(p[i], y[i], alpha, gamma);
  return s / static_cast<double>(p.size());
}

double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

template <typename T>
DetectionLoss<T> detection_loss(const HeadOutput<T>& out, const Targets& targets, const LossOptions& opts) {
  const std::int64_t cells = targets.h * targets.w;
  if (out.cls.numel() != cells || out.reg.numel() != cells * kRegChannels) {
    throw InvalidInput("detection_loss: head output does not match targets");
  }
  const T norm = static_cast<T>(std::max<std::int64_t>(1, targets.positives()));
  DetectionLoss<T> l;
  l.cls = ag::focal_loss_logits(out.cls, targets.cls, static_cast<T>(opts.alpha), static_cast<T>(opts.gamma), norm);
  l.reg = ag::smooth_l1_rows(ag::reshape(out.reg, {cells, kRegChannels}), targets.reg.cast<T>(), targets.cls,
                             static_cast<T>(opts.beta), norm);
  l.total = ag::add(l.cls, l.reg);
  return l;
}

template <typename T>
std::vector<Detection> decode(const Tensor<T>& cls, const Tensor<T>& reg, const pillars::BEVGridSpec& grid,
                              double score_thresh) {
  const std::int64_t h = grid.out_h(), w = grid.out_w();
  if (cls.numel() != h * w || reg.numel() != h * w * kRegChannels) {
    throw InvalidInput("decode: head output does not match the grid");
  }
  std::vector<Detection> out;
  for (std::int64_t cell = 0; cell < h * w; ++cell) {
    const double z = static_cast<double>(cls[cell]);
    const double score = 1.0 / (1.0 + std::exp(-z));
    if (!(score > score_thresh)) continue;
    double r[kRegChannels];
    for (int c = 0; c < kRegChannels; ++c) r[c] = static_cast<double>(reg[cell * kRegChannels + c]);
    out.push_back({decode_box(r, cell / w, cell % w, grid), score});
  }
  return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (const auto& k : kept) {
      if (eval::rotated_iou(dets[i].box, k.box) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(dets[i]);
  }
  return kept;
}

#define S2R_INSTANTIATE_DET(T)                                                                          \
  template class DetectionHead<T>;                                                                      \
  template DetectionLoss<T> detection_loss(const HeadOutput<T>&, const Targets&, const LossOptions&);   \
  template std::vector<Detection> decode(const Tensor<T>&, const Tensor<T>&, const pillars::BEVGridSpec&, \
                                         double);

S2R_INSTANTIATE_DET(float)
S2R_INSTANTIATE_DET(double)

}  // namespace s2r::det
