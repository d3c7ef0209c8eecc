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
#include <random>
#include <set>

#include "s2r/detection.hpp"
#include "s2r/error.hpp"
#include "s2r/evalkit.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace s2r::det {
namespace {

using testing::random_tensor;
using VarD = ag::Var<double>;

pillars::BEVGridSpec small_grid() {
  pillars::BEVGridSpec g;
  g.range = {-8, 8, -8, 8};
  g.channels = 8;
  g.downsample = 4;  // 8 x 8 output cells of 2 m
  return g;
}

Box3D random_box(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> c(-extent, extent), l(3.0, 5.5), w(1.5, 2.2), a(-kPi, kPi);
  return {c(rng), c(rng), 0.8, l(rng), w(rng), 1.6, a(rng)};
}

TEST(Head, ShapesAndPriorBias) {
  nn::ParameterStore<double> store;
  nn::Rng rng(1);
  DetectionHead<double> head(store, "head", 8, 0.01, rng);
  const auto bias = store.get("head.cls.bias").value()[0];
  EXPECT_NEAR(bias, -std::log(99.0), 1e-12);
  std::mt19937_64 r(2);
  const auto out = head(ag::constant(random_tensor({5, 7, 8}, r)));
  EXPECT_EQ(out.cls.shape(), (Shape{5, 7, 1}));
  EXPECT_EQ(out.reg.shape(), (Shape{5, 7, kRegChannels}));
  EXPECT_THROW(DetectionHead<double>(store, "bad", 8, 1.0, rng), ConfigError);
}

TEST(Head, ZeroInitGivesZeros) {
  nn::ParameterStore<double> store;
  nn::Rng rng(1);
  DetectionHead<double> head(store, "head", 8, 0.01, rng);
  head.zero_init();
  std::mt19937_64 r(3);
  const auto out = head(ag::constant(random_tensor({4, 4, 8}, r)));
  for (double v : out.cls.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : out.reg.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Head, LossGradientMatchesFiniteDifferences) {
  const auto grid = small_grid();
  nn::ParameterStore<double> store;
  nn::Rng rng(4);
  DetectionHead<double> head(store, "head", 8, 0.1, rng);
  std::mt19937_64 r(5);
  const VarD x = ag::leaf(random_tensor({8, 8, 8}, r));
  std::vector<Box3D> boxes;
  for (int i = 0; i < 5; ++i) boxes.push_back(random_box(r, 7.5));
  const Targets t = assign_targets(boxes, grid);
  auto wrt = testing::all_parameters(store);
  wrt.emplace_back("x", x);
  const auto report = testing::gradcheck([&] { return detection_loss(head(x), t).total; }, wrt);
  EXPECT_LT(report.max_rel_error, 1e-3) << report.worst;
}

TEST(AssignTargets, NoBoxes) {
  const Targets t = assign_targets({}, small_grid());
  EXPECT_EQ(t.positives(), 0);
  EXPECT_EQ(t.cls.size(), 64u);
}

TEST(AssignTargets, CenteredBox) {
  // Output cell (5, 2) spans x in [2, 4), y in [-4, -2); center (3, -3).
  const Targets t = assign_targets({{3, -3, 0.8, 4.5, 1.9, 1.6, 0.3}}, small_grid());
  ASSERT_EQ(t.positives(), 1);
  EXPECT_EQ(t.cls[5 * 8 + 2], 1);
  EXPECT_DOUBLE_EQ(t.reg[(5 * 8 + 2) * kRegChannels + 0], 0.0);
  EXPECT_DOUBLE_EQ(t.reg[(5 * 8 + 2) * kRegChannels + 1], 0.0);
}

TEST(AssignTargets, LargerBoxWinsSharedCell) {
  const Box3D small{3.1, -3.1, 0.8, 4.0, 1.8, 1.6, 0};
  const Box3D large{2.9, -2.9, 0.8, 5.0, 2.0, 1.6, 0};
  for (const auto& order : {std::vector<Box3D>{small, large}, std::vector<Box3D>{large, small}}) {
    const Targets t = assign_targets(order, small_grid());
    ASSERT_EQ(t.positives(), 1);
    EXPECT_NEAR(t.reg[(5 * 8 + 2) * kRegChannels + 3], std::log(5.0 / kRefLength), 1e-12);
  }
}

TEST(AssignTargets, OutOfRangeIgnored) {
  EXPECT_EQ(assign_targets({{9, 0, 0, 4, 2, 1.5, 0}}, small_grid()).positives(), 0);
}

TEST(FocalLoss, ClosedForms) {
  EXPECT_NEAR(focal_loss(0.5, 1), 0.25 * 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss(0.5, 1), 0.04332, 1e-5);
  EXPECT_LT(focal_loss(1.0 - 1e-9, 1), 1e-6);
  EXPECT_LT(focal_loss(1e-9, 0), 1e-6);
  for (double p : {0.1, 0.5, 0.8}) {
    EXPECT_NEAR(focal_loss(p, 1, 0.5, 0.0), -0.5 * std::log(p), 1e-15);
    EXPECT_NEAR(focal_loss(p, 0, 0.5, 0.0), -0.5 * std::log(1 - p), 1e-15);
  }
  EXPECT_TRUE(std::isfinite(focal_loss(0.0, 1)));
  EXPECT_NEAR(focal_loss_mean({0.5, 0.5}, {1, 1}), focal_loss(0.5, 1), 1e-15);
}

TEST(SmoothL1, ClosedForms) {
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
}

TEST(DetectionLoss, MatchesScalarOracle) {
  const auto grid = small_grid();
  std::mt19937_64 r(6);
  std::vector<Box3D> boxes;
  for (int i = 0; i < 6; ++i) boxes.push_back(random_box(r, 7.5));
  const Targets t = assign_targets(boxes, grid);
  HeadOutput<double> out{ag::constant(random_tensor({8, 8, 1}, r, 3.0)),
                         ag::constant(random_tensor({8, 8, kRegChannels}, r))};
  const auto l = detection_loss(out, t);
  double cls = 0, reg = 0;
  for (std::int64_t c = 0; c < 64; ++c) {
    const double p = 1.0 / (1.0 + std::exp(-out.cls.value()[c]));
    cls += focal_loss(p, t.cls[static_cast<std::size_t>(c)]);
    if (t.cls[static_cast<std::size_t>(c)]) {
      for (int k = 0; k < kRegChannels; ++k) {
        reg += smooth_l1(out.reg.value()[c * kRegChannels + k] - t.reg[c * kRegChannels + k]);
      }
    }
  }
  const double n = std::max<double>(1, static_cast<double>(t.positives()));
  EXPECT_NEAR(l.cls.value()[0], cls / n, 1e-12);
  EXPECT_NEAR(l.reg.value()[0], reg / n, 1e-12);
  EXPECT_NEAR(l.total.value()[0], (cls + reg) / n, 1e-12);
}

TEST(DetectionLoss, SaturatedCorrectPredictionsNearZero) {
  const auto grid = small_grid();
  const Targets t = assign_targets({{3, -3, 0.8, 4.5, 1.9, 1.6, 0.3}}, grid);
  Tensor<double> cls(Shape{8, 8, 1}), reg(Shape{8, 8, kRegChannels});
  for (std::int64_t c = 0; c < 64; ++c) cls[c] = t.cls[static_cast<std::size_t>(c)] ? 30.0 : -30.0;
  std::copy(t.reg.data(), t.reg.data() + t.reg.numel(), reg.data());
  const auto l = detection_loss<double>({ag::constant(cls), ag::constant(reg)}, t);
  EXPECT_LT(l.total.value()[0], 1e-6);
  EXPECT_GE(l.total.value()[0], 0.0);
}

TEST(Decode, BelowThresholdIsEmpty) {
  const auto grid = small_grid();
  EXPECT_TRUE(decode(Tensor<double>(Shape{8, 8, 1}, -20.0), Tensor<double>(Shape{8, 8, 8}), grid, 0.05).empty());
}

TEST(Decode, ScoreIsSigmoid) {
  const auto grid = small_grid();
  Tensor<double> cls(Shape{8, 8, 1}, -20.0), reg(Shape{8, 8, 8});
  cls[9] = 0.7;
  reg[9 * 8 + 7] = 1.0;  // cos
  const auto dets = decode(cls, reg, grid, 0.05);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].score, 1.0 / (1.0 + std::exp(-0.7)));
}

TEST(Decode, InvertsAssignTargets) {
  const auto grid = small_grid();
  std::mt19937_64 r(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Box3D> boxes;
    std::set<std::int64_t> used;
    while (boxes.size() < 6) {
      const Box3D b = random_box(r, 7.9);
      const auto cell = static_cast<std::int64_t>(std::floor((b.x + 8) / 2)) * 8 +
                        static_cast<std::int64_t>(std::floor((b.y + 8) / 2));
      if (used.insert(cell).second) boxes.push_back(b);
    }
    const Targets t = assign_targets(boxes, grid);
    Tensor<double> cls(Shape{8, 8, 1});
    for (std::int64_t c = 0; c < 64; ++c) cls[c] = t.cls[static_cast<std::size_t>(c)] ? 5.0 : -5.0;
    Tensor<double> reg(Shape{8, 8, kRegChannels});
    std::copy(t.reg.data(), t.reg.data() + t.reg.numel(), reg.data());
    const auto dets = decode(cls, reg, grid, 0.5);
    ASSERT_EQ(dets.size(), boxes.size());
    for (const auto& d : dets) {
      const auto match = std::find_if(boxes.begin(), boxes.end(), [&](const Box3D& b) {
        return std::abs(b.x - d.box.x) < 1e-6 && std::abs(b.y - d.box.y) < 1e-6;
      });
      ASSERT_NE(match, boxes.end());
      EXPECT_NEAR(d.box.l, match->l, 1e-6);
      EXPECT_NEAR(d.box.w, match->w, 1e-6);
      EXPECT_NEAR(d.box.h, match->h, 1e-6);
      EXPECT_NEAR(d.box.z, match->z, 1e-6);
      EXPECT_NEAR(std::abs(normalize_angle(d.box.yaw - match->yaw)), 0.0, 1e-6);
    }
  }
}

TEST(Nms, IdenticalAndDisjoint) {
  const Box3D b{0, 0, 0, 4, 2, 1.5, 0};
  const auto same = nms({{b, 0.8}, {b, 0.9}});
  ASSERT_EQ(same.size(), 1u);
  EXPECT_EQ(same[0].score, 0.9);
  Box3D far = b;
  far.x = 20;
  EXPECT_EQ(nms({{b, 0.8}, {far, 0.9}}).size(), 2u);
}

TEST(Nms, MatchesExhaustiveOracle) {
  std::mt19937_64 r(8);
  std::uniform_real_distribution<double> score(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 9;
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) dets.push_back({random_box(r, 3.0), std::round(score(r) * 8) / 8});
    const double thresh = trial % 2 ? 0.15 : 0.4;
    const auto got = nms(dets, thresh);
    int solutions = 0;
    const auto expect = testing::exhaustive_nms(dets, thresh, &solutions);
    EXPECT_EQ(solutions, 1);
    ASSERT_EQ(got.size(), expect.size()) << "trial " << trial;
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k].box, dets[expect[k]].box);
      EXPECT_EQ(got[k].score, dets[expect[k]].score);
    }
  }
}

}  // namespace
}  // namespace s2r::det
