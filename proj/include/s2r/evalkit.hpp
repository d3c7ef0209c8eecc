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

#ifndef S2R_EVALKIT_HPP_
#define S2R_EVALKIT_HPP_

#include <functional>
#include <string>
#include <vector>

#include "s2r/geometry.hpp"
#include "s2r/types.hpp"

namespace s2r::eval {

/// BEV intersection over union of two oriented boxes. Symmetric. Throws
/// InvalidInput if either footprint has non-positive or non-finite size.
double rotated_iou(const Box3D& a, const Box3D& b);

/// All-point average precision. Detections of all frames are ranked by
/// (score desc, frame, index); each takes the unmatched ground truth of its
/// frame with the highest IoU (lowest index on ties) and counts as a true
/// positive if that IoU reaches `iou_thresh`. Returns 0 when there is no
/// ground truth.
double average_precision(const std::vector<std::vector<Detection>>& detections,
                         const std::vector<std::vector<Box3D>>& ground_truth, double iou_thresh);

struct ApResult {
  double ap50 = 0;
  double ap70 = 0;
  bool operator==(const ApResult&) const = default;
};

ApResult ap_at_standard_thresholds(const std::vector<std::vector<Detection>>& detections,
                                   const std::vector<std::vector<Box3D>>& ground_truth);

/// Cartesian grid of deployment-gap settings.
struct NoiseGrid {
  std::vector<double> sigma_pos{0.0};
  std::vector<double> sigma_head_deg{0.0};
  std::vector<double> latency{0.0};

  /// Points ordered with latency varying fastest, then heading, then position.
  std::vector<geom::NoiseSpec> points() const;
  std::size_t size() const { return sigma_pos.size() * sigma_head_deg.size() * latency.size(); }

  /// "pos=0,0.2;head=0,0.2;lat=0,0.1"; omitted axes default to {0}.
  static NoiseGrid parse(const std::string& text);
};

struct SweepRow {
  geom::NoiseSpec noise;
  ApResult ap;
};

using Evaluator = std::function<ApResult(const geom::NoiseSpec&)>;

std::vector<SweepRow> sweep(const NoiseGrid& grid, const Evaluator& evaluate);

/// Header line plus one tab-separated row per setting:
/// sigma_pos sigma_head latency ap50 ap70.
std::string sweep_tsv(const std::vector<SweepRow>& rows);

/// "sp,sh,lat" -> NoiseSpec; throws InvalidInput on malformed text.
geom::NoiseSpec parse_noise_triple(const std::string& text);

}  // namespace s2r::eval

#endif  // S2R_EVALKIT_HPP_
