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

#include "s2r/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "s2r/config.hpp"
#include "s2r/error.hpp"

namespace s2r::eval {

namespace {

void check_box(const Box3D& b) {
  if (!(b.l > 0) || !(b.w > 0) || !std::isfinite(b.l) || !std::isfinite(b.w) || !std::isfinite(b.x) ||
      !std::isfinite(b.y) || !std::isfinite(b.yaw)) {
    throw InvalidInput("rotated_iou: degenerate box");
  }
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    double v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v) ||
        v < 0) {
      throw InvalidInput(what + ": expected non-negative numbers, got '" + text + "'");
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

double rotated_iou(const Box3D& a, const Box3D& b) {
  check_box(a);
  check_box(b);
  const auto ca = geom::box_corners(a), cb = geom::box_corners(b);
  const geom::Polygon pa(ca.begin(), ca.end()), pb(cb.begin(), cb.end());
  const double inter = geom::polygon_area(geom::convex_clip(pa, pb));
  const double uni = a.l * a.w + b.l * b.w - inter;
  if (uni <= 0) return 0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double average_precision(const std::vector<std::vector<Detection>>& detections,
                         const std::vector<std::vector<Box3D>>& ground_truth, double iou_thresh) {
  if (detections.size() != ground_truth.size()) {
    throw InvalidInput("average_precision: detection and ground-truth frame counts differ");
  }
  std::size_t total_gt = 0;
  for (const auto& g : ground_truth) total_gt += g.size();
  if (total_gt == 0) return 0;

  struct Ref {
    double score;
    std::size_t frame, index;
  };
  std::vector<Ref> order;
  for (std::size_t f = 0; f < detections.size(); ++f) {
    for (std::size_t i = 0; i < detections[f].size(); ++i) order.push_back({detections[f][i].score, f, i});
  }
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> used(ground_truth.size());
  for (std::size_t f = 0; f < ground_truth.size(); ++f) used[f].assign(ground_truth[f].size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0, seen = 0;
  for (const auto& r : order) {
    const Box3D& box = detections[r.frame][r.index].box;
    double best = -1;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < ground_truth[r.frame].size(); ++g) {
      if (used[r.frame][g]) continue;
      const double iou = rotated_iou(box, ground_truth[r.frame][g]);
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    ++seen;
    if (best >= iou_thresh && best >= 0) {
      used[r.frame][best_g] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  // Precision envelope, then area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_r = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

ApResult ap_at_standard_thresholds(const std::vector<std::vector<Detection>>& detections,
                                   const std::vector<std::vector<Box3D>>& ground_truth) {
  return {average_precision(detections, ground_truth, 0.5), average_precision(detections, ground_truth, 0.7)};
}

std::vector<geom::NoiseSpec> NoiseGrid::points() const {
  std::vector<geom::NoiseSpec> out;
  for (double p : sigma_pos) {
    for (double h : sigma_head_deg) {
      for (double l : latency) out.push_back({p, h, l});
    }
  }
  return out;
}

NoiseGrid NoiseGrid::parse(const std::string& text) {
  NoiseGrid g;
  bool seen_pos = false, seen_head = false, seen_lat = false;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto semi = text.find(';', start);
    const std::string part = text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
    start = semi == std::string::npos ? text.size() : semi + 1;
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw InvalidInput("noise grid: expected axis=values in '" + part + "'");
    const std::string axis = part.substr(0, eq);
    auto values = parse_list(part.substr(eq + 1), "noise grid axis " + axis);
    auto assign = [&](bool& seen, std::vector<double>& dst) {
      if (seen) throw InvalidInput("noise grid: axis " + axis + " given twice");
      seen = true;
      dst = std::move(values);
    };
    if (axis == "pos") {
      assign(seen_pos, g.sigma_pos);
    } else if (axis == "head") {
      assign(seen_head, g.sigma_head_deg);
    } else if (axis == "lat") {
      assign(seen_lat, g.latency);
    } else {
      throw InvalidInput("noise grid: unknown axis '" + axis + "' (use pos, head, lat)");
    }
  }
  return g;
}

std::vector<SweepRow> sweep(const NoiseGrid& grid, const Evaluator& evaluate) {
  std::vector<SweepRow> rows;
  for (const auto& n : grid.points()) rows.push_back({n, evaluate(n)});
  return rows;
}

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "sigma_pos\tsigma_head_deg\tlatency\tap50\tap70\n";
  for (const auto& r : rows) {
    out += format_double(r.noise.sigma_pos) + '\t' + format_double(r.noise.sigma_head_deg) + '\t' +
           format_double(r.noise.latency) + '\t' + format_double(r.ap.ap50) + '\t' + format_double(r.ap.ap70) +
           '\n';
  }
  return out;
}

geom::NoiseSpec parse_noise_triple(const std::string& text) {
  auto v = parse_list(text, "noise");
  if (v.size() != 3) throw InvalidInput("noise: expected 'sigma_pos,sigma_head_deg,latency', got '" + text + "'");
  return {v[0], v[1], v[2]};
}

}  // namespace s2r::eval
