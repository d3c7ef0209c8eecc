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

#include "s2r/geometry.hpp"

#include <cmath>

#include "s2r/error.hpp"

namespace s2r::geom {

void NoiseSpec::validate() const {
  if (!(sigma_pos >= 0) || !(sigma_head_deg >= 0) || !(latency >= 0) || !std::isfinite(sigma_pos) ||
      !std::isfinite(sigma_head_deg) || !std::isfinite(latency)) {
    throw InvalidInput("noise spec fields must be finite and non-negative");
  }
}

void validate_pose(const Pose& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.yaw) || !std::isfinite(p.t)) {
    throw InvalidInput("pose has non-finite fields");
  }
}

PointCloud project_points(const PointCloud& points, const Pose& src, const Pose& dst) {
  validate_pose(src);
  validate_pose(dst);
  // dst^-1 * src as a single rotation + translation.
  const double dyaw = src.yaw - dst.yaw;
  const double c = std::cos(dyaw), s = std::sin(dyaw);
  const double cd = std::cos(dst.yaw), sd = std::sin(dst.yaw);
  const double ex = src.x - dst.x, ey = src.y - dst.y;
  const double tx = cd * ex + sd * ey;
  const double ty = -sd * ex + cd * ey;

  PointCloud out;
  out.reserve(points.size());
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw InvalidInput("point cloud has non-finite coordinates");
    }
    out.push_back({c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z, p.intensity});
  }
  return out;
}

Pose perturb_pose(const Pose& pose, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  std::normal_distribution<double> n01(0.0, 1.0);
  const double dx = n01(rng), dy = n01(rng), dh = n01(rng);
  Pose out = pose;
  out.x += spec.sigma_pos * dx;
  out.y += spec.sigma_pos * dy;
  out.yaw = normalize_angle(pose.yaw + spec.sigma_head_deg * kPi / 180.0 * dh);
  if (spec.sigma_head_deg == 0) out.yaw = pose.yaw;
  return out;
}

std::array<Vec2, 4> box_corners(double cx, double cy, double l, double w, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hl = 0.5 * l, hw = 0.5 * w;
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {cx + c * local[i].x - s * local[i].y, cy + s * local[i].x + c * local[i].y};
  }
  return out;
}

double polygon_area(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

Polygon convex_clip(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    // Inside = left of a->b for a counter-clockwise clip polygon.
    auto side = [&](const Vec2& p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); };
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2 p = in[i];
      const Vec2 q = in[(i + 1) % in.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
  }
  return out;
}

}  // namespace s2r::geom
