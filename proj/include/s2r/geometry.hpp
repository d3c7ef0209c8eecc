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

#ifndef S2R_GEOMETRY_HPP_
#define S2R_GEOMETRY_HPP_

#include <array>
#include <vector>

#include "s2r/types.hpp"

namespace s2r::geom {

/// Planar sensor pose in the world frame plus its capture time.
struct Pose {
  double x = 0;    // m
  double y = 0;    // m
  double yaw = 0;  // rad, (-pi, pi]
  double t = 0;    // s

  bool operator==(const Pose&) const = default;
};

/// Deployment-gap perturbation. Heading noise is given in degrees.
struct NoiseSpec {
  double sigma_pos = 0;       // m
  double sigma_head_deg = 0;  // deg
  double latency = 0;         // s

  void validate() const;
  bool is_zero() const { return sigma_pos == 0 && sigma_head_deg == 0 && latency == 0; }
  bool operator==(const NoiseSpec&) const = default;

  /// 0.2 m / 0.2 deg / 100 ms.
  static NoiseSpec noisy_setting() { return {0.2, 0.2, 0.1}; }
};

struct Point {
  double x = 0, y = 0, z = 0;
  double intensity = 0;

  bool operator==(const Point&) const = default;
};

using PointCloud = std::vector<Point>;

void validate_pose(const Pose& p);

/// Re-expresses points given in the `src` sensor frame in the `dst` frame.
/// Only (x, y) are rotated/translated; z and intensity pass through.
PointCloud project_points(const PointCloud& points, const Pose& src, const Pose& dst);

/// Gaussian noise on x, y (sigma_pos) and yaw (sigma_head_deg, converted to
/// radians). Time is untouched. Draws exactly three normals from `rng`.
Pose perturb_pose(const Pose& pose, const NoiseSpec& spec, Rng& rng);

// Planar polygon helpers shared by scene placement and IoU evaluation.

struct Vec2 {
  double x = 0, y = 0;
};

using Polygon = std::vector<Vec2>;

/// Counter-clockwise footprint corners of a box.
std::array<Vec2, 4> box_corners(double cx, double cy, double l, double w, double yaw);
inline std::array<Vec2, 4> box_corners(const Box3D& b) {
  return box_corners(b.x, b.y, b.l, b.w, b.yaw);
}

double polygon_area(const Polygon& poly);

/// Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).
Polygon convex_clip(const Polygon& subject, const Polygon& clip);

}  // namespace s2r::geom

#endif  // S2R_GEOMETRY_HPP_
