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

#ifndef S2R_TYPES_HPP_
#define S2R_TYPES_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace s2r {

using Rng = std::mt19937_64;

/// splitmix64 mixing of a master seed with stream identifiers. Used to give
/// every frame / agent / purpose an independent, reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

/// Nearest binary32 value. Kept out of line: GCC 11's SLP vectorizer at -O3
/// folds an inlined double -> float -> double round trip into a no-op.
[[gnu::noinline]] inline double round_to_float(double v) {
  return static_cast<double>(static_cast<float>(v));
}

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  return a <= -kPi ? a + 2.0 * kPi : a;
}

/// Oriented 3D box; yaw rotates the length axis away from +x.
struct Box3D {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double yaw = 0;

  bool operator==(const Box3D&) const = default;
};

struct Detection {
  Box3D box;
  double score = 0;
};

/// Axis-aligned BEV region in the ego frame.
struct BevRange {
  double x_min = -40, x_max = 40;
  double y_min = -20, y_max = 20;

  bool contains(double x, double y) const {
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
  }
  bool operator==(const BevRange&) const = default;
};

}  // namespace s2r

#endif  // S2R_TYPES_HPP_
