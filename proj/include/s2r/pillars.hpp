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

// Point cloud to BEV features: per-cell statistics, a small pillar encoder
// and channel stacking of agents.
//
// Grid axes: row i runs along x, column j along y, so a map is
// [x cells, y cells, channels].

#ifndef S2R_PILLARS_HPP_
#define S2R_PILLARS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "s2r/autograd.hpp"
#include "s2r/geometry.hpp"
#include "s2r/nn.hpp"
#include "s2r/types.hpp"

namespace s2r::pillars {

struct BEVGridSpec {
  BevRange range;
  double cell = 0.5;   // m per pillar
  int channels = 64;   // C
  int downsample = 4;  // power of two

  std::int64_t cells_x() const;
  std::int64_t cells_y() const;
  /// Feature map rows (x) and columns (y) after downsampling.
  std::int64_t out_h() const { return cells_x() / downsample; }
  std::int64_t out_w() const { return cells_y() / downsample; }
  double out_cell() const { return cell * downsample; }

  /// Throws ConfigError unless the range tiles exactly into downsampled cells.
  void validate() const;
  bool operator==(const BEVGridSpec&) const = default;
};

/// Feature layout of a pillar row.
enum PillarFeature : int {
  kCount = 0,
  kMeanX,
  kMeanY,
  kMeanZ,
  kMeanIntensity,
  kMaxZ,
  kMeanDx,  // mean offset from the cell center
  kMeanDy,
  kPillarFeatures
};

/// Statistics of the nonempty cells, sorted by flat cell index (i * cells_y + j).
struct PillarStats {
  std::int64_t cells_x = 0, cells_y = 0;
  std::vector<std::int64_t> cells;
  std::vector<std::array<double, kPillarFeatures>> rows;

  /// Dense [cells_x, cells_y, kPillarFeatures] view; empty cells are zero.
  Tensor<double> dense() const;
};

/// Points outside the range are dropped. Invariant under point permutation.
PillarStats pillarize(const geom::PointCloud& points, const BEVGridSpec& grid);

/// Per-pillar linear + ReLU, scatter to the grid, then log2(downsample)
/// stride-2 3x3 convolutions each followed by ReLU.
template <typename T>
class PillarEncoder {
 public:
  PillarEncoder() = default;
  PillarEncoder(nn::ParameterStore<T>& store, const std::string& name, const BEVGridSpec& grid,
                nn::Rng& rng);

  /// [out_h, out_w, C]. Throws InvalidInput if `stats` was built for another grid.
  ag::Var<T> operator()(const PillarStats& stats) const;

  /// Fixed scaling applied to pillar rows; zero rows stay zero.
  std::array<T, kPillarFeatures> normalized(const std::array<double, kPillarFeatures>& row) const;

 private:
  BEVGridSpec grid_;
  nn::Linear<T> point_net_;
  std::vector<nn::Conv2d<T>> down_;
};

/// Agent feature maps concatenated along channels, ego block first.
template <typename T>
struct StackedFeatureMap {
  ag::Var<T> values;  // [H, W, k*C]
  int agents = 0;
  std::int64_t channels = 0;  // C
};

/// Throws InvalidInput on an empty list or mismatched shapes.
template <typename T>
StackedFeatureMap<T> stack_agents(const std::vector<ag::Var<T>>& maps);

}  // namespace s2r::pillars

#endif  // S2R_PILLARS_HPP_
