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

#include "s2r/pillars.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "s2r/error.hpp"

namespace s2r::pillars {

namespace {

std::int64_t exact_cells(double extent, double cell, const char* axis) {
  const double n = extent / cell;
  const double r = std::round(n);
  if (!(r >= 1) || std::abs(n - r) > 1e-9 * std::max(1.0, r)) {
    throw ConfigError(std::string("grid: ") + axis + " extent is not a whole number of cells");
  }
  return static_cast<std::int64_t>(r);
}

}  // namespace

std::int64_t BEVGridSpec::cells_x() const { return exact_cells(range.x_max - range.x_min, cell, "x"); }
std::int64_t BEVGridSpec::cells_y() const { return exact_cells(range.y_max - range.y_min, cell, "y"); }

void BEVGridSpec::validate() const {
  if (!(cell > 0)) throw ConfigError("grid: cell size must be positive");
  if (channels <= 0) throw ConfigError("grid: channel count must be positive");
  if (downsample < 1 || (downsample & (downsample - 1)) != 0) {
    throw ConfigError("grid: downsample must be a power of two");
  }
  if (cells_x() % downsample || cells_y() % downsample) {
    throw ConfigError("grid: cell counts must be divisible by the downsample factor");
  }
}

Tensor<double> PillarStats::dense() const {
  Tensor<double> out(Shape{cells_x, cells_y, kPillarFeatures});
  for (std::size_t p = 0; p < cells.size(); ++p) {
    std::copy(rows[p].begin(), rows[p].end(), out.data() + cells[p] * kPillarFeatures);
  }
  return out;
}

PillarStats pillarize(const geom::PointCloud& points, const BEVGridSpec& grid) {
  PillarStats st;
  st.cells_x = grid.cells_x();
  st.cells_y = grid.cells_y();
  struct Acc {
    double n = 0, sx = 0, sy = 0, sz = 0, si = 0, max_z = 0;
  };
  // Ordered map keeps the output sorted; sums are over a sorted copy of the
  // cell's points so the result does not depend on input order.
  std::map<std::int64_t, std::vector<geom::Point>> bins;
  for (const auto& p : points) {
    if (!grid.range.contains(p.x, p.y)) continue;
    const auto i = static_cast<std::int64_t>(std::floor((p.x - grid.range.x_min) / grid.cell));
    const auto j = static_cast<std::int64_t>(std::floor((p.y - grid.range.y_min) / grid.cell));
    if (i < 0 || i >= st.cells_x || j < 0 || j >= st.cells_y) continue;
    bins[i * st.cells_y + j].push_back(p);
  }
  for (auto& [cell, pts] : bins) {
    std::sort(pts.begin(), pts.end(), [](const geom::Point& a, const geom::Point& b) {
      if (a.x != b.x) return a.x < b.x;
      if (a.y != b.y) return a.y < b.y;
      if (a.z != b.z) return a.z < b.z;
      return a.intensity < b.intensity;
    });
    Acc acc;
    acc.max_z = pts.front().z;
    for (const auto& p : pts) {
      acc.n += 1;
      acc.sx += p.x;
      acc.sy += p.y;
      acc.sz += p.z;
      acc.si += p.intensity;
      acc.max_z = std::max(acc.max_z, p.z);
    }
    const std::int64_t i = cell / st.cells_y, j = cell % st.cells_y;
    const double cx = grid.range.x_min + (static_cast<double>(i) + 0.5) * grid.cell;
    const double cy = grid.range.y_min + (static_cast<double>(j) + 0.5) * grid.cell;
    std::array<double, kPillarFeatures> row{};
    row[kCount] = acc.n;
    row[kMeanX] = acc.sx / acc.n;
    row[kMeanY] = acc.sy / acc.n;
    row[kMeanZ] = acc.sz / acc.n;
    row[kMeanIntensity] = acc.si / acc.n;
    row[kMaxZ] = acc.max_z;
    row[kMeanDx] = row[kMeanX] - cx;
    row[kMeanDy] = row[kMeanY] - cy;
    st.cells.push_back(cell);
    st.rows.push_back(row);
  }
  return st;
}

template <typename T>
PillarEncoder<T>::PillarEncoder(nn::ParameterStore<T>& store, const std::string& name,
                                const BEVGridSpec& grid, nn::Rng& rng)
    : grid_(grid) {
  grid.validate();
  point_net_ = nn::Linear<T>(store, name + ".pillar", kPillarFeatures, grid.channels, rng);
  int stage = 0;
  for (int f = grid.downsample; f > 1; f /= 2, ++stage) {
    down_.emplace_back(store, name + ".down" + std::to_string(stage), grid.channels, grid.channels, 3, 2,
                       rng);
  }
}

template <typename T>
std::array<T, kPillarFeatures> PillarEncoder<T>::normalized(
    const std::array<double, kPillarFeatures>& row) const {
  const double hx = 0.5 * (grid_.range.x_max - grid_.range.x_min);
  const double hy = 0.5 * (grid_.range.y_max - grid_.range.y_min);
  std::array<T, kPillarFeatures> out{};
  out[kCount] = static_cast<T>(std::log1p(row[kCount]));
  out[kMeanX] = static_cast<T>(row[kMeanX] / hx);
  out[kMeanY] = static_cast<T>(row[kMeanY] / hy);
  out[kMeanZ] = static_cast<T>(row[kMeanZ] / 2.0);
  out[kMeanIntensity] = static_cast<T>(row[kMeanIntensity]);
  out[kMaxZ] = static_cast<T>(row[kMaxZ] / 2.0);
  out[kMeanDx] = static_cast<T>(row[kMeanDx] / grid_.cell);
  out[kMeanDy] = static_cast<T>(row[kMeanDy] / grid_.cell);
  return out;
}

template <typename T>
ag::Var<T> PillarEncoder<T>::operator()(const PillarStats& stats) const {
  if (stats.cells_x != grid_.cells_x() || stats.cells_y != grid_.cells_y() ||
      stats.cells.size() != stats.rows.size()) {
    throw InvalidInput("encode: pillar statistics do not match the encoder grid");
  }
  const auto p = static_cast<std::int64_t>(stats.cells.size());
  const std::int64_t c = grid_.channels;
  const std::int64_t ncell = stats.cells_x * stats.cells_y;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(ncell * c), -1);
  ag::Var<T> scattered;
  if (p == 0) {
    scattered = ag::constant(Tensor<T>(Shape{stats.cells_x, stats.cells_y, c}));
  } else {
    Tensor<T> rows(Shape{p, kPillarFeatures});
    for (std::int64_t r = 0; r < p; ++r) {
      const auto n = normalized(stats.rows[static_cast<std::size_t>(r)]);
      std::copy(n.begin(), n.end(), rows.data() + r * kPillarFeatures);
    }
    ag::Var<T> feat = ag::relu(point_net_(ag::constant(std::move(rows))));
    for (std::int64_t r = 0; r < p; ++r) {
      const std::int64_t cell = stats.cells[static_cast<std::size_t>(r)];
      for (std::int64_t ch = 0; ch < c; ++ch) idx[static_cast<std::size_t>(cell * c + ch)] = r * c + ch;
    }
    scattered = ag::gather(feat, idx, Shape{stats.cells_x, stats.cells_y, c});
  }
  ag::Var<T> x = scattered;
  for (const auto& conv : down_) x = ag::relu(conv(x));
  return x;
}

template <typename T>
StackedFeatureMap<T> stack_agents(const std::vector<ag::Var<T>>& maps) {
  if (maps.empty()) throw InvalidInput("stack_agents: no agent maps");
  const Shape& s0 = maps.front().shape();
  if (s0.size() != 3) throw InvalidInput("stack_agents: maps must be [H, W, C]");
  for (const auto& m : maps) {
    if (m.shape() != s0) {
      throw InvalidInput("stack_agents: map shape " + shape_str(m.shape()) + " differs from ego " +
                         shape_str(s0));
    }
  }
  return {ag::concat_last(maps), static_cast<int>(maps.size()), s0[2]};
}

template class PillarEncoder<float>;
template class PillarEncoder<double>;
template StackedFeatureMap<float> stack_agents(const std::vector<ag::Var<float>>&);
template StackedFeatureMap<double> stack_agents(const std::vector<ag::Var<double>>&);

}  // namespace s2r::pillars
