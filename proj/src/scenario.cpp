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

#include "s2r/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2r/error.hpp"

namespace s2r::scene {

namespace {

constexpr std::uint64_t kSceneStream = 0x5343454eULL;   // "SCEN"
constexpr std::uint64_t kRenderStream = 0x52454e44ULL;  // "REND"

double snap(double v) { return round_to_float(v); }

double snap_angle(double a) {
  double s = snap(normalize_angle(a));
  if (s > kPi) s = snap(s - 2.0 * kPi);
  if (s <= -kPi) s = snap(s + 2.0 * kPi);
  return s;
}

struct Face {
  double cx, cy, cz;           // world center
  double nx, ny, nz;           // outward unit normal
  double ux, uy, uz, ua;       // first tangent axis and half extent
  double vx, vy, vz, va;       // second tangent axis and half extent
};

std::vector<Face> visible_candidate_faces(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w, hh = 0.5 * b.h;
  // Local axes in world coordinates.
  const double ax = c, ay = s;    // length
  const double bx = -s, by = c;   // width
  std::vector<Face> f;
  f.push_back({b.x + ax * hl, b.y + ay * hl, b.z, ax, ay, 0, bx, by, 0, hw, 0, 0, 1, hh});
  f.push_back({b.x - ax * hl, b.y - ay * hl, b.z, -ax, -ay, 0, bx, by, 0, hw, 0, 0, 1, hh});
  f.push_back({b.x + bx * hw, b.y + by * hw, b.z, bx, by, 0, ax, ay, 0, hl, 0, 0, 1, hh});
  f.push_back({b.x - bx * hw, b.y - by * hw, b.z, -bx, -by, 0, ax, ay, 0, hl, 0, 0, 1, hh});
  f.push_back({b.x, b.y, b.z + hh, 0, 0, 1, ax, ay, 0, hl, bx, by, 0, hw});
  return f;
}

bool footprint_contains(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.x, dy = y - b.y;
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}

/// Ray/oriented-box intersection; returns the entry distance or a negative
/// value on a miss.
double ray_box(const Box3D& b, double ox, double oy, double oz, double dx, double dy, double dz) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double rx = ox - b.x, ry = oy - b.y;
  const double o[3] = {c * rx + s * ry, -s * rx + c * ry, oz - b.z};
  const double d[3] = {c * dx + s * dy, -s * dx + c * dy, dz};
  const double ext[3] = {0.5 * b.l, 0.5 * b.w, 0.5 * b.h};
  double tmin = 0.0, tmax = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (std::abs(o[a]) > ext[a]) return -1.0;
      continue;
    }
    double t1 = (-ext[a] - o[a]) / d[a];
    double t2 = (ext[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return -1.0;
  }
  return tmin > 0 ? tmin : -1.0;
}

struct Emitter {
  const DomainProfile& profile;
  const geom::Pose& pose;
  double sensor_z;
  Rng& rng;
  geom::PointCloud& out;
  std::vector<int>* owner;
  std::normal_distribution<double> n01{0.0, 1.0};
  std::uniform_real_distribution<double> u01{0.0, 1.0};

  /// Applies radial noise and dropout to a world-frame return, then stores it
  /// in the sensor frame.
  void emit(double wx, double wy, double wz, double intensity, int who) {
    const double dx = wx - pose.x, dy = wy - pose.y, dz = wz - sensor_z;
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double sigma = profile.range_noise;
    const double noise = std::clamp(sigma * n01(rng), -3.0 * sigma, 3.0 * sigma);
    const bool drop = u01(rng) < profile.dropout;
    if (drop || r <= 0) return;
    const double k = (r + noise) / r;
    const double px = dx * k, py = dy * k;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    out.push_back({c * px + s * py, -s * px + c * py, sensor_z + dz * k, intensity});
    if (owner) owner->push_back(who);
  }
};

}  // namespace

void DomainProfile::validate() const {
  if (beams < 1 || points_per_beam < 1) throw ConfigError("profile: beams and points_per_beam must be >= 1");
  if (!(dropout >= 0 && dropout <= 1)) throw ConfigError("profile: dropout must be in [0, 1]");
  if (!(range_noise >= 0)) throw ConfigError("profile: range_noise must be >= 0");
  if (!(clutter_rate >= 0)) throw ConfigError("profile: clutter_rate must be >= 0");
}

DomainProfile DomainProfile::sim() { return {"sim", 64, 512, 0.0, 0.01, 0.03}; }
DomainProfile DomainProfile::real() { return {"real", 16, 512, 0.2, 0.05, 0.03}; }

DomainProfile DomainProfile::named(const std::string& name) {
  if (name == "sim") return sim();
  if (name == "real") return real();
  throw ConfigError("unknown domain profile '" + name + "' (expected sim or real)");
}

void SceneConfig::validate() const {
  if (agents < 1 || agents > 5) throw ConfigError("scene: agents must be in [1, 5]");
  if (vehicles < 1) throw ConfigError("scene: vehicles must be >= 1");
  if (!(duration > 0) || !(frame_time >= 0) || frame_time > duration) {
    throw ConfigError("scene: need duration > 0 and frame_time in [0, duration]");
  }
  if (lanes_per_direction < 1 || !(lane_width > 0) || !(spawn_x > 0)) {
    throw ConfigError("scene: bad road layout");
  }
  if (!(speed_min >= 0) || speed_max < speed_min) throw ConfigError("scene: bad speed range");
  if (!(parked_fraction >= 0 && parked_fraction <= 1)) throw ConfigError("scene: bad parked_fraction");
  if (max_retries < 1) throw ConfigError("scene: max_retries must be >= 1");
}

geom::Pose Scenario::agent_pose(std::size_t slot, double t) const {
  if (slot >= agents.size()) throw InvalidInput("agent slot out of range");
  const Box3D b = vehicles[static_cast<std::size_t>(agents[slot])].box_at(t);
  return {b.x, b.y, b.yaw, t};
}

Scenario generate_scenario(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.vehicles < config.agents) {
    throw GenerationError("requested " + std::to_string(config.agents) + " agents but only " +
                          std::to_string(config.vehicles) + " vehicles");
  }
  Rng rng(derive_seed(seed, kSceneStream));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const double road_half = config.lanes_per_direction * config.lane_width;
  const double jitter = 3.0 * kPi / 180.0;

  auto random_size = [&](Vehicle& v) {
    v.l = snap(uni(3.8, 5.2));
    v.w = snap(uni(1.7, 2.1));
    v.h = snap(uni(1.4, 1.9));
    v.z = snap(0.5 * v.h);
  };

  Scenario sc;
  sc.duration = config.duration;
  sc.seed = seed;

  // Ego drives +x in the first lane.
  Vehicle ego;
  random_size(ego);
  ego.x = 0.0;
  ego.y = snap(0.5 * config.lane_width);
  ego.yaw = 0.0;
  ego.vx = snap(uni(config.speed_min, config.speed_max));
  sc.vehicles.push_back(ego);

  auto overlaps = [&](const Vehicle& v) {
    const geom::Polygon a = [&] {
      auto c = geom::box_corners(v.x, v.y, v.l + 1.0, v.w + 1.0, v.yaw);
      return geom::Polygon(c.begin(), c.end());
    }();
    for (const Vehicle& o : sc.vehicles) {
      auto c = geom::box_corners(o.x, o.y, o.l + 1.0, o.w + 1.0, o.yaw);
      if (geom::polygon_area(geom::convex_clip(a, geom::Polygon(c.begin(), c.end()))) > 0) {
        return true;
      }
    }
    return false;
  };

  for (int i = 1; i < config.vehicles; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      Vehicle v;
      random_size(v);
      v.x = snap(uni(-config.spawn_x, config.spawn_x));
      if (u01(rng) < config.parked_fraction) {
        const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
        v.y = snap(side * (road_half + uni(2.0, 5.0)));
        v.yaw = snap_angle(uni(-kPi, kPi));
      } else {
        const double dir = u01(rng) < 0.5 ? -1.0 : 1.0;
        const int lane = std::min(static_cast<int>(u01(rng) * config.lanes_per_direction),
                                  config.lanes_per_direction - 1);
        v.y = snap(dir * (lane + 0.5) * config.lane_width);
        v.yaw = snap_angle((dir > 0 ? 0.0 : kPi) + uni(-jitter, jitter));
        const double speed = uni(config.speed_min, config.speed_max);
        v.vx = snap(speed * std::cos(v.yaw));
        v.vy = snap(speed * std::sin(v.yaw));
      }
      if (!overlaps(v)) {
        sc.vehicles.push_back(v);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("could not place vehicle " + std::to_string(i) + " after " +
                            std::to_string(config.max_retries) + " attempts");
    }
  }

  // Connected vehicles: random picks near the ego, nearest-first fallback.
  sc.agents.push_back(0);
  std::vector<int> near, far;
  for (int i = 1; i < config.vehicles; ++i) {
    const Vehicle& v = sc.vehicles[static_cast<std::size_t>(i)];
    (std::hypot(v.x - ego.x, v.y - ego.y) < config.agent_radius ? near : far).push_back(i);
  }
  std::shuffle(near.begin(), near.end(), rng);
  std::sort(far.begin(), far.end(), [&](int a, int b) {
    const auto& va = sc.vehicles[static_cast<std::size_t>(a)];
    const auto& vb = sc.vehicles[static_cast<std::size_t>(b)];
    return std::hypot(va.x, va.y - ego.y) < std::hypot(vb.x, vb.y - ego.y);
  });
  near.insert(near.end(), far.begin(), far.end());
  for (int i = 0; i + 1 < config.agents; ++i) sc.agents.push_back(near[static_cast<std::size_t>(i)]);
  return sc;
}

geom::PointCloud render_lidar(const Scenario& scenario, const geom::Pose& agent_pose,
                              const DomainProfile& profile, double t, Rng& rng,
                              const RenderOptions& options, std::vector<int>* owner) {
  profile.validate();
  geom::validate_pose(agent_pose);
  if (!(t >= 0) || t > scenario.duration + 1e-9) {
    throw OutOfRange("render time " + std::to_string(t) + " outside scenario duration");
  }
  geom::PointCloud out;
  if (owner) owner->clear();
  const double sz = options.sensor_height;
  Emitter em{profile, agent_pose, sz, rng, out, owner};
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double fov_lo = options.fov_down_deg * kPi / 180.0;
  const double fov_hi = options.fov_up_deg * kPi / 180.0;

  std::vector<Box3D> boxes;
  std::vector<int> ids;
  for (std::size_t i = 0; i < scenario.vehicles.size(); ++i) {
    const Box3D b = scenario.vehicles[i].box_at(t);
    if (footprint_contains(b, agent_pose.x, agent_pose.y)) continue;  // carrier
    if (std::hypot(b.x - agent_pose.x, b.y - agent_pose.y) > options.max_range + b.l) continue;
    boxes.push_back(b);
    ids.push_back(static_cast<int>(i));
  }

  if (options.mode == RenderMode::kSurface) {
    // Expected returns on a face = rays per steradian x projected solid angle.
    const double rays_per_sr = static_cast<double>(profile.beams) * profile.points_per_beam /
                               (2.0 * kPi * (fov_hi - fov_lo));
    for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
      for (const Face& f : visible_candidate_faces(boxes[bi])) {
        const double dx = f.cx - agent_pose.x, dy = f.cy - agent_pose.y, dz = f.cz - sz;
        const double r2 = dx * dx + dy * dy + dz * dz;
        const double cos_view = -(f.nx * dx + f.ny * dy + f.nz * dz) / std::sqrt(r2);
        if (cos_view <= 0) continue;
        const double area = 4.0 * f.ua * f.va;
        const double lambda = rays_per_sr * area * cos_view / r2;
        const int n = std::poisson_distribution<int>(lambda)(rng);
        for (int k = 0; k < n; ++k) {
          const double a = (2.0 * u01(rng) - 1.0) * f.ua;
          const double b = (2.0 * u01(rng) - 1.0) * f.va;
          const double inten = 0.4 + 0.4 * u01(rng);
          const double px = f.cx + a * f.ux + b * f.vx;
          const double py = f.cy + a * f.uy + b * f.vy;
          const double pz = f.cz + a * f.uz + b * f.vz;
          const double hx = px - agent_pose.x, hy = py - agent_pose.y;
          const double horiz = std::hypot(hx, hy);
          const double elev = std::atan2(pz - sz, horiz);
          if (elev < fov_lo || elev > fov_hi) continue;
          if (std::hypot(horiz, pz - sz) > options.max_range) continue;
          em.emit(px, py, pz, inten, ids[bi]);
        }
      }
    }
  } else {
    for (int beam = 0; beam < profile.beams; ++beam) {
      const double elev = fov_lo + (fov_hi - fov_lo) * (beam + 0.5) / profile.beams;
      for (int a = 0; a < profile.points_per_beam; ++a) {
        const double az = agent_pose.yaw + 2.0 * kPi * a / profile.points_per_beam;
        const double dx = std::cos(elev) * std::cos(az);
        const double dy = std::cos(elev) * std::sin(az);
        const double dz = std::sin(elev);
        double best = options.max_range;
        int hit = -1;
        for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
          const double d = ray_box(boxes[bi], agent_pose.x, agent_pose.y, sz, dx, dy, dz);
          if (d > 0 && d < best) {
            best = d;
            hit = ids[bi];
          }
        }
        if (hit < 0) continue;
        const double inten = 0.4 + 0.4 * u01(rng);
        em.emit(agent_pose.x + best * dx, agent_pose.y + best * dy, sz + best * dz, inten, hit);
      }
    }
  }

  if (profile.clutter_rate > 0) {
    const double e = options.clutter_extent;
    const int n = std::poisson_distribution<int>(profile.clutter_rate * 4.0 * e * e)(rng);
    for (int k = 0; k < n; ++k) {
      const double x = (2.0 * u01(rng) - 1.0) * e;
      const double y = (2.0 * u01(rng) - 1.0) * e;
      const double z = 0.3 * u01(rng);
      const double inten = 0.2 * u01(rng);
      out.push_back({x, y, z, inten});
      if (owner) owner->push_back(-1);
    }
  }
  return out;
}

std::vector<Box3D> ground_truth_boxes(const Scenario& scenario, double t, const BevRange& range) {
  std::vector<Box3D> out;
  if (scenario.agents.empty()) return out;
  const geom::Pose ego = scenario.agent_pose(0, t);
  const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
  for (std::size_t i = 0; i < scenario.vehicles.size(); ++i) {
    if (static_cast<int>(i) == scenario.agents[0]) continue;
    Box3D b = scenario.vehicles[i].box_at(t);
    const double dx = b.x - ego.x, dy = b.y - ego.y;
    b.x = c * dx + s * dy;
    b.y = -s * dx + c * dy;
    b.yaw = normalize_angle(b.yaw - ego.yaw);
    if (range.contains(b.x, b.y)) out.push_back(b);
  }
  return out;
}

std::uint64_t render_seed(const Scenario& scenario, std::size_t slot) {
  return derive_seed(scenario.seed, kRenderStream, slot);
}

AgentFrame stale_frame(const Scenario& scenario, std::size_t slot, double t, double latency,
                       const DomainProfile& profile, const RenderOptions& options) {
  if (slot >= scenario.agents.size()) throw InvalidInput("agent slot out of range");
  if (!(latency >= 0)) throw InvalidInput("latency must be non-negative");
  const double lag = slot == 0 ? 0.0 : latency;
  const double capture = t - lag;
  if (capture < 0 || t > scenario.duration + 1e-9) {
    throw OutOfRange("capture time " + std::to_string(capture) + " outside scenario span [0, " +
                     std::to_string(scenario.duration) + "]");
  }
  AgentFrame f;
  f.slot = slot;
  f.capture_time = capture;
  f.pose = scenario.agent_pose(slot, capture);
  Rng rng(render_seed(scenario, slot));
  f.points = render_lidar(scenario, f.pose, profile, capture, rng, options);
  return f;
}

}  // namespace s2r::scene
