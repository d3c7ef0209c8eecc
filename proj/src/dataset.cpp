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

#include "s2r/dataset.hpp"

#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "s2r/binary_io.hpp"
#include "s2r/error.hpp"

namespace s2r::data {

namespace {

constexpr std::uint64_t kFrameStream = 0x4652414dULL;  // "FRAM"

double snap(double v) { return round_to_float(v); }

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frames/%06zu.s2rd", i);
  return buf;
}

}  // namespace

std::vector<char> encode_frame(const FrameRecord& frame) {
  const auto& sc = frame.scenario;
  if (frame.points.size() != sc.agents.size() || frame.poses.size() != sc.agents.size()) {
    throw InvalidInput("frame record: per-agent arrays do not match agent count");
  }
  io::ByteWriter w;
  w.header(io::RecordKind::kFrame);
  w.u64(sc.seed);
  w.f32(static_cast<float>(frame.time));
  w.f32(static_cast<float>(sc.duration));
  w.u32(static_cast<std::uint32_t>(sc.agents.size()));
  for (int a : sc.agents) w.u32(static_cast<std::uint32_t>(a));
  std::vector<float> buf;
  for (const auto& cloud : frame.points) {
    buf.clear();
    for (const auto& p : cloud) {
      buf.insert(buf.end(), {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                             static_cast<float>(p.intensity)});
    }
    w.f32_array(buf);
  }
  buf.clear();
  for (const auto& p : frame.poses) {
    buf.insert(buf.end(), {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.yaw),
                           static_cast<float>(p.t)});
  }
  w.f32_array(buf);
  buf.clear();
  for (const auto& v : sc.vehicles) {
    buf.insert(buf.end(), {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z),
                           static_cast<float>(v.l), static_cast<float>(v.w), static_cast<float>(v.h),
                           static_cast<float>(v.yaw), static_cast<float>(v.vx), static_cast<float>(v.vy)});
  }
  w.f32_array(buf);
  return w.buffer();
}

FrameRecord decode_frame(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  r.expect_header(io::RecordKind::kFrame);
  FrameRecord f;
  f.scenario.seed = r.u64();
  f.time = r.f32();
  f.scenario.duration = r.f32();
  const std::uint64_t at_agents = r.offset();
  const std::uint32_t n_agents = r.u32();
  if (n_agents < 1 || n_agents > 5) {
    throw FormatError("agent count " + std::to_string(n_agents) + " outside [1, 5]", at_agents);
  }
  for (std::uint32_t i = 0; i < n_agents; ++i) f.scenario.agents.push_back(static_cast<int>(r.u32()));
  for (std::uint32_t i = 0; i < n_agents; ++i) {
    const std::uint64_t at = r.offset();
    auto v = r.f32_array();
    if (v.size() % 4) throw FormatError("point array length not a multiple of 4", at);
    geom::PointCloud cloud(v.size() / 4);
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      cloud[k] = {v[4 * k], v[4 * k + 1], v[4 * k + 2], v[4 * k + 3]};
    }
    f.points.push_back(std::move(cloud));
  }
  {
    const std::uint64_t at = r.offset();
    auto v = r.f32_array();
    if (v.size() != 4u * n_agents) throw FormatError("pose array does not match agent count", at);
    for (std::uint32_t k = 0; k < n_agents; ++k) {
      f.poses.push_back({v[4 * k], v[4 * k + 1], v[4 * k + 2], v[4 * k + 3]});
    }
  }
  {
    const std::uint64_t at = r.offset();
    auto v = r.f32_array();
    if (v.size() % 9) throw FormatError("vehicle array length not a multiple of 9", at);
    for (std::size_t k = 0; k < v.size() / 9; ++k) {
      const float* p = v.data() + 9 * k;
      f.scenario.vehicles.push_back({p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]});
    }
    for (int a : f.scenario.agents) {
      if (a < 0 || static_cast<std::size_t>(a) >= f.scenario.vehicles.size()) {
        throw FormatError("agent references missing vehicle " + std::to_string(a), at);
      }
    }
  }
  r.expect_end();
  return f;
}

FrameRecord make_frame(const scene::SceneConfig& scene_cfg, const scene::DomainProfile& profile,
                       const scene::RenderOptions& render, std::uint64_t seed) {
  FrameRecord f;
  f.scenario = scene::generate_scenario(scene_cfg, seed);
  f.scenario.duration = snap(f.scenario.duration);
  f.time = snap(scene_cfg.frame_time);
  for (std::size_t slot = 0; slot < f.scenario.agents.size(); ++slot) {
    scene::AgentFrame af = scene::stale_frame(f.scenario, slot, f.time, 0.0, profile, render);
    geom::Pose p = af.pose;
    f.poses.push_back({snap(p.x), snap(p.y), snap(p.yaw), snap(p.t)});
    for (auto& pt : af.points) pt = {snap(pt.x), snap(pt.y), snap(pt.z), snap(pt.intensity)};
    f.points.push_back(std::move(af.points));
  }
  return f;
}

std::uint64_t frame_seed(std::uint64_t master, std::size_t index) {
  return derive_seed(master, kFrameStream, index);
}

Dataset generate_dataset(const GenerateOptions& options) {
  options.scene.validate();
  options.profile.validate();
  if (options.frames < 0) throw ConfigError("frame count must be >= 0");
  Dataset ds;
  ds.split = options.split;
  ds.seed = options.seed;
  ds.scene = options.scene;
  ds.profile = options.profile;
  ds.render = options.render;
  ds.frames.resize(static_cast<std::size_t>(options.frames));

  const int threads = std::max(1, std::min(options.threads, options.frames));
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&](int tid) {
    for (std::size_t i = static_cast<std::size_t>(tid); i < ds.frames.size();
         i += static_cast<std::size_t>(threads)) {
      try {
        ds.frames[i] = make_frame(options.scene, options.profile, options.render,
                                  frame_seed(options.seed, i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "frames", ec);
  if (ec) throw Error("io", "cannot create dataset directory " + dir.string() + ": " + ec.message());
  KeyValues m;
  m.set("format", std::string("S2RD"));
  m.set("version", static_cast<std::int64_t>(io::kFormatVersion));
  m.set("split", ds.split);
  m.set("seed", ds.seed);
  m.merge(profile_to_kv(ds.profile), "profile.");
  m.merge(scene_to_kv(ds.scene), "scene.");
  m.merge(render_to_kv(ds.render), "render.");
  m.set("frames", static_cast<std::int64_t>(ds.frames.size()));
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const std::string name = frame_name(i);
    io::write_file(dir / name, encode_frame(ds.frames[i]));
    char key[32];
    std::snprintf(key, sizeof(key), "frame.%06zu", i);
    m.set(key, name);
  }
  m.save(dir / "manifest.txt");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!std::filesystem::exists(manifest_path)) {
    throw Error("io", "no manifest.txt in dataset directory " + dir.string());
  }
  KeyValues m = KeyValues::load(manifest_path);
  if (m.get_string("format", "") != "S2RD") throw ConfigError("manifest: format must be S2RD");
  if (m.get_int("version", 0) != io::kFormatVersion) throw ConfigError("manifest: unsupported version");
  Dataset ds;
  ds.split = m.get_string("split", kSplitSource);
  ds.seed = m.get_u64("seed", 0);
  ds.profile = profile_from_kv(m.with_prefix("profile."), scene::DomainProfile::sim());
  ds.scene = scene_from_kv(m.with_prefix("scene."));
  ds.render = render_from_kv(m.with_prefix("render."));
  const std::int64_t n = m.get_int("frames", -1);
  if (n < 0) throw ConfigError("manifest: missing frame count");
  for (std::int64_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof(key), "frame.%06lld", static_cast<long long>(i));
    auto rel = m.get(key);
    if (!rel) throw ConfigError(std::string("manifest: missing ") + key);
    const auto bytes = io::read_file(dir / *rel);
    try {
      ds.frames.push_back(decode_frame(bytes));
    } catch (const FormatError& e) {
      throw FormatError(*rel + ": " + e.detail(), e.offset());
    }
  }
  return ds;
}

KeyValues scene_to_kv(const scene::SceneConfig& c) {
  KeyValues kv;
  kv.set("vehicles", c.vehicles);
  kv.set("agents", c.agents);
  kv.set("duration", c.duration);
  kv.set("frame_time", c.frame_time);
  kv.set("spawn_x", c.spawn_x);
  kv.set("lanes_per_direction", c.lanes_per_direction);
  kv.set("lane_width", c.lane_width);
  kv.set("speed_min", c.speed_min);
  kv.set("speed_max", c.speed_max);
  kv.set("parked_fraction", c.parked_fraction);
  kv.set("agent_radius", c.agent_radius);
  kv.set("max_retries", c.max_retries);
  return kv;
}

scene::SceneConfig scene_from_kv(const KeyValues& kv) {
  kv.require_known({"vehicles", "agents", "duration", "frame_time", "spawn_x", "lanes_per_direction",
                    "lane_width", "speed_min", "speed_max", "parked_fraction", "agent_radius",
                    "max_retries"});
  scene::SceneConfig c;
  c.vehicles = static_cast<int>(kv.get_int("vehicles", c.vehicles));
  c.agents = static_cast<int>(kv.get_int("agents", c.agents));
  c.duration = kv.get_double("duration", c.duration);
  c.frame_time = kv.get_double("frame_time", c.frame_time);
  c.spawn_x = kv.get_double("spawn_x", c.spawn_x);
  c.lanes_per_direction = static_cast<int>(kv.get_int("lanes_per_direction", c.lanes_per_direction));
  c.lane_width = kv.get_double("lane_width", c.lane_width);
  c.speed_min = kv.get_double("speed_min", c.speed_min);
  c.speed_max = kv.get_double("speed_max", c.speed_max);
  c.parked_fraction = kv.get_double("parked_fraction", c.parked_fraction);
  c.agent_radius = kv.get_double("agent_radius", c.agent_radius);
  c.max_retries = static_cast<int>(kv.get_int("max_retries", c.max_retries));
  c.validate();
  return c;
}

KeyValues profile_to_kv(const scene::DomainProfile& p) {
  KeyValues kv;
  kv.set("name", p.name);
  kv.set("beams", p.beams);
  kv.set("points_per_beam", p.points_per_beam);
  kv.set("dropout", p.dropout);
  kv.set("range_noise", p.range_noise);
  kv.set("clutter_rate", p.clutter_rate);
  return kv;
}

scene::DomainProfile profile_from_kv(const KeyValues& kv, const scene::DomainProfile& base) {
  kv.require_known({"name", "beams", "points_per_beam", "dropout", "range_noise", "clutter_rate"});
  scene::DomainProfile p = base;
  p.name = kv.get_string("name", p.name);
  p.beams = static_cast<int>(kv.get_int("beams", p.beams));
  p.points_per_beam = static_cast<int>(kv.get_int("points_per_beam", p.points_per_beam));
  p.dropout = kv.get_double("dropout", p.dropout);
  p.range_noise = kv.get_double("range_noise", p.range_noise);
  p.clutter_rate = kv.get_double("clutter_rate", p.clutter_rate);
  p.validate();
  return p;
}

KeyValues render_to_kv(const scene::RenderOptions& r) {
  KeyValues kv;
  kv.set("mode", std::string(r.mode == scene::RenderMode::kSurface ? "surface" : "ray"));
  kv.set("max_range", r.max_range);
  kv.set("fov_up_deg", r.fov_up_deg);
  kv.set("fov_down_deg", r.fov_down_deg);
  kv.set("sensor_height", r.sensor_height);
  kv.set("clutter_extent", r.clutter_extent);
  return kv;
}

scene::RenderOptions render_from_kv(const KeyValues& kv) {
  kv.require_known({"mode", "max_range", "fov_up_deg", "fov_down_deg", "sensor_height", "clutter_extent"});
  scene::RenderOptions r;
  const std::string mode = kv.get_string("mode", "surface");
  if (mode == "surface") {
    r.mode = scene::RenderMode::kSurface;
  } else if (mode == "ray") {
    r.mode = scene::RenderMode::kRay;
  } else {
    throw ConfigError("render.mode must be surface or ray, got '" + mode + "'");
  }
  r.max_range = kv.get_double("max_range", r.max_range);
  r.fov_up_deg = kv.get_double("fov_up_deg", r.fov_up_deg);
  r.fov_down_deg = kv.get_double("fov_down_deg", r.fov_down_deg);
  r.sensor_height = kv.get_double("sensor_height", r.sensor_height);
  r.clutter_extent = kv.get_double("clutter_extent", r.clutter_extent);
  if (!(r.fov_up_deg > r.fov_down_deg) || !(r.max_range > 0)) throw ConfigError("render: bad sensor model");
  return r;
}

}  // namespace s2r::data
