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

#include "s2r/model.hpp"

#include "s2r/binary_io.hpp"
#include "s2r/error.hpp"

namespace s2r::model {

KeyValues grid_to_kv(const pillars::BEVGridSpec& g) {
  KeyValues kv;
  kv.set("x_min", g.range.x_min);
  kv.set("x_max", g.range.x_max);
  kv.set("y_min", g.range.y_min);
  kv.set("y_max", g.range.y_max);
  kv.set("cell", g.cell);
  kv.set("channels", g.channels);
  kv.set("downsample", g.downsample);
  return kv;
}

pillars::BEVGridSpec grid_from_kv(const KeyValues& kv) {
  kv.require_known({"x_min", "x_max", "y_min", "y_max", "cell", "channels", "downsample"});
  pillars::BEVGridSpec g;
  g.range.x_min = kv.get_double("x_min", g.range.x_min);
  g.range.x_max = kv.get_double("x_max", g.range.x_max);
  g.range.y_min = kv.get_double("y_min", g.range.y_min);
  g.range.y_max = kv.get_double("y_max", g.range.y_max);
  g.cell = kv.get_double("cell", g.cell);
  g.channels = static_cast<int>(kv.get_int("channels", g.channels));
  g.downsample = static_cast<int>(kv.get_int("downsample", g.downsample));
  g.validate();
  return g;
}

void ModelConfig::validate() const {
  grid.validate();
  if (max_agents < 1 || max_agents > 5) throw ConfigError("model: max_agents must be in [1, 5]");
  attention.validate(static_cast<std::int64_t>(grid.channels));
  if (!(cls_prior > 0 && cls_prior < 1)) throw ConfigError("model: cls_prior must be in (0, 1)");
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.merge(grid_to_kv(grid), "grid.");
  kv.set("attention.heads", attention.heads);
  kv.set("attention.groups", attention.groups);
  kv.set("attention.win_local", attention.win_local);
  kv.set("attention.win_global", attention.win_global);
  kv.set("attention.blocks", attention.blocks);
  kv.set("model.max_agents", max_agents);
  kv.set("model.shared_encoder", shared_encoder);
  kv.set("model.use_uam", use_uam);
  kv.set("model.fuse_identity_init", fuse_identity_init);
  kv.set("model.cls_prior", cls_prior);
  kv.set("model.init_seed", init_seed);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.grid = grid_from_kv(kv.with_prefix("grid."));
  const KeyValues a = kv.with_prefix("attention.");
  a.require_known({"heads", "groups", "win_local", "win_global", "blocks"});
  c.attention.heads = static_cast<int>(a.get_int("heads", c.attention.heads));
  c.attention.groups = static_cast<int>(a.get_int("groups", c.attention.groups));
  c.attention.win_local = static_cast<int>(a.get_int("win_local", c.attention.win_local));
  c.attention.win_global = static_cast<int>(a.get_int("win_global", c.attention.win_global));
  c.attention.blocks = static_cast<int>(a.get_int("blocks", c.attention.blocks));
  const KeyValues m = kv.with_prefix("model.");
  m.require_known({"max_agents", "shared_encoder", "use_uam", "fuse_identity_init", "cls_prior", "init_seed"});
  c.max_agents = static_cast<int>(m.get_int("max_agents", c.max_agents));
  c.shared_encoder = m.get_bool("shared_encoder", c.shared_encoder);
  c.use_uam = m.get_bool("use_uam", c.use_uam);
  c.fuse_identity_init = m.get_bool("fuse_identity_init", c.fuse_identity_init);
  c.cls_prior = m.get_double("cls_prior", c.cls_prior);
  c.init_seed = m.get_u64("init_seed", c.init_seed);
  c.validate();
  return c;
}

template <typename T>
CooperativeDetector<T>::CooperativeDetector(const ModelConfig& config) : config_(config) {
  config.validate();
  nn::Rng rng(config.init_seed);
  const std::int64_t c = config.grid.channels;
  const int n_enc = config.shared_encoder ? 1 : config.max_agents;
  for (int e = 0; e < n_enc; ++e) {
    encoders_.emplace_back(store_, "encoder" + std::to_string(e), config.grid, rng);
  }
  for (int b = 0; b < config.attention.blocks; ++b) {
    blocks_.emplace_back(store_, "block" + std::to_string(b), config.attention, c, config.max_agents,
                         config.use_uam, rng);
  }
  fuse_ = uvit::Fuse<T>(store_, "fuse", c, config.max_agents, config.fuse_identity_init, rng);
  head_ = det::DetectionHead<T>(store_, "head", c, config.cls_prior, rng);
  inter_disc_ = afa::Discriminator<T>(store_, "disc_inter", c, rng);
  ego_disc_ = afa::Discriminator<T>(store_, "disc_ego", c, rng);
}

template <typename T>
ForwardResult<T> CooperativeDetector<T>::forward(const std::vector<pillars::PillarStats>& agents,
                                                 ag::AttentionTrace<T>* trace) const {
  if (agents.empty() || static_cast<int>(agents.size()) > config_.max_agents) {
    throw InvalidInput("model: agent count " + std::to_string(agents.size()) + " outside [1, " +
                       std::to_string(config_.max_agents) + "]");
  }
  ForwardResult<T> r;
  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto& enc = encoders_[config_.shared_encoder ? 0 : a];
    r.agent_maps.push_back(enc(agents[a]));
  }
  r.stacked = pillars::stack_agents(r.agent_maps);
  ag::Var<T> x = r.stacked.values;
  for (const auto& b : blocks_) x = b(x, r.stacked.agents, trace);
  r.fused = fuse_(x);
  r.head = head_(r.fused);
  return r;
}

template <typename T>
void CooperativeDetector<T>::zero_residual_branches() const {
  for (const auto& b : blocks_) b.zero_residual_branches();
}

template class CooperativeDetector<float>;
template class CooperativeDetector<double>;

std::vector<char> encode_checkpoint(const CooperativeDetector<float>& model) {
  io::ByteWriter w;
  w.header(io::RecordKind::kCheckpoint);
  w.str(model.config().to_kv().to_string());
  const auto& entries = model.parameters().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, var] : entries) {
    w.str(name);
    const Shape& s = var.shape();
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
    w.f32_array(var.value().values());
  }
  return w.buffer();
}

std::unique_ptr<CooperativeDetector<float>> decode_checkpoint(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  r.expect_header(io::RecordKind::kCheckpoint);
  const std::uint64_t cfg_at = r.offset();
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_kv(KeyValues::parse(r.str()));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded model config: ") + e.what(), cfg_at);
  }
  auto model = std::make_unique<CooperativeDetector<float>>(cfg);
  const auto& entries = model->parameters().entries();
  const std::uint64_t count_at = r.offset();
  const std::uint32_t n = r.u32();
  if (n != entries.size()) {
    throw FormatError("parameter count " + std::to_string(n) + " does not match the model (" +
                          std::to_string(entries.size()) + ")",
                      count_at);
  }
  for (const auto& [name, var] : entries) {
    const std::uint64_t at = r.offset();
    const std::string got = r.str();
    if (got != name) throw FormatError("expected parameter '" + name + "', found '" + got + "'", at);
    const std::uint64_t shape_at = r.offset();
    const std::uint32_t rank = r.u32();
    Shape s;
    for (std::uint32_t i = 0; i < rank && i < 8; ++i) s.push_back(r.u32());
    if (s != var.shape()) throw FormatError("shape mismatch for parameter '" + name + "'", shape_at);
    auto values = r.f32_array();
    if (static_cast<std::int64_t>(values.size()) != var.numel()) {
      throw FormatError("value count mismatch for parameter '" + name + "'", shape_at);
    }
    var.node()->value = Tensor<float>(var.shape(), std::move(values));
  }
  r.expect_end();
  return model;
}

void save_checkpoint(const CooperativeDetector<float>& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

std::unique_ptr<CooperativeDetector<float>> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace s2r::model
