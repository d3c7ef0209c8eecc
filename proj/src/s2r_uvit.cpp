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

#include "s2r/s2r_uvit.hpp"

#include "s2r/error.hpp"

namespace s2r::uvit {

namespace {

std::int64_t ceil_to(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

template <typename T>
AttentionProjections<T> make_projections(nn::ParameterStore<T>& store, const std::string& name,
                                         std::int64_t dim, nn::Rng& rng) {
  return {nn::Linear<T>(store, name + ".q", dim, dim, rng), nn::Linear<T>(store, name + ".k", dim, dim, rng),
          nn::Linear<T>(store, name + ".v", dim, dim, rng),
          nn::Linear<T>(store, name + ".out", dim, dim, rng)};
}

template <typename T>
ag::Var<T> attend(const AttentionProjections<T>& p, const ag::Var<T>& tokens, std::int64_t d,
                  const ag::TokenGroups& groups, int heads, ag::AttentionTrace<T>* trace) {
  ag::Var<T> q = p.q.block(tokens, d, d);
  ag::Var<T> k = p.k.block(tokens, d, d);
  ag::Var<T> v = p.v.block(tokens, d, d);
  return p.out.block(ag::grouped_attention(q, k, v, groups, heads, trace), d, d);
}

}  // namespace

void AttentionSpec::validate(std::int64_t channels) const {
  if (heads < 1 || blocks < 0) throw ConfigError("attention: heads must be >= 1 and blocks >= 0");
  if (groups != 2) throw ConfigError("attention: exactly two window groups (local, global) are supported");
  if (heads % groups) throw ConfigError("attention: heads must be divisible by window groups");
  if (win_local < 1 || !(win_local < win_global)) {
    throw ConfigError("attention: need 1 <= local window < global window");
  }
  if (channels > 0 && channels % heads) {
    throw ConfigError("attention: " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& grid, int ws) {
  if (ws < 1) throw InvalidInput("window_partition: window size must be >= 1");
  if (grid.rank() != 3) throw InvalidInput("window_partition: grid must be [H, W, D]");
  const std::int64_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  const std::int64_t hp = ceil_to(h, ws), wp = ceil_to(w, ws);
  const std::int64_t nwy = wp / ws;
  Tensor<T> out(Shape{(hp / ws) * nwy, ws, ws, d});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const std::int64_t win = (i / ws) * nwy + j / ws;
      const std::int64_t off = ((win * ws + i % ws) * ws + j % ws) * d;
      std::copy_n(grid.data() + (i * w + j) * d, d, out.data() + off);
    }
  }
  return out;
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::int64_t h, std::int64_t w, int ws) {
  if (ws < 1 || windows.rank() != 4 || windows.dim(1) != ws || windows.dim(2) != ws) {
    throw InvalidInput("window_merge: windows must be [n, ws, ws, D]");
  }
  const std::int64_t d = windows.dim(3);
  const std::int64_t nwy = ceil_to(w, ws) / ws;
  if (windows.dim(0) != (ceil_to(h, ws) / ws) * nwy) {
    throw InvalidInput("window_merge: window count does not match the grid");
  }
  Tensor<T> out(Shape{h, w, d});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const std::int64_t win = (i / ws) * nwy + j / ws;
      const std::int64_t off = ((win * ws + i % ws) * ws + j % ws) * d;
      std::copy_n(windows.data() + off, d, out.data() + (i * w + j) * d);
    }
  }
  return out;
}

ag::TokenGroups window_groups(std::int64_t h, std::int64_t w, int ws) {
  if (ws < 1) throw InvalidInput("window_groups: window size must be >= 1");
  ag::TokenGroups groups;
  for (std::int64_t wi = 0; wi < h; wi += ws) {
    for (std::int64_t wj = 0; wj < w; wj += ws) {
      std::vector<std::int64_t> g;
      for (std::int64_t i = wi; i < std::min(h, wi + ws); ++i) {
        for (std::int64_t j = wj; j < std::min(w, wj + ws); ++j) g.push_back(i * w + j);
      }
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

// ---------------------------------------------------------------------------

template <typename T>
LgMsa<T>::LgMsa(nn::ParameterStore<T>& store, const std::string& name, const AttentionSpec& spec,
                std::int64_t max_channels, nn::Rng& rng)
    : spec_(spec), max_channels_(max_channels) {
  spec.validate(max_channels);
  for (int g = 0; g < spec.groups; ++g) {
    branches_.push_back(
        make_projections(store, name + ".branch" + std::to_string(g), max_channels / spec.groups, rng));
  }
  global_ = make_projections(store, name + ".global", max_channels, rng);
}

template <typename T>
ag::Var<T> LgMsa<T>::operator()(const ag::Var<T>& x, ag::AttentionTrace<T>* trace) const {
  if (x.value().rank() != 3 || x.dim(2) > max_channels_) {
    throw InvalidInput("lg_msa: input " + shape_str(x.shape()) + " does not fit the module");
  }
  const std::int64_t h = x.dim(0), w = x.dim(1), d = x.dim(2);
  spec_.validate(d);
  const std::int64_t dg = d / spec_.groups;
  const int heads_per_group = spec_.heads / spec_.groups;
  ag::Var<T> tokens = ag::reshape(x, {h * w, d});
  std::vector<ag::Var<T>> parts;
  for (int g = 0; g < spec_.groups; ++g) {
    ag::Var<T> slice = ag::slice_last(tokens, g * dg, (g + 1) * dg);
    parts.push_back(attend(branches_[static_cast<std::size_t>(g)], slice, dg,
                           window_groups(h, w, spec_.window(g)), heads_per_group, trace));
  }
  ag::Var<T> mixed = ag::concat_last(parts);
  std::vector<std::int64_t> all(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h * w; ++i) all[static_cast<std::size_t>(i)] = i;
  ag::Var<T> out = attend(global_, mixed, d, ag::TokenGroups{all}, spec_.heads, trace);
  return ag::reshape(out, {h, w, d});
}

template <typename T>
void LgMsa<T>::zero_output() const {
  nn::zero_fill(global_.out.weight());
  nn::zero_fill(global_.out.bias());
}

// ---------------------------------------------------------------------------

template <typename T>
Upn<T>::Upn(nn::ParameterStore<T>& store, const std::string& name, std::int64_t max_in,
            std::int64_t hidden, nn::Rng& rng)
    : enc1_(store, name + ".enc1", max_in, hidden, 3, 2, rng),
      enc2_(store, name + ".enc2", hidden, hidden, 3, 2, rng),
      dec1_(store, name + ".dec1", hidden, hidden, 3, 1, rng),
      dec2_(store, name + ".dec2", hidden, max_in, 3, 1, rng) {}

template <typename T>
ag::Var<T> Upn<T>::operator()(const ag::Var<T>& x) const {
  if (x.value().rank() != 3) throw InvalidInput("upn: input must be [H, W, C]");
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  ag::Var<T> e1 = ag::relu(enc1_.block(x, enc2_.weight().dim(2)));
  ag::Var<T> e2 = ag::relu(enc2_(e1));
  ag::Var<T> d1 = dec1_(ag::upsample2x(e2));
  d1 = ag::relu(ag::add(ag::leading_block(d1, e1.shape()), e1));
  ag::Var<T> d2 = dec2_.block(ag::upsample2x(d1), c);
  d2 = ag::add(ag::leading_block(d2, {h, w, c}), x);
  return ag::sigmoid(d2);
}

// ---------------------------------------------------------------------------

template <typename T>
Uam<T>::Uam(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels, int max_agents,
            nn::Rng& rng)
    : channels_(channels) {
  if (max_agents >= 2) upn_ = Upn<T>(store, name + ".upn", (max_agents - 1) * channels, channels, rng);
}

template <typename T>
ag::Var<T> Uam<T>::apply_gate(const ag::Var<T>& x, const ag::Var<T>& gate, int agents) {
  const std::int64_t d = x.shape().back();
  const std::int64_t c = d / agents;
  if (agents < 2 || d != c * agents || gate.shape().back() != (agents - 1) * c) {
    throw InvalidInput("uam: gate does not match the stacked map");
  }
  ag::Var<T> g = ag::slice_last(gate, 0, c);
  for (int a = 1; a < agents - 1; ++a) g = ag::mul(g, ag::slice_last(gate, a * c, (a + 1) * c));
  ag::Var<T> ego = ag::mul(g, ag::slice_last(x, 0, c));
  return ag::concat_last(std::vector<ag::Var<T>>{ego, ag::slice_last(x, c, d)});
}

template <typename T>
UamOutput<T> Uam<T>::operator()(const ag::Var<T>& x, int agents) const {
  if (agents < 1 || x.shape().back() != agents * channels_) {
    throw InvalidInput("uam: expected " + std::to_string(agents) + " blocks of " +
                       std::to_string(channels_) + " channels");
  }
  if (agents == 1) return {x, {}, {}};
  ag::Var<T> others = ag::slice_last(x, channels_, agents * channels_);
  ag::Var<T> m = upn_(others);
  ag::Var<T> mt = ag::median_threshold(m);
  return {apply_gate(x, mt, agents), m, mt};
}

// ---------------------------------------------------------------------------

template <typename T>
S2RBlock<T>::S2RBlock(nn::ParameterStore<T>& store, const std::string& name, const AttentionSpec& spec,
                      std::int64_t channels, int max_agents, bool use_uam, nn::Rng& rng)
    : use_uam_(use_uam) {
  const std::int64_t dmax = channels * max_agents;
  norm1_ = nn::LayerNorm<T>(store, name + ".norm1", dmax);
  attn_ = LgMsa<T>(store, name + ".attn", spec, dmax, rng);
  if (use_uam) uam_ = Uam<T>(store, name + ".uam", channels, max_agents, rng);
  norm2_ = nn::LayerNorm<T>(store, name + ".norm2", dmax);
  mlp1_ = nn::Linear<T>(store, name + ".mlp1", dmax, 2 * dmax, rng);
  mlp2_ = nn::Linear<T>(store, name + ".mlp2", 2 * dmax, dmax, rng);
}

template <typename T>
ag::Var<T> S2RBlock<T>::operator()(const ag::Var<T>& x, int agents, ag::AttentionTrace<T>* trace) const {
  const std::int64_t d = x.shape().back();
  ag::Var<T> a = attn_(norm1_(x), trace);
  if (use_uam_) a = uam_(a, agents).features;
  ag::Var<T> hidden = ag::add(a, x);
  ag::Var<T> m = ag::gelu(mlp1_.block(norm2_(hidden), d, 2 * d));
  return ag::add(mlp2_.block(m, 2 * d, d), hidden);
}

template <typename T>
void S2RBlock<T>::zero_residual_branches() const {
  attn_.zero_output();
  nn::zero_fill(mlp2_.weight());
  nn::zero_fill(mlp2_.bias());
}

// ---------------------------------------------------------------------------

template <typename T>
Fuse<T>::Fuse(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels, int max_agents,
              bool identity_init, nn::Rng& rng)
    : channels_(channels), proj_(store, name, channels * max_agents, channels, rng) {
  if (identity_init) {
    nn::zero_fill(proj_.weight());
    nn::zero_fill(proj_.bias());
    auto& wv = proj_.weight().node()->value;
    for (std::int64_t c = 0; c < channels; ++c) wv.at(c, c) = T(1);
  }
}

template <typename T>
ag::Var<T> Fuse<T>::operator()(const ag::Var<T>& x) const {
  return proj_.block(x, x.shape().back(), channels_);
}

#define S2R_INSTANTIATE_UVIT(T)                                                               \
  template Tensor<T> window_partition(const Tensor<T>&, int);                                 \
  template Tensor<T> window_merge(const Tensor<T>&, std::int64_t, std::int64_t, int);         \
  template class LgMsa<T>;                                                                    \
  template class Upn<T>;                                                                      \
  template class Uam<T>;                                                                      \
  template class S2RBlock<T>;                                                                 \
  template class Fuse<T>;

S2R_INSTANTIATE_UVIT(float)
S2R_INSTANTIATE_UVIT(double)

}  // namespace s2r::uvit
