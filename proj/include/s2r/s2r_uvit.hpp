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

// Fusion transformer over stacked agent features.
//
//   lg_msa : channel groups attend inside windows of different sizes, then a
//            full self-attention over all cells mixes the result
//   uam    : an encoder-decoder predicts per-element uncertainty of the
//            non-ego blocks; the high half is reset to 1 and the rest gates
//            the ego block multiplicatively
//   block  : x + uam(lg_msa(LN x)), then + MLP(LN .)
//
// Every module is sized for `max_agents` agents and evaluated on the
// leading k*C channels of its parameters, so one parameter set serves any
// agent count up to the maximum. There are no positional encodings.

#ifndef S2R_S2R_UVIT_HPP_
#define S2R_S2R_UVIT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "s2r/autograd.hpp"
#include "s2r/nn.hpp"

namespace s2r::uvit {

struct AttentionSpec {
  int heads = 8;        // h
  int groups = 2;       // n, one window size per group
  int win_local = 4;
  int win_global = 8;
  int blocks = 2;

  /// Checks the spec itself and, if `channels` > 0, that it divides into heads.
  void validate(std::int64_t channels = 0) const;
  int window(int group) const { return group == 0 ? win_local : win_global; }
  bool operator==(const AttentionSpec&) const = default;
};

/// [H, W, D] -> [n_windows, ws, ws, D], zero-padding H and W up to multiples
/// of ws. Windows are ordered row-major over the padded grid.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& grid, int ws);

/// Inverse of window_partition; strips the padding.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::int64_t h, std::int64_t w, int ws);

/// Flat token indices (i * w + j) of each window. Padding cells are left out
/// so they never take part in attention.
ag::TokenGroups window_groups(std::int64_t h, std::int64_t w, int ws);

template <typename T>
struct AttentionProjections {
  nn::Linear<T> q, k, v, out;
};

template <typename T>
class LgMsa {
 public:
  LgMsa() = default;
  LgMsa(nn::ParameterStore<T>& store, const std::string& name, const AttentionSpec& spec,
        std::int64_t max_channels, nn::Rng& rng);

  /// x: [H, W, D] with D <= max_channels. Softmax rows go to `trace` if given.
  ag::Var<T> operator()(const ag::Var<T>& x, ag::AttentionTrace<T>* trace = nullptr) const;
  /// Zeroes the final output projection, making the module output zero.
  void zero_output() const;

 private:
  AttentionSpec spec_;
  std::int64_t max_channels_ = 0;
  std::vector<AttentionProjections<T>> branches_;
  AttentionProjections<T> global_;
};

/// Uncertainty prediction network: two stride-2 conv stages, two upsampling
/// conv stages with additive skips, cropped back to the input size, sigmoid.
template <typename T>
class Upn {
 public:
  Upn() = default;
  Upn(nn::ParameterStore<T>& store, const std::string& name, std::int64_t max_in,
      std::int64_t hidden, nn::Rng& rng);

  /// [H, W, c] -> [H, W, c] in (0, 1); c <= max_in.
  ag::Var<T> operator()(const ag::Var<T>& x) const;

 private:
  nn::Conv2d<T> enc1_, enc2_, dec1_, dec2_;
};

template <typename T>
struct UamOutput {
  ag::Var<T> features;  // same shape as the input
  ag::Var<T> uncertainty;  // M, undefined when k = 1
  ag::Var<T> gate;         // M_t, undefined when k = 1
};

template <typename T>
class Uam {
 public:
  Uam() = default;
  Uam(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels, int max_agents,
      nn::Rng& rng);

  /// x: [H, W, k*C]. For k = 1 returns x unchanged.
  UamOutput<T> operator()(const ag::Var<T>& x, int agents) const;

  /// Gating with a given M_t: the ego block times the product of the
  /// per-agent C-channel blocks of `gate`, followed by the untouched others.
  static ag::Var<T> apply_gate(const ag::Var<T>& x, const ag::Var<T>& gate, int agents);

 private:
  std::int64_t channels_ = 0;
  Upn<T> upn_;
};

template <typename T>
class S2RBlock {
 public:
  S2RBlock() = default;
  S2RBlock(nn::ParameterStore<T>& store, const std::string& name, const AttentionSpec& spec,
           std::int64_t channels, int max_agents, bool use_uam, nn::Rng& rng);

  ag::Var<T> operator()(const ag::Var<T>& x, int agents,
                        ag::AttentionTrace<T>* trace = nullptr) const;
  /// Zeroes the attention output projection and the last MLP layer.
  void zero_residual_branches() const;

 private:
  bool use_uam_ = true;
  nn::LayerNorm<T> norm1_, norm2_;
  LgMsa<T> attn_;
  Uam<T> uam_;
  nn::Linear<T> mlp1_, mlp2_;
};

/// kC -> C per-cell projection of the stacked map onto the ego feature.
template <typename T>
class Fuse {
 public:
  Fuse() = default;
  Fuse(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels, int max_agents,
       bool identity_init, nn::Rng& rng);

  ag::Var<T> operator()(const ag::Var<T>& x) const;

 private:
  std::int64_t channels_ = 0;
  nn::Linear<T> proj_;
};

}  // namespace s2r::uvit

#endif  // S2R_S2R_UVIT_HPP_
