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

#ifndef S2R_NN_HPP_
#define S2R_NN_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "s2r/autograd.hpp"

namespace s2r::nn {

using Rng = std::mt19937_64;

/// Ordered collection of named trainable tensors. Insertion order is the
/// serialization order of checkpoints and the update order of optimizers.
template <typename T>
class ParameterStore {
 public:
  ag::Var<T> add(const std::string& name, Tensor<T> init);
  const ag::Var<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, ag::Var<T>>>& entries() const { return entries_; }
  void zero_grad();
  std::int64_t parameter_count() const;

 private:
  std::vector<std::pair<std::string, ag::Var<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for dense layers.
template <typename T>
Tensor<T> uniform_init(Shape shape, std::int64_t fan_in, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::int64_t in, std::int64_t out,
         Rng& rng, bool bias = true);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  /// Uses only the leading in_used x out_used block of the weight (and the
  /// leading out_used biases). Lets one parameter set serve stacks of
  /// varying agent count.
  ag::Var<T> block(const ag::Var<T>& x, std::int64_t in_used, std::int64_t out_used) const;

  const ag::Var<T>& weight() const { return w_; }
  const ag::Var<T>& bias() const { return b_; }
  std::int64_t in_features() const { return w_.dim(0); }
  std::int64_t out_features() const { return w_.dim(1); }

 private:
  ag::Var<T> w_, b_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, std::int64_t in, std::int64_t out,
         int kernel, int stride, Rng& rng);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  /// Input channels sliced to x's channel count; output sliced to out_used.
  ag::Var<T> block(const ag::Var<T>& x, std::int64_t out_used) const;

  const ag::Var<T>& weight() const { return w_; }
  const ag::Var<T>& bias() const { return b_; }

 private:
  ag::Var<T> w_, b_;
  int stride_ = 1;
  int pad_ = 0;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::int64_t dim);
  /// Normalizes over x's last axis using the leading affine entries.
  ag::Var<T> operator()(const ag::Var<T>& x) const;

 private:
  ag::Var<T> gamma_, beta_;
};

/// Zeroes the tensor held by a parameter.
template <typename T>
void zero_fill(const ag::Var<T>& p);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const ParameterStore<T>& store, AdamOptions opts = {});
  /// One update from the gradients currently accumulated in the store.
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  const ParameterStore<T>* store_;
  AdamOptions opts_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace s2r::nn

#endif  // S2R_NN_HPP_
