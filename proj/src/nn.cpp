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

#include "s2r/nn.hpp"

#include <cmath>

namespace s2r::nn {

template <typename T>
ag::Var<T> ParameterStore<T>::add(const std::string& name, Tensor<T> init) {
  if (contains(name)) throw InvalidInput("duplicate parameter name: " + name);
  ag::Var<T> v = ag::leaf(std::move(init));
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

template <typename T>
const ag::Var<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + name);
  return entries_[it->second].second;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

template <typename T>
std::int64_t ParameterStore<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v.numel();
  return n;
}

template <typename T>
Tensor<T> uniform_init(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::int64_t in,
                  std::int64_t out, Rng& rng, bool bias) {
  w_ = store.add(name + ".weight", uniform_init<T>({in, out}, in, rng));
  if (bias) b_ = store.add(name + ".bias", uniform_init<T>({out}, in, rng));
}

template <typename T>
ag::Var<T> Linear<T>::operator()(const ag::Var<T>& x) const {
  return ag::linear(x, w_, b_);
}

template <typename T>
ag::Var<T> Linear<T>::block(const ag::Var<T>& x, std::int64_t in_used,
                            std::int64_t out_used) const {
  ag::Var<T> w = ag::leading_block(w_, {in_used, out_used});
  ag::Var<T> b = b_.defined() ? ag::leading_block(b_, {out_used}) : ag::Var<T>();
  return ag::linear(x, w, b);
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, std::int64_t in,
                  std::int64_t out, int kernel, int stride, Rng& rng)
    : stride_(stride), pad_(kernel / 2) {
  const std::int64_t fan_in = in * kernel * kernel;
  w_ = store.add(name + ".weight", uniform_init<T>({kernel, kernel, in, out}, fan_in, rng));
  b_ = store.add(name + ".bias", uniform_init<T>({out}, fan_in, rng));
}

template <typename T>
ag::Var<T> Conv2d<T>::operator()(const ag::Var<T>& x) const {
  return ag::conv2d(x, w_, b_, stride_, pad_);
}

template <typename T>
ag::Var<T> Conv2d<T>::block(const ag::Var<T>& x, std::int64_t out_used) const {
  const std::int64_t k = w_.dim(0);
  ag::Var<T> w = ag::leading_block(w_, {k, k, x.dim(2), out_used});
  ag::Var<T> b = ag::leading_block(b_, {out_used});
  return ag::conv2d(x, w, b, stride_, pad_);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::int64_t dim) {
  gamma_ = store.add(name + ".gamma", Tensor<T>({dim}, T(1)));
  beta_ = store.add(name + ".beta", Tensor<T>({dim}, T(0)));
}

template <typename T>
ag::Var<T> LayerNorm<T>::operator()(const ag::Var<T>& x) const {
  const std::int64_t d = x.shape().back();
  return ag::layer_norm(x, ag::leading_block(gamma_, {d}), ag::leading_block(beta_, {d}));
}

template <typename T>
void zero_fill(const ag::Var<T>& p) {
  ag::Var<T> v = p;
  v.mutable_value().fill(T(0));
}

template <typename T>
Adam<T>::Adam(const ParameterStore<T>& store, AdamOptions opts) : store_(&store), opts_(opts) {
  for (const auto& [name, v] : store.entries()) {
    m_.emplace_back(static_cast<std::size_t>(v.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(v.numel()), T(0));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(opts_.eps);
  std::size_t i = 0;
  for (const auto& [name, var] : store_->entries()) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    if (var.grad().empty()) continue;
    ag::Var<T> p = var;
    T* w = p.mutable_value().data();
    const T* g = var.grad().data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

#define S2R_INSTANTIATE_NN(T)                                                 \
  template class ParameterStore<T>;                                           \
  template Tensor<T> uniform_init<T>(Shape, std::int64_t, Rng&);              \
  template class Linear<T>;                                                   \
  template class Conv2d<T>;                                                   \
  template class LayerNorm<T>;                                                \
  template void zero_fill<T>(const ag::Var<T>&);                              \
  template class Adam<T>;

S2R_INSTANTIATE_NN(float)
S2R_INSTANTIATE_NN(double)

}  // namespace s2r::nn
