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

#include "s2r/afa.hpp"

#include <algorithm>

#include "s2r/error.hpp"

namespace s2r::afa {

double grl_lambda(std::int64_t step, std::int64_t total_steps, double lambda_max, double ramp_fraction) {
  if (lambda_max < 0 || ramp_fraction < 0) throw ConfigError("grl: lambda and ramp must be >= 0");
  const double ramp = ramp_fraction * static_cast<double>(total_steps);
  if (ramp <= 0) return lambda_max;
  return lambda_max * std::clamp(static_cast<double>(step) / ramp, 0.0, 1.0);
}

template <typename T>
Discriminator<T>::Discriminator(nn::ParameterStore<T>& store, const std::string& name,
                                std::int64_t channels, nn::Rng& rng) {
  for (int i = 0; i < 3; ++i) {
    convs_.emplace_back(store, name + ".conv" + std::to_string(i), channels, channels, 3, 2, rng);
  }
  out_ = nn::Linear<T>(store, name + ".out", channels, 1, rng);
  nn::zero_fill(out_.weight());
  nn::zero_fill(out_.bias());
}

template <typename T>
ag::Var<T> Discriminator<T>::operator()(const ag::Var<T>& features) const {
  ag::Var<T> x = features;
  for (const auto& c : convs_) x = ag::relu(c(x));
  ag::Var<T> pooled = ag::reshape(ag::global_avg_pool(x), {1, x.dim(2)});
  return ag::reshape(out_(pooled), {1});
}

template <typename T>
ag::Var<T> domain_bce(const std::vector<ag::Var<T>>& logits, const std::vector<Domain>& labels) {
  if (logits.empty()) throw InvalidInput("afa_loss: no logits");
  if (logits.size() != labels.size()) throw InvalidInput("afa_loss: logits and labels differ in length");
  std::vector<T> y;
  for (Domain d : labels) y.push_back(static_cast<T>(label_value(d)));
  return ag::bce_with_logits(ag::concat_last(logits), y);
}

template <typename T>
ag::Var<T> afa_loss(const std::vector<ag::Var<T>>& inter_logits, const std::vector<Domain>& inter_labels,
                    const std::vector<ag::Var<T>>& ego_logits, const std::vector<Domain>& ego_labels) {
  if (inter_logits.empty() && ego_logits.empty()) throw InvalidInput("afa_loss: no logits");
  if (inter_logits.empty()) return domain_bce(ego_logits, ego_labels);
  if (ego_logits.empty()) return domain_bce(inter_logits, inter_labels);
  return ag::add(domain_bce(inter_logits, inter_labels), domain_bce(ego_logits, ego_labels));
}

#define S2R_INSTANTIATE_AFA(T)                                                                    \
  template class Discriminator<T>;                                                                \
  template ag::Var<T> domain_bce(const std::vector<ag::Var<T>>&, const std::vector<Domain>&);     \
  template ag::Var<T> afa_loss(const std::vector<ag::Var<T>>&, const std::vector<Domain>&,        \
                               const std::vector<ag::Var<T>>&, const std::vector<Domain>&);

S2R_INSTANTIATE_AFA(float)
S2R_INSTANTIATE_AFA(double)

}  // namespace s2r::afa
