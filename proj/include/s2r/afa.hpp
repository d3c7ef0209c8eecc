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

// Adversarial sim -> real feature adaptation. Two discriminators tell the
// domains apart: one looks at every agent's pre-fusion map, the other at the
// fused ego map. Features reach them through a gradient reversal layer, so a
// single backward pass trains the discriminators to separate the domains and
// the backbone to confuse them.

#ifndef S2R_AFA_HPP_
#define S2R_AFA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "s2r/autograd.hpp"
#include "s2r/nn.hpp"

namespace s2r::afa {

enum class Domain : std::uint8_t { kSource = 0, kTarget = 1 };

inline double label_value(Domain d) { return d == Domain::kTarget ? 1.0 : 0.0; }

/// Identity forward; backward scales the gradient by -lambda.
template <typename T>
ag::Var<T> grl(const ag::Var<T>& x, T lambda) {
  return ag::gradient_reversal(x, lambda);
}

/// Linear ramp from 0 to `lambda_max` over the first `ramp_fraction` of
/// `total_steps`, constant afterwards.
double grl_lambda(std::int64_t step, std::int64_t total_steps, double lambda_max = 0.1,
                  double ramp_fraction = 0.2);

/// Three stride-2 3x3 convolutions with ReLU, global average pooling and a
/// linear layer to one logit. The final layer starts at zero.
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(nn::ParameterStore<T>& store, const std::string& name, std::int64_t channels,
                nn::Rng& rng);

  /// [H, W, C] -> [1]
  ag::Var<T> operator()(const ag::Var<T>& features) const;

 private:
  std::vector<nn::Conv2d<T>> convs_;
  nn::Linear<T> out_;
};

/// Mean binary cross-entropy of logits against domain labels. Throws
/// InvalidInput on empty or mismatched input.
template <typename T>
ag::Var<T> domain_bce(const std::vector<ag::Var<T>>& logits, const std::vector<Domain>& labels);

/// Inter-agent term plus ego term, each a mean BCE. Either list may be empty,
/// not both.
template <typename T>
ag::Var<T> afa_loss(const std::vector<ag::Var<T>>& inter_logits, const std::vector<Domain>& inter_labels,
                    const std::vector<ag::Var<T>>& ego_logits, const std::vector<Domain>& ego_labels);

}  // namespace s2r::afa

#endif  // S2R_AFA_HPP_
