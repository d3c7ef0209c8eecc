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

// Tape-free, define-by-run reverse-mode differentiation over Tensor<T>.
//
// Every op returns a Var whose node keeps its parents alive and a closure
// that pushes the node's gradient into them. Ops whose inputs carry no
// gradient produce plain constants, so inference builds no graph at all.
// Instantiated for float (training) and double (gradient checks).

#ifndef S2R_AUTOGRAD_HPP_
#define S2R_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "s2r/tensor.hpp"

namespace s2r::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialized on first use.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  /// Clears the accumulated gradient (keeps the allocation).
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
Var<T> constant(Tensor<T> value);

/// Leaf that accumulates gradient; used for trainable parameters.
template <typename T>
Var<T> leaf(Tensor<T> value);

/// Seeds d(root)/d(root) = 1 and propagates through the graph. `root` must
/// hold a single element.
template <typename T>
void backward(const Var<T>& root);

template <typename T>
Var<T> detach(const Var<T>& x);

// Elementwise arithmetic. Shapes must match exactly.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);

/// x[..., D] + b[D]
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b);

/// x[..., Din] * w[Din, Dout] -> [..., Dout]
template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w);

/// matmul followed by add_bias; `b` may be undefined.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> relu(const Var<T>& x);
/// tanh approximation; smooth everywhere, which keeps finite-difference
/// checks free of kinks.
template <typename T>
Var<T> gelu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Normalizes over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

/// x[H, W, Cin], w[K, K, Cin, Cout], b[Cout] (may be undefined).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

/// Nearest-neighbour 2x upsampling of an [H, W, C] map.
template <typename T>
Var<T> upsample2x(const Var<T>& x);

/// out.flat[i] = idx[i] >= 0 ? x.flat[idx[i]] : 0.
template <typename T>
Var<T> gather(const Var<T>& x, const std::vector<std::int64_t>& idx, Shape out_shape);

/// Leading sub-block of `x` along every axis.
template <typename T>
Var<T> leading_block(const Var<T>& x, const Shape& shape);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Channels [begin, end) of the last axis.
template <typename T>
Var<T> slice_last(const Var<T>& x, std::int64_t begin, std::int64_t end);

template <typename T>
Var<T> concat_last(const std::vector<Var<T>>& parts);

using TokenGroups = std::vector<std::vector<std::int64_t>>;

/// Softmax weights of every (group, head) evaluated by grouped_attention.
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> weights;
};

/// Multi-head scaled dot-product attention restricted to token groups.
/// q, k, v are [tokens, D] with D divisible by `heads`; each group is a list
/// of token rows that attend only among themselves. Rows absent from every
/// group produce zeros.
template <typename T>
Var<T> grouped_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                         const TokenGroups& groups, int heads,
                         AttentionTrace<T>* trace = nullptr);

template <typename T>
Var<T> sum_all(const Var<T>& x);
template <typename T>
Var<T> mean_all(const Var<T>& x);

/// Identity forward; backward multiplies the incoming gradient by -lambda.
template <typename T>
Var<T> gradient_reversal(const Var<T>& x, T lambda);

/// Entries >= median (over all entries) become exactly 1; the rest pass
/// through. Gradient flows only through the kept entries.
template <typename T>
Var<T> median_threshold(const Var<T>& x);

/// [H, W, C] -> [C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Mean binary cross-entropy over all logits; labels in {0, 1}.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const std::vector<T>& labels);

/// Sum over elements of -alpha_t (1 - p_t)^gamma log p_t with p = sigmoid(z),
/// divided by `normalizer`.
template <typename T>
Var<T> focal_loss_logits(const Var<T>& logits, const std::vector<std::uint8_t>& targets, T alpha,
                         T gamma, T normalizer);

/// Smooth L1 over the rows of pred[N, D] selected by `mask`, summed over D
/// and divided by `normalizer`.
template <typename T>
Var<T> smooth_l1_rows(const Var<T>& pred, const Tensor<T>& target,
                      const std::vector<std::uint8_t>& mask, T beta, T normalizer);

}  // namespace s2r::ag

#endif  // S2R_AUTOGRAD_HPP_
