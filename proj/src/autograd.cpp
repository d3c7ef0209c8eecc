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

#include "s2r/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace s2r::ag {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

thread_local bool g_grad_enabled = true;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.defined() ? in.ptr() : nullptr);
    node->backward = std::move(fn);
  }
  return Var<T>(std::move(node));
}

/// Gradient buffer of parent `i`, or nullptr when it does not need one.
template <typename T>
Tensor<T>* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
T stable_log_sigmoid(T z) {
  // log(sigmoid(z)) = -softplus(-z)
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root) {
  require(root.numel() == 1, "backward: root must be a scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return constant(x.value());
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& va = self.parents[0]->value;
    const auto& vb = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * vb[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * va[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * s;
    }
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  require(b.value().rank() == 1 && x.value().rank() >= 1 && x.shape().back() == b.dim(0),
          "add_bias: bias " + shape_str(b.shape()) + " incompatible with " + shape_str(x.shape()));
  const std::int64_t d = b.dim(0);
  Tensor<T> out = x.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i % d];
  return make_result<T>(std::move(out), {x, b}, [d](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) (*g)[i % d] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w) {
  require(w.value().rank() == 2 && x.value().rank() >= 1 && x.shape().back() == w.dim(0),
          "matmul: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  const std::int64_t din = w.dim(0), dout = w.dim(1);
  const std::int64_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor<T> out(out_shape);
  MapMat<T>(out.data(), rows, dout).noalias() =
      ConstMapMat<T>(x.value().data(), rows, din) * ConstMapMat<T>(w.value().data(), din, dout);
  return make_result<T>(std::move(out), {x, w}, [rows, din, dout](Node<T>& self) {
    ConstMapMat<T> gy(self.grad.data(), rows, dout);
    if (auto* g = parent_grad(self, 0)) {
      MapMat<T>(g->data(), rows, din).noalias() +=
          gy * ConstMapMat<T>(self.parents[1]->value.data(), din, dout).transpose();
    }
    if (auto* g = parent_grad(self, 1)) {
      MapMat<T>(g->data(), din, dout).noalias() +=
          ConstMapMat<T>(self.parents[0]->value.data(), rows, din).transpose() * gy;
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Var<T> y = matmul(x, w);
  return b.defined() ? add_bias(y, b) : y;
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& v = self.parents[0]->value;
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        if (v[i] > T(0)) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  Tensor<T> out = x.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const T v = out[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        const T v = xv[i];
        const T th = std::tanh(kC * (v + kA * v * v * v));
        const T d = T(0.5) * (T(1) + th) +
                    T(0.5) * v * (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
        (*g)[i] += self.grad[i] * d;
      }
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = sigmoid_scalar(out[i]);
  auto y = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {x}, [y](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        const T s = (*y)[i];
        (*g)[i] += self.grad[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const std::int64_t d = x.shape().back();
  require(gamma.numel() == d && beta.numel() == d, "layer_norm: affine size mismatch");
  const std::int64_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<Tensor<T>>(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* px = x.value().data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mean = 0;
    for (std::int64_t c = 0; c < d; ++c) mean += row[c];
    mean /= T(d);
    T var = 0;
    for (std::int64_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::int64_t c = 0; c < d; ++c) {
      const T h = (row[c] - mean) * is;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = h * pg[c] + pb[c];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [xhat, inv_std, rows, d](Node<T>& self) {
    const auto& gv = self.parents[1]->value;
    auto* gx = parent_grad(self, 0);
    auto* gg = parent_grad(self, 1);
    auto* gb = parent_grad(self, 2);
    std::vector<T> dxh(d);
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* gy = self.grad.data() + r * d;
      const T* h = xhat->data() + r * d;
      T mean_d = 0, mean_dh = 0;
      for (std::int64_t c = 0; c < d; ++c) {
        if (gg) (*gg)[c] += gy[c] * h[c];
        if (gb) (*gb)[c] += gy[c];
        dxh[c] = gy[c] * gv[c];
        mean_d += dxh[c];
        mean_dh += dxh[c] * h[c];
      }
      if (!gx) continue;
      mean_d /= T(d);
      mean_dh /= T(d);
      const T is = (*inv_std)[r];
      for (std::int64_t c = 0; c < d; ++c) {
        (*gx)[r * d + c] += is * (dxh[c] - mean_d - h[c] * mean_dh);
      }
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  require(x.value().rank() == 3, "conv2d: input must be [H, W, C], got " + shape_str(x.shape()));
  require(w.value().rank() == 4 && w.dim(0) == w.dim(1) && w.dim(2) == x.dim(2),
          "conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
              shape_str(x.shape()));
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
  const std::int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::int64_t k = w.dim(0), cout = w.dim(3);
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (wd + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: empty output");
  const std::int64_t patch = k * k * cin;

  auto cols = std::make_shared<Tensor<T>>(Shape{ho * wo, patch});
  const T* px = x.value().data();
  for (std::int64_t oi = 0; oi < ho; ++oi) {
    for (std::int64_t oj = 0; oj < wo; ++oj) {
      T* dst = cols->data() + (oi * wo + oj) * patch;
      for (std::int64_t ki = 0; ki < k; ++ki) {
        const std::int64_t ii = oi * stride - pad + ki;
        for (std::int64_t kj = 0; kj < k; ++kj) {
          const std::int64_t jj = oj * stride - pad + kj;
          T* d = dst + (ki * k + kj) * cin;
          if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;  // already zero
          std::copy_n(px + (ii * wd + jj) * cin, cin, d);
        }
      }
    }
  }
  Tensor<T> out(Shape{ho, wo, cout});
  MapMat<T> y(out.data(), ho * wo, cout);
  y.noalias() = ConstMapMat<T>(cols->data(), ho * wo, patch) *
                ConstMapMat<T>(w.value().data(), patch, cout);
  if (b.defined()) {
    require(b.numel() == cout, "conv2d: bias size mismatch");
    for (std::int64_t r = 0; r < ho * wo; ++r) {
      for (std::int64_t c = 0; c < cout; ++c) y(r, c) += b.value()[c];
    }
  }
  return make_result<T>(
      std::move(out), {x, w, b},
      [cols, h, wd, cin, k, cout, ho, wo, patch, stride, pad](Node<T>& self) {
        ConstMapMat<T> gy(self.grad.data(), ho * wo, cout);
        if (auto* gw = parent_grad(self, 1)) {
          MapMat<T>(gw->data(), patch, cout).noalias() +=
              ConstMapMat<T>(cols->data(), ho * wo, patch).transpose() * gy;
        }
        if (self.parents[2]) {
          if (auto* gb = parent_grad(self, 2)) {
            for (std::int64_t r = 0; r < ho * wo; ++r) {
              for (std::int64_t c = 0; c < cout; ++c) (*gb)[c] += gy(r, c);
            }
          }
        }
        if (auto* gx = parent_grad(self, 0)) {
          RowMat<T> gcols =
              gy * ConstMapMat<T>(self.parents[1]->value.data(), patch, cout).transpose();
          for (std::int64_t oi = 0; oi < ho; ++oi) {
            for (std::int64_t oj = 0; oj < wo; ++oj) {
              const T* src = gcols.data() + (oi * wo + oj) * patch;
              for (std::int64_t ki = 0; ki < k; ++ki) {
                const std::int64_t ii = oi * stride - pad + ki;
                if (ii < 0 || ii >= h) continue;
                for (std::int64_t kj = 0; kj < k; ++kj) {
                  const std::int64_t jj = oj * stride - pad + kj;
                  if (jj < 0 || jj >= wd) continue;
                  T* dst = gx->data() + (ii * wd + jj) * cin;
                  const T* s = src + (ki * k + kj) * cin;
                  for (std::int64_t c = 0; c < cin; ++c) dst[c] += s[c];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  require(x.value().rank() == 3, "upsample2x: input must be [H, W, C]");
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor<T> out(Shape{2 * h, 2 * w, c});
  const T* px = x.value().data();
  for (std::int64_t i = 0; i < 2 * h; ++i) {
    for (std::int64_t j = 0; j < 2 * w; ++j) {
      std::copy_n(px + ((i / 2) * w + j / 2) * c, c, out.data() + (i * 2 * w + j) * c);
    }
  }
  return make_result<T>(std::move(out), {x}, [h, w, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < 2 * h; ++i) {
        for (std::int64_t j = 0; j < 2 * w; ++j) {
          const T* s = self.grad.data() + (i * 2 * w + j) * c;
          T* d = g->data() + ((i / 2) * w + j / 2) * c;
          for (std::int64_t q = 0; q < c; ++q) d[q] += s[q];
        }
      }
    }
  });
}

template <typename T>
Var<T> gather(const Var<T>& x, const std::vector<std::int64_t>& idx, Shape out_shape) {
  require(static_cast<std::int64_t>(idx.size()) == shape_numel(out_shape),
          "gather: index count does not match output shape");
  Tensor<T> out(std::move(out_shape));
  const T* px = x.value().data();
  const std::int64_t n = x.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) {
      require(idx[i] < n, "gather: index out of range");
      out[static_cast<std::int64_t>(i)] = px[idx[i]];
    }
  }
  return make_result<T>(std::move(out), {x}, [idx](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= 0) (*g)[idx[i]] += self.grad[static_cast<std::int64_t>(i)];
      }
    }
  });
}

template <typename T>
Var<T> leading_block(const Var<T>& x, const Shape& shape) {
  const Shape& src = x.shape();
  require(shape.size() == src.size(), "leading_block: rank mismatch");
  bool same = true;
  for (std::size_t a = 0; a < src.size(); ++a) {
    require(shape[a] >= 1 && shape[a] <= src[a],
            "leading_block: " + shape_str(shape) + " exceeds " + shape_str(src));
    same = same && shape[a] == src[a];
  }
  if (same) return x;
  const std::int64_t n = shape_numel(shape);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::vector<std::int64_t> coord(shape.size(), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t off = 0;
    for (std::size_t a = 0; a < src.size(); ++a) off = off * src[a] + coord[a];
    idx[static_cast<std::size_t>(i)] = off;
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++coord[a] < shape[a]) break;
      coord[a] = 0;
    }
  }
  return gather(x, idx, shape);
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> slice_last(const Var<T>& x, std::int64_t begin, std::int64_t end) {
  const std::int64_t d = x.shape().back();
  require(0 <= begin && begin < end && end <= d, "slice_last: bad channel range");
  const std::int64_t rows = x.numel() / d, width = end - begin;
  Shape shape = x.shape();
  shape.back() = width;
  Tensor<T> out(shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(x.value().data() + r * d + begin, width, out.data() + r * width);
  }
  return make_result<T>(std::move(out), {x}, [rows, d, begin, width](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < width; ++c) {
          (*g)[r * d + begin + c] += self.grad[r * width + c];
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_last(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_last: no inputs");
  if (parts.size() == 1) return parts.front();
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    const std::int64_t wdt = s.back();
    s.pop_back();
    require(s == lead, "concat_last: leading shapes differ");
    widths.push_back(wdt);
    total += wdt;
  }
  const std::int64_t rows = shape_numel(lead);
  Shape shape = lead;
  shape.push_back(total);
  Tensor<T> out(shape);
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy_n(parts[p].value().data() + r * widths[p], widths[p],
                  out.data() + r * total + off);
    }
    off += widths[p];
  }
  return make_result<T>(std::move(out), parts, [widths, rows, total](Node<T>& self) {
    std::int64_t o = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < widths[p]; ++c) {
            (*g)[r * widths[p] + c] += self.grad[r * total + o + c];
          }
        }
      }
      o += widths[p];
    }
  });
}

template <typename T>
Var<T> grouped_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                         const TokenGroups& groups, int heads, AttentionTrace<T>* trace) {
  require(q.value().rank() == 2, "grouped_attention: q must be [tokens, D]");
  require_same_shape(q.shape(), k.shape(), "grouped_attention");
  require_same_shape(q.shape(), v.shape(), "grouped_attention");
  const std::int64_t tokens = q.dim(0), d = q.dim(1);
  require(heads >= 1 && d % heads == 0, "grouped_attention: channels not divisible by heads");
  const std::int64_t dh = d / heads;
  const T scale_f = T(1) / std::sqrt(T(dh));

  auto probs = std::make_shared<std::vector<RowMat<T>>>();
  probs->reserve(groups.size() * static_cast<std::size_t>(heads));
  Tensor<T> out(Shape{tokens, d});

  auto load = [dh, d](const Tensor<T>& src, const std::vector<std::int64_t>& g, std::int64_t c0) {
    RowMat<T> m(static_cast<Eigen::Index>(g.size()), dh);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::int64_t c = 0; c < dh; ++c) m(static_cast<Eigen::Index>(i), c) = src[g[i] * d + c0 + c];
    }
    return m;
  };

  for (const auto& g : groups) {
    for (std::int64_t t : g) require(t >= 0 && t < tokens, "grouped_attention: bad token index");
    for (int hd = 0; hd < heads; ++hd) {
      const std::int64_t c0 = hd * dh;
      RowMat<T> qm = load(q.value(), g, c0), km = load(k.value(), g, c0), vm = load(v.value(), g, c0);
      qm *= scale_f;
      RowMat<T> s(qm.rows(), km.rows());
      s.noalias() = qm * km.transpose();
      const Eigen::Matrix<T, Eigen::Dynamic, 1> row_max = s.rowwise().maxCoeff();
      s.colwise() -= row_max;
      s.array() = s.array().exp();
      const Eigen::Array<T, Eigen::Dynamic, 1> row_sum = s.rowwise().sum().array();
      s.array().colwise() /= row_sum;
      RowMat<T> o(s.rows(), dh);
      o.noalias() = s * vm;
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::int64_t c = 0; c < dh; ++c) out[g[i] * d + c0 + c] = o(static_cast<Eigen::Index>(i), c);
      }
      if (trace) {
        Tensor<T> w(Shape{s.rows(), s.cols()});
        std::copy_n(s.data(), s.size(), w.data());
        trace->weights.push_back(std::move(w));
      }
      probs->push_back(std::move(s));
    }
  }
  return make_result<T>(
      std::move(out), {q, k, v},
      [probs, groups, heads, dh, d, scale_f, load](Node<T>& self) {
        auto* gq = parent_grad(self, 0);
        auto* gk = parent_grad(self, 1);
        auto* gv = parent_grad(self, 2);
        const auto& qv = self.parents[0]->value;
        const auto& kv = self.parents[1]->value;
        const auto& vv = self.parents[2]->value;
        std::size_t slot = 0;
        for (const auto& g : groups) {
          for (int hd = 0; hd < heads; ++hd, ++slot) {
            const std::int64_t c0 = hd * dh;
            const RowMat<T>& p = (*probs)[slot];
            RowMat<T> go = load(self.grad, g, c0);
            auto scatter = [&](Tensor<T>* dst, const RowMat<T>& m) {
              for (std::size_t i = 0; i < g.size(); ++i) {
                for (std::int64_t c = 0; c < dh; ++c) {
                  (*dst)[g[i] * d + c0 + c] += m(static_cast<Eigen::Index>(i), c);
                }
              }
            };
            RowMat<T> prod(p.rows(), dh);
            if (gv) {
              prod.noalias() = p.transpose() * go;
              scatter(gv, prod);
            }
            if (!gq && !gk) continue;
            const RowMat<T> vm = load(vv, g, c0);
            RowMat<T> ds(p.rows(), p.cols());
            ds.noalias() = go * vm.transpose();
            const Eigen::Matrix<T, Eigen::Dynamic, 1> dots = (ds.array() * p.array()).rowwise().sum();
            ds.array() = p.array() * (ds.colwise() - dots).array() * scale_f;
            if (gq) {
              const RowMat<T> km = load(kv, g, c0);
              prod.noalias() = ds * km;
              scatter(gq, prod);
            }
            if (gk) {
              const RowMat<T> qm = load(qv, g, c0);
              prod.noalias() = ds.transpose() * qm;
              scatter(gk, prod);
            }
          }
        }
      });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return make_result<T>(Tensor<T>(Shape{1}, std::vector<T>{s}), {x}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[0];
    }
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  require(x.numel() > 0, "mean_all: empty input");
  return scale(sum_all(x), T(1) / T(x.numel()));
}

template <typename T>
Var<T> gradient_reversal(const Var<T>& x, T lambda) {
  require(lambda >= T(0), "gradient_reversal: lambda must be non-negative");
  return make_result<T>(x.value(), {x}, [lambda](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) (*g)[i] -= lambda * self.grad[i];
    }
  });
}

template <typename T>
Var<T> median_threshold(const Var<T>& x) {
  require(x.numel() > 0, "median_threshold: empty input");
  std::vector<T> sorted(x.value().values().begin(), x.value().values().end());
  const std::size_t n = sorted.size();
  std::sort(sorted.begin(), sorted.end());
  const T tau = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / T(2);
  Tensor<T> out = x.value();
  auto kept = std::make_shared<std::vector<std::uint8_t>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<std::int64_t>(i);
    if (out[ii] >= tau) {
      out[ii] = T(1);
    } else {
      (*kept)[i] = 1;
    }
  }
  return make_result<T>(std::move(out), {x}, [kept](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < g->numel(); ++i) {
        if ((*kept)[static_cast<std::size_t>(i)]) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require(x.value().rank() == 3, "global_avg_pool: input must be [H, W, C]");
  const std::int64_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  Tensor<T> out(Shape{c});
  for (std::int64_t r = 0; r < hw; ++r) {
    for (std::int64_t q = 0; q < c; ++q) out[q] += x.value()[r * c + q];
  }
  for (std::int64_t q = 0; q < c; ++q) out[q] /= T(hw);
  return make_result<T>(std::move(out), {x}, [hw, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::int64_t r = 0; r < hw; ++r) {
        for (std::int64_t q = 0; q < c; ++q) (*g)[r * c + q] += self.grad[q] / T(hw);
      }
    }
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const std::vector<T>& labels) {
  const std::int64_t n = logits.numel();
  require(n > 0, "bce_with_logits: empty input");
  require(static_cast<std::int64_t>(labels.size()) == n, "bce_with_logits: label count mismatch");
  T total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T z = logits.value()[i];
    const T y = labels[static_cast<std::size_t>(i)];
    require(y == T(0) || y == T(1), "bce_with_logits: labels must be 0 or 1");
    total += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out(Shape{1}, std::vector<T>{total / T(n)});
  return make_result<T>(std::move(out), {logits}, [labels, n](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& z = self.parents[0]->value;
      for (std::int64_t i = 0; i < n; ++i) {
        (*g)[i] += self.grad[0] * (sigmoid_scalar(z[i]) - labels[static_cast<std::size_t>(i)]) / T(n);
      }
    }
  });
}

template <typename T>
Var<T> focal_loss_logits(const Var<T>& logits, const std::vector<std::uint8_t>& targets, T alpha,
                         T gamma, T normalizer) {
  const std::int64_t n = logits.numel();
  require(static_cast<std::int64_t>(targets.size()) == n, "focal_loss: target count mismatch");
  require(normalizer > T(0), "focal_loss: normalizer must be positive");
  T total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T z = logits.value()[i];
    // log p_t and (1 - p_t) in a form that stays finite for large |z|.
    const T zt = targets[static_cast<std::size_t>(i)] ? z : -z;
    const T a = targets[static_cast<std::size_t>(i)] ? alpha : T(1) - alpha;
    const T log_pt = stable_log_sigmoid(zt);
    const T one_minus_pt = sigmoid_scalar(-zt);
    total += -a * std::pow(one_minus_pt, gamma) * log_pt;
  }
  Tensor<T> out(Shape{1}, std::vector<T>{total / normalizer});
  return make_result<T>(std::move(out), {logits}, [targets, alpha, gamma, normalizer, n](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& zv = self.parents[0]->value;
      for (std::int64_t i = 0; i < n; ++i) {
        const bool pos = targets[static_cast<std::size_t>(i)] != 0;
        const T zt = pos ? zv[i] : -zv[i];
        const T a = pos ? alpha : T(1) - alpha;
        const T pt = sigmoid_scalar(zt);
        const T q = sigmoid_scalar(-zt);  // 1 - p_t
        // dL/dzt = a (1-pt)^gamma [gamma pt log pt - (1 - pt)]
        const T d = a * std::pow(q, gamma) * (gamma * pt * stable_log_sigmoid(zt) - q);
        (*g)[i] += self.grad[0] * (pos ? d : -d) / normalizer;
      }
    }
  });
}

template <typename T>
Var<T> smooth_l1_rows(const Var<T>& pred, const Tensor<T>& target,
                      const std::vector<std::uint8_t>& mask, T beta, T normalizer) {
  require_same_shape(pred.shape(), target.shape(), "smooth_l1");
  require(pred.value().rank() == 2, "smooth_l1: pred must be [N, D]");
  const std::int64_t rows = pred.dim(0), d = pred.dim(1);
  require(static_cast<std::int64_t>(mask.size()) == rows, "smooth_l1: mask size mismatch");
  require(beta > T(0) && normalizer > T(0), "smooth_l1: beta and normalizer must be positive");
  T total = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    for (std::int64_t c = 0; c < d; ++c) {
      const T x = std::abs(pred.value()[r * d + c] - target[r * d + c]);
      total += x < beta ? T(0.5) * x * x / beta : x - T(0.5) * beta;
    }
  }
  Tensor<T> out(Shape{1}, std::vector<T>{total / normalizer});
  return make_result<T>(std::move(out), {pred}, [target, mask, beta, normalizer, rows, d](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& pv = self.parents[0]->value;
      for (std::int64_t r = 0; r < rows; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        for (std::int64_t c = 0; c < d; ++c) {
          const T x = pv[r * d + c] - target[r * d + c];
          const T dx = std::abs(x) < beta ? x / beta : (x > 0 ? T(1) : T(-1));
          (*g)[r * d + c] += self.grad[0] * dx / normalizer;
        }
      }
    }
  });
}

#define S2R_INSTANTIATE_AUTOGRAD(T)                                                              \
  template Var<T> constant(Tensor<T>);                                                           \
  template Var<T> leaf(Tensor<T>);                                                               \
  template void backward(const Var<T>&);                                                         \
  template Var<T> detach(const Var<T>&);                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> relu(const Var<T>&);                                                           \
  template Var<T> gelu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                 \
  template Var<T> upsample2x(const Var<T>&);                                                     \
  template Var<T> gather(const Var<T>&, const std::vector<std::int64_t>&, Shape);                \
  template Var<T> leading_block(const Var<T>&, const Shape&);                                    \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> slice_last(const Var<T>&, std::int64_t, std::int64_t);                         \
  template Var<T> concat_last(const std::vector<Var<T>>&);                                       \
  template Var<T> grouped_attention(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                    const TokenGroups&, int, AttentionTrace<T>*);                \
  template Var<T> sum_all(const Var<T>&);                                                        \
  template Var<T> mean_all(const Var<T>&);                                                       \
  template Var<T> gradient_reversal(const Var<T>&, T);                                           \
  template Var<T> median_threshold(const Var<T>&);                                               \
  template Var<T> global_avg_pool(const Var<T>&);                                                \
  template Var<T> bce_with_logits(const Var<T>&, const std::vector<T>&);                         \
  template Var<T> focal_loss_logits(const Var<T>&, const std::vector<std::uint8_t>&, T, T, T);   \
  template Var<T> smooth_l1_rows(const Var<T>&, const Tensor<T>&,                                \
                                 const std::vector<std::uint8_t>&, T, T);

S2R_INSTANTIATE_AUTOGRAD(float)
S2R_INSTANTIATE_AUTOGRAD(double)

#undef S2R_INSTANTIATE_AUTOGRAD

}  // namespace s2r::ag
