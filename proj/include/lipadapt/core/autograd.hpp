#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a graph node. Operations build new nodes that remember
// their parents and a closure that pushes the output gradient back into them.
// Leaves created with `parameter()` keep their gradient between backward
// passes until `zero_grad()` is called by the optimizer.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lipadapt/core/tensor.hpp"

namespace lipadapt::ag {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph construction for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.data.size()) grad.assign(value.data.size(), T(0));
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  int rows() const { return node_->value.rows(); }
  int cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<T>& grad() const { return node_->ensure_grad(); }
  std::vector<T>& grad() { return node_->ensure_grad(); }
  T item() const { return node_->value.data.at(0); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

template <class T>
Var<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

namespace detail {

template <class T, class F>
Var<T> make_op(Tensor<T> value, std::initializer_list<Var<T>> parents, F&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::forward<F>(backward);
  }
  return Var<T>(std::move(n));
}

template <class T, class F>
Var<T> make_op_n(Tensor<T> value, const std::vector<Var<T>>& parents, F&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::forward<F>(backward);
  }
  return Var<T>(std::move(n));
}

inline void check(bool cond, const char* what) {
  if (!cond) throw Error(std::string("autograd: ") + what);
}

}  // namespace detail

// Runs reverse accumulation from a scalar output.
template <class T>
void backward(const Var<T>& root) {
  detail::check(root.size() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and shape operations

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  detail::check(shape_numel(shape) == x.size(), "reshape size mismatch");
  Tensor<T> out(std::move(shape), x.value().data);
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px](Node<T>& o) {
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "add shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  Node<T>* pa = a.node();
  Node<T>* pb = b.node();
  return detail::make_op(std::move(out), {a, b}, [pa, pb](Node<T>& o) {
    for (Node<T>* p : {pa, pb}) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

// Adds a constant tensor (no gradient flows into it).
template <class T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c) {
  detail::check(a.shape() == c.shape, "add_const shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  Node<T>* pa = a.node();
  return detail::make_op(std::move(out), {a}, [pa](Node<T>& o) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= s;
  Node<T>* pa = a.node();
  return detail::make_op(std::move(out), {a}, [pa, s](Node<T>& o) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i];
  });
}

template <class T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v = v / (T(1) + std::exp(-v));
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px](Node<T>& o) {
    auto& g = px->ensure_grad();
    const auto& xv = px->value.data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      T s = T(1) / (T(1) + std::exp(-xv[i]));
      g[i] += o.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
    }
  });
}

// Gated linear unit over the column axis: [m x 2n] -> [m x n].
template <class T>
Var<T> glu_cols(const Var<T>& x) {
  const int m = x.rows();
  const int n2 = x.cols();
  detail::check(n2 % 2 == 0, "glu needs an even column count");
  const int n = n2 / 2;
  Tensor<T> out({m, n});
  const auto& xv = x.value();
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) {
      T a = xv.at(r, c);
      T s = T(1) / (T(1) + std::exp(-xv.at(r, c + n)));
      out.at(r, c) = a * s;
    }
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, m, n](Node<T>& o) {
    auto& g = px->ensure_grad();
    const auto& xv = px->value;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        T a = xv.at(r, c);
        T s = T(1) / (T(1) + std::exp(-xv.at(r, c + n)));
        T dy = o.grad[static_cast<std::size_t>(r) * n + c];
        g[static_cast<std::size_t>(r) * 2 * n + c] += dy * s;
        g[static_cast<std::size_t>(r) * 2 * n + c + n] += dy * a * s * (T(1) - s);
      }
  });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
  const int m = x.rows();
  const int n = x.cols();
  Tensor<T> out({n, m});
  out.mat() = x.value().mat().transpose();
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, m, n](Node<T>& o) {
    auto& g = px->ensure_grad();
    MapR<T>(g.data(), m, n) += CMapR<T>(o.grad.data(), n, m).transpose();
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, int c0, int width) {
  const int m = x.rows();
  const int n = x.cols();
  detail::check(c0 >= 0 && c0 + width <= n, "slice_cols out of range");
  Tensor<T> out({m, width});
  out.mat() = x.value().mat().middleCols(c0, width);
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, m, n, c0, width](Node<T>& o) {
    auto& g = px->ensure_grad();
    MapR<T>(g.data(), m, n).middleCols(c0, width) += CMapR<T>(o.grad.data(), m, width);
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  detail::check(!parts.empty(), "concat_cols of nothing");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    detail::check(p.rows() == m, "concat_cols row mismatch");
    n += p.cols();
  }
  Tensor<T> out({m, n});
  std::vector<Node<T>*> nodes;
  std::vector<int> offsets;
  int c = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(c, p.cols()) = p.value().mat();
    nodes.push_back(p.node());
    offsets.push_back(c);
    c += p.cols();
  }
  return detail::make_op_n(std::move(out), parts, [nodes, offsets, m, n](Node<T>& o) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      Node<T>* p = nodes[i];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      const int w = p->value.cols();
      MapR<T>(g.data(), m, w) += CMapR<T>(o.grad.data(), m, n).middleCols(offsets[i], w);
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T s = T(0);
  for (const T& v : x.value().data) s += v;
  Node<T>* px = x.node();
  return detail::make_op(Tensor<T>({1}, std::vector<T>{s}), {x}, [px](Node<T>& o) {
    auto& g = px->ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

// [m x k] * [k x n]
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check(a.cols() == b.rows(), "matmul inner dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out({m, n});
  out.mat().noalias() = a.value().mat() * b.value().mat();
  Node<T>* pa = a.node();
  Node<T>* pb = b.node();
  return detail::make_op(std::move(out), {a, b}, [pa, pb, m, k, n](Node<T>& o) {
    CMapR<T> dy(o.grad.data(), m, n);
    if (pa->requires_grad)
      MapR<T>(pa->ensure_grad().data(), m, k).noalias() += dy * pb->value.mat().transpose();
    if (pb->requires_grad)
      MapR<T>(pb->ensure_grad().data(), k, n).noalias() += pa->value.mat().transpose() * dy;
  });
}

// [m x k] * [n x k]^T
template <class T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::check(a.cols() == b.cols(), "matmul_nt inner dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out({m, n});
  out.mat().noalias() = a.value().mat() * b.value().mat().transpose();
  Node<T>* pa = a.node();
  Node<T>* pb = b.node();
  return detail::make_op(std::move(out), {a, b}, [pa, pb, m, k, n](Node<T>& o) {
    CMapR<T> dy(o.grad.data(), m, n);
    if (pa->requires_grad)
      MapR<T>(pa->ensure_grad().data(), m, k).noalias() += dy * pb->value.mat();
    if (pb->requires_grad)
      MapR<T>(pb->ensure_grad().data(), n, k).noalias() += dy.transpose() * pa->value.mat();
  });
}

// x [m x in], weight [out x in], bias [out] -> [m x out]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  detail::check(x.cols() == weight.cols(), "linear input width mismatch");
  detail::check(static_cast<int>(bias.size()) == weight.rows(), "linear bias size mismatch");
  const int m = x.rows(), in = x.cols(), out_dim = weight.rows();
  Tensor<T> out({m, out_dim});
  auto om = out.mat();
  om.noalias() = x.value().mat() * weight.value().mat().transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().data.data(), out_dim);
  om.rowwise() += b;
  Node<T>* px = x.node();
  Node<T>* pw = weight.node();
  Node<T>* pb = bias.node();
  return detail::make_op(std::move(out), {x, weight, bias}, [px, pw, pb, m, in, out_dim](Node<T>& o) {
    CMapR<T> dy(o.grad.data(), m, out_dim);
    if (px->requires_grad)
      MapR<T>(px->ensure_grad().data(), m, in).noalias() += dy * pw->value.mat();
    if (pw->requires_grad)
      MapR<T>(pw->ensure_grad().data(), out_dim, in).noalias() += dy.transpose() * px->value.mat();
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.data(), out_dim) += dy.colwise().sum();
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and softmax

// Per-row normalization with per-column affine parameters: [m x n], gamma/beta [n].
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const int m = x.rows(), n = x.cols();
  detail::check(static_cast<int>(gamma.size()) == n && static_cast<int>(beta.size()) == n,
                "layer_norm parameter size mismatch");
  Tensor<T> out({m, n});
  std::vector<T> xhat(static_cast<std::size_t>(m) * n), inv_std(m);
  const auto& xv = x.value();
  for (int r = 0; r < m; ++r) {
    T mu = 0;
    for (int c = 0; c < n; ++c) mu += xv.at(r, c);
    mu /= n;
    T var = 0;
    for (int c = 0; c < n; ++c) var += (xv.at(r, c) - mu) * (xv.at(r, c) - mu);
    var /= n;
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < n; ++c) {
      T h = (xv.at(r, c) - mu) * inv_std[r];
      xhat[static_cast<std::size_t>(r) * n + c] = h;
      out.at(r, c) = h * gamma.value()[c] + beta.value()[c];
    }
  }
  Node<T>* px = x.node();
  Node<T>* pg = gamma.node();
  Node<T>* pb = beta.node();
  return detail::make_op(
      std::move(out), {x, gamma, beta},
      [px, pg, pb, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& o) {
        for (int r = 0; r < m; ++r) {
          const T* dy = o.grad.data() + static_cast<std::size_t>(r) * n;
          const T* h = xhat.data() + static_cast<std::size_t>(r) * n;
          if (pg->requires_grad) {
            auto& gg = pg->ensure_grad();
            for (int c = 0; c < n; ++c) gg[c] += dy[c] * h[c];
          }
          if (pb->requires_grad) {
            auto& gb = pb->ensure_grad();
            for (int c = 0; c < n; ++c) gb[c] += dy[c];
          }
          if (px->requires_grad) {
            T mean_d = 0, mean_dh = 0;
            for (int c = 0; c < n; ++c) {
              T d = dy[c] * pg->value[c];
              mean_d += d;
              mean_dh += d * h[c];
            }
            mean_d /= n;
            mean_dh /= n;
            auto& gx = px->ensure_grad();
            for (int c = 0; c < n; ++c) {
              T d = dy[c] * pg->value[c];
              gx[static_cast<std::size_t>(r) * n + c] += inv_std[r] * (d - mean_d - h[c] * mean_dh);
            }
          }
        }
      });
}

// Per-row normalization with per-row affine parameters: [R x N], gamma/beta [R].
// Used as channel normalization: rows are channels, columns the pooled extent.
template <class T>
Var<T> channel_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const int m = x.rows(), n = x.cols();
  detail::check(static_cast<int>(gamma.size()) == m && static_cast<int>(beta.size()) == m,
                "channel_norm parameter size mismatch");
  Tensor<T> out({m, n});
  std::vector<T> xhat(static_cast<std::size_t>(m) * n), inv_std(m);
  const auto& xv = x.value();
  for (int r = 0; r < m; ++r) {
    T mu = 0;
    for (int c = 0; c < n; ++c) mu += xv.at(r, c);
    mu /= n;
    T var = 0;
    for (int c = 0; c < n; ++c) var += (xv.at(r, c) - mu) * (xv.at(r, c) - mu);
    var /= n;
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < n; ++c) {
      T h = (xv.at(r, c) - mu) * inv_std[r];
      xhat[static_cast<std::size_t>(r) * n + c] = h;
      out.at(r, c) = h * gamma.value()[r] + beta.value()[r];
    }
  }
  Node<T>* px = x.node();
  Node<T>* pg = gamma.node();
  Node<T>* pb = beta.node();
  return detail::make_op(
      std::move(out), {x, gamma, beta},
      [px, pg, pb, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& o) {
        for (int r = 0; r < m; ++r) {
          const T* dy = o.grad.data() + static_cast<std::size_t>(r) * n;
          const T* h = xhat.data() + static_cast<std::size_t>(r) * n;
          T sum_dy = 0, sum_dyh = 0;
          for (int c = 0; c < n; ++c) {
            sum_dy += dy[c];
            sum_dyh += dy[c] * h[c];
          }
          if (pg->requires_grad) pg->ensure_grad()[r] += sum_dyh;
          if (pb->requires_grad) pb->ensure_grad()[r] += sum_dy;
          if (px->requires_grad) {
            const T gr = pg->value[r];
            const T mean_d = gr * sum_dy / n;
            const T mean_dh = gr * sum_dyh / n;
            auto& gx = px->ensure_grad();
            for (int c = 0; c < n; ++c)
              gx[static_cast<std::size_t>(r) * n + c] +=
                  inv_std[r] * (gr * dy[c] - mean_d - h[c] * mean_dh);
          }
        }
      });
}

namespace detail {
template <class T>
T row_max(const T* v, int n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int c = 0; c < n; ++c) mx = std::max(mx, v[c]);
  return mx;
}
}  // namespace detail

// Row softmax; entries equal to -inf get probability zero.
template <class T>
Var<T> softmax_rows(const Var<T>& x) {
  const int m = x.rows(), n = x.cols();
  Tensor<T> out({m, n});
  for (int r = 0; r < m; ++r) {
    const T* xv = x.value().data.data() + static_cast<std::size_t>(r) * n;
    T* y = out.data.data() + static_cast<std::size_t>(r) * n;
    T mx = detail::row_max(xv, n);
    T z = 0;
    for (int c = 0; c < n; ++c) {
      y[c] = std::exp(xv[c] - mx);
      z += y[c];
    }
    for (int c = 0; c < n; ++c) y[c] /= z;
  }
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, m, n](Node<T>& o) {
    auto& g = px->ensure_grad();
    for (int r = 0; r < m; ++r) {
      const T* y = o.value.data.data() + static_cast<std::size_t>(r) * n;
      const T* dy = o.grad.data() + static_cast<std::size_t>(r) * n;
      T dot = 0;
      for (int c = 0; c < n; ++c) dot += dy[c] * y[c];
      for (int c = 0; c < n; ++c) g[static_cast<std::size_t>(r) * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

template <class T>
Var<T> log_softmax_rows(const Var<T>& x) {
  const int m = x.rows(), n = x.cols();
  Tensor<T> out({m, n});
  for (int r = 0; r < m; ++r) {
    const T* xv = x.value().data.data() + static_cast<std::size_t>(r) * n;
    T* y = out.data.data() + static_cast<std::size_t>(r) * n;
    T mx = detail::row_max(xv, n);
    T z = 0;
    for (int c = 0; c < n; ++c) z += std::exp(xv[c] - mx);
    T lse = mx + std::log(z);
    for (int c = 0; c < n; ++c) y[c] = xv[c] - lse;
  }
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, m, n](Node<T>& o) {
    auto& g = px->ensure_grad();
    for (int r = 0; r < m; ++r) {
      const T* y = o.value.data.data() + static_cast<std::size_t>(r) * n;
      const T* dy = o.grad.data() + static_cast<std::size_t>(r) * n;
      T sdy = 0;
      for (int c = 0; c < n; ++c) sdy += dy[c];
      for (int c = 0; c < n; ++c)
        g[static_cast<std::size_t>(r) * n + c] += dy[c] - std::exp(y[c]) * sdy;
    }
  });
}

// Label-smoothed cross entropy from logits [n x V], summed over rows.
// Target distribution: 1-eps on the label, eps/(V-1) elsewhere.
template <class T>
Var<T> smoothed_cross_entropy(const Var<T>& logits, const std::vector<int>& targets, T eps) {
  const int m = logits.rows(), v = logits.cols();
  detail::check(static_cast<int>(targets.size()) == m, "cross entropy target count mismatch");
  detail::check(v >= 2, "cross entropy needs at least two classes");
  const T off = eps / T(v - 1);
  const T on = T(1) - eps;
  std::vector<T> probs(static_cast<std::size_t>(m) * v);
  T loss = 0;
  for (int r = 0; r < m; ++r) {
    const T* x = logits.value().data.data() + static_cast<std::size_t>(r) * v;
    T mx = detail::row_max(x, v);
    T z = 0;
    for (int c = 0; c < v; ++c) z += std::exp(x[c] - mx);
    T lse = mx + std::log(z);
    detail::check(targets[r] >= 0 && targets[r] < v, "cross entropy target out of range");
    for (int c = 0; c < v; ++c) {
      T lp = x[c] - lse;
      probs[static_cast<std::size_t>(r) * v + c] = std::exp(lp);
      loss -= (c == targets[r] ? on : off) * lp;
    }
  }
  Node<T>* pl = logits.node();
  return detail::make_op(Tensor<T>({1}, std::vector<T>{loss}), {logits},
                         [pl, m, v, on, off, targets, probs = std::move(probs)](Node<T>& o) {
                           auto& g = pl->ensure_grad();
                           const T d = o.grad[0];
                           for (int r = 0; r < m; ++r)
                             for (int c = 0; c < v; ++c) {
                               std::size_t i = static_cast<std::size_t>(r) * v + c;
                               T q = (c == targets[r] ? on : off);
                               // sum_c q_c = 1, so d/dx = p - q
                               g[i] += d * (probs[i] - q);
                             }
                         });
}

// ---------------------------------------------------------------------------
// Lookup and convolution

// weight [V x d], ids -> [n x d]
template <class T>
Var<T> embedding(const Var<T>& weight, const std::vector<int>& ids) {
  const int v = weight.rows(), d = weight.cols();
  const int n = static_cast<int>(ids.size());
  Tensor<T> out({n, d});
  for (int i = 0; i < n; ++i) {
    detail::check(ids[i] >= 0 && ids[i] < v, "embedding index out of range");
    out.mat().row(i) = weight.value().mat().row(ids[i]);
  }
  Node<T>* pw = weight.node();
  return detail::make_op(std::move(out), {weight}, [pw, ids, d](Node<T>& o) {
    auto& g = pw->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int c = 0; c < d; ++c)
        g[static_cast<std::size_t>(ids[i]) * d + c] += o.grad[i * d + c];
  });
}

struct Conv3dGeometry {
  int kt, kh, kw;
  int st, sh, sw;
  int pt, ph, pw;
};

// x [Cin, T, H, W], weight [Cout, Cin, kt, kh, kw], bias [Cout] -> [Cout, T', H', W']
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Conv3dGeometry g) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  detail::check(xs.size() == 4 && ws.size() == 5, "conv3d expects [C,T,H,W] input");
  const int cin = xs[0], tin = xs[1], hin = xs[2], win = xs[3];
  const int cout = ws[0];
  detail::check(ws[1] == cin && ws[2] == g.kt && ws[3] == g.kh && ws[4] == g.kw,
                "conv3d weight shape mismatch");
  const int to = (tin + 2 * g.pt - g.kt) / g.st + 1;
  const int ho = (hin + 2 * g.ph - g.kh) / g.sh + 1;
  const int wo = (win + 2 * g.pw - g.kw) / g.sw + 1;
  detail::check(to > 0 && ho > 0 && wo > 0, "conv3d output is empty");
  const int k = cin * g.kt * g.kh * g.kw;
  const int p = to * ho * wo;

  // im2col: col[k][p]; index map records the source element or -1 for padding.
  std::vector<int> src(static_cast<std::size_t>(k) * p);
  MatR<T> col(k, p);
  const auto& xv = x.value().data;
  for (int ci = 0; ci < cin; ++ci)
    for (int dt = 0; dt < g.kt; ++dt)
      for (int dh = 0; dh < g.kh; ++dh)
        for (int dw = 0; dw < g.kw; ++dw) {
          const int row = ((ci * g.kt + dt) * g.kh + dh) * g.kw + dw;
          for (int ot = 0; ot < to; ++ot) {
            const int it = ot * g.st - g.pt + dt;
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * g.sh - g.ph + dh;
              for (int ow = 0; ow < wo; ++ow) {
                const int iw = ow * g.sw - g.pw + dw;
                const int pos = (ot * ho + oh) * wo + ow;
                int s = -1;
                if (it >= 0 && it < tin && ih >= 0 && ih < hin && iw >= 0 && iw < win)
                  s = ((ci * tin + it) * hin + ih) * win + iw;
                src[static_cast<std::size_t>(row) * p + pos] = s;
                col(row, pos) = s >= 0 ? xv[s] : T(0);
              }
            }
          }
        }
  Tensor<T> out({cout, to, ho, wo});
  MapR<T> om(out.data.data(), cout, p);
  CMapR<T> wm(weight.value().data.data(), cout, k);
  om.noalias() = wm * col;
  for (int co = 0; co < cout; ++co) om.row(co).array() += bias.value()[co];

  Node<T>* px = x.node();
  Node<T>* pwn = weight.node();
  Node<T>* pb = bias.node();
  return detail::make_op(
      std::move(out), {x, weight, bias},
      [px, pwn, pb, cout, k, p, col = std::move(col), src = std::move(src)](Node<T>& o) {
        CMapR<T> dy(o.grad.data(), cout, p);
        if (pwn->requires_grad)
          MapR<T>(pwn->ensure_grad().data(), cout, k).noalias() += dy * col.transpose();
        if (pb->requires_grad) {
          auto& gb = pb->ensure_grad();
          for (int co = 0; co < cout; ++co) gb[co] += dy.row(co).sum();
        }
        if (px->requires_grad) {
          MatR<T> dcol = CMapR<T>(pwn->value.data.data(), cout, k).transpose() * dy;
          auto& gx = px->ensure_grad();
          for (int r = 0; r < k; ++r)
            for (int c = 0; c < p; ++c) {
              int s = src[static_cast<std::size_t>(r) * p + c];
              if (s >= 0) gx[s] += dcol(r, c);
            }
        }
      });
}

// Spatial max pooling per frame: [C, T, H, W] -> [C, T, H', W'].
template <class T>
Var<T> max_pool_spatial(const Var<T>& x, int kernel, int stride, int pad) {
  const auto& xs = x.shape();
  detail::check(xs.size() == 4, "max_pool_spatial expects [C,T,H,W]");
  const int c = xs[0], t = xs[1], h = xs[2], w = xs[3];
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  detail::check(ho > 0 && wo > 0, "max_pool_spatial output is empty");
  Tensor<T> out({c, t, ho, wo});
  std::vector<int> arg(out.size());
  const auto& xv = x.value().data;
  std::size_t o = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int ti = 0; ti < t; ++ti)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          int best_i = -1;
          for (int dh = 0; dh < kernel; ++dh) {
            const int ih = oh * stride - pad + dh;
            if (ih < 0 || ih >= h) continue;
            for (int dw = 0; dw < kernel; ++dw) {
              const int iw = ow * stride - pad + dw;
              if (iw < 0 || iw >= w) continue;
              const int i = ((ci * t + ti) * h + ih) * w + iw;
              if (xv[i] > best) {
                best = xv[i];
                best_i = i;
              }
            }
          }
          out.data[o] = best;
          arg[o] = best_i;
        }
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, arg = std::move(arg)](Node<T>& o) {
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i)
      if (arg[i] >= 0) g[arg[i]] += o.grad[i];
  });
}

// Global average over H, W: [C, T, H, W] -> [T, C].
template <class T>
Var<T> mean_spatial(const Var<T>& x) {
  const auto& xs = x.shape();
  detail::check(xs.size() == 4, "mean_spatial expects [C,T,H,W]");
  const int c = xs[0], t = xs[1], hw = xs[2] * xs[3];
  Tensor<T> out({t, c});
  const auto& xv = x.value().data;
  for (int ci = 0; ci < c; ++ci)
    for (int ti = 0; ti < t; ++ti) {
      T s = 0;
      const std::size_t base = (static_cast<std::size_t>(ci) * t + ti) * hw;
      for (int i = 0; i < hw; ++i) s += xv[base + i];
      out.at(ti, ci) = s / T(hw);
    }
  Node<T>* px = x.node();
  return detail::make_op(std::move(out), {x}, [px, c, t, hw](Node<T>& o) {
    auto& g = px->ensure_grad();
    for (int ci = 0; ci < c; ++ci)
      for (int ti = 0; ti < t; ++ti) {
        const T d = o.grad[static_cast<std::size_t>(ti) * c + ci] / T(hw);
        const std::size_t base = (static_cast<std::size_t>(ci) * t + ti) * hw;
        for (int i = 0; i < hw; ++i) g[base + i] += d;
      }
  });
}

// Depthwise convolution along time with "same" zero padding.
// x [T x C], weight [C x K] (K odd), bias [C].
template <class T>
Var<T> depthwise_conv_time(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const int t = x.rows(), c = x.cols(), k = weight.cols();
  detail::check(weight.rows() == c && static_cast<int>(bias.size()) == c,
                "depthwise conv parameter shape mismatch");
  detail::check(k % 2 == 1, "depthwise conv kernel must be odd");
  const int half = k / 2;
  Tensor<T> out({t, c});
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (int ti = 0; ti < t; ++ti)
    for (int ci = 0; ci < c; ++ci) {
      T s = bias.value()[ci];
      for (int j = 0; j < k; ++j) {
        const int src = ti + j - half;
        if (src >= 0 && src < t) s += wv.at(ci, j) * xv.at(src, ci);
      }
      out.at(ti, ci) = s;
    }
  Node<T>* px = x.node();
  Node<T>* pw = weight.node();
  Node<T>* pb = bias.node();
  return detail::make_op(std::move(out), {x, weight, bias}, [px, pw, pb, t, c, k, half](Node<T>& o) {
    const auto& xv = px->value;
    const auto& wv = pw->value;
    for (int ti = 0; ti < t; ++ti)
      for (int ci = 0; ci < c; ++ci) {
        const T dy = o.grad[static_cast<std::size_t>(ti) * c + ci];
        if (pb->requires_grad) pb->ensure_grad()[ci] += dy;
        for (int j = 0; j < k; ++j) {
          const int src = ti + j - half;
          if (src < 0 || src >= t) continue;
          if (pw->requires_grad) pw->ensure_grad()[static_cast<std::size_t>(ci) * k + j] += dy * xv.at(src, ci);
          if (px->requires_grad) px->ensure_grad()[static_cast<std::size_t>(src) * c + ci] += dy * wv.at(ci, j);
        }
      }
  });
}

}  // namespace lipadapt::ag
