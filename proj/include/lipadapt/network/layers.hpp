#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/network/params.hpp"

namespace lipadapt::nn {

template <class T>
struct Linear {
  ag::Var<T> weight, bias;
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int in_dim, int out_dim) : in(in_dim), out(out_dim) {
    weight = ps.add(name + ".weight", {out_dim, in_dim}, Init::Uniform, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    bias = ps.add(name + ".bias", {out_dim}, Init::Zeros);
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::linear(x, weight, bias); }
};

template <class T>
struct LayerNorm {
  ag::Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, int dim) {
    gamma = ps.add(name + ".gamma", {dim}, Init::Ones);
    beta = ps.add(name + ".beta", {dim}, Init::Zeros);
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::layer_norm(x, gamma, beta); }
};

// Per-channel normalization over the remaining extent ([C x N] rows).
template <class T>
struct ChannelNorm {
  ag::Var<T> gamma, beta;

  ChannelNorm() = default;
  ChannelNorm(ParamStore<T>& ps, const std::string& name, int channels) {
    gamma = ps.add(name + ".gamma", {channels}, Init::Ones);
    beta = ps.add(name + ".beta", {channels}, Init::Zeros);
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::channel_norm(x, gamma, beta); }
};

// Pre-norm position-wise feed-forward branch: w2(swish(w1(norm(x)))).
template <class T>
struct FeedForward {
  LayerNorm<T> norm;
  Linear<T> w1, w2;

  FeedForward() = default;
  FeedForward(ParamStore<T>& ps, const std::string& name, int dim, int hidden)
      : norm(ps, name + ".norm", dim), w1(ps, name + ".w1", dim, hidden), w2(ps, name + ".w2", hidden, dim) {}

  ag::Var<T> operator()(const ag::Var<T>& x) const { return w2(ag::silu(w1(norm(x)))); }
};

template <class T>
Tensor<T> causal_mask(int n) {
  Tensor<T> m({n, n});
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c) m.at(r, c) = -std::numeric_limits<T>::infinity();
  return m;
}

// Sinusoidal positional table [n x d].
template <class T>
Tensor<T> positional_encoding(int n, int d) {
  Tensor<T> pe({n, d});
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < d; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / d);
      pe.at(t, i) = static_cast<T>(std::sin(t * freq));
      if (i + 1 < d) pe.at(t, i + 1) = static_cast<T>(std::cos(t * freq));
    }
  return pe;
}

// x * sqrt(d) + PE
template <class T>
ag::Var<T> add_positions(const ag::Var<T>& x) {
  const int n = x.rows(), d = x.cols();
  return ag::add_const(ag::scale(x, static_cast<T>(std::sqrt(static_cast<double>(d)))), positional_encoding<T>(n, d));
}

template <class T>
struct MultiHeadAttention {
  Linear<T> q, k, v, out;
  int heads = 1;
  int dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int model_dim, int n_heads)
      : q(ps, name + ".q", model_dim, model_dim),
        k(ps, name + ".k", model_dim, model_dim),
        v(ps, name + ".v", model_dim, model_dim),
        out(ps, name + ".out", model_dim, model_dim),
        heads(n_heads),
        dim(model_dim) {}

  // query [n x d], memory [m x d]; mask, when given, is an additive [n x m] table.
  ag::Var<T> operator()(const ag::Var<T>& query, const ag::Var<T>& memory, const Tensor<T>* mask = nullptr) const {
    const int dk = dim / heads;
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    auto qq = q(query);
    auto kk = k(memory);
    auto vv = v(memory);
    std::vector<ag::Var<T>> parts;
    parts.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      auto qh = ag::slice_cols(qq, h * dk, dk);
      auto kh = ag::slice_cols(kk, h * dk, dk);
      auto vh = ag::slice_cols(vv, h * dk, dk);
      auto scores = ag::scale(ag::matmul_nt(qh, kh), inv);
      if (mask) scores = ag::add_const(scores, *mask);
      parts.push_back(ag::matmul(ag::softmax_rows(scores), vh));
    }
    return out(heads == 1 ? parts[0] : ag::concat_cols(parts));
  }
};

}  // namespace lipadapt::nn
