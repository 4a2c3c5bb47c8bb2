#pragma once

// CTC over the blank-augmented label lattice, computed entirely in log space.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/tensor.hpp"

namespace lipadapt::ctc {

inline constexpr int kBlank = 0;

template <class T>
inline T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

template <class T>
inline T log_add(T a, T b) {
  if (a == neg_inf<T>()) return b;
  if (b == neg_inf<T>()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <class T>
inline T log_add(T a, T b, T c) {
  return log_add(log_add(a, b), c);
}

// Minimum number of frames needed to emit `target`: one per label plus one
// separating blank between each pair of equal neighbours.
inline int min_frames(const std::vector<int>& target) {
  int need = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

inline bool feasible(int frames, const std::vector<int>& target) {
  return frames >= min_frames(target);
}

// Merge adjacent repeats, then drop blanks.
inline std::vector<int> collapse(const std::vector<int>& alignment) {
  std::vector<int> out;
  int prev = -1;
  for (int tok : alignment) {
    if (tok != prev && tok != kBlank) out.push_back(tok);
    prev = tok;
  }
  return out;
}

template <class T>
struct CtcResult {
  T loss;
  Tensor<T> grad;  // d loss / d logprobs, shape [T x V]
};

namespace detail {

template <class T>
void validate(const Tensor<T>& logprobs, const std::vector<int>& target) {
  if (logprobs.rank() != 2 || logprobs.rows() < 1)
    throw DataError("ctc: log-probability matrix must be [T x V] with T >= 1");
  const int v = logprobs.cols();
  for (int tok : target) {
    if (tok == kBlank) throw DataError("ctc: target contains the blank symbol");
    if (tok < 0 || tok >= v) throw DataError("ctc: target token " + std::to_string(tok) + " outside vocabulary");
  }
  if (!feasible(logprobs.rows(), target))
    throw NumericError("ctc: infeasible target: " + std::to_string(target.size()) + " labels need " +
                       std::to_string(min_frames(target)) + " frames, got " +
                       std::to_string(logprobs.rows()));
}

}  // namespace detail

// -log P(target | logprobs) by forward-backward, plus the gradient with respect
// to every entry of `logprobs` (treated as free inputs): -occupancy(t, k).
template <class T>
CtcResult<T> ctc_loss(const Tensor<T>& logprobs, const std::vector<int>& target) {
  detail::validate(logprobs, target);
  const int frames = logprobs.rows();
  const int vocab = logprobs.cols();
  const int s_len = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(s_len, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

  auto lp = [&](int t, int s) { return logprobs.at(t, ext[s]); };
  auto skip_ok = [&](int s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  const T ninf = neg_inf<T>();
  MatR<T> alpha = MatR<T>::Constant(frames, s_len, ninf);
  MatR<T> beta = MatR<T>::Constant(frames, s_len, ninf);

  alpha(0, 0) = lp(0, 0);
  if (s_len > 1) alpha(0, 1) = lp(0, 1);
  for (int t = 1; t < frames; ++t)
    for (int s = 0; s < s_len; ++s) {
      T a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (skip_ok(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == ninf ? ninf : a + lp(t, s);
    }

  beta(frames - 1, s_len - 1) = lp(frames - 1, s_len - 1);
  if (s_len > 1) beta(frames - 1, s_len - 2) = lp(frames - 1, s_len - 2);
  for (int t = frames - 2; t >= 0; --t)
    for (int s = 0; s < s_len; ++s) {
      T b = beta(t + 1, s);
      if (s + 1 < s_len) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < s_len && skip_ok(s + 2)) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == ninf ? ninf : b + lp(t, s);
    }

  T log_p = alpha(frames - 1, s_len - 1);
  if (s_len > 1) log_p = log_add(log_p, alpha(frames - 1, s_len - 2));
  if (log_p == ninf) throw NumericError("ctc: target has zero probability under the lattice");

  CtcResult<T> res{-log_p, Tensor<T>({frames, vocab})};
  // occupancy(t, k) = sum_{s: ext[s]=k} alpha(t,s) beta(t,s) / (y_t(k) P)
  for (int t = 0; t < frames; ++t) {
    std::vector<T> occ(vocab, ninf);
    for (int s = 0; s < s_len; ++s) {
      if (alpha(t, s) == ninf || beta(t, s) == ninf) continue;
      occ[ext[s]] = log_add(occ[ext[s]], alpha(t, s) + beta(t, s) - lp(t, s));
    }
    for (int k = 0; k < vocab; ++k)
      res.grad.at(t, k) = occ[k] == ninf ? T(0) : -std::exp(occ[k] - log_p);
  }
  return res;
}

// Gradient with respect to pre-softmax logits when logprobs = log_softmax(logits):
// softmax(logits) - occupancy.
template <class T>
Tensor<T> grad_wrt_logits(const Tensor<T>& logprobs, const Tensor<T>& grad_logprobs) {
  Tensor<T> g(logprobs.shape);
  for (int t = 0; t < logprobs.rows(); ++t) {
    T sum_g = 0;
    for (int k = 0; k < logprobs.cols(); ++k) sum_g += grad_logprobs.at(t, k);
    for (int k = 0; k < logprobs.cols(); ++k)
      g.at(t, k) = grad_logprobs.at(t, k) - std::exp(logprobs.at(t, k)) * sum_g;
  }
  return g;
}

}  // namespace lipadapt::ctc
