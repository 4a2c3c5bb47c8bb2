#pragma once

// Character-level causal Transformer language model.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/core/error.hpp"
#include "lipadapt/network/config.hpp"
#include "lipadapt/network/layers.hpp"
#include "lipadapt/network/params.hpp"

namespace lipadapt::nn {

// Incremental inference state: per-layer key/value caches plus the
// distribution of the next token.
template <class T>
struct LmState {
  std::vector<int> tokens;
  std::vector<MatR<T>> keys, values;
  std::vector<T> next_logprobs;
};

template <class T>
class TransformerLm {
 public:
  TransformerLm(const LmConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed), ps_(seed) {
    cfg_.validate();
    const int d = cfg_.model_dim;
    embed_ = ps_.add("lm.embed.weight", {cfg_.vocab_size, d}, Init::Normal, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int i = 0; i < cfg_.layers; ++i) {
      const std::string n = "lm." + std::to_string(i);
      blocks_.push_back({LayerNorm<T>(ps_, n + ".norm1", d), MultiHeadAttention<T>(ps_, n + ".self_attn", d, cfg_.heads),
                         FeedForward<T>(ps_, n + ".ff", d, cfg_.feedforward_dim)});
    }
    norm_ = LayerNorm<T>(ps_, "lm.after_norm", d);
    out_ = Linear<T>(ps_, "lm.output", d, cfg_.vocab_size);
  }

  TransformerLm(TransformerLm&&) = default;

  const LmConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  // Logits for every position of `tokens`: [n x V].
  ag::Var<T> logits(const std::vector<int>& tokens) const {
    check_tokens(tokens);
    auto x = add_positions(ag::embedding(embed_, tokens));
    const auto mask = causal_mask<T>(static_cast<int>(tokens.size()));
    for (const auto& b : blocks_) {
      auto h = b.norm(x);
      x = ag::add(x, b.attn(h, h, &mask));
      x = ag::add(x, b.ff(x));
    }
    return out_(norm_(x));
  }

  // Uncached: recomputes the whole prefix.
  std::vector<T> next_logprobs(const std::vector<int>& prefix) const {
    if (prefix.empty()) throw DataError("lm: prefix must start with sos");
    ag::NoGradGuard guard;
    auto lp = ag::log_softmax_rows(logits(prefix));
    const int v = lp.cols();
    const auto& d = lp.value().data;
    return std::vector<T>(d.end() - v, d.end());
  }

  // Summed next-token cross entropy for teacher-forced training on one sequence
  // (sos + text + eos).
  ag::Var<T> sequence_loss(const std::vector<int>& sequence) const {
    if (sequence.size() < 2) throw DataError("lm: training sequence needs at least two tokens");
    std::vector<int> in(sequence.begin(), sequence.end() - 1);
    std::vector<int> tgt(sequence.begin() + 1, sequence.end());
    return ag::smoothed_cross_entropy(logits(in), tgt, T(0));
  }

  LmState<T> start(int sos) const {
    LmState<T> s;
    s.keys.assign(blocks_.size(), MatR<T>(0, cfg_.model_dim));
    s.values.assign(blocks_.size(), MatR<T>(0, cfg_.model_dim));
    return advance(s, sos);
  }

  // Cached: feeds one token and returns the successor state.
  LmState<T> advance(const LmState<T>& prev, int token) const {
    check_tokens({token});
    using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    const int d = cfg_.model_dim, pos = static_cast<int>(prev.tokens.size());
    const int dk = d / cfg_.heads;
    LmState<T> s = prev;
    s.tokens.push_back(token);

    const auto pe = positional_encoding<T>(pos + 1, d);
    Row x = embed_.value().mat().row(token) * static_cast<T>(std::sqrt(static_cast<double>(d)));
    for (int c = 0; c < d; ++c) x(c) += pe.at(pos, c);

    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const auto& b = blocks_[l];
      Row h = ln(x, b.norm);
      Row q = lin(h, b.attn.q), k = lin(h, b.attn.k), v = lin(h, b.attn.v);
      auto& K = s.keys[l];
      auto& V = s.values[l];
      K.conservativeResize(pos + 1, d);
      V.conservativeResize(pos + 1, d);
      K.row(pos) = k;
      V.row(pos) = v;
      Row att(d);
      const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
      for (int hd = 0; hd < cfg_.heads; ++hd) {
        Eigen::Matrix<T, Eigen::Dynamic, 1> sc = K.middleCols(hd * dk, dk) * q.segment(hd * dk, dk).transpose() * inv;
        sc = (sc.array() - sc.maxCoeff()).exp().matrix();
        sc /= sc.sum();
        att.segment(hd * dk, dk) = sc.transpose() * V.middleCols(hd * dk, dk);
      }
      x += lin(att, b.attn.out);
      Row f = ln(x, b.ff.norm);
      f = lin(f, b.ff.w1);
      for (int c = 0; c < f.size(); ++c) f(c) = f(c) / (T(1) + std::exp(-f(c)));
      x += lin(f, b.ff.w2);
    }
    Row z = lin(ln(x, norm_), out_);
    const T mx = z.maxCoeff();
    const T lse = mx + std::log((z.array() - mx).exp().sum());
    s.next_logprobs.resize(z.size());
    for (int i = 0; i < z.size(); ++i) s.next_logprobs[i] = z(i) - lse;
    return s;
  }

 private:
  struct Block {
    LayerNorm<T> norm;
    MultiHeadAttention<T> attn;
    FeedForward<T> ff;
  };

  void check_tokens(const std::vector<int>& tokens) const {
    for (int t : tokens)
      if (t < 0 || t >= cfg_.vocab_size)
        throw DataError("lm: token " + std::to_string(t) + " out of range [0, " + std::to_string(cfg_.vocab_size) + ")");
  }

  template <class Row>
  static Row lin(const Row& x, const Linear<T>& l) {
    Row y = x * l.weight.value().mat().transpose();
    for (int i = 0; i < y.size(); ++i) y(i) += l.bias.value()[i];
    return y;
  }

  template <class Row>
  static Row ln(const Row& x, const LayerNorm<T>& n) {
    const T mean = x.mean();
    const T var = (x.array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + T(1e-5));
    Row y(x.size());
    for (int i = 0; i < x.size(); ++i) y(i) = (x(i) - mean) * inv * n.gamma.value()[i] + n.beta.value()[i];
    return y;
  }

  LmConfig cfg_;
  std::uint64_t seed_;
  ParamStore<T> ps_;
  ag::Var<T> embed_;
  std::vector<Block> blocks_;
  LayerNorm<T> norm_;
  Linear<T> out_;
};

// exp of the mean next-token negative log-likelihood over sos + text + eos
// sequences, eos prediction included.
template <class T>
double lm_perplexity(const TransformerLm<T>& lm, const std::vector<std::vector<int>>& sequences) {
  double nll = 0;
  std::size_t count = 0;
  ag::NoGradGuard guard;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    nll += static_cast<double>(lm.sequence_loss(seq).item());
    count += seq.size() - 1;
  }
  if (count == 0) throw DataError("lm perplexity: no scorable tokens");
  return std::exp(nll / static_cast<double>(count));
}

}  // namespace lipadapt::nn
