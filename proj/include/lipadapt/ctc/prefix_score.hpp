#pragma once

// Label-synchronous CTC prefix scoring for joint CTC/attention decoding.
//
// For a prefix g the state keeps, for every frame t, the log mass of all
// alignments of frames [0, t] that collapse to exactly g and end in a
// non-blank (r_n) or a blank (r_b). Extending g by a label c yields the log
// probability that the full output *begins with* g+c; extending by eos
// yields the log probability that the output *equals* g.

#include <memory>
#include <string>
#include <vector>

#include "lipadapt/ctc/ctc.hpp"

namespace lipadapt::ctc {

template <class T>
struct PrefixScoreState {
  std::vector<T> r_nonblank;  // log mass, per frame
  std::vector<T> r_blank;     // log mass, per frame
  int last = -1;              // last label of the prefix, -1 when empty
  T prefix_logprob = T(0);    // log P(output starts with prefix)
};

template <class T>
class PrefixScorer {
 public:
  // `logprobs` is [T x V]; `eos` is the end-of-sentence id used by the caller.
  PrefixScorer(Tensor<T> logprobs, int eos) : lp_(std::move(logprobs)), eos_(eos) {
    if (lp_.rank() != 2 || lp_.rows() < 1) throw DataError("prefix scorer: empty log-probability matrix");
  }

  int frames() const { return lp_.rows(); }
  int vocab() const { return lp_.cols(); }
  int eos() const { return eos_; }
  const Tensor<T>& logprobs() const { return lp_; }

  PrefixScoreState<T> initial() const {
    PrefixScoreState<T> st;
    const int n = frames();
    st.r_nonblank.assign(n, neg_inf<T>());
    st.r_blank.assign(n, neg_inf<T>());
    T acc = 0;
    for (int t = 0; t < n; ++t) {
      acc += lp_.at(t, kBlank);
      st.r_blank[t] = acc;
    }
    st.prefix_logprob = T(0);
    return st;
  }

  // Log probability that the complete labeling equals the prefix in `st`.
  T final_logprob(const PrefixScoreState<T>& st) const {
    return log_add(st.r_nonblank.back(), st.r_blank.back());
  }

  // Extends the prefix by `token`. For eos the returned state is terminal and
  // carries the full-labeling log probability as its prefix_logprob.
  PrefixScoreState<T> extend(const PrefixScoreState<T>& g, int token) const {
    if (token < 0 || token >= vocab()) throw DataError("prefix scorer: token " + std::to_string(token) + " out of vocabulary");
    if (token == kBlank) throw DataError("prefix scorer: cannot extend with blank");
    PrefixScoreState<T> h;
    if (token == eos_) {
      h = g;
      h.prefix_logprob = final_logprob(g);
      return h;
    }
    const int n = frames();
    const T ninf = neg_inf<T>();
    h.r_nonblank.assign(n, ninf);
    h.r_blank.assign(n, ninf);
    h.last = token;
    const bool empty = g.last < 0;
    h.r_nonblank[0] = empty ? lp_.at(0, token) : ninf;
    T psi = h.r_nonblank[0];
    for (int t = 1; t < n; ++t) {
      const T phi = token == g.last ? g.r_blank[t - 1] : log_add(g.r_blank[t - 1], g.r_nonblank[t - 1]);
      const T enter = phi == ninf ? ninf : phi + lp_.at(t, token);
      const T stay = log_add(h.r_nonblank[t - 1], phi);
      h.r_nonblank[t] = stay == ninf ? ninf : stay + lp_.at(t, token);
      const T b = log_add(h.r_blank[t - 1], h.r_nonblank[t - 1]);
      h.r_blank[t] = b == ninf ? ninf : b + lp_.at(t, kBlank);
      psi = log_add(psi, enter);
    }
    h.prefix_logprob = psi;
    return h;
  }

  // Batched expansion over candidate tokens; results align with `tokens`.
  std::vector<PrefixScoreState<T>> extend_all(const PrefixScoreState<T>& g, const std::vector<int>& tokens) const {
    std::vector<PrefixScoreState<T>> out;
    out.reserve(tokens.size());
    for (int tok : tokens) out.push_back(extend(g, tok));
    return out;
  }

  // Prefix log probability computed from scratch by folding extend() over `prefix`.
  T score_prefix(const std::vector<int>& prefix) const {
    auto st = initial();
    for (int tok : prefix) st = extend(st, tok);
    return st.prefix_logprob;
  }

 private:
  Tensor<T> lp_;
  int eos_;
};

// One incremental step: new state plus the increment of the prefix score.
template <class T>
std::pair<PrefixScoreState<T>, T> prefix_step(const PrefixScorer<T>& scorer, const PrefixScoreState<T>& state,
                                              int token) {
  auto next = scorer.extend(state, token);
  return {next, next.prefix_logprob - state.prefix_logprob};
}

}  // namespace lipadapt::ctc
