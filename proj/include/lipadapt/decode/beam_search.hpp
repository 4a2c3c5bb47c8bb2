#pragma once

// Label-synchronous joint CTC/attention beam search with shallow LM fusion.
//
//   score = lambda * ctc_prefix + (1 - lambda) * att + beta * lm + gamma * length
//
// where `length` counts the tokens emitted after sos (eos included once a
// hypothesis ends). Terms whose weight is zero are left out entirely, so a
// -inf component never turns into NaN through 0 * -inf.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/ctc/ctc.hpp"
#include "lipadapt/ctc/prefix_score.hpp"

namespace lipadapt::decode {

struct DecodeConfig {
  int beam_size = 10;
  double ctc_weight = 0.1;        // lambda
  double lm_weight = 0.4;         // beta
  double length_penalty = 0.0;    // gamma
  double max_output_ratio = 1.0;  // tokens per input frame

  void validate() const {
    if (beam_size < 1) throw ConfigError("decode: beam_size must be >= 1");
    if (ctc_weight < 0 || ctc_weight > 1) throw ConfigError("decode: ctc_weight outside [0, 1]");
    if (lm_weight < 0) throw ConfigError("decode: lm_weight must be >= 0");
    if (!std::isfinite(length_penalty)) throw ConfigError("decode: length_penalty must be finite");
    if (!(max_output_ratio > 0)) throw ConfigError("decode: max_output_ratio must be > 0");
  }

  int max_length(int frames) const {
    return std::max(1, static_cast<int>(std::floor(max_output_ratio * frames)));
  }
};

inline nlohmann::json to_json(const DecodeConfig& c) {
  return {{"beam_size", c.beam_size},
          {"ctc_weight", c.ctc_weight},
          {"lm_weight", c.lm_weight},
          {"length_penalty", c.length_penalty},
          {"max_output_ratio", c.max_output_ratio}};
}

inline DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "beam_size") c.beam_size = it->get<int>();
    else if (k == "ctc_weight") c.ctc_weight = it->get<double>();
    else if (k == "lm_weight") c.lm_weight = it->get<double>();
    else if (k == "length_penalty") c.length_penalty = it->get<double>();
    else if (k == "max_output_ratio") c.max_output_ratio = it->get<double>();
    else throw ConfigError("decode config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

// Autoregressive attention decoder: log distribution of the next token given
// an sos-prefixed token sequence.
class AttentionScorer {
 public:
  virtual ~AttentionScorer() = default;
  virtual int vocab_size() const = 0;
  virtual std::vector<double> next_logprobs(const std::vector<int>& prefix) const = 0;
};

// Opaque incremental LM state; `next_logprobs` is the distribution of the
// token that follows everything fed so far.
struct LmCache {
  virtual ~LmCache() = default;
  std::vector<double> next_logprobs;
};

class LanguageScorer {
 public:
  virtual ~LanguageScorer() = default;
  virtual int vocab_size() const = 0;
  virtual std::shared_ptr<const LmCache> start() const = 0;  // after sos
  virtual std::shared_ptr<const LmCache> advance(const LmCache& state, int token) const = 0;
};

struct Hypothesis {
  std::vector<int> tokens;  // sos-prefixed; ends with eos once finished
  double att_logprob = 0;
  double ctc_logprob = 0;  // prefix log prob; full-labeling log prob once finished
  double lm_logprob = 0;
  ctc::PrefixScoreState<double> ctc_state;
  std::shared_ptr<const LmCache> lm_state;
  double total_score = 0;
  bool finished = false;

  int length() const { return static_cast<int>(tokens.size()) - 1; }
};

inline double score_hypothesis(const Hypothesis& h, const DecodeConfig& cfg) {
  double s = 0;
  if (cfg.ctc_weight > 0) s += cfg.ctc_weight * h.ctc_logprob;
  if (cfg.ctc_weight < 1) s += (1 - cfg.ctc_weight) * h.att_logprob;
  if (cfg.lm_weight > 0) s += cfg.lm_weight * h.lm_logprob;
  if (cfg.length_penalty != 0) s += cfg.length_penalty * h.length();
  return s;
}

// Descending score; ties go to the lexicographically smaller token sequence.
inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.total_score != b.total_score) return a.total_score > b.total_score;
  return a.tokens < b.tokens;
}

struct DecodeResult {
  std::vector<int> best;             // label ids without sos/eos
  std::vector<Hypothesis> nbest;     // finished hypotheses, best first
};

// Label ids of a hypothesis with the sos/eos markers removed.
inline std::vector<int> strip_markers(const std::vector<int>& tokens, int sos_eos) {
  std::vector<int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!(tokens[i] == sos_eos && (i == 0 || i + 1 == tokens.size()))) out.push_back(tokens[i]);
  return out;
}

// `ctc_logprobs` is the CTC head output [T x V] for the utterance; `lm` may be null.
inline DecodeResult beam_search(const Tensor<double>& ctc_logprobs, const AttentionScorer& attention,
                                const LanguageScorer* lm, const DecodeConfig& cfg, int sos_eos) {
  cfg.validate();
  if (ctc_logprobs.rank() != 2 || ctc_logprobs.rows() < 1) throw DataError("beam search: empty encoder output");
  const int vocab = attention.vocab_size();
  if (ctc_logprobs.cols() != vocab)
    throw ConfigError("beam search: vocabulary mismatch between decoder (" + std::to_string(vocab) + ") and CTC head (" +
                      std::to_string(ctc_logprobs.cols()) + ")");
  if (lm && lm->vocab_size() != vocab)
    throw ConfigError("beam search: vocabulary mismatch between decoder (" + std::to_string(vocab) + ") and LM (" +
                      std::to_string(lm->vocab_size()) + ")");
  if (sos_eos <= ctc::kBlank || sos_eos >= vocab) throw ConfigError("beam search: sos/eos id out of range");

  const bool use_ctc = cfg.ctc_weight > 0;
  const bool use_lm = lm && cfg.lm_weight > 0;
  const int max_len = cfg.max_length(ctc_logprobs.rows());
  ctc::PrefixScorer<double> scorer(ctc_logprobs, sos_eos);
  const double ninf = -std::numeric_limits<double>::infinity();

  Hypothesis root;
  root.tokens = {sos_eos};
  if (use_ctc) root.ctc_state = scorer.initial();
  if (use_lm) root.lm_state = lm->start();
  root.total_score = score_hypothesis(root, cfg);

  std::vector<Hypothesis> live{root}, finished;
  while (!live.empty()) {
    std::vector<Hypothesis> cands;
    for (const auto& h : live) {
      const auto att = attention.next_logprobs(h.tokens);
      if (static_cast<int>(att.size()) != vocab) throw ConfigError("beam search: decoder returned a wrong-sized distribution");
      const bool only_eos = h.length() >= max_len;
      for (int tok = ctc::kBlank + 1; tok < vocab; ++tok) {
        if (only_eos && tok != sos_eos) continue;
        Hypothesis c;
        c.tokens = h.tokens;
        c.tokens.push_back(tok);
        c.att_logprob = h.att_logprob + att[tok];
        if (use_ctc) {
          c.ctc_state = scorer.extend(h.ctc_state, tok);
          c.ctc_logprob = c.ctc_state.prefix_logprob;
          if (c.ctc_logprob == ninf) continue;  // infeasible under CTC: pruned
        }
        if (use_lm) {
          c.lm_logprob = h.lm_logprob + h.lm_state->next_logprobs[tok];
          if (tok != sos_eos) c.lm_state = lm->advance(*h.lm_state, tok);
        }
        c.finished = tok == sos_eos;
        c.total_score = score_hypothesis(c, cfg);
        if (std::isnan(c.total_score)) throw NumericError("beam search: NaN hypothesis score");
        if (c.total_score == ninf) continue;
        cands.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(cfg.beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (cands[i].finished) finished.push_back(std::move(cands[i]));
      else live.push_back(std::move(cands[i]));
    }
  }
  std::sort(finished.begin(), finished.end(), better);
  DecodeResult out;
  if (!finished.empty()) out.best = strip_markers(finished.front().tokens, sos_eos);
  out.nbest = std::move(finished);
  return out;
}

// Per-frame argmax followed by the CTC collapse rule.
template <class T>
std::vector<int> greedy_ctc(const Tensor<T>& logprobs) {
  std::vector<int> path(logprobs.rows());
  for (int t = 0; t < logprobs.rows(); ++t) {
    int best = 0;
    for (int v = 1; v < logprobs.cols(); ++v)
      if (logprobs.at(t, v) > logprobs.at(t, best)) best = v;
    path[t] = best;
  }
  return ctc::collapse(path);
}

}  // namespace lipadapt::decode
