#pragma once

#include <memory>
#include <vector>

#include "lipadapt/decode/beam_search.hpp"
#include "lipadapt/network/lm.hpp"
#include "lipadapt/network/model.hpp"

namespace lipadapt::decode {

template <class T>
class ModelAttentionScorer : public AttentionScorer {
 public:
  ModelAttentionScorer(const nn::VsrModel<T>& model, ag::Var<T> encoded) : model_(model), enc_(std::move(encoded)) {}

  int vocab_size() const override { return model_.config().vocab_size; }

  std::vector<double> next_logprobs(const std::vector<int>& prefix) const override {
    const auto lp = model_.decoder_next_logprobs(enc_, prefix);
    return {lp.begin(), lp.end()};
  }

 private:
  const nn::VsrModel<T>& model_;
  ag::Var<T> enc_;
};

template <class T>
class TransformerLmScorer : public LanguageScorer {
 public:
  TransformerLmScorer(const nn::TransformerLm<T>& lm, int sos) : lm_(lm), sos_(sos) {}

  int vocab_size() const override { return lm_.config().vocab_size; }

  std::shared_ptr<const LmCache> start() const override { return wrap(lm_.start(sos_)); }

  std::shared_ptr<const LmCache> advance(const LmCache& state, int token) const override {
    return wrap(lm_.advance(static_cast<const Cache&>(state).state, token));
  }

 private:
  struct Cache : LmCache {
    nn::LmState<T> state;
  };

  static std::shared_ptr<const LmCache> wrap(nn::LmState<T> st) {
    auto c = std::make_shared<Cache>();
    c->next_logprobs.assign(st.next_logprobs.begin(), st.next_logprobs.end());
    c->state = std::move(st);
    return c;
  }

  const nn::TransformerLm<T>& lm_;
  int sos_;
};

// Every token equally likely at every step.
class UniformLm : public LanguageScorer {
 public:
  explicit UniformLm(int vocab) : vocab_(vocab) {}
  int vocab_size() const override { return vocab_; }
  std::shared_ptr<const LmCache> start() const override {
    auto c = std::make_shared<LmCache>();
    c->next_logprobs.assign(vocab_, -std::log(static_cast<double>(vocab_)));
    return c;
  }
  std::shared_ptr<const LmCache> advance(const LmCache&, int) const override { return start(); }

 private:
  int vocab_;
};

// Encodes one evaluation-transformed video and runs the joint beam search.
template <class T>
DecodeResult decode_utterance(const nn::VsrModel<T>& model, const nn::TransformerLm<T>* lm,
                              const vision::Video<T>& video, const DecodeConfig& cfg, int sos_eos) {
  ag::NoGradGuard guard;
  const auto enc = model.encode(video);
  const auto ctc_lp = model.ctc_logprobs(enc.features).value().template cast<double>();
  ModelAttentionScorer<T> att(model, enc.features);
  if (lm) {
    TransformerLmScorer<T> lms(*lm, sos_eos);
    return beam_search(ctc_lp, att, &lms, cfg, sos_eos);
  }
  return beam_search(ctc_lp, att, nullptr, cfg, sos_eos);
}

}  // namespace lipadapt::decode
