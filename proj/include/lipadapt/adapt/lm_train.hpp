#pragma once

// Training loop for the character language model. The LM stays frozen during
// adaptation; this only builds it from text.

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "lipadapt/adapt/optimizer.hpp"
#include "lipadapt/core/rng.hpp"
#include "lipadapt/network/lm.hpp"

namespace lipadapt::adapt {

// Sequences are sos + text + eos. Returns the mean per-token loss of each epoch.
template <class T>
std::vector<double> train_lm(nn::TransformerLm<T>& lm, const std::vector<std::vector<int>>& sequences,
                             const TrainConfig& cfg, const std::function<void(int, double)>& on_epoch = {}) {
  cfg.validate();
  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(sequences.size()); ++i)
    if (sequences[static_cast<std::size_t>(i)].size() >= 2) usable.push_back(i);
  if (usable.empty()) throw DataError("train_lm: no sequences with at least two tokens");
  const int n = static_cast<int>(usable.size());
  const int total = cfg.epochs * ((n + cfg.batch_size - 1) / cfg.batch_size);

  AdamW<T> opt(cfg, lm.params().entries().size());
  std::vector<double> losses;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = usable;
    Rng rng(derive_seed(cfg.seed, "lm-epoch-order", {static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    double sum = 0;
    std::size_t tokens = 0;
    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const int b1 = std::min(n, b0 + cfg.batch_size);
      lm.params().zero_grad();
      std::size_t batch_tokens = 0;
      for (int i = b0; i < b1; ++i) batch_tokens += sequences[static_cast<std::size_t>(order[i])].size() - 1;
      for (int i = b0; i < b1; ++i) {
        const auto& seq = sequences[static_cast<std::size_t>(order[i])];
        auto loss = lm.sequence_loss(seq);  // summed over predicted tokens
        const double v = static_cast<double>(loss.item());
        if (!std::isfinite(v)) throw NumericError("train_lm: non-finite loss at step " + std::to_string(step));
        sum += v;
        tokens += seq.size() - 1;
        ag::backward(ag::scale(loss, static_cast<T>(1.0 / static_cast<double>(batch_tokens))));
      }
      clip_grad_norm(lm.params(), cfg.clip_norm);
      opt.step(lm.params(), lr_at(cfg, step, total));
      ++step;
    }
    losses.push_back(sum / static_cast<double>(tokens));
    if (on_epoch) on_epoch(epoch, losses.back());
  }
  return losses;
}

}  // namespace lipadapt::adapt
