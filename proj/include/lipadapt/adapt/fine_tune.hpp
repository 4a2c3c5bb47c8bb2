#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lipadapt/adapt/optimizer.hpp"
#include "lipadapt/adapt/strategy.hpp"
#include "lipadapt/core/rng.hpp"
#include "lipadapt/network/checkpoint.hpp"
#include "lipadapt/network/model.hpp"
#include "lipadapt/vision/augment.hpp"
#include "lipadapt/vision/normalize.hpp"

namespace lipadapt::adapt {

// One prepared utterance: its 96x96 mouth ROI sequence in [0, 1] and the
// encoded transcript (label ids, no sos/eos).
struct TrainSample {
  std::string id;
  vision::RoiSequence roi;
  std::vector<int> target;
};

struct FineTuneStats {
  std::vector<double> epoch_losses;  // mean hybrid loss per epoch
  int steps = 0;                     // optimizer steps taken
};

template <class T>
struct FineTuneResult {
  nn::VsrModel<T> model;
  nn::CheckpointMeta meta;
  FineTuneStats stats;
  std::string fingerprint;
  std::string config_hash;
};

// Canonical description of everything that shapes a fine-tuning run.
inline nlohmann::json training_signature(const TrainConfig& cfg, const nn::ModelConfig& model) {
  return {{"train", to_json(cfg)}, {"model", nn::to_json(model)}};
}

inline vision::NormStats norm_stats_of(const nn::CheckpointMeta& meta) {
  if (meta.norm_stats.is_null()) throw DataError("parent checkpoint carries no normalization statistics");
  return vision::NormStats::from_json(meta.norm_stats);
}

// Fine-tunes a copy of `parent` on `dataset` with every parameter trainable.
// Runs epochs x ceil(|dataset| / batch_size) optimizer steps; the epoch order
// comes from (seed, epoch) and each sample's augmentation from
// (seed, utterance id, epoch). Appends `tag` to the parent's lineage.
template <class T>
FineTuneResult<T> fine_tune(const nn::VsrModel<T>& parent, const nn::CheckpointMeta& parent_meta,
                            const std::vector<const TrainSample*>& dataset, const TrainConfig& cfg,
                            const std::string& tag, int sos_eos,
                            const std::function<void(int, double)>& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw DataError("fine_tune: empty dataset");
  const auto stats = norm_stats_of(parent_meta);
  auto model = parent.clone();
  const double alpha = model.config().ctc_weight;
  const int n = static_cast<int>(dataset.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int total = cfg.epochs * per_epoch;

  AdamW<T> opt(cfg, model.params().entries().size());
  FineTuneStats st;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "epoch-order", {static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    double epoch_loss = 0;
    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const int b1 = std::min(n, b0 + cfg.batch_size);
      model.params().zero_grad();
      for (int i = b0; i < b1; ++i) {
        const TrainSample& s = *dataset[static_cast<std::size_t>(order[i])];
        const auto video = vision::augment_train<T>(s.roi, stats, cfg.augment, vision::sample_seed(cfg.seed, s.id, epoch));
        auto loss = model.hybrid_loss(video, s.target, sos_eos, alpha);
        const double value = static_cast<double>(loss.total.item());
        if (!std::isfinite(value))
          throw NumericError("non-finite loss at step " + std::to_string(step) + " (utterance '" + s.id + "')");
        epoch_loss += value;
        ag::backward(b1 - b0 == 1 ? loss.total : ag::scale(loss.total, static_cast<T>(1.0 / (b1 - b0))));
      }
      clip_grad_norm(model.params(), cfg.clip_norm);
      opt.step(model.params(), lr_at(cfg, step, total));
      ++step;
    }
    st.epoch_losses.push_back(epoch_loss / n);
    if (on_epoch) on_epoch(epoch, st.epoch_losses.back());
  }
  st.steps = step;

  std::vector<std::string> ids;
  for (const auto* s : dataset) ids.push_back(s->id);
  FineTuneResult<T> out{std::move(model), parent_meta, st, dataset_fingerprint(ids),
                        config_hash(training_signature(cfg, parent.config()))};
  out.meta.lineage.push_back({tag, out.fingerprint, out.config_hash});
  out.meta.id.clear();
  return out;
}

}  // namespace lipadapt::adapt
