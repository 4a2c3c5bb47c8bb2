#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/network/params.hpp"
#include "lipadapt/vision/augment.hpp"

namespace lipadapt::adapt {

struct TrainConfig {
  int epochs = 5;
  double max_lr = 5e-4;
  int batch_size = 1;

  // Decoupled weight decay Adam.
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 0.01;

  // Linear one-cycle schedule.
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  std::uint64_t seed = 0;
  vision::AugmentConfig augment;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(max_lr > 0)) throw ConfigError("train: max_lr must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("train: betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("train: eps must be > 0");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (pct_start < 0 || pct_start > 1) throw ConfigError("train: pct_start outside [0, 1]");
    if (!(div_factor > 0) || !(final_div_factor > 0)) throw ConfigError("train: div factors must be > 0");
    augment.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"max_lr", c.max_lr},
          {"batch_size", c.batch_size},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"pct_start", c.pct_start},
          {"div_factor", c.div_factor},
          {"final_div_factor", c.final_div_factor},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"augment",
           {{"crop_size", c.augment.crop_size},
            {"flip_probability", c.augment.flip_probability},
            {"time_mask_max_frames", c.augment.time_mask_max_frames},
            {"time_mask_count", c.augment.time_mask_count}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "epochs") c.epochs = it->get<int>();
    else if (k == "max_lr") c.max_lr = it->get<double>();
    else if (k == "batch_size") c.batch_size = it->get<int>();
    else if (k == "beta1") c.beta1 = it->get<double>();
    else if (k == "beta2") c.beta2 = it->get<double>();
    else if (k == "eps") c.eps = it->get<double>();
    else if (k == "weight_decay") c.weight_decay = it->get<double>();
    else if (k == "pct_start") c.pct_start = it->get<double>();
    else if (k == "div_factor") c.div_factor = it->get<double>();
    else if (k == "final_div_factor") c.final_div_factor = it->get<double>();
    else if (k == "clip_norm") c.clip_norm = it->get<double>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "augment") {
      for (auto a = it->begin(); a != it->end(); ++a) {
        const auto& ak = a.key();
        if (ak == "crop_size") c.augment.crop_size = a->get<int>();
        else if (ak == "flip_probability") c.augment.flip_probability = a->get<double>();
        else if (ak == "time_mask_max_frames") c.augment.time_mask_max_frames = a->get<int>();
        else if (ak == "time_mask_count") c.augment.time_mask_count = a->get<int>();
        else throw ConfigError("train config: unknown key 'augment." + ak + "'");
      }
    } else {
      throw ConfigError("train config: unknown key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

// Hash of the canonical serialization of everything that shapes training.
inline std::string config_hash(const nlohmann::json& canonical) { return to_hex(fnv1a(canonical.dump())); }

// Step at which the schedule peaks: ceil(pct_start * total), kept inside [0, total - 1].
inline int peak_step(const TrainConfig& cfg, int total_steps) {
  const int p = static_cast<int>(std::ceil(cfg.pct_start * total_steps));
  return std::clamp(p, 0, total_steps - 1);
}

// Linear one-cycle learning rate: max_lr / div_factor at step 0, rising
// linearly to max_lr at the peak step, then falling linearly to
// max_lr / (div_factor * final_div_factor) at the last step.
inline double lr_at(const TrainConfig& cfg, int step, int total_steps) {
  if (total_steps < 1) throw ConfigError("lr_at: total_steps must be >= 1");
  if (step < 0 || step >= total_steps)
    throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + ")");
  const double start = cfg.max_lr / cfg.div_factor;
  const double end = start / cfg.final_div_factor;
  const int peak = peak_step(cfg, total_steps);
  auto lerp = [](double a, double b, double f) { return (1.0 - f) * a + f * b; };
  if (step <= peak) return peak == 0 ? cfg.max_lr : lerp(start, cfg.max_lr, static_cast<double>(step) / peak);
  return lerp(cfg.max_lr, end, static_cast<double>(step - peak) / (total_steps - 1 - peak));
}

// Adam with decoupled weight decay, applied to every parameter that received
// a gradient in the current step.
template <class T>
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, std::size_t n_params) : cfg_(cfg), m_(n_params), v_(n_params) {}

  int steps() const { return t_; }

  void step(nn::ParamStore<T>& ps, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    auto& entries = ps.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto* node = entries[i].var.node();
      if (node->grad.empty()) continue;
      auto& p = node->value.data;
      const auto& g = node->grad;
      if (m_[i].empty()) {
        m_[i].assign(p.size(), 0.0);
        v_[i].assign(p.size(), 0.0);
      }
      for (std::size_t k = 0; k < p.size(); ++k) {
        double w = static_cast<double>(p[k]);
        w -= lr * cfg_.weight_decay * w;
        const double gk = static_cast<double>(g[k]);
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1 - cfg_.beta1) * gk;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1 - cfg_.beta2) * gk * gk;
        const double mhat = m_[i][k] / bc1;
        const double vhat = v_[i][k] / bc2;
        w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        p[k] = static_cast<T>(w);
      }
    }
  }

 private:
  TrainConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <class T>
double clip_grad_norm(nn::ParamStore<T>& ps, double max_norm) {
  double sq = 0;
  for (auto& e : ps.entries())
    for (const T& g : e.var.node()->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto& e : ps.entries())
      for (T& g : e.var.node()->grad) g *= scale;
  }
  return norm;
}

}  // namespace lipadapt::adapt
