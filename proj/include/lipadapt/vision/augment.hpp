#pragma once

#include <cstdint>
#include <string>

#include "lipadapt/core/rng.hpp"
#include "lipadapt/vision/normalize.hpp"
#include "lipadapt/vision/video.hpp"

namespace lipadapt::vision {

struct AugmentConfig {
  int crop_size = 88;
  double flip_probability = 0.5;
  int time_mask_max_frames = 15;
  int time_mask_count = 1;

  void validate(int roi_size = kRoiSize) const {
    if (crop_size <= 0 || crop_size > roi_size) throw ConfigError("augment: crop_size must be in [1, 96]");
    if (time_mask_max_frames < 0) throw ConfigError("augment: time_mask_max_frames must be >= 0");
    if (time_mask_count < 0) throw ConfigError("augment: time_mask_count must be >= 0");
    if (flip_probability < 0 || flip_probability > 1) throw ConfigError("augment: flip_probability outside [0, 1]");
  }
};

// Per-sample seed: a pure function of (global seed, utterance id, epoch), so
// the order in which samples are processed never changes their augmentation.
inline std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& utterance_id, int epoch) {
  return derive_seed(global_seed, utterance_id, {static_cast<std::uint64_t>(epoch)});
}

// The random decisions behind one augment_train call, in draw order.
struct AugmentDraws {
  int crop_y = 0;
  int crop_x = 0;
  bool flip = false;
  std::vector<std::pair<int, int>> masks;  // (start, length)
};

inline AugmentDraws draw_augmentation(const AugmentConfig& cfg, int frames, std::uint64_t seed,
                                      int roi_size = kRoiSize) {
  Rng rng(seed);
  AugmentDraws d;
  const int slack = roi_size - cfg.crop_size;
  d.crop_y = static_cast<int>(rng.uniform_int(0, slack));
  d.crop_x = static_cast<int>(rng.uniform_int(0, slack));
  d.flip = rng.bernoulli(cfg.flip_probability);
  for (int m = 0; m < cfg.time_mask_count; ++m) {
    const int len = static_cast<int>(rng.uniform_int(0, std::min(cfg.time_mask_max_frames, frames)));
    const int start = static_cast<int>(rng.uniform_int(0, frames - len));
    d.masks.emplace_back(start, len);
  }
  return d;
}

template <class T>
Video<T> normalize_and_crop(const RoiSequence& seq, const NormStats& stats, int y0, int x0, int size, bool flip) {
  Video<T> out(seq.frames, size, size, T(0), seq.fps);
  const double inv = stats.inv_std();
  for (int t = 0; t < seq.frames; ++t)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int sx = flip ? x0 + size - 1 - x : x0 + x;
        out.at(t, y, x) = static_cast<T>((static_cast<double>(seq.at(t, y0 + y, sx)) - stats.mean) * inv);
      }
  return out;
}

// Horizontal mirror of every frame.
template <class T>
Video<T> flip_horizontal(const Video<T>& v) {
  Video<T> out = v;
  for (int t = 0; t < v.frames; ++t)
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x) out.at(t, y, x) = v.at(t, y, v.width - 1 - x);
  return out;
}

// Training transform: normalize, random crop, random horizontal flip, time
// masking with the sequence mean. Deterministic given `seed`.
template <class T = float>
Video<T> augment_train(const RoiSequence& seq, const NormStats& stats, const AugmentConfig& cfg, std::uint64_t seed) {
  require_roi_size(seq.height, seq.width, kRoiSize, "augment_train");
  if (seq.frames < 1) throw DataError("augment_train: empty sequence");
  cfg.validate();
  const auto d = draw_augmentation(cfg, seq.frames, seed);
  Video<T> out = normalize_and_crop<T>(seq, stats, d.crop_y, d.crop_x, cfg.crop_size, d.flip);
  if (!d.masks.empty()) {
    double mean = 0;
    for (const T& v : out.data) mean += static_cast<double>(v);
    mean /= static_cast<double>(out.data.size());
    const std::size_t fs = out.frame_size();
    for (auto [start, len] : d.masks)
      for (int t = start; t < start + len; ++t)
        std::fill(out.data.begin() + t * fs, out.data.begin() + (t + 1) * fs, static_cast<T>(mean));
  }
  return out;
}

// Evaluation transform: normalize and take the centre crop.
template <class T = float>
Video<T> transform_eval(const RoiSequence& seq, const NormStats& stats, int crop_size = 88) {
  require_roi_size(seq.height, seq.width, kRoiSize, "transform_eval");
  if (seq.frames < 1) throw DataError("transform_eval: empty sequence");
  const int off = (kRoiSize - crop_size) / 2;
  return normalize_and_crop<T>(seq, stats, off, off, crop_size, false);
}

}  // namespace lipadapt::vision
