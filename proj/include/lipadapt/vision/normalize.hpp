#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/vision/video.hpp"

namespace lipadapt::vision {

struct NormStats {
  double mean = 0.0;
  double variance = 1.0;
  std::uint64_t count = 0;

  static constexpr double kVarianceFloor = 1e-8;

  double inv_std() const { return 1.0 / std::sqrt(variance + kVarianceFloor); }

  nlohmann::json to_json() const { return {{"mean", mean}, {"variance", variance}, {"count", count}}; }
  static NormStats from_json(const nlohmann::json& j) {
    NormStats s;
    s.mean = j.at("mean").get<double>();
    s.variance = j.at("variance").get<double>();
    s.count = j.value("count", std::uint64_t{0});
    return s;
  }
};

// Streaming mean/variance (Welford), mergeable across partitions (Chan et al.).
class NormAccumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  template <class T>
  void add(const Video<T>& v) {
    // Accumulate each sequence separately, then merge: keeps long streams
    // from drifting and makes per-sequence order irrelevant to rounding.
    NormAccumulator local;
    for (const T& x : v.data) local.add(static_cast<double>(x));
    merge(local);
  }

  void merge(const NormAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  std::uint64_t count() const { return n_; }

  NormStats stats() const {
    if (n_ == 0) throw DataError("normalization statistics over an empty stream");
    return {mean_, m2_ / static_cast<double>(n_), n_};
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
};

// Mean and (population) variance over every pixel of every sequence.
template <class Range>
NormStats compute_norm_stats(const Range& train_rois) {
  NormAccumulator acc;
  for (const auto& roi : train_rois) acc.add(roi);
  return acc.stats();
}

}  // namespace lipadapt::vision
