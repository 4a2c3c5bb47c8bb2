#pragma once

// Percentile bootstrap over utterances.
//
// Replica r draws its indices from its own stream Rng(derive_seed(seed, {r})),
// index = below(n), n draws per replica. Each replica's pooled WER is
// computed from the resampled counts; the interval endpoints are the 2.5th and
// 97.5th percentiles of the sorted replica values with linear interpolation
// between order statistics (position p * (B - 1)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/rng.hpp"
#include "lipadapt/eval/wer.hpp"

namespace lipadapt::eval {

inline constexpr int kDefaultReplicas = 10000;

struct BootstrapResult {
  double wer = 0;
  double ci_low = 0;
  double ci_high = 0;
  int replicas = 0;
  std::uint64_t seed = 0;
  int utterances = 0;
};

inline nlohmann::json to_json(const BootstrapResult& r) {
  return {{"wer", r.wer},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"replicas", r.replicas},
          {"seed", r.seed},
          {"utterances", r.utterances}};
}

// Linear interpolation between order statistics of an ascending sequence.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DataError("percentile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> bootstrap_replicas(const std::vector<WerBreakdown>& bs, int replicas, std::uint64_t seed) {
  const std::uint64_t n = bs.size();
  std::vector<double> out(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    long long errors = 0, words = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto& b = bs[rng.below(n)];
      errors += b.errors();
      words += b.reference_words;
    }
    // All-empty resamples only arise when most references are empty; count them as 0%.
    out[static_cast<std::size_t>(r)] = words ? 100.0 * static_cast<double>(errors) / static_cast<double>(words) : 0.0;
  }
  return out;
}

// Utterances with empty references must be filtered out by the caller.
inline BootstrapResult bootstrap_ci(const std::vector<WerBreakdown>& bs, int replicas = kDefaultReplicas,
                                    std::uint64_t seed = 0) {
  if (bs.empty()) throw DataError("bootstrap: no utterances");
  if (replicas < 100) throw ConfigError("bootstrap: at least 100 replicas required");
  BootstrapResult res;
  res.wer = pooled_wer(bs);
  auto reps = bootstrap_replicas(bs, replicas, seed);
  std::sort(reps.begin(), reps.end());
  res.ci_low = percentile_sorted(reps, 0.025);
  res.ci_high = percentile_sorted(reps, 0.975);
  res.replicas = replicas;
  res.seed = seed;
  res.utterances = static_cast<int>(bs.size());
  return res;
}

}  // namespace lipadapt::eval
