#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"

namespace lipadapt::eval {

struct SpeakerStats {
  std::string speaker_id;
  double mean_words_per_utterance = 0;
  double lm_perplexity_on_test = 0;
  double train_seconds = 0;
};

// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

// Pearson correlation of average ranks. Empty when either input is constant.
inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("spearman: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

struct StatCorrelation {
  std::string statistic;
  std::optional<double> rho;  // empty: undefined (constant statistic or WER)
};

struct CorrelationReport {
  int sample_size = 0;
  std::vector<StatCorrelation> correlations;
};

inline nlohmann::json to_json(const CorrelationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : r.correlations)
    rows.push_back({{"statistic", c.statistic}, {"spearman_rho", c.rho ? nlohmann::json(*c.rho) : nlohmann::json(nullptr)},
                    {"defined", c.rho.has_value()}});
  return {{"sample_size", r.sample_size}, {"correlations", rows}};
}

// Spearman rank correlation of each per-speaker statistic against WER.
inline CorrelationReport correlate_stats(const std::vector<SpeakerStats>& stats, const std::map<std::string, double>& wers) {
  std::vector<const SpeakerStats*> used;
  std::vector<double> w;
  for (const auto& s : stats) {
    auto it = wers.find(s.speaker_id);
    if (it == wers.end()) continue;
    used.push_back(&s);
    w.push_back(it->second);
  }
  if (used.size() < 3) throw DataError("correlate_stats: need at least 3 speakers with both statistics and WER");
  CorrelationReport rep;
  rep.sample_size = static_cast<int>(used.size());
  auto column = [&](auto member) {
    std::vector<double> v;
    for (const auto* s : used) v.push_back(s->*member);
    return v;
  };
  rep.correlations.push_back({"mean_words_per_utterance", spearman(column(&SpeakerStats::mean_words_per_utterance), w)});
  rep.correlations.push_back({"lm_perplexity_on_test", spearman(column(&SpeakerStats::lm_perplexity_on_test), w)});
  rep.correlations.push_back({"train_seconds", spearman(column(&SpeakerStats::train_seconds), w)});
  return rep;
}

}  // namespace lipadapt::eval
