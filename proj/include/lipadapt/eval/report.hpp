#pragma once

// Per-speaker and aggregate WER reports.
//
// Two aggregations are emitted side by side and always labeled:
//   pooled        errors summed over all utterances / reference words summed
//   speaker-mean  unweighted mean of the per-speaker WERs

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/core/rng.hpp"
#include "lipadapt/eval/bootstrap.hpp"
#include "lipadapt/eval/fixtures.hpp"
#include "lipadapt/eval/results.hpp"

namespace lipadapt::eval {

struct SpeakerRow {
  std::string speaker;
  std::string strategy;
  std::string ft_set;
  double wer = 0;
  double ci_low = 0;
  double ci_high = 0;

  bool operator==(const SpeakerRow&) const = default;
};

struct AggregateRow {
  std::string strategy;
  std::string ft_set;
  BootstrapResult pooled;
  double speaker_mean = 0;
  int n_speakers = 0;
};

struct Report {
  std::vector<SpeakerRow> speakers;
  std::vector<AggregateRow> aggregates;
  std::vector<std::string> missing;   // "strategy/ft_set/speaker" without results
  std::vector<std::string> warnings;  // e.g. excluded empty references
};

inline int strategy_order(const std::string& s) {
  if (s == "MST") return 0;
  if (s == "SAT") return 1;
  if (s == "TS-SAT") return 2;
  return 3;
}

inline bool key_less(const std::tuple<std::string, std::string>& a, const std::tuple<std::string, std::string>& b) {
  const int oa = strategy_order(std::get<0>(a)), ob = strategy_order(std::get<0>(b));
  if (oa != ob) return oa < ob;
  return a < b;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Unweighted mean of per-speaker WERs.
inline double speaker_mean(const std::vector<double>& per_speaker_wer) {
  if (per_speaker_wer.empty()) throw DataError("speaker mean of an empty set");
  return mean_of(per_speaker_wer);
}

// `expected_speakers`, when non-empty, lists speakers every (strategy, ft_set)
// is expected to cover; absent combinations are reported as missing.
inline Report speaker_report(const std::vector<EvalRun>& runs, int replicas = kDefaultReplicas,
                             std::uint64_t seed = 0, const std::vector<std::string>& expected_speakers = {}) {
  using Key = std::tuple<std::string, std::string, std::string>;  // strategy, ft_set, speaker
  std::map<Key, std::vector<WerBreakdown>> groups;
  Report rep;
  std::size_t total = 0;
  for (const auto& run : runs)
    for (const auto& r : run.results) {
      ++total;
      if (r.counts.reference_words == 0) {
        rep.warnings.push_back("excluded empty reference: " + run.meta.run_id + "/" + r.utterance_id);
        continue;
      }
      const std::string spk = !r.speaker_id.empty() ? r.speaker_id : run.meta.speaker.value_or("");
      groups[{run.meta.strategy, run.meta.ft_set, spk}].push_back(r.counts);
    }
  if (total == 0) throw DataError("empty report: no evaluation results");
  if (groups.empty()) throw DataError("empty report: every reference is empty");

  std::map<std::tuple<std::string, std::string>, std::vector<WerBreakdown>> pooled;
  std::map<std::tuple<std::string, std::string>, std::vector<double>> per_speaker;
  for (const auto& [key, bs] : groups) {
    const auto& [strategy, ft, spk] = key;
    const auto b = bootstrap_ci(bs, replicas, derive_seed(seed, strategy + "/" + ft + "/" + spk));
    rep.speakers.push_back({spk, strategy, ft, b.wer, b.ci_low, b.ci_high});
    auto& pool = pooled[{strategy, ft}];
    pool.insert(pool.end(), bs.begin(), bs.end());
    per_speaker[{strategy, ft}].push_back(b.wer);
  }
  std::vector<std::tuple<std::string, std::string>> keys;
  for (const auto& [k, v] : pooled) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), key_less);
  for (const auto& k : keys) {
    AggregateRow a;
    a.strategy = std::get<0>(k);
    a.ft_set = std::get<1>(k);
    a.pooled = bootstrap_ci(pooled[k], replicas, derive_seed(seed, a.strategy + "/" + a.ft_set));
    a.speaker_mean = speaker_mean(per_speaker[k]);
    a.n_speakers = static_cast<int>(per_speaker[k].size());
    rep.aggregates.push_back(a);
    for (const auto& spk : expected_speakers)
      if (!groups.count({a.strategy, a.ft_set, spk})) rep.missing.push_back(a.strategy + "/" + a.ft_set + "/" + spk);
  }
  std::stable_sort(rep.speakers.begin(), rep.speakers.end(), [](const SpeakerRow& x, const SpeakerRow& y) {
    return std::make_tuple(x.ft_set, x.speaker, strategy_order(x.strategy), x.strategy) <
           std::make_tuple(y.ft_set, y.speaker, strategy_order(y.strategy), y.strategy);
  });
  return rep;
}

// Shortest decimal that parses back to the same double.
inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

// "wer±half" with the half width of the (possibly asymmetric) interval.
inline std::string cell(double wer, double lo, double hi) { return one_decimal(wer) + "±" + one_decimal((hi - lo) / 2); }

inline constexpr const char* kPlotHeader = "speaker,strategy,ft_set,wer,ci_low,ci_high";

inline void write_plot_data(const std::vector<SpeakerRow>& rows, std::ostream& out) {
  out << kPlotHeader << '\n';
  for (const auto& r : rows)
    out << r.speaker << ',' << r.strategy << ',' << r.ft_set << ',' << shortest(r.wer) << ',' << shortest(r.ci_low)
        << ',' << shortest(r.ci_high) << '\n';
}

inline void write_plot_data(const std::vector<SpeakerRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_plot_data(rows, out);
}

inline std::vector<SpeakerRow> read_plot_data(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPlotHeader) throw DataError("plot data: missing or unexpected header");
  std::vector<SpeakerRow> rows;
  auto num = [](const std::string& s) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("plot data: bad number '" + s + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(part);
    if (f.size() != 6) throw DataError("plot data: expected 6 fields in '" + line + "'");
    rows.push_back({f[0], f[1], f[2], num(f[3]), num(f[4]), num(f[5])});
  }
  return rows;
}

inline std::vector<SpeakerRow> read_plot_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return read_plot_data(in);
}

// Delimited aggregate table (tab separated) with both aggregations.
inline std::string render_aggregate_tsv(const Report& rep) {
  std::ostringstream os;
  os << "strategy\tft_set\tpooled_wer\tpooled_ci_low\tpooled_ci_high\tpooled\tspeaker_mean_wer\tn_speakers\tutterances\n";
  for (const auto& a : rep.aggregates)
    os << a.strategy << '\t' << a.ft_set << '\t' << shortest(a.pooled.wer) << '\t' << shortest(a.pooled.ci_low) << '\t'
       << shortest(a.pooled.ci_high) << '\t' << cell(a.pooled.wer, a.pooled.ci_low, a.pooled.ci_high) << '\t'
       << shortest(a.speaker_mean) << '\t' << a.n_speakers << '\t' << a.pooled.utterances << '\n';
  return os.str();
}

// Strategy x fine-tuning-set table in the layout of the aggregate results table.
inline std::string render_aggregate_table(const Report& rep) {
  std::set<std::string> fts;
  std::vector<std::string> strategies;
  for (const auto& a : rep.aggregates) {
    fts.insert(a.ft_set);
    if (std::find(strategies.begin(), strategies.end(), a.strategy) == strategies.end()) strategies.push_back(a.strategy);
  }
  std::ostringstream os;
  os << "WER (%) with 95% bootstrap CI, pooled over utterances [speaker-mean in brackets]\n";
  os << "strategy";
  for (const auto& f : fts) os << '\t' << f;
  os << '\n';
  for (const auto& s : strategies) {
    os << s;
    for (const auto& f : fts) {
      os << '\t';
      auto it = std::find_if(rep.aggregates.begin(), rep.aggregates.end(),
                             [&](const AggregateRow& a) { return a.strategy == s && a.ft_set == f; });
      if (it == rep.aggregates.end()) os << "-";
      else os << cell(it->pooled.wer, it->pooled.ci_low, it->pooled.ci_high) << " [" << one_decimal(it->speaker_mean) << "]";
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Published fixtures

inline std::string render_fixture_table() {
  std::ostringstream os;
  os << "WER (%) with 95% CI, published values (" << fixtures::kVersion << ")\n";
  os << "strategy\tDEV\tTRAIN\n";
  for (const auto& row : fixtures::table())
    os << row.strategy << '\t' << fixtures::render(row.dev) << '\t' << fixtures::render(row.train) << '\n';
  return os.str();
}

inline std::vector<SpeakerRow> fixture_plot_rows() {
  std::vector<SpeakerRow> rows;
  const auto& spk = fixtures::speakers();
  for (std::size_t i = 0; i < spk.size(); ++i)
    for (const auto& series : fixtures::figure()) {
      const auto& c = series.cells[i];
      rows.push_back({spk[i], series.strategy, fixtures::kFigureFtSet, c.wer_tenths / 10.0,
                      (c.wer_tenths - c.ci_tenths) / 10.0, (c.wer_tenths + c.ci_tenths) / 10.0});
    }
  return rows;
}

inline std::string render_fixture_figure() {
  std::ostringstream os;
  os << "per-speaker WER (%) with 95% CI, fine-tuned on " << fixtures::kFigureFtSet << " (" << fixtures::kVersion << ")\n";
  os << "speaker";
  for (const auto& series : fixtures::figure()) os << '\t' << series.strategy;
  os << '\n';
  const auto& spk = fixtures::speakers();
  for (std::size_t i = 0; i < spk.size(); ++i) {
    os << spk[i];
    for (const auto& series : fixtures::figure()) os << '\t' << fixtures::render(series.cells[i]);
    os << '\n';
  }
  return os.str();
}

// Unweighted per-speaker mean of a published series.
inline double fixture_speaker_mean(const std::string& strategy) {
  for (const auto& series : fixtures::figure())
    if (series.strategy == strategy) {
      std::vector<double> v;
      for (const auto& c : series.cells) v.push_back(c.wer_tenths / 10.0);
      return speaker_mean(v);
    }
  throw DataError("no published series for strategy " + strategy);
}

inline std::string render_fixture_aggregation_note() {
  std::ostringstream os;
  os << "aggregation check (" << fixtures::kFigureFtSet << "): unweighted speaker-mean vs published aggregate\n";
  for (const auto& row : fixtures::table())
    os << row.strategy << "\tspeaker-mean " << one_decimal(fixture_speaker_mean(row.strategy)) << "\tpublished "
       << fixtures::tenths(row.train.wer_tenths) << '\n';
  return os.str();
}

}  // namespace lipadapt::eval
