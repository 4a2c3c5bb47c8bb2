#pragma once

// Adaptation strategies and their data filters.
//
//   MST     root -> fine-tune on every selected speaker's ft_set records
//   SAT     root -> fine-tune on one speaker's ft_set records
//   TS-SAT  MST(TRAIN) -> fine-tune on one speaker's ft_set records
//
// Lineage tags: the multi-speaker step is "MST(<SET>)", a speaker step is
// "FT(<speaker>,<SET>)". A checkpoint's strategy is therefore readable from
// its lineage chain alone.

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/corpus/partition.hpp"

namespace lipadapt::adapt {

enum class StrategyKind { MST, SAT, TS_SAT };

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::MST:
      return "MST";
    case StrategyKind::SAT:
      return "SAT";
    case StrategyKind::TS_SAT:
      return "TS-SAT";
  }
  return "?";
}

inline StrategyKind parse_strategy(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "mst") return StrategyKind::MST;
  if (s == "sat") return StrategyKind::SAT;
  if (s == "ts-sat" || s == "tssat") return StrategyKind::TS_SAT;
  throw ConfigError("unknown strategy '" + s + "' (expected mst, sat or ts-sat)");
}

inline corpus::Split parse_ft_set(const std::string& s) {
  auto split = corpus::parse_split(s);
  if (!split || *split == corpus::Split::Test) throw ConfigError("ft_set must be TRAIN or DEV, got '" + s + "'");
  return *split;
}

// FNV-1a over the sorted, newline-joined utterance ids.
inline std::string dataset_fingerprint(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  Fnv1a h;
  for (const auto& id : ids) h.update(id).update("\n");
  return to_hex(h.digest());
}

struct CheckpointRef {
  std::string id;
  std::string path;
};

struct StrategyPlan {
  StrategyKind kind = StrategyKind::MST;
  std::optional<std::string> speaker;
  corpus::Split ft_set = corpus::Split::Train;
  CheckpointRef parent;
  std::vector<std::string> dataset_ids;  // sorted
  std::string fingerprint;
  std::string run_id;
  std::string tag;                 // lineage tag this run appends
  std::vector<std::string> chain;  // expected lineage tags after the run, root first
};

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string run_id_for(StrategyKind kind, const std::optional<std::string>& speaker, corpus::Split ft) {
  std::string id = lower(strategy_name(kind));
  if (speaker) id += "-" + *speaker;
  return id + "-" + lower(corpus::split_name(ft));
}

inline std::string mst_tag(corpus::Split ft) { return std::string("MST(") + corpus::split_name(ft) + ")"; }

inline std::string speaker_tag(const std::string& speaker, corpus::Split ft) {
  return "FT(" + speaker + "," + corpus::split_name(ft) + ")";
}

// Checkpoints a plan may start from.
struct PlanInputs {
  CheckpointRef root;
  std::string root_tag = "random-init";
  std::optional<CheckpointRef> mst_train;  // required for TS-SAT
  // MST data: the selected speakers' records (default) or the whole manifest.
  bool mst_uses_all_speakers = false;
};

inline StrategyPlan plan_strategy(StrategyKind kind, const std::optional<std::string>& speaker, corpus::Split ft_set,
                                  const corpus::CorpusManifest& manifest,
                                  const std::vector<corpus::SpeakerPartition>& selected, const PlanInputs& inputs) {
  if (ft_set == corpus::Split::Test) throw ConfigError("cannot fine-tune on the TEST set");
  StrategyPlan plan;
  plan.kind = kind;
  plan.ft_set = ft_set;
  std::vector<std::string> ids;
  if (kind == StrategyKind::MST) {
    if (speaker) throw ConfigError("MST does not take a speaker");
    if (inputs.mst_uses_all_speakers) {
      for (const auto& r : manifest.records)
        if (r.split == ft_set) ids.push_back(r.id);
    } else {
      for (const auto& p : selected) {
        const auto& v = p.ids(ft_set);
        ids.insert(ids.end(), v.begin(), v.end());
      }
    }
    plan.parent = inputs.root;
    plan.tag = mst_tag(ft_set);
    plan.chain = {inputs.root_tag, plan.tag};
  } else {
    if (!speaker) throw ConfigError(std::string(strategy_name(kind)) + " requires a speaker");
    auto it = std::find_if(selected.begin(), selected.end(),
                           [&](const corpus::SpeakerPartition& p) { return p.speaker_id == *speaker; });
    if (it == selected.end()) {
      std::string known;
      for (const auto& p : selected) known += (known.empty() ? "" : ", ") + p.speaker_id;
      throw ConfigError("unknown speaker '" + *speaker + "' (selected speakers: " + known + ")");
    }
    ids = it->ids(ft_set);
    plan.speaker = speaker;
    plan.tag = speaker_tag(*speaker, ft_set);
    if (kind == StrategyKind::SAT) {
      plan.parent = inputs.root;
      plan.chain = {inputs.root_tag, plan.tag};
    } else {
      if (!inputs.mst_train) throw DataError("TS-SAT needs the MST(TRAIN) checkpoint as its parent, but none exists");
      plan.parent = *inputs.mst_train;
      plan.chain = {inputs.root_tag, mst_tag(corpus::Split::Train), plan.tag};
    }
  }
  if (ids.empty())
    throw DataError("no " + std::string(corpus::split_name(ft_set)) + " records for " + strategy_name(kind) +
                    (speaker ? " speaker " + *speaker : std::string()));
  std::sort(ids.begin(), ids.end());
  plan.dataset_ids = ids;
  plan.fingerprint = dataset_fingerprint(ids);
  plan.run_id = run_id_for(kind, speaker, ft_set);
  return plan;
}

}  // namespace lipadapt::adapt
