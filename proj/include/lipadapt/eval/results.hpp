#pragma once

// Per-run evaluation files under a results root:
//   <root>/eval/<run_id>.jsonl       one line per utterance:
//       {"utterance_id", "speaker_id", "reference", "hypothesis", "S", "D", "I", "N"}
//   <root>/eval/<run_id>.meta.json   run identity, decode config, config hash,
//                                    seed and the bootstrap result

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/eval/bootstrap.hpp"
#include "lipadapt/eval/wer.hpp"

namespace lipadapt::eval {

struct UtteranceResult {
  std::string utterance_id;
  std::string speaker_id;
  std::string reference;
  std::string hypothesis;
  WerBreakdown counts;
};

inline UtteranceResult score_utterance(std::string utt, std::string speaker, std::string ref, std::string hyp) {
  UtteranceResult r{std::move(utt), std::move(speaker), std::move(ref), std::move(hyp), {}};
  r.counts = edit_ops(r.reference, r.hypothesis);
  return r;
}

inline nlohmann::json to_json(const UtteranceResult& r) {
  return {{"utterance_id", r.utterance_id},
          {"speaker_id", r.speaker_id},
          {"reference", r.reference},
          {"hypothesis", r.hypothesis},
          {"S", r.counts.substitutions},
          {"D", r.counts.deletions},
          {"I", r.counts.insertions},
          {"N", r.counts.reference_words}};
}

inline UtteranceResult utterance_result_from_json(const nlohmann::json& j) {
  UtteranceResult r;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.speaker_id = j.value("speaker_id", std::string());
  r.reference = j.at("reference").get<std::string>();
  r.hypothesis = j.at("hypothesis").get<std::string>();
  r.counts.substitutions = j.at("S").get<int>();
  r.counts.deletions = j.at("D").get<int>();
  r.counts.insertions = j.at("I").get<int>();
  r.counts.reference_words = j.at("N").get<int>();
  return r;
}

struct EvalMeta {
  std::string run_id;
  std::string strategy;  // "MST", "SAT", "TS-SAT" or free-form for ad-hoc runs
  std::optional<std::string> speaker;
  std::string ft_set;
  std::string checkpoint_id;
  nlohmann::json decode_config = nlohmann::json::object();
  std::string config_hash;
  std::uint64_t seed = 0;
  BootstrapResult bootstrap;
  std::vector<std::string> excluded;  // empty-reference utterances
};

inline nlohmann::json to_json(const EvalMeta& m) {
  return {{"run_id", m.run_id},
          {"strategy", m.strategy},
          {"speaker", m.speaker ? nlohmann::json(*m.speaker) : nlohmann::json(nullptr)},
          {"ft_set", m.ft_set},
          {"checkpoint_id", m.checkpoint_id},
          {"decode_config", m.decode_config},
          {"beam_size", m.decode_config.is_object() ? m.decode_config.value("beam_size", 0) : 0},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"bootstrap", to_json(m.bootstrap)},
          {"excluded_empty_references", m.excluded}};
}

inline EvalMeta eval_meta_from_json(const nlohmann::json& j) {
  EvalMeta m;
  m.run_id = j.at("run_id").get<std::string>();
  m.strategy = j.at("strategy").get<std::string>();
  if (j.contains("speaker") && !j["speaker"].is_null()) m.speaker = j["speaker"].get<std::string>();
  m.ft_set = j.at("ft_set").get<std::string>();
  m.checkpoint_id = j.value("checkpoint_id", std::string());
  m.decode_config = j.value("decode_config", nlohmann::json::object());
  m.config_hash = j.value("config_hash", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  const auto& b = j.at("bootstrap");
  m.bootstrap.wer = b.at("wer").get<double>();
  m.bootstrap.ci_low = b.at("ci_low").get<double>();
  m.bootstrap.ci_high = b.at("ci_high").get<double>();
  m.bootstrap.replicas = b.at("replicas").get<int>();
  m.bootstrap.seed = b.at("seed").get<std::uint64_t>();
  m.bootstrap.utterances = b.value("utterances", 0);
  m.excluded = j.value("excluded_empty_references", std::vector<std::string>{});
  return m;
}

inline std::filesystem::path eval_dir(const std::filesystem::path& root) { return root / "eval"; }

inline void write_results(const std::vector<UtteranceResult>& results, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : results) out << to_json(r).dump() << '\n';
}

inline std::vector<UtteranceResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read results file " + path.string());
  std::vector<UtteranceResult> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(utterance_result_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// Splits results into scorable breakdowns and the ids of empty-reference utterances.
inline std::vector<WerBreakdown> scorable(const std::vector<UtteranceResult>& rs, std::vector<std::string>* excluded) {
  std::vector<WerBreakdown> out;
  for (const auto& r : rs) {
    if (r.counts.reference_words == 0) {
      if (excluded) excluded->push_back(r.utterance_id);
      continue;
    }
    out.push_back(r.counts);
  }
  return out;
}

struct EvalRun {
  EvalMeta meta;
  std::vector<UtteranceResult> results;
};

inline void write_eval_run(const EvalRun& run, const std::filesystem::path& root) {
  const auto dir = eval_dir(root);
  write_results(run.results, dir / (run.meta.run_id + ".jsonl"));
  std::ofstream out(dir / (run.meta.run_id + ".meta.json"), std::ios::trunc);
  out << to_json(run.meta).dump(2) << '\n';
  if (!out) throw DataError("cannot write evaluation metadata for " + run.meta.run_id);
}

// All evaluation runs under `root`, ordered by run id.
inline std::vector<EvalRun> read_eval_runs(const std::filesystem::path& root) {
  const auto dir = eval_dir(root);
  std::vector<EvalRun> runs;
  if (!std::filesystem::is_directory(dir)) return runs;
  std::vector<std::filesystem::path> metas;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() > 10 && name.ends_with(".meta.json")) metas.push_back(e.path());
  }
  std::sort(metas.begin(), metas.end());
  for (const auto& p : metas) {
    std::ifstream in(p);
    EvalRun run;
    try {
      run.meta = eval_meta_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
    run.results = read_results(dir / (run.meta.run_id + ".jsonl"));
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace lipadapt::eval
