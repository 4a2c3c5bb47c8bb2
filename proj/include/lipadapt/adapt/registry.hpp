#pragma once

// Append-only run registry: <results root>/runs.jsonl, one RunRecord per line.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/adapt/strategy.hpp"
#include "lipadapt/core/error.hpp"
#include "lipadapt/network/checkpoint.hpp"

namespace lipadapt::adapt {

struct RunRecord {
  std::string run_id;
  StrategyKind kind = StrategyKind::MST;
  std::optional<std::string> speaker;
  corpus::Split ft_set = corpus::Split::Train;
  std::string parent_id;
  std::string dataset_fingerprint;
  std::vector<std::string> dataset_ids;
  std::string config_hash;
  std::string checkpoint_id;
  std::string checkpoint_path;  // relative to the results root
  std::vector<nn::LineageEntry> lineage;
  std::vector<double> epoch_losses;
  int steps = 0;
};

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json lineage = nlohmann::json::array();
  for (const auto& e : r.lineage) lineage.push_back(nn::to_json(e));
  return {{"run_id", r.run_id},
          {"strategy", strategy_name(r.kind)},
          {"speaker", r.speaker ? nlohmann::json(*r.speaker) : nlohmann::json(nullptr)},
          {"ft_set", corpus::split_name(r.ft_set)},
          {"parent_id", r.parent_id},
          {"dataset_fingerprint", r.dataset_fingerprint},
          {"dataset_ids", r.dataset_ids},
          {"config_hash", r.config_hash},
          {"checkpoint_id", r.checkpoint_id},
          {"checkpoint_path", r.checkpoint_path},
          {"lineage", lineage},
          {"epoch_losses", r.epoch_losses},
          {"steps", r.steps}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.kind = parse_strategy(j.at("strategy").get<std::string>());
  if (!j.at("speaker").is_null()) r.speaker = j["speaker"].get<std::string>();
  r.ft_set = parse_ft_set(j.at("ft_set").get<std::string>());
  r.parent_id = j.at("parent_id").get<std::string>();
  r.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  r.dataset_ids = j.at("dataset_ids").get<std::vector<std::string>>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  for (const auto& e : j.at("lineage")) r.lineage.push_back(nn::lineage_entry_from_json(e));
  r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  r.steps = j.at("steps").get<int>();
  return r;
}

inline std::filesystem::path registry_path(const std::filesystem::path& root) { return root / "runs.jsonl"; }

inline std::vector<RunRecord> read_registry(const std::filesystem::path& root) {
  std::vector<RunRecord> out;
  std::ifstream in(registry_path(root));
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(registry_path(root).string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline void append_registry(const std::filesystem::path& root, const RunRecord& r) {
  std::filesystem::create_directories(root);
  std::ofstream out(registry_path(root), std::ios::app);
  if (!out) throw DataError("cannot append to " + registry_path(root).string());
  out << to_json(r).dump() << '\n';
}

inline const RunRecord* find_run(const std::vector<RunRecord>& runs, const std::string& run_id) {
  const RunRecord* found = nullptr;
  for (const auto& r : runs)
    if (r.run_id == run_id) found = &r;  // latest entry wins
  return found;
}

}  // namespace lipadapt::adapt
