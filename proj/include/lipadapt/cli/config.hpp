#pragma once

// Experiment configuration: one JSON file, overridden field by field from the
// command line. Precedence is flags > file > environment > built-in defaults;
// the environment only supplies the results root (LIPADAPT_RESULTS_ROOT).

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/adapt/matrix.hpp"
#include "lipadapt/adapt/optimizer.hpp"
#include "lipadapt/core/error.hpp"
#include "lipadapt/decode/beam_search.hpp"
#include "lipadapt/network/config.hpp"

namespace lipadapt::cli {

inline constexpr const char* kRootEnv = "LIPADAPT_RESULTS_ROOT";

struct GridConfig {
  std::vector<std::string> strategies = {"MST", "SAT", "TS-SAT"};
  std::vector<std::string> speakers;  // empty: all selected speakers
  std::vector<std::string> ft_sets = {"TRAIN", "DEV"};
};

struct ExperimentConfig {
  std::string manifest;
  std::string results_root = "results";
  std::string prepared;         // empty: <results_root>/prepared
  std::string root_checkpoint;  // empty: <results_root>/checkpoints/root
  std::string lm;               // empty: <results_root>/lm; "none" disables fusion
  nlohmann::json model = {{"preset", "toy"}};
  nlohmann::json lm_model = {{"preset", "toy"}};
  adapt::TrainConfig train;
  decode::DecodeConfig decode;
  GridConfig grid;
  int top_speakers = 20;
  bool mst_uses_all_speakers = false;
  int bootstrap_replicas = 10000;
  std::string precision = "f64";
  std::uint64_t seed = 0;

  std::filesystem::path root() const { return results_root; }
  std::filesystem::path prepared_dir() const { return prepared.empty() ? root() / "prepared" : std::filesystem::path(prepared); }
  std::filesystem::path root_checkpoint_dir() const {
    return root_checkpoint.empty() ? root() / "checkpoints" / "root" : std::filesystem::path(root_checkpoint);
  }
  std::optional<std::filesystem::path> lm_dir() const {
    if (lm == "none") return std::nullopt;
    return lm.empty() ? root() / "lm" : std::filesystem::path(lm);
  }

  void validate() const {
    train.validate();
    decode.validate();
    if (top_speakers < 1) throw ConfigError("top_speakers must be >= 1");
    if (bootstrap_replicas < 100) throw ConfigError("bootstrap_replicas must be >= 100");
    if (precision != "f64" && precision != "f32") throw ConfigError("precision must be f64 or f32");
    if (grid.strategies.empty() || grid.ft_sets.empty()) throw ConfigError("grid needs strategies and ft_sets");
    for (const auto& s : grid.strategies) adapt::parse_strategy(s);
    for (const auto& f : grid.ft_sets) adapt::parse_ft_set(f);
    nn::model_config_from_json(model);
    nn::lm_config_from_json(lm_model);
  }

  adapt::MatrixSpec matrix_spec() const {
    adapt::MatrixSpec m;
    for (const auto& s : grid.strategies) m.strategies.push_back(adapt::parse_strategy(s));
    for (const auto& f : grid.ft_sets) m.ft_sets.push_back(adapt::parse_ft_set(f));
    m.speakers = grid.speakers;
    return m;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json train = adapt::to_json(c.train);
  train.erase("seed");  // the top-level seed governs
  return {{"manifest", c.manifest},
          {"results_root", c.results_root},
          {"prepared", c.prepared},
          {"root_checkpoint", c.root_checkpoint},
          {"lm", c.lm},
          {"model", c.model},
          {"lm_model", c.lm_model},
          {"train", train},
          {"decode", decode::to_json(c.decode)},
          {"grid", {{"strategies", c.grid.strategies}, {"speakers", c.grid.speakers}, {"ft_sets", c.grid.ft_sets}}},
          {"top_speakers", c.top_speakers},
          {"mst_uses_all_speakers", c.mst_uses_all_speakers},
          {"bootstrap_replicas", c.bootstrap_replicas},
          {"precision", c.precision},
          {"seed", c.seed}};
}

// Hash of the canonical serialization, paths included.
inline std::string experiment_hash(const ExperimentConfig& c) { return adapt::config_hash(to_json(c)); }

// Applies the keys of `j` on top of `c`. Unknown keys are rejected.
inline ExperimentConfig apply_config_json(const nlohmann::json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = *it;
      if (k == "manifest") c.manifest = v.get<std::string>();
      else if (k == "results_root") c.results_root = v.get<std::string>();
      else if (k == "prepared") c.prepared = v.get<std::string>();
      else if (k == "root_checkpoint") c.root_checkpoint = v.get<std::string>();
      else if (k == "lm") c.lm = v.get<std::string>();
      else if (k == "model") {
        nn::model_config_from_json(v);
        for (auto m = v.begin(); m != v.end(); ++m) c.model[m.key()] = *m;
      } else if (k == "lm_model") {
        nn::lm_config_from_json(v);
        for (auto m = v.begin(); m != v.end(); ++m) c.lm_model[m.key()] = *m;
      } else if (k == "train") {
        if (v.contains("seed")) throw ConfigError("config: train.seed is not settable; use the top-level seed");
        c.train = adapt::train_config_from_json(v, c.train);
      } else if (k == "decode") c.decode = decode::decode_config_from_json(v, c.decode);
      else if (k == "grid") {
        for (auto g = v.begin(); g != v.end(); ++g) {
          if (g.key() == "strategies") c.grid.strategies = g->get<std::vector<std::string>>();
          else if (g.key() == "speakers") c.grid.speakers = g->get<std::vector<std::string>>();
          else if (g.key() == "ft_sets") c.grid.ft_sets = g->get<std::vector<std::string>>();
          else throw ConfigError("config: unknown key 'grid." + g.key() + "'");
        }
      } else if (k == "top_speakers") c.top_speakers = v.get<int>();
      else if (k == "mst_uses_all_speakers") c.mst_uses_all_speakers = v.get<bool>();
      else if (k == "bootstrap_replicas") c.bootstrap_replicas = v.get<int>();
      else if (k == "precision") c.precision = v.get<std::string>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("config: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed;
  return c;
}

// Defaults, then the environment's results root, then the file (if any).
inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& file) {
  ExperimentConfig c;
  if (const char* env = std::getenv(kRootEnv); env && *env) c.results_root = env;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config file not found: " + file->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
    c = apply_config_json(j, c);
  }
  c.train.seed = c.seed;
  return c;
}

}  // namespace lipadapt::cli
