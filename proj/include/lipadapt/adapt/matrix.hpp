#pragma once

// Serial, resumable execution of the strategy x speaker x fine-tuning-set grid.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "lipadapt/adapt/fine_tune.hpp"
#include "lipadapt/adapt/registry.hpp"
#include "lipadapt/adapt/strategy.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/corpus/partition.hpp"
#include "lipadapt/network/checkpoint.hpp"

namespace lipadapt::adapt {

struct MatrixSpec {
  std::vector<StrategyKind> strategies;
  std::vector<std::string> speakers;  // empty: every selected speaker
  std::vector<corpus::Split> ft_sets;
};

template <class T>
struct ExperimentContext {
  const corpus::CorpusManifest* manifest = nullptr;
  std::vector<corpus::SpeakerPartition> selected;
  std::function<const TrainSample&(const std::string&)> sample;  // prepared sample by utterance id
  std::filesystem::path root_checkpoint;
  std::filesystem::path results_root;
  TrainConfig train;
  bool mst_uses_all_speakers = false;
  bool resume = true;  // skip runs already completed with the same inputs
  int sos_eos = 1;
  std::function<void(const std::string&)> log;
};

struct GridRun {
  StrategyKind kind;
  std::optional<std::string> speaker;
  corpus::Split ft_set;
};

// Expands the grid in execution order: MST runs, SAT runs, TS-SAT runs. When
// any TS-SAT run is requested, MST(TRAIN) is added as its dependency.
inline std::vector<GridRun> expand_grid(const MatrixSpec& spec, const std::vector<corpus::SpeakerPartition>& selected) {
  if (spec.strategies.empty() || spec.ft_sets.empty()) throw ConfigError("experiment grid is empty");
  std::vector<std::string> speakers = spec.speakers;
  if (speakers.empty())
    for (const auto& p : selected) speakers.push_back(p.speaker_id);
  auto has = [&](StrategyKind k) {
    return std::find(spec.strategies.begin(), spec.strategies.end(), k) != spec.strategies.end();
  };
  std::vector<GridRun> runs;
  std::set<std::string> seen;
  auto push = [&](GridRun r, bool dependency) {
    const auto id = run_id_for(r.kind, r.speaker, r.ft_set);
    if (!seen.insert(id).second) {
      if (dependency) return;
      throw ConfigError("duplicate run '" + id + "' in experiment grid");
    }
    runs.push_back(std::move(r));
  };
  if (has(StrategyKind::TS_SAT)) push({StrategyKind::MST, std::nullopt, corpus::Split::Train}, true);
  if (has(StrategyKind::MST))
    for (auto ft : spec.ft_sets) {
      const auto id = run_id_for(StrategyKind::MST, std::nullopt, ft);
      if (!seen.count(id)) push({StrategyKind::MST, std::nullopt, ft}, false);
    }
  for (auto kind : {StrategyKind::SAT, StrategyKind::TS_SAT}) {
    if (!has(kind)) continue;
    for (const auto& spk : speakers)
      for (auto ft : spec.ft_sets) push({kind, spk, ft}, false);
  }
  return runs;
}

template <class T>
std::vector<RunRecord> run_experiment_matrix(const MatrixSpec& spec, ExperimentContext<T>& ctx) {
  if (!ctx.manifest) throw ConfigError("experiment matrix: no manifest");
  ctx.train.validate();
  auto log = [&](const std::string& m) {
    if (ctx.log) ctx.log(m);
  };
  const auto grid = expand_grid(spec, ctx.selected);

  std::map<std::string, std::shared_ptr<nn::LoadedCheckpoint<T>>> loaded;  // by path
  auto load = [&](const std::filesystem::path& p) {
    auto key = p.lexically_normal().string();
    auto it = loaded.find(key);
    if (it != loaded.end()) return it->second;
    auto ck = std::make_shared<nn::LoadedCheckpoint<T>>(nn::load_checkpoint<T>(p));
    loaded.emplace(key, ck);
    return ck;
  };

  auto root = load(ctx.root_checkpoint);
  PlanInputs inputs;
  inputs.root = {root->meta.id, ctx.root_checkpoint.string()};
  inputs.root_tag = root->meta.lineage.front().tag;
  inputs.mst_uses_all_speakers = ctx.mst_uses_all_speakers;

  auto registry = read_registry(ctx.results_root);
  std::vector<RunRecord> out;
  for (const auto& g : grid) {
    auto plan = plan_strategy(g.kind, g.speaker, g.ft_set, *ctx.manifest, ctx.selected, inputs);
    auto parent = load(plan.parent.path);
    const auto hash = config_hash(training_signature(ctx.train, parent->model.config()));

    if (const RunRecord* prev = find_run(registry, plan.run_id)) {
      const bool same = prev->dataset_fingerprint == plan.fingerprint && prev->config_hash == hash &&
                        prev->parent_id == plan.parent.id;
      if (!same)
        throw ConfigError("run '" + plan.run_id +
                          "' is already registered with a different dataset, config or parent; use a fresh results root");
      if (!ctx.resume) throw ConfigError("run '" + plan.run_id + "' already completed (enable resume to skip it)");
      const auto ck_dir = ctx.results_root / prev->checkpoint_path;
      bool intact = false;
      try {
        intact = nn::read_checkpoint_meta(ck_dir).id == prev->checkpoint_id;
      } catch (const Error&) {
      }
      if (intact) {
        log("skip " + plan.run_id + " (completed, fingerprint " + plan.fingerprint + ")");
        out.push_back(*prev);
        if (plan.run_id == run_id_for(StrategyKind::MST, std::nullopt, corpus::Split::Train))
          inputs.mst_train = CheckpointRef{prev->checkpoint_id, ck_dir.string()};
        continue;
      }
      log("rerun " + plan.run_id + " (checkpoint missing or altered)");
    }

    std::vector<const TrainSample*> data;
    for (const auto& id : plan.dataset_ids) data.push_back(&ctx.sample(id));
    log("run " + plan.run_id + ": " + std::to_string(data.size()) + " utterances, parent " + plan.parent.id);
    auto res = fine_tune(parent->model, parent->meta, data, ctx.train, plan.tag, ctx.sos_eos,
                         [&](int e, double l) { log("  epoch " + std::to_string(e + 1) + " loss " + std::to_string(l)); });

    RunRecord rec;
    rec.run_id = plan.run_id;
    rec.kind = plan.kind;
    rec.speaker = plan.speaker;
    rec.ft_set = plan.ft_set;
    rec.parent_id = plan.parent.id;
    rec.dataset_fingerprint = res.fingerprint;
    rec.dataset_ids = plan.dataset_ids;
    rec.config_hash = res.config_hash;
    rec.checkpoint_path = "checkpoints/" + plan.run_id;
    rec.checkpoint_id = nn::save_checkpoint(res.model, res.meta, ctx.results_root / rec.checkpoint_path);
    rec.lineage = res.meta.lineage;
    rec.epoch_losses = res.stats.epoch_losses;
    rec.steps = res.stats.steps;
    append_registry(ctx.results_root, rec);
    registry.push_back(rec);
    out.push_back(rec);
    if (plan.run_id == run_id_for(StrategyKind::MST, std::nullopt, corpus::Split::Train))
      inputs.mst_train = CheckpointRef{rec.checkpoint_id, (ctx.results_root / rec.checkpoint_path).string()};
  }
  return out;
}

}  // namespace lipadapt::adapt
