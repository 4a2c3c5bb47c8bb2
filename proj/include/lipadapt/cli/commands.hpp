#pragma once

// Subcommand implementations. Each takes the resolved configuration, writes
// human-readable output to `out` and progress to `log`, and throws the
// library's error types on failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/adapt/lm_train.hpp"
#include "lipadapt/adapt/matrix.hpp"
#include "lipadapt/cli/config.hpp"
#include "lipadapt/cli/prepare.hpp"
#include "lipadapt/core/text.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/corpus/partition.hpp"
#include "lipadapt/corpus/stats.hpp"
#include "lipadapt/decode/model_scorers.hpp"
#include "lipadapt/decode/nbest.hpp"
#include "lipadapt/eval/bootstrap.hpp"
#include "lipadapt/eval/correlation.hpp"
#include "lipadapt/eval/report.hpp"
#include "lipadapt/eval/results.hpp"
#include "lipadapt/network/checkpoint.hpp"
#include "lipadapt/network/import.hpp"
#include "lipadapt/vision/augment.hpp"

namespace lipadapt::cli {

struct Io {
  std::ostream& out;
  std::ostream& log;
};

// Runs `f` with a value of the configured floating-point type.
template <class F>
decltype(auto) with_precision(const ExperimentConfig& cfg, F&& f) {
  if (cfg.precision == "f32") return f(float{});
  return f(double{});
}

// Prints the reproducibility stamp and appends it to <root>/commands.log.
inline void stamp(const std::string& command, const ExperimentConfig& cfg, Io io) {
  const auto hash = experiment_hash(cfg);
  io.out << "config_hash " << hash << "  seed " << cfg.seed << "\n";
  std::error_code ec;
  std::filesystem::create_directories(cfg.root(), ec);
  std::ofstream logf(cfg.root() / "commands.log", std::ios::app);
  if (logf) logf << command << " config_hash=" << hash << " seed=" << cfg.seed << "\n";
}

inline corpus::CorpusManifest require_manifest(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no corpus manifest configured (set \"manifest\" or pass --manifest)");
  return corpus::load_manifest(cfg.manifest);
}

// The configured number of most talkative speakers, capped at what the corpus has.
inline std::vector<corpus::SpeakerPartition> selected_speakers(const corpus::CorpusManifest& m,
                                                               const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  const int available = static_cast<int>(m.speakers().size());
  int k = cfg.top_speakers;
  if (k > available) {
    if (log) *log << "note: corpus has " << available << " speakers; selecting all of them\n";
    k = available;
  }
  return corpus::select_top_speakers(m, k);
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string landmarks_dir;
  std::string detector;  // external landmark command, optional
  bool strict = false;
};

inline PrepareReport cmd_prepare(const ExperimentConfig& cfg, const PrepareArgs& args, Io io) {
  stamp("prepare", cfg, io);
  const auto manifest = require_manifest(cfg);
  PrepareOptions opt;
  opt.landmarks_dir = args.landmarks_dir;
  opt.strict = args.strict;
  std::unique_ptr<vision::CommandLandmarkDetector> det;
  if (!args.detector.empty()) {
    det = std::make_unique<vision::CommandLandmarkDetector>(args.detector, cfg.prepared_dir() / "scratch");
    opt.detector = det.get();
  }
  auto rep = prepare_corpus(manifest, cfg.prepared_dir(), opt);
  io.out << "prepared " << rep.written << " written, " << rep.skipped << " unchanged, " << rep.failures.size()
         << " failed -> " << cfg.prepared_dir().string() << "\n";
  for (const auto& f : rep.failures) io.out << "  FAILED " << f.id << ": " << f.reason << "\n";
  io.out << "norm_stats mean " << rep.stats.mean << " variance " << rep.stats.variance << "\n";
  return rep;
}

// ---------------------------------------------------------------- init

struct InitArgs {
  std::string import_dir;  // external pretrained weights; empty: random init
};

inline std::string cmd_init(const ExperimentConfig& cfg, const InitArgs& args, Io io) {
  stamp("init", cfg, io);
  const auto vocab = load_vocabulary(cfg.prepared_dir());
  const auto stats = load_norm_stats(cfg.prepared_dir());
  nlohmann::json mj = cfg.model;
  mj["vocab_size"] = vocab.size();
  const auto mcfg = nn::model_config_from_json(mj);
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    nn::VsrModel<T> model(mcfg, cfg.seed);
    nn::CheckpointMeta meta;
    meta.norm_stats = stats.to_json();
    meta.vocab = vocab.to_json();
    if (args.import_dir.empty()) {
      meta.lineage = {{"random-init", "", ""}};
    } else {
      nn::import_pretrained(model, nn::read_external_checkpoint(args.import_dir));
      meta.lineage = {{"pretrained", "", ""}};
    }
    const auto id = nn::save_checkpoint(model, meta, cfg.root_checkpoint_dir());
    io.out << "root checkpoint " << id << " (" << meta.lineage.front().tag << ", " << model.parameter_count()
           << " parameters) -> " << cfg.root_checkpoint_dir().string() << "\n";
    return id;
  });
}

// ---------------------------------------------------------------- train-lm

inline std::string dataset_fingerprint_of(const corpus::CorpusManifest& m, corpus::Split split) {
  std::vector<std::string> ids;
  for (const auto& r : m.records)
    if (r.split == split) ids.push_back(r.id);
  return adapt::dataset_fingerprint(ids);
}

inline std::vector<int> lm_sequence(const corpus::CharVocabulary& vocab, const std::string& text) {
  std::vector<int> seq = {corpus::CharVocabulary::kSosEos};
  for (int id : vocab.encode(text)) seq.push_back(id);
  seq.push_back(corpus::CharVocabulary::kSosEos);
  return seq;
}

inline std::string cmd_train_lm(const ExperimentConfig& cfg, Io io) {
  stamp("train-lm", cfg, io);
  const auto dir = cfg.lm_dir();
  if (!dir) throw ConfigError("train-lm: the language model is disabled (lm = \"none\")");
  const auto manifest = require_manifest(cfg);
  const auto vocab = load_vocabulary(cfg.prepared_dir());
  std::vector<std::vector<int>> train, dev;
  for (const auto& r : manifest.records) {
    if (r.split == corpus::Split::Train) train.push_back(lm_sequence(vocab, r.transcript));
    if (r.split == corpus::Split::Dev) dev.push_back(lm_sequence(vocab, r.transcript));
  }
  nlohmann::json lj = cfg.lm_model;
  lj["vocab_size"] = vocab.size();
  auto lcfg = nn::lm_config_from_json(lj);
  lcfg.vocab_size = vocab.size();
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    nn::TransformerLm<T> lm(lcfg, derive_seed(cfg.seed, "lm"));
    adapt::train_lm(lm, train, cfg.train, [&](int e, double l) { io.log << "  lm epoch " << e + 1 << " loss " << l << "\n"; });
    nn::CheckpointMeta meta;
    meta.lineage = {{"lm", dataset_fingerprint_of(manifest, corpus::Split::Train),
                     adapt::config_hash({{"train", adapt::to_json(cfg.train)}, {"lm", nn::to_json(lcfg)}})}};
    meta.vocab = vocab.to_json();
    const auto id = nn::save_lm(lm, meta, *dir);
    io.out << "language model " << id << " -> " << dir->string() << "\n";
    if (!dev.empty()) io.out << "dev perplexity " << nn::lm_perplexity(lm, dev) << "\n";
    return id;
  });
}

// ---------------------------------------------------------------- adapt

inline std::string lineage_summary(const std::vector<nn::LineageEntry>& lineage) {
  std::string s;
  for (const auto& e : lineage) s += (s.empty() ? "" : " -> ") + e.tag;
  return s;
}

inline std::vector<adapt::RunRecord> cmd_adapt(const ExperimentConfig& cfg, Io io, bool resume = true) {
  stamp("adapt", cfg, io);
  const auto manifest = require_manifest(cfg);
  const auto vocab = load_vocabulary(cfg.prepared_dir());
  const auto prepared = cfg.prepared_dir();
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    adapt::ExperimentContext<T> ctx;
    ctx.manifest = &manifest;
    ctx.selected = selected_speakers(manifest, cfg, &io.log);
    std::map<std::string, adapt::TrainSample> cache;
    ctx.sample = [&](const std::string& id) -> const adapt::TrainSample& {
      auto it = cache.find(id);
      if (it != cache.end()) return it->second;
      const auto* rec = manifest.find(id);
      if (!rec) throw DataError("unknown utterance '" + id + "'");
      return cache.emplace(id, adapt::TrainSample{id, load_roi(prepared, id), vocab.encode(rec->transcript)})
          .first->second;
    };
    ctx.root_checkpoint = cfg.root_checkpoint_dir();
    ctx.results_root = cfg.root();
    ctx.train = cfg.train;
    ctx.mst_uses_all_speakers = cfg.mst_uses_all_speakers;
    ctx.resume = resume;
    ctx.sos_eos = corpus::CharVocabulary::kSosEos;
    ctx.log = [&](const std::string& m) { io.log << m << "\n"; };
    auto runs = adapt::run_experiment_matrix(cfg.matrix_spec(), ctx);
    for (const auto& r : runs)
      io.out << r.run_id << "  checkpoint " << r.checkpoint_id << "  lineage " << lineage_summary(r.lineage) << "  ("
             << r.dataset_ids.size() << " utterances, fingerprint " << r.dataset_fingerprint << ")\n";
    return runs;
  });
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::vector<std::string> run_ids;  // empty with all=false: error
  bool all = false;
  std::string checkpoint;  // ad-hoc checkpoint directory
  std::string run_id;      // label for ad-hoc and hypothesis evaluations
  std::string hypotheses;  // "<id>\t<hypothesis>" lines scored without decoding
  std::vector<std::string> speakers;  // ad-hoc: restrict the test set
};

inline std::vector<const corpus::UtteranceRecord*> test_records(const corpus::CorpusManifest& m,
                                                                const std::vector<std::string>& speakers) {
  std::vector<const corpus::UtteranceRecord*> out;
  for (const auto& r : m.records)
    if (r.split == corpus::Split::Test && std::find(speakers.begin(), speakers.end(), r.speaker_id) != speakers.end())
      out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  if (out.empty()) throw DataError("no TEST utterances for the requested speakers");
  return out;
}

inline eval::EvalRun finish_eval(eval::EvalMeta meta, std::vector<eval::UtteranceResult> results,
                                 const ExperimentConfig& cfg, Io io) {
  eval::EvalRun run;
  std::vector<std::string> excluded;
  const auto bs = eval::scorable(results, &excluded);
  if (bs.empty()) throw DataError("evaluation '" + meta.run_id + "': no utterance with a non-empty reference");
  for (const auto& id : excluded) io.log << "warning: excluded empty reference " << id << "\n";
  meta.bootstrap = eval::bootstrap_ci(bs, cfg.bootstrap_replicas, derive_seed(cfg.seed, "eval/" + meta.run_id));
  meta.excluded = excluded;
  meta.config_hash = experiment_hash(cfg);
  meta.seed = cfg.seed;
  run.meta = std::move(meta);
  run.results = std::move(results);
  eval::write_eval_run(run, cfg.root());
  const auto& b = run.meta.bootstrap;
  io.out << run.meta.run_id << "  WER " << eval::one_decimal(b.wer) << "%  95% CI [" << eval::one_decimal(b.ci_low)
         << ", " << eval::one_decimal(b.ci_high) << "]  (" << b.utterances << " utterances, beam "
         << run.meta.decode_config.value("beam_size", 0) << ")\n";
  return run;
}

template <class T>
eval::EvalRun evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& ckdir,
                                  const corpus::CorpusManifest& manifest, const std::vector<std::string>& speakers,
                                  eval::EvalMeta meta, const nn::TransformerLm<T>* lm, const std::string& lm_id, Io io) {
  const auto ck = nn::load_checkpoint<T>(ckdir);
  if (ck.meta.vocab.is_null()) throw DataError("checkpoint " + ckdir.string() + " carries no vocabulary");
  const auto vocab = corpus::CharVocabulary::from_json(ck.meta.vocab);
  const auto stats = adapt::norm_stats_of(ck.meta);
  const auto sos = corpus::CharVocabulary::kSosEos;
  std::vector<eval::UtteranceResult> results;
  std::vector<decode::NbestRecord> nbest;
  for (const auto* r : test_records(manifest, speakers)) {
    const auto video = vision::transform_eval<T>(load_roi(cfg.prepared_dir(), r->id), stats, ck.model.config().input_size);
    const auto res = decode::decode_utterance<T>(ck.model, lm, video, cfg.decode, sos);
    results.push_back(eval::score_utterance(r->id, r->speaker_id, r->transcript,
                                            text::normalize_transcript(vocab.decode(res.best))));
    nbest.push_back(decode::make_nbest_record(
        r->id, res, cfg.decode, [&](const std::vector<int>& ids) { return vocab.decode(ids); }, sos));
  }
  meta.checkpoint_id = ck.meta.id;
  meta.decode_config = decode::to_json(cfg.decode);
  meta.decode_config["lm_id"] = lm ? nlohmann::json(lm_id) : nlohmann::json(nullptr);
  decode::write_nbest(nbest, eval::eval_dir(cfg.root()) / (meta.run_id + ".nbest.jsonl"));
  return finish_eval(std::move(meta), std::move(results), cfg, io);
}

inline std::vector<eval::UtteranceResult> score_hypothesis_file(const std::filesystem::path& path,
                                                                const corpus::CorpusManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw DataError("hypothesis file not found: " + path.string());
  std::vector<eval::UtteranceResult> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string id = line.substr(0, tab);
    const std::string hyp = tab == std::string::npos ? "" : line.substr(tab + 1);
    const auto* r = manifest.find(id);
    if (!r) throw DataError(path.string() + " line " + std::to_string(n) + ": unknown utterance '" + id + "'");
    out.push_back(eval::score_utterance(id, r->speaker_id, r->transcript, text::normalize_transcript(hyp)));
  }
  if (out.empty()) throw DataError("hypothesis file is empty: " + path.string());
  return out;
}

inline std::vector<eval::EvalRun> cmd_evaluate(const ExperimentConfig& cfg, const EvaluateArgs& args, Io io) {
  stamp("evaluate", cfg, io);
  const auto manifest = require_manifest(cfg);
  const auto selected = selected_speakers(manifest, cfg, &io.log);
  std::vector<std::string> all_speakers;
  for (const auto& p : selected) all_speakers.push_back(p.speaker_id);
  std::vector<eval::EvalRun> out;

  if (!args.hypotheses.empty()) {
    eval::EvalMeta meta;
    meta.run_id = args.run_id.empty() ? "hypotheses" : args.run_id;
    meta.strategy = "external";
    meta.ft_set = "-";
    meta.decode_config = decode::to_json(cfg.decode);
    out.push_back(finish_eval(meta, score_hypothesis_file(args.hypotheses, manifest), cfg, io));
    return out;
  }

  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    std::optional<nn::TransformerLm<T>> lm;
    std::string lm_id;
    if (cfg.decode.lm_weight > 0) {
      const auto dir = cfg.lm_dir();
      if (dir && std::filesystem::exists(*dir / "meta.json")) {
        lm.emplace(nn::load_lm<T>(*dir));
        lm_id = detail::read_json_or(*dir / "meta.json", nlohmann::json::object()).value("id", "");
      } else if (!cfg.lm.empty() && cfg.lm != "none") {
        throw DataError("language model not found: " + cfg.lm);
      } else {
        io.log << "note: no language model available; decoding without shallow fusion\n";
      }
    }
    const nn::TransformerLm<T>* lmp = lm ? &*lm : nullptr;

    if (!args.checkpoint.empty()) {
      eval::EvalMeta meta;
      meta.run_id = args.run_id.empty() ? "adhoc" : args.run_id;
      meta.strategy = "adhoc";
      meta.ft_set = "-";
      out.push_back(evaluate_checkpoint<T>(cfg, args.checkpoint, manifest,
                                           args.speakers.empty() ? all_speakers : args.speakers, meta, lmp, lm_id, io));
      return out;
    }

    const auto registry = adapt::read_registry(cfg.root());
    std::vector<const adapt::RunRecord*> todo;
    if (args.all) {
      std::set<std::string> seen;
      for (auto it = registry.rbegin(); it != registry.rend(); ++it)
        if (seen.insert(it->run_id).second) todo.push_back(&*it);
      std::sort(todo.begin(), todo.end(), [](auto* a, auto* b) { return a->run_id < b->run_id; });
    } else {
      for (const auto& id : args.run_ids) {
        const auto* r = adapt::find_run(registry, id);
        if (!r) throw ConfigError("unknown run '" + id + "' (not in " + adapt::registry_path(cfg.root()).string() + ")");
        todo.push_back(r);
      }
    }
    if (todo.empty()) throw ConfigError("evaluate: nothing to evaluate (pass --run, --all, --checkpoint or --hypotheses)");
    for (const auto* r : todo) {
      eval::EvalMeta meta;
      meta.run_id = r->run_id;
      meta.strategy = adapt::strategy_name(r->kind);
      meta.speaker = r->speaker;
      meta.ft_set = corpus::split_name(r->ft_set);
      const auto speakers = r->speaker ? std::vector<std::string>{*r->speaker} : all_speakers;
      out.push_back(evaluate_checkpoint<T>(cfg, cfg.root() / r->checkpoint_path, manifest, speakers, meta, lmp, lm_id, io));
    }
    return out;
  });
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string fixture;  // "paper" renders the published values
};

inline std::filesystem::path report_dir(const ExperimentConfig& cfg) { return cfg.root() / "report"; }

inline void cmd_report(const ExperimentConfig& cfg, const ReportArgs& args, Io io) {
  stamp("report", cfg, io);
  if (!args.fixture.empty()) {
    if (args.fixture != "paper") throw ConfigError("unknown fixture '" + args.fixture + "' (expected paper)");
    io.out << "fixture " << eval::fixtures::kVersion << "\n\n"
           << eval::render_fixture_table() << "\n"
           << eval::render_fixture_figure() << "\n"
           << eval::render_fixture_aggregation_note();
    return;
  }
  const auto runs = eval::read_eval_runs(cfg.root());
  if (runs.empty()) throw DataError("report: no evaluation results under " + eval::eval_dir(cfg.root()).string());
  std::vector<std::string> expected;
  if (!cfg.manifest.empty())
    for (const auto& p : selected_speakers(corpus::load_manifest(cfg.manifest), cfg)) expected.push_back(p.speaker_id);
  std::vector<eval::EvalRun> grid_runs;
  for (const auto& r : runs)
    if (eval::strategy_order(r.meta.strategy) < 3) grid_runs.push_back(r);
  if (grid_runs.empty()) throw DataError("report: no MST/SAT/TS-SAT evaluations found");
  const auto rep = eval::speaker_report(grid_runs, cfg.bootstrap_replicas, cfg.seed, expected);
  std::filesystem::create_directories(report_dir(cfg));
  eval::write_plot_data(rep.speakers, report_dir(cfg) / "plot_data.csv");
  {
    std::ofstream tsv(report_dir(cfg) / "aggregate.tsv", std::ios::trunc);
    tsv << eval::render_aggregate_tsv(rep);
  }
  io.out << eval::render_aggregate_table(rep);
  for (const auto& m : rep.missing) io.out << "missing: " << m << "\n";
  for (const auto& w : rep.warnings) io.log << "warning: " << w << "\n";
  io.out << "plot data -> " << (report_dir(cfg) / "plot_data.csv").string() << "\n";
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  std::string strategy = "TS-SAT";
  std::string ft_set = "TRAIN";
};

inline nlohmann::json cmd_stats(const ExperimentConfig& cfg, const StatsArgs& args, Io io) {
  stamp("stats", cfg, io);
  const auto manifest = require_manifest(cfg);
  const auto cs = corpus::corpus_stats(manifest);
  const auto selected = selected_speakers(manifest, cfg, &io.log);
  nlohmann::json j = {{"speakers", cs.n_speakers},        {"utterances", cs.n_utterances},
                      {"hours", cs.total_hours},          {"vocabulary_words", cs.vocab_words},
                      {"unknown_characters", cs.unk_chars}};

  std::vector<eval::SpeakerStats> stats;
  bool have_lm = false;
  with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    std::optional<nn::TransformerLm<T>> lm;
    const auto dir = cfg.lm_dir();
    if (dir && std::filesystem::exists(*dir / "meta.json")) lm.emplace(nn::load_lm<T>(*dir));
    have_lm = lm.has_value();
    std::optional<corpus::CharVocabulary> vocab;
    if (lm) vocab = corpus::CharVocabulary::from_json(nn::read_lm_meta(*dir).vocab);
    for (const auto& p : selected) {
      eval::SpeakerStats s;
      s.speaker_id = p.speaker_id;
      s.mean_words_per_utterance = cs.words_per_utterance.at(p.speaker_id);
      s.train_seconds = cs.per_speaker_seconds.at(p.speaker_id).train_s;
      if (lm) {
        std::vector<std::vector<int>> seqs;
        for (const auto& id : p.test) seqs.push_back(lm_sequence(*vocab, manifest.find(id)->transcript));
        if (!seqs.empty()) s.lm_perplexity_on_test = nn::lm_perplexity(*lm, seqs);
      }
      stats.push_back(s);
    }
    return 0;
  });

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : stats)
    rows.push_back({{"speaker", s.speaker_id},
                    {"mean_words_per_utterance", s.mean_words_per_utterance},
                    {"lm_perplexity_on_test", have_lm ? nlohmann::json(s.lm_perplexity_on_test) : nlohmann::json(nullptr)},
                    {"train_seconds", s.train_seconds}});
  j["selected"] = rows;

  // Per-speaker pooled WER of the chosen (strategy, ft_set), when evaluated.
  std::map<std::string, std::vector<eval::WerBreakdown>> per;
  for (const auto& run : eval::read_eval_runs(cfg.root())) {
    if (run.meta.strategy != adapt::strategy_name(adapt::parse_strategy(args.strategy)) ||
        run.meta.ft_set != corpus::split_name(adapt::parse_ft_set(args.ft_set)))
      continue;
    for (const auto& r : run.results)
      if (r.counts.reference_words > 0) per[r.speaker_id].push_back(r.counts);
  }
  std::map<std::string, double> wers;
  for (const auto& [spk, bs] : per) wers[spk] = eval::pooled_wer(bs);
  if (wers.size() >= 3) {
    j["correlation"] = eval::to_json(eval::correlate_stats(stats, wers));
    j["correlation"]["against"] = args.strategy + "/" + args.ft_set;
    if (!have_lm) j["correlation"]["note"] = "no language model; perplexity column is zero";
  }
  io.out << j.dump(2) << "\n";
  return j;
}

}  // namespace lipadapt::cli
