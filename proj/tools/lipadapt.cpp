// lipadapt: speaker adaptation experiments for visual speech recognition.
//
//   lipadapt prepare   --manifest corpus/manifest.jsonl
//   lipadapt init      [--import pretrained_dir]
//   lipadapt train-lm
//   lipadapt adapt     --strategy ts-sat --speaker spkr19 --ft-set train
//   lipadapt evaluate  --all
//   lipadapt report    [--fixture paper]
//   lipadapt stats
//   lipadapt synth     --out corpus_dir
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lipadapt/cli/commands.hpp"
#include "lipadapt/corpus/synthetic.hpp"

namespace {

using namespace lipadapt;

struct Overrides {
  std::string config;
  std::string manifest, root, prepared, root_checkpoint, lm, precision, model_preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> top_speakers, beam_size, epochs;
  std::optional<double> max_lr, lm_weight, ctc_weight;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "experiment configuration (JSON)");
  app->add_option("--manifest", o.manifest, "corpus manifest");
  app->add_option("--root", o.root, "results root (default: $LIPADAPT_RESULTS_ROOT or ./results)");
  app->add_option("--prepared", o.prepared, "prepared ROI directory");
  app->add_option("--root-checkpoint", o.root_checkpoint, "checkpoint every strategy starts from");
  app->add_option("--lm", o.lm, "language model directory, or 'none'");
  app->add_option("--precision", o.precision, "f64 or f32");
  app->add_option("--model-preset", o.model_preset, "toy or paper");
  app->add_option("--seed", o.seed, "global seed");
  app->add_option("--top-speakers", o.top_speakers, "number of most talkative speakers to select");
  app->add_option("--beam-size", o.beam_size, "beam width");
  app->add_option("--epochs", o.epochs, "fine-tuning epochs");
  app->add_option("--max-lr", o.max_lr, "peak learning rate");
  app->add_option("--lm-weight", o.lm_weight, "shallow fusion weight");
  app->add_option("--ctc-weight", o.ctc_weight, "CTC weight at decoding time");
}

cli::ExperimentConfig resolve(const Overrides& o) {
  auto c = cli::load_config(o.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.config));
  if (!o.manifest.empty()) c.manifest = o.manifest;
  if (!o.root.empty()) c.results_root = o.root;
  if (!o.prepared.empty()) c.prepared = o.prepared;
  if (!o.root_checkpoint.empty()) c.root_checkpoint = o.root_checkpoint;
  if (!o.lm.empty()) c.lm = o.lm;
  if (!o.precision.empty()) c.precision = o.precision;
  if (!o.model_preset.empty()) c.model["preset"] = o.model_preset;
  if (o.seed) c.seed = *o.seed;
  if (o.top_speakers) c.top_speakers = *o.top_speakers;
  if (o.beam_size) c.decode.beam_size = *o.beam_size;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.max_lr) c.train.max_lr = *o.max_lr;
  if (o.lm_weight) c.decode.lm_weight = *o.lm_weight;
  if (o.ctc_weight) c.decode.ctc_weight = *o.ctc_weight;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"Speaker adaptation experiments for visual speech recognition"};
  app.require_subcommand(1);
  Overrides o;
  cli::Io io{std::cout, std::cerr};

  auto* prepare = app.add_subcommand("prepare", "extract mouth ROIs, TRAIN statistics and the vocabulary");
  add_common(prepare, o);
  cli::PrepareArgs pa;
  prepare->add_option("--landmarks-dir", pa.landmarks_dir, "directory landmark refs resolve against");
  prepare->add_option("--detector", pa.detector, "external landmark detector command");
  prepare->add_flag("--strict", pa.strict, "abort on the first failing utterance");

  auto* init = app.add_subcommand("init", "create the root checkpoint (random or imported)");
  add_common(init, o);
  cli::InitArgs ia;
  init->add_option("--import", ia.import_dir, "external pretrained checkpoint directory");

  auto* train_lm = app.add_subcommand("train-lm", "train the character language model on TRAIN transcripts");
  add_common(train_lm, o);

  auto* adapt = app.add_subcommand("adapt", "run the strategy x speaker x fine-tuning-set grid");
  add_common(adapt, o);
  std::vector<std::string> strategies, speakers, ft_sets;
  adapt->add_option("--strategy", strategies, "mst, sat, ts-sat (repeatable)")->delimiter(',');
  adapt->add_option("--speaker", speakers, "speaker id (repeatable)")->delimiter(',');
  adapt->add_option("--ft-set", ft_sets, "train or dev (repeatable)")->delimiter(',');
  bool resume = true;
  adapt->add_flag("--resume,!--no-resume", resume, "skip runs already completed with identical inputs (default)");

  auto* evaluate = app.add_subcommand("evaluate", "decode TEST sets and score them");
  add_common(evaluate, o);
  cli::EvaluateArgs ea;
  evaluate->add_option("--run", ea.run_ids, "registered run id (repeatable)")->delimiter(',');
  evaluate->add_flag("--all", ea.all, "every registered run");
  evaluate->add_option("--checkpoint", ea.checkpoint, "ad-hoc checkpoint directory");
  evaluate->add_option("--run-id", ea.run_id, "label for ad-hoc or hypothesis evaluations");
  evaluate->add_option("--hypotheses", ea.hypotheses, "score '<id>\\t<text>' lines instead of decoding");
  evaluate->add_option("--speaker", ea.speakers, "restrict an ad-hoc evaluation to these speakers")->delimiter(',');

  auto* report = app.add_subcommand("report", "aggregate table and per-speaker plot data");
  add_common(report, o);
  cli::ReportArgs ra;
  report->add_option("--fixture", ra.fixture, "render embedded published values ('paper')");

  auto* stats = app.add_subcommand("stats", "corpus statistics and their correlation with WER");
  add_common(stats, o);
  cli::StatsArgs sa;
  stats->add_option("--strategy", sa.strategy, "strategy whose WERs are correlated");
  stats->add_option("--ft-set", sa.ft_set, "fine-tuning set whose WERs are correlated");

  auto* synth = app.add_subcommand("synth", "write a synthetic moving-pattern corpus");
  corpus::SyntheticSpec ss;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--speakers", ss.speakers, "number of speakers");
  synth->add_option("--train", ss.train_per_speaker, "TRAIN utterances per speaker");
  synth->add_option("--dev", ss.dev_per_speaker, "DEV utterances per speaker");
  synth->add_option("--test", ss.test_per_speaker, "TEST utterances per speaker");
  synth->add_option("--seed", ss.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto path = corpus::write_synthetic_corpus(corpus::synthetic_corpus(ss), ss, synth_out);
      std::cout << "synthetic corpus -> " << path.string() << "\n";
      return 0;
    }
    auto cfg = resolve(o);
    if (prepare->parsed()) cli::cmd_prepare(cfg, pa, io);
    else if (init->parsed()) cli::cmd_init(cfg, ia, io);
    else if (train_lm->parsed()) cli::cmd_train_lm(cfg, io);
    else if (adapt->parsed()) {
      if (!strategies.empty()) cfg.grid.strategies = strategies;
      if (!speakers.empty()) cfg.grid.speakers = speakers;
      if (!ft_sets.empty()) cfg.grid.ft_sets = ft_sets;
      cfg.validate();
      cli::cmd_adapt(cfg, io, resume);
    } else if (evaluate->parsed()) cli::cmd_evaluate(cfg, ea, io);
    else if (report->parsed()) cli::cmd_report(cfg, ra, io);
    else if (stats->parsed()) cli::cmd_stats(cfg, sa, io);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
