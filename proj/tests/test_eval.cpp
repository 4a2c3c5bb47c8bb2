#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lipadapt/eval/bootstrap.hpp"
#include "lipadapt/eval/correlation.hpp"
#include "lipadapt/eval/fixtures.hpp"
#include "lipadapt/eval/report.hpp"
#include "lipadapt/eval/results.hpp"
#include "lipadapt/eval/wer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lipadapt;
using namespace lipadapt::eval;

TEST(Wer, EditOpsExamples) {
  EXPECT_EQ(edit_ops("a b c", "a b c"), (WerBreakdown{0, 0, 0, 3}));
  EXPECT_EQ(edit_ops("a b c", "a x c"), (WerBreakdown{1, 0, 0, 3}));
  EXPECT_EQ(edit_ops("a b c", "a c"), (WerBreakdown{0, 1, 0, 3}));
  EXPECT_EQ(edit_ops("a b", "a b c"), (WerBreakdown{0, 0, 1, 2}));
  EXPECT_EQ(edit_ops("", "a"), (WerBreakdown{0, 0, 1, 0}));
  EXPECT_EQ(edit_ops("a b", ""), (WerBreakdown{0, 2, 0, 2}));
}

TEST(Wer, AlignmentIsConsistentWithCounts) {
  std::vector<EditOp> ops;
  const auto b = edit_ops(text::split_words("el gato come"), text::split_words("gato come pan"), &ops);
  EXPECT_EQ(b.errors(), 2);
  int s = 0, d = 0, i = 0;
  for (auto op : ops) {
    s += op == EditOp::Substitute;
    d += op == EditOp::Delete;
    i += op == EditOp::Insert;
  }
  EXPECT_EQ(s, b.substitutions);
  EXPECT_EQ(d, b.deletions);
  EXPECT_EQ(i, b.insertions);
}

TEST(Wer, ExhaustiveAgainstAlignmentEnumeration) {
  // All sequences up to length 4 over {x, y, z}; the acceptance binary goes to 5.
  std::vector<std::vector<std::string>> seqs{{}};
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (seqs[i].size() < 4)
      for (const char* w : {"x", "y", "z"}) {
        auto s = seqs[i];
        s.push_back(w);
        seqs.push_back(s);
      }
  for (const auto& r : seqs)
    for (const auto& h : seqs) {
      const auto b = edit_ops(r, h);
      ASSERT_EQ(b.errors(), oracle::min_alignment_cost(r, h));
      ASSERT_EQ(r.size() - b.substitutions - b.deletions, h.size() - b.substitutions - b.insertions);
    }
}

TEST(Wer, PooledIsNotMacroAveraged) {
  // 1 error in 1 word and 0 errors in 4 words: pooled 20%, mean of utterance WERs 50%.
  std::vector<WerBreakdown> bs{{1, 0, 0, 1}, {0, 0, 0, 4}};
  EXPECT_DOUBLE_EQ(pooled_wer(bs), 20.0);
  EXPECT_DOUBLE_EQ((wer_percent(bs[0]) + wer_percent(bs[1])) / 2, 50.0);
  EXPECT_THROW(wer_percent(WerBreakdown{}), DataError);
}

TEST(Bootstrap, AgreesWithIndependentResampler) {
  Rng rng(1);
  std::vector<WerBreakdown> bs;
  for (int i = 0; i < 30; ++i) bs.push_back({static_cast<int>(rng.below(3)), 0, 0, 3 + static_cast<int>(rng.below(5))});
  const auto res = bootstrap_ci(bs, 2000, 42);
  const auto reps = oracle::bootstrap_wers(bs, 2000, 42);
  EXPECT_DOUBLE_EQ(res.ci_low, oracle::quantile(reps, 0.025));
  EXPECT_DOUBLE_EQ(res.ci_high, oracle::quantile(reps, 0.975));
  EXPECT_DOUBLE_EQ(res.wer, pooled_wer(bs));
  EXPECT_LE(res.ci_low, res.wer);
  EXPECT_GE(res.ci_high, res.wer);
}

TEST(Bootstrap, PerfectHypothesesGiveZeroInterval) {
  std::vector<WerBreakdown> bs(10, WerBreakdown{0, 0, 0, 4});
  const auto res = bootstrap_ci(bs, 500, 0);
  EXPECT_EQ(res.wer, 0);
  EXPECT_EQ(res.ci_low, 0);
  EXPECT_EQ(res.ci_high, 0);
}

TEST(Bootstrap, RejectsTooFewReplicasAndEmptyInput) {
  EXPECT_THROW(bootstrap_ci({}, 1000, 0), DataError);
  EXPECT_THROW(bootstrap_ci({{0, 0, 0, 1}}, 10, 0), ConfigError);
}

TEST(Correlation, SpearmanKnownValues) {
  EXPECT_NEAR(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_FALSE(spearman({1, 1, 1}, {1, 2, 3}).has_value());
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Correlation, ReportsEachStatistic) {
  std::vector<SpeakerStats> stats{{"a", 3, 10, 100}, {"b", 5, 12, 50}, {"c", 4, 20, 75}};
  const auto rep = correlate_stats(stats, {{"a", 10}, {"b", 30}, {"c", 20}});
  EXPECT_EQ(rep.sample_size, 3);
  ASSERT_EQ(rep.correlations.size(), 3u);
  EXPECT_NEAR(*rep.correlations[0].rho, 1.0, 1e-12);  // words per utterance vs WER
}

TEST(Fixtures, TableCellsRenderVerbatim) {
  const auto t = render_fixture_table();
  for (const char* cell : {"59.6±1.3", "36.4±1.3", "52.2±1.4", "29.1±1.5", "32.8±1.3", "24.9±1.4"})
    EXPECT_NE(t.find(cell), std::string::npos) << cell;
}

TEST(Fixtures, FigureHasSixtyPoints) {
  const auto rows = fixture_plot_rows();
  EXPECT_EQ(rows.size(), 60u);
  std::set<std::string> speakers;
  for (const auto& r : rows) speakers.insert(r.speaker);
  EXPECT_EQ(speakers.size(), 20u);
}

TEST(Fixtures, UnweightedMeanDiffersFromPooledCell) {
  EXPECT_NEAR(fixture_speaker_mean("MST"), 34.4, 0.1);
  EXPECT_NE(render_fixture_aggregation_note().find("34.4"), std::string::npos);
}

TEST(Report, PlotDataRoundTrip) {
  std::vector<SpeakerRow> rows{{"s1", "MST", "TRAIN", 12.5, 10.0, 15.25}, {"s2", "TS-SAT", "DEV", 0.1, 0, 0.3}};
  std::stringstream ss;
  write_plot_data(rows, ss);
  EXPECT_EQ(ss.str().substr(0, std::string(kPlotHeader).size()), kPlotHeader);
  const auto back = read_plot_data(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].speaker, "s2");
  EXPECT_DOUBLE_EQ(back[0].ci_high, 15.25);
  EXPECT_DOUBLE_EQ(back[1].wer, 0.1);
}

TEST(Report, SpeakerReportPoolsAndAverages) {
  auto run = [](std::string id, std::string spk, std::vector<std::pair<std::string, std::string>> utts) {
    EvalRun r;
    r.meta.run_id = id;
    r.meta.strategy = "SAT";
    r.meta.speaker = spk;
    r.meta.ft_set = "TRAIN";
    int k = 0;
    for (auto& [ref, hyp] : utts) r.results.push_back(score_utterance(id + std::to_string(k++), spk, ref, hyp));
    return r;
  };
  std::vector<EvalRun> runs{run("r1", "a", {{"x", "y"}}), run("r2", "b", {{"x y z w", "x y z w"}})};
  const auto rep = speaker_report(runs, 200, 0);
  ASSERT_EQ(rep.aggregates.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.aggregates[0].pooled.wer, 20.0);
  EXPECT_DOUBLE_EQ(rep.aggregates[0].speaker_mean, 50.0);
  EXPECT_EQ(rep.speakers.size(), 2u);
}

TEST(Results, JsonRoundTripAndEmptyReferences) {
  lipadapt::testing::ScratchDir dir("results");
  EvalRun r;
  r.meta.run_id = "sat-a-train";
  r.meta.strategy = "SAT";
  r.meta.speaker = "a";
  r.meta.ft_set = "TRAIN";
  r.results = {score_utterance("u1", "a", "hola mundo", "hola"), score_utterance("u2", "a", "", "x")};
  std::vector<std::string> excluded;
  const auto bs = scorable(r.results, &excluded);
  EXPECT_EQ(bs.size(), 1u);
  EXPECT_EQ(excluded, std::vector<std::string>{"u2"});
  write_eval_run(r, dir.path());
  const auto back = read_eval_runs(dir.path());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].results[0].counts, r.results[0].counts);
  EXPECT_EQ(*back[0].meta.speaker, "a");
}
