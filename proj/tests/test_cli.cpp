#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "lipadapt/adapt/registry.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/eval/report.hpp"
#include "support.hpp"

using namespace lipadapt;

namespace {

struct Outcome {
  int rc = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static inline std::unique_ptr<lipadapt::testing::ScratchDir> dir;

  static void SetUpTestSuite() {
    dir = std::make_unique<lipadapt::testing::ScratchDir>("cli");
    ASSERT_EQ(run("synth --out " + corpus_dir().string() + " --speakers 3 --train 1 --dev 1 --test 1 --seed 2").rc, 0);
  }
  static void TearDownTestSuite() { dir.reset(); }

  static std::filesystem::path corpus_dir() { return dir->path() / "corpus"; }
  static std::filesystem::path results() { return dir->path() / "results"; }
  static std::string common() {
    return " --manifest " + (corpus_dir() / "manifest.jsonl").string() + " --root " + results().string() + " --epochs 1";
  }

  static Outcome run(const std::string& args) {
    const auto out = dir->path() / "stdout.txt", err = dir->path() / "stderr.txt";
    const std::string cmd = std::string(LIPADAPT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }
};

TEST_F(Cli, EndToEnd) {
  auto r = run("prepare" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("prepared 12 written, 0 unchanged, 0 failed"), std::string::npos) << r.out;
  r = run("prepare" + common());
  EXPECT_NE(r.out.find("0 written, 12 unchanged"), std::string::npos) << r.out;

  r = run("init" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("root checkpoint"), std::string::npos);
  r = run("train-lm" + common());
  ASSERT_EQ(r.rc, 0) << r.err;

  r = run("adapt --strategy ts-sat --speaker spk1 --ft-set train" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto runs = adapt::read_registry(results());
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].run_id, "ts-sat-spk1-train");
  ASSERT_EQ(runs[1].lineage.size(), 3u);
  EXPECT_EQ(runs[1].lineage[1].tag, "MST(TRAIN)");
  EXPECT_EQ(runs[1].lineage[2].tag, "FT(spk1,TRAIN)");
  EXPECT_EQ(runs[1].parent_id, runs[0].checkpoint_id);

  r = run("adapt --strategy ts-sat --speaker spk1 --ft-set train" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(adapt::read_registry(results()).size(), 2u);

  r = run("adapt --strategy sat --speaker spk9 --ft-set train" + common());
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("spk9"), std::string::npos);

  r = run("evaluate --run ts-sat-spk1-train --beam-size 3" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("beam 3"), std::string::npos) << r.out;
  const auto meta = nlohmann::json::parse(slurp(results() / "eval" / "ts-sat-spk1-train.meta.json"));
  EXPECT_EQ(meta.at("decode_config").at("beam_size"), 3);
  EXPECT_TRUE(std::filesystem::exists(results() / "eval" / "ts-sat-spk1-train.nbest.jsonl"));

  r = run("report" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = eval::read_plot_data(results() / "report" / "plot_data.csv");
  ASSERT_FALSE(rows.empty());
  std::stringstream again;
  eval::write_plot_data(rows, again);
  EXPECT_EQ(again.str(), slurp(results() / "report" / "plot_data.csv"));
}

TEST_F(Cli, PerfectHypothesesScoreZero) {
  const auto m = corpus::load_manifest(corpus_dir() / "manifest.jsonl");
  const auto hyp = dir->path() / "hyp.tsv";
  {
    std::ofstream out(hyp);
    for (const auto& rec : m.records)
      if (rec.split == corpus::Split::Test) out << rec.id << '\t' << rec.transcript << '\n';
  }
  const auto r = run("evaluate --hypotheses " + hyp.string() + " --run-id oracle" + common());
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("oracle  WER 0.0%  95% CI [0.0, 0.0]"), std::string::npos) << r.out;
}

TEST_F(Cli, FixtureReport) {
  const auto r = run("report --fixture paper --root " + results().string());
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const char* cell : {"59.6", "36.4", "52.2", "29.1", "32.8", "24.9"})
    EXPECT_NE(r.out.find(cell), std::string::npos) << cell;
  EXPECT_EQ(run("report --fixture other --root " + results().string()).rc, 2);
}

TEST_F(Cli, CorruptLandmarksAreReportedNotFatal) {
  const auto corpus = dir->path() / "corpus_bad";
  std::filesystem::copy(corpus_dir(), corpus, std::filesystem::copy_options::recursive);
  std::ofstream(corpus / "landmarks" / "spk0_dev_0.json") << "{not json";
  const std::string args = " --manifest " + (corpus / "manifest.jsonl").string() + " --root " +
                           (dir->path() / "results_bad").string();
  auto r = run("prepare" + args);
  EXPECT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("FAILED spk0_dev_0"), std::string::npos) << r.out;
  r = run("prepare --strict" + args);
  EXPECT_EQ(r.rc, 3);
}

TEST_F(Cli, ConfigurationErrorsExitWithTwo) {
  const auto cfg = dir->path() / "bad.json";
  std::ofstream(cfg) << R"({"top_speakers": 3, "learning_rate": 1})";
  EXPECT_EQ(run("stats -c " + cfg.string()).rc, 2);
  EXPECT_EQ(run("adapt --strategy fast" + common()).rc, 2);
  EXPECT_EQ(run("evaluate --max-lr -1" + common()).rc, 2);
  EXPECT_EQ(run("bogus").rc, 2);
}

}  // namespace
