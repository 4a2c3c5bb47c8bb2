#include <cmath>

#include <gtest/gtest.h>

#include "lipadapt/ctc/ctc.hpp"
#include "lipadapt/ctc/prefix_score.hpp"
#include "oracles.hpp"

using namespace lipadapt;

TEST(Ctc, CollapseRule) {
  EXPECT_EQ(ctc::collapse({1, 1, 0, 1, 2, 2, 0}), (std::vector<int>{1, 1, 2}));
  EXPECT_EQ(ctc::collapse({0, 0}), std::vector<int>{});
  EXPECT_EQ(ctc::collapse({3, 3, 3}), std::vector<int>{3});
}

TEST(Ctc, MinimumFramesCountsRepeats) {
  EXPECT_EQ(ctc::min_frames({}), 0);
  EXPECT_EQ(ctc::min_frames({1, 2}), 2);
  EXPECT_EQ(ctc::min_frames({1, 1}), 3);
  EXPECT_EQ(ctc::min_frames({1, 1, 1, 2, 2}), 8);
  EXPECT_TRUE(ctc::feasible(3, {1, 1}));
  EXPECT_FALSE(ctc::feasible(2, {1, 1}));
}

TEST(Ctc, HandWorkedTwoFrameExample) {
  // Uniform over {blank, a}: target "a" has paths aa, _a, a_ -> 3/4.
  Tensor<double> lp({2, 2}, std::log(0.5));
  EXPECT_NEAR(ctc::ctc_loss(lp, {1}).loss, -std::log(0.75), 1e-12);
  EXPECT_NEAR(ctc::ctc_loss(lp, {}).loss, -std::log(0.25), 1e-12);
}

TEST(Ctc, InfeasibleAndInvalidTargets) {
  Tensor<double> lp({2, 3}, std::log(1.0 / 3));
  EXPECT_THROW(ctc::ctc_loss(lp, {1, 1}), NumericError);
  EXPECT_THROW(ctc::ctc_loss(lp, {0}), DataError);
  EXPECT_THROW(ctc::ctc_loss(lp, {3}), DataError);
}

TEST(Ctc, MatchesPathEnumeration) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = 1 + static_cast<int>(rng.below(4)), V = 2 + static_cast<int>(rng.below(2));
    auto lp = oracle::random_logprobs(T, V, rng);
    for (const auto& [labels, logp] : oracle::all_labelings(lp))
      EXPECT_NEAR(ctc::ctc_loss(lp, labels).loss, -logp, 1e-9);
  }
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  auto lp = oracle::random_logprobs(5, 4, rng);
  const std::vector<int> target{2, 2, 3};
  const auto res = ctc::ctc_loss(lp, target);
  const double h = 1e-6;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    auto up = lp, down = lp;
    up.data[i] += h;
    down.data[i] -= h;
    const double fd = (ctc::ctc_loss(up, target).loss - ctc::ctc_loss(down, target).loss) / (2 * h);
    EXPECT_NEAR(res.grad.data[i], fd, 1e-7);
  }
}

TEST(Ctc, LogitGradientIsSoftmaxMinusOccupancy) {
  Rng rng(3);
  auto lp = oracle::random_logprobs(4, 3, rng);
  const auto res = ctc::ctc_loss(lp, {1, 2});
  const auto g = ctc::grad_wrt_logits(lp, res.grad);
  for (int t = 0; t < 4; ++t) {
    double row = 0;
    for (int k = 0; k < 3; ++k) row += g.at(t, k);
    EXPECT_NEAR(row, 0.0, 1e-12);  // occupancies sum to one per frame
  }
}

TEST(PrefixScore, MatchesEnumeration) {
  Rng rng(4);
  const int eos = 1;
  for (int trial = 0; trial < 20; ++trial) {
    auto lp = oracle::random_logprobs(3, 4, rng);
    ctc::PrefixScorer<double> scorer(lp, eos);
    for (const std::vector<int>& prefix :
         {std::vector<int>{2}, {3}, {2, 3}, {3, 3}, {2, 2, 2}, {3, 2, 3}}) {
      const double expect = oracle::ctc_prefix_logprob(lp, prefix);
      const double got = scorer.score_prefix(prefix);
      if (expect == oracle::kNegInf) EXPECT_EQ(got, expect);
      else EXPECT_NEAR(got, expect, 1e-9);
    }
    // eos closes the prefix: full-labeling probability.
    auto st = scorer.extend(scorer.extend(scorer.initial(), 2), eos);
    EXPECT_NEAR(st.prefix_logprob, oracle::ctc_logprob(lp, {2}), 1e-9);
  }
}

TEST(PrefixScore, IncrementsTelescope) {
  Rng rng(5);
  auto lp = oracle::random_logprobs(4, 4, rng);
  ctc::PrefixScorer<double> scorer(lp, 1);
  auto st = scorer.initial();
  double total = 0;
  for (int tok : {2, 3, 2}) {
    auto [next, inc] = ctc::prefix_step(scorer, st, tok);
    total += inc;
    st = next;
  }
  EXPECT_NEAR(total, scorer.score_prefix({2, 3, 2}), 1e-12);
}

TEST(PrefixScore, RejectsBlankAndOutOfRange) {
  Tensor<double> lp({2, 3}, std::log(1.0 / 3));
  ctc::PrefixScorer<double> scorer(lp, 1);
  EXPECT_THROW(scorer.extend(scorer.initial(), 0), DataError);
  EXPECT_THROW(scorer.extend(scorer.initial(), 3), DataError);
}
