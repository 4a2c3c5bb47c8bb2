#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/core/rng.hpp"
#include "lipadapt/core/text.hpp"
#include "support.hpp"

using namespace lipadapt;
using lipadapt::testing::gradcheck;
using lipadapt::testing::random_tensor;
using lipadapt::testing::scalarize;
using lipadapt::testing::VarD;

namespace {

VarD param(Shape s, Rng& rng, double scale = 1.0) { return ag::parameter(random_tensor(std::move(s), rng, scale)); }

}  // namespace

TEST(Text, NormalizeLowercasesAndStripsPunctuation) {
  EXPECT_EQ(text::normalize_transcript("  Hola,   MUNDO! "), "hola mundo");
  EXPECT_EQ(text::normalize_transcript("¿Qué TAL?"), "qué tal");
  EXPECT_EQ(text::normalize_transcript("ÁÉÍÓÚÑ"), "áéíóúñ");
  EXPECT_EQ(text::normalize_transcript(""), "");
}

TEST(Text, Utf8RoundTrip) {
  const std::string s = "año pingüino €";
  EXPECT_EQ(text::utf8_encode(text::utf8_decode(s)), s);
  EXPECT_EQ(text::utf8_decode("ñ").size(), 1u);
}

TEST(Text, SplitAndJoinWords) {
  EXPECT_EQ(text::split_words("  a  bb\tc "), (std::vector<std::string>{"a", "bb", "c"}));
  EXPECT_TRUE(text::split_words("   ").empty());
  EXPECT_EQ(text::join_words({"x", "y"}), "x y");
}

TEST(Hash, KnownFnvValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(to_hex(0xabcULL), "0000000000000abc");
  EXPECT_EQ(from_hex(to_hex(0x1234567890abcdefULL)), 0x1234567890abcdefULL);
}

TEST(Rng, DeterministicAndKeyed) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(derive_seed(1, "x"), derive_seed(1, "y"));
  EXPECT_NE(derive_seed(1, {1}), derive_seed(1, {2}));
  EXPECT_EQ(derive_seed(3, "k", {4}), derive_seed(3, "k", {4}));
}

TEST(Rng, BelowIsInRangeAndCoversValues) {
  Rng r(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
  for (int i = 0; i < 200; ++i) {
    const auto v = r.uniform_int(-2, 2);
    EXPECT_GE(v, -2);
    EXPECT_LE(v, 2);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(3);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Tensor, SizeMismatchThrows) {
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_EQ(shape_numel({2, 3, 4}), 24u);
  EXPECT_EQ(shape_str({2, 3}), "[2,3]");
}

TEST(Autograd, ElementwiseAndReshapeGradients) {
  Rng rng(1);
  auto a = param({3, 4}, rng), b = param({3, 4}, rng);
  EXPECT_LT(gradcheck({a, b}, [&] { return scalarize(ag::scale(ag::add(a, b), 0.7)); }), 1e-6);
  EXPECT_LT(gradcheck({a}, [&] { return scalarize(ag::reshape(ag::transpose(a), {2, 6})); }), 1e-6);
}

TEST(Autograd, GluSliceConcatGradients) {
  Rng rng(2);
  auto a = param({3, 6}, rng), b = param({3, 2}, rng);
  EXPECT_LT(gradcheck({a}, [&] { return scalarize(ag::glu_cols(a)); }), 1e-6);
  EXPECT_LT(gradcheck({a, b}, [&] { return scalarize(ag::concat_cols<double>({ag::slice_cols(a, 1, 3), b})); }), 1e-6);
}

TEST(Autograd, MatmulAndLinearGradients) {
  Rng rng(3);
  auto a = param({3, 4}, rng), b = param({4, 2}, rng), c = param({5, 4}, rng);
  auto w = param({2, 4}, rng), bias = param({2}, rng);
  EXPECT_LT(gradcheck({a, b}, [&] { return scalarize(ag::matmul(a, b)); }), 1e-6);
  EXPECT_LT(gradcheck({a, c}, [&] { return scalarize(ag::matmul_nt(a, c)); }), 1e-6);
  EXPECT_LT(gradcheck({a, w, bias}, [&] { return scalarize(ag::linear(a, w, bias)); }), 1e-6);
}

TEST(Autograd, NormalizationGradients) {
  Rng rng(4);
  auto x = param({3, 5}, rng), g = param({5}, rng), be = param({5}, rng);
  auto cg = param({3}, rng), cb = param({3}, rng);
  EXPECT_LT(gradcheck({x, g, be}, [&] { return scalarize(ag::layer_norm(x, g, be)); }), 1e-5);
  EXPECT_LT(gradcheck({x, cg, cb}, [&] { return scalarize(ag::channel_norm(x, cg, cb)); }), 1e-5);
}

TEST(Autograd, SoftmaxAndCrossEntropyGradients) {
  Rng rng(5);
  auto x = param({4, 5}, rng);
  EXPECT_LT(gradcheck({x}, [&] { return scalarize(ag::softmax_rows(x)); }), 1e-6);
  EXPECT_LT(gradcheck({x}, [&] { return scalarize(ag::log_softmax_rows(x)); }), 1e-6);
  EXPECT_LT(gradcheck({x}, [&] { return ag::smoothed_cross_entropy(x, {0, 3, 1, 4}, 0.1); }), 1e-6);
}

TEST(Autograd, SmoothedCrossEntropyMatchesDefinition) {
  Tensor<double> logits({1, 3}, {1.0, 2.0, 0.5});
  auto l = ag::smoothed_cross_entropy(ag::constant(logits), {1}, 0.1);
  const double z = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5));
  const double expect = -(0.9 * (2.0 - z) + 0.05 * (1.0 - z) + 0.05 * (0.5 - z));
  EXPECT_NEAR(l.item(), expect, 1e-12);
}

TEST(Autograd, EmbeddingAndTemporalConvGradients) {
  Rng rng(6);
  auto table = param({6, 3}, rng);
  EXPECT_LT(gradcheck({table}, [&] { return scalarize(ag::embedding(table, {1, 4, 1, 0})); }), 1e-6);
  auto x = param({5, 3}, rng), w = param({3, 3}, rng), b = param({3}, rng);
  EXPECT_LT(gradcheck({x, w, b}, [&] { return scalarize(ag::depthwise_conv_time(x, w, b)); }), 1e-6);
}

TEST(Autograd, ConvolutionAndPoolingGradients) {
  Rng rng(7);
  auto x = param({2, 3, 6, 6}, rng), w = param({2, 2, 3, 3, 3}, rng, 0.3), b = param({2}, rng);
  const ag::Conv3dGeometry g{3, 3, 3, 1, 2, 2, 1, 1, 1};
  EXPECT_LT(gradcheck({x, w, b}, [&] { return scalarize(ag::conv3d(x, w, b, g)); }), 1e-5);
  EXPECT_LT(gradcheck({x}, [&] { return scalarize(ag::max_pool_spatial(x, 3, 2, 1)); }), 1e-6);
  EXPECT_LT(gradcheck({x}, [&] { return scalarize(ag::mean_spatial(x)); }), 1e-6);
}

TEST(Autograd, ConvolutionOutputShape) {
  Rng rng(8);
  auto x = param({1, 4, 8, 8}, rng), w = param({3, 1, 5, 7, 7}, rng), b = param({3}, rng);
  auto y = ag::conv3d(x, w, b, {5, 7, 7, 1, 2, 2, 2, 3, 3});
  EXPECT_EQ(y.shape(), (Shape{3, 4, 4, 4}));
  EXPECT_EQ(ag::max_pool_spatial(y, 3, 2, 1).shape(), (Shape{3, 4, 2, 2}));
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  auto a = ag::parameter(Tensor<double>({1, 1}, {3.0}));
  auto y = ag::sum(ag::add(a, a));
  ag::backward(y);
  EXPECT_DOUBLE_EQ(a.grad()[0], 2.0);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  auto a = ag::parameter(Tensor<double>({1, 1}, {3.0}));
  ag::NoGradGuard guard;
  auto y = ag::scale(a, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, BackwardNeedsScalar) {
  Rng rng(9);
  auto a = param({2, 2}, rng);
  EXPECT_THROW(ag::backward(a), Error);
}
