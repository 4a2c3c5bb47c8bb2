#include <cmath>
#include <fstream>
#include <regex>

#include <gtest/gtest.h>

#include "lipadapt/adapt/lm_train.hpp"
#include "lipadapt/network/checkpoint.hpp"
#include "lipadapt/network/import.hpp"
#include "lipadapt/network/lm.hpp"
#include "lipadapt/network/model.hpp"
#include "support.hpp"

using namespace lipadapt;
using lipadapt::testing::rel_err;

namespace {

// Parameter count written out from the architecture description.
long long expected_parameters(const nn::ModelConfig& c) {
  const long long d = c.model_dim, F = c.feedforward_dim, V = c.vocab_size, K = c.conv_kernel;
  auto lin = [](long long i, long long o) { return i * o + o; };
  auto norm = [](long long n) { return 2 * n; };
  long long n = static_cast<long long>(c.frontend_channels) * c.frontend_kernel_t * c.frontend_kernel_hw *
                    c.frontend_kernel_hw +
                norm(c.frontend_channels);
  long long cin = c.frontend_channels;
  for (std::size_t s = 0; s < c.trunk_blocks.size(); ++s)
    for (int b = 0; b < c.trunk_blocks[s]; ++b) {
      const long long cout = c.trunk_channels[s];
      const bool down = (s > 0 && b == 0) || cin != cout;
      n += cout * cin * 9 + cout * cout * 9 + 2 * norm(cout);
      if (down) n += cout * cin + norm(cout);
      cin = cout;
    }
  n += lin(cin, d);
  const long long ff = norm(d) + lin(d, F) + lin(F, d);
  const long long conformer = 2 * ff + 2 * norm(d) + 4 * lin(d, d) + norm(d) + lin(d, 2 * d) + lin(d, d) + d * K + d + norm(d);
  n += c.encoder_layers * conformer + norm(d) + lin(d, V);
  const long long decoder = 2 * norm(d) + 8 * lin(d, d) + ff;
  n += V * d + c.decoder_layers * decoder + norm(d) + lin(d, V);
  return n;
}

vision::Video<double> random_video(int frames, int size, std::uint64_t seed) {
  Rng rng(seed);
  vision::Video<double> v(frames, size, size);
  for (auto& x : v.data) x = rng.normal();
  return v;
}

}  // namespace

TEST(Model, ToyParameterCountMatchesClosedForm) {
  const auto cfg = nn::model_preset("toy", 12);
  nn::VsrModel<double> m(cfg, 0);
  EXPECT_EQ(static_cast<long long>(m.parameter_count()), expected_parameters(cfg));
  EXPECT_EQ(m.parameter_count(), 60572u);
}

TEST(Model, PaperPresetLayout) {
  const auto cfg = nn::model_preset("paper", 40);
  const auto layout = nn::VsrModel<float>::layout(cfg);
  long long total = 0;
  int encoders = 0, decoders = 0;
  for (const auto& [name, shape] : layout) {
    total += static_cast<long long>(shape_numel(shape));
    encoders += std::regex_match(name, std::regex(R"(encoder\.\d+\.final_norm\.gamma)"));
    decoders += std::regex_match(name, std::regex(R"(decoder\.\d+\.norm1\.gamma)"));
  }
  EXPECT_EQ(encoders, 12);
  EXPECT_EQ(decoders, 6);
  EXPECT_EQ(total, expected_parameters(cfg));
  EXPECT_EQ(cfg.trunk_layers(), 16);
}

TEST(Model, ConfigValidationAndUnknownKeys) {
  EXPECT_THROW(nn::model_preset("huge", 12), ConfigError);
  EXPECT_THROW(nn::model_config_from_json({{"preset", "toy"}, {"vocab_size", 12}, {"bogus", 1}}), ConfigError);
  auto c = nn::model_preset("toy", 12);
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  const auto back = nn::model_config_from_json(nn::to_json(nn::model_preset("toy", 12)));
  EXPECT_EQ(back.model_dim, 32);
  EXPECT_EQ(back.vocab_size, 12);
}

TEST(Model, SameSeedSameParameters) {
  const auto cfg = nn::model_preset("toy", 10);
  nn::VsrModel<double> a(cfg, 4), b(cfg, 4), c(cfg, 5);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    EXPECT_EQ(a.params().entries()[i].var.value().data, b.params().entries()[i].var.value().data);
    differs = differs || a.params().entries()[i].var.value().data != c.params().entries()[i].var.value().data;
  }
  EXPECT_TRUE(differs);
}

TEST(Model, EncoderKeepsFrameRate) {
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 0);
  const auto enc = m.encode(random_video(10, 88, 1));
  EXPECT_EQ(enc.frames(), 10);
  EXPECT_EQ(enc.features.cols(), 32);
  const auto lp = m.ctc_logprobs(enc.features);
  for (int t = 0; t < 10; ++t) {
    double s = 0;
    for (int k = 0; k < 10; ++k) s += std::exp(lp.value().at(t, k));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(m.encode(random_video(3, 96, 1)), DataError);
}

TEST(Model, HybridLossEndpoints) {
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 0);
  const auto video = random_video(6, 88, 2);
  const std::vector<int> target{4, 5, 6};
  const auto ctc_only = m.hybrid_loss(video, target, 1, 1.0);
  const auto att_only = m.hybrid_loss(video, target, 1, 0.0);
  const auto mix = m.hybrid_loss(video, target, 1, 0.3);
  EXPECT_DOUBLE_EQ(ctc_only.total.item(), ctc_only.ctc);
  EXPECT_DOUBLE_EQ(att_only.total.item(), att_only.attention);
  EXPECT_NEAR(mix.total.item(), 0.3 * mix.ctc + 0.7 * mix.attention, 1e-10);
  EXPECT_NEAR(mix.ctc, ctc_only.ctc, 1e-10);
  EXPECT_THROW(m.hybrid_loss(video, target, 1, 1.5), ConfigError);
}

TEST(Model, HybridLossGradientMatchesFiniteDifferences) {
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 3);
  const auto video = random_video(4, 88, 3);
  const std::vector<int> target{4, 7};
  m.params().zero_grad();
  ag::backward(m.hybrid_loss(video, target, 1, 0.3).total);
  Rng rng(17);
  auto& entries = m.params().entries();
  double worst = 0;
  for (int k = 0; k < 12; ++k) {
    auto& e = entries[rng.below(entries.size())];
    const std::size_t i = rng.below(e.var.size());
    const double analytic = e.var.grad()[i];
    auto& x = e.var.mutable_value().data[i];
    const double x0 = x, h = 1e-6;
    ag::NoGradGuard guard;
    x = x0 + h;
    const double up = m.hybrid_loss(video, target, 1, 0.3).total.item();
    x = x0 - h;
    const double down = m.hybrid_loss(video, target, 1, 0.3).total.item();
    x = x0;
    worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Lm, DistributionsAreNormalizedAndCacheAgrees) {
  nn::TransformerLm<double> lm(nn::lm_preset("toy", 9), 2);
  auto st = lm.start(1);
  std::vector<int> prefix{1};
  for (int tok : {4, 5, 3, 6}) {
    const auto uncached = lm.next_logprobs(prefix);
    double s = 0;
    for (double v : uncached) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (std::size_t k = 0; k < uncached.size(); ++k) EXPECT_NEAR(st.next_logprobs[k], uncached[k], 1e-10);
    st = lm.advance(st, tok);
    prefix.push_back(tok);
  }
  EXPECT_THROW(lm.next_logprobs({}), DataError);
}

TEST(Lm, OverfitsTinyCorpus) {
  nn::TransformerLm<double> lm(nn::lm_preset("toy", 8), 0);
  const std::vector<std::vector<int>> seqs{{1, 4, 5, 6, 1}, {1, 7, 7, 1}};
  adapt::TrainConfig cfg;
  cfg.epochs = 150;
  cfg.max_lr = 3e-3;
  cfg.weight_decay = 0;
  const auto losses = adapt::train_lm(lm, seqs, cfg);
  EXPECT_LT(losses.back(), losses.front());
  // The first token after sos is a coin flip, paid once per sequence; the
  // remaining five predictions are deterministic.
  const double floor = std::exp(2 * std::log(2.0) / 7.0);
  EXPECT_GT(nn::lm_perplexity(lm, seqs), floor - 1e-9);
  EXPECT_LT(nn::lm_perplexity(lm, seqs), floor * 1.02);
}

TEST(Checkpoint, RoundTripPreservesParametersAndMeta) {
  lipadapt::testing::ScratchDir dir("ckpt");
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 7);
  nn::CheckpointMeta meta;
  meta.lineage = {{"random-init", "", ""}, {"MST(TRAIN)", "abc", "def"}};
  meta.norm_stats = {{"mean", 0.4}, {"variance", 0.02}, {"count", 10}};
  const auto id = nn::save_checkpoint(m, meta, dir.path() / "a");
  const auto loaded = nn::load_checkpoint<double>(dir.path() / "a");
  EXPECT_EQ(loaded.meta.id, id);
  ASSERT_EQ(loaded.meta.lineage.size(), 2u);
  EXPECT_EQ(loaded.meta.lineage[1].tag, "MST(TRAIN)");
  for (std::size_t i = 0; i < m.params().entries().size(); ++i)
    EXPECT_EQ(m.params().entries()[i].var.value().data, loaded.model.params().entries()[i].var.value().data);
  // saving identical content twice gives the same id
  EXPECT_EQ(nn::save_checkpoint(loaded.model, meta, dir.path() / "b"), id);
}

TEST(Checkpoint, VocabularyMismatchIsReported) {
  lipadapt::testing::ScratchDir dir("ckpt_vocab");
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 7);
  nn::CheckpointMeta meta;
  meta.lineage = {{"random-init", "", ""}};
  nn::save_checkpoint(m, meta, dir.path());
  nn::VsrModel<double> other(nn::model_preset("toy", 11), 7);
  EXPECT_THROW(nn::load_checkpoint_into(other, dir.path()), ConfigError);
}

TEST(Checkpoint, CorruptionAndEmptyLineageAreErrors) {
  lipadapt::testing::ScratchDir dir("ckpt_bad");
  nn::VsrModel<double> m(nn::model_preset("toy", 10), 7);
  EXPECT_THROW(nn::save_checkpoint(m, nn::CheckpointMeta{}, dir.path()), ConfigError);
  nn::CheckpointMeta meta;
  meta.lineage = {{"random-init", "", ""}};
  nn::save_checkpoint(m, meta, dir.path());
  {
    std::fstream f(dir.path() / "params.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  EXPECT_THROW(nn::load_checkpoint<double>(dir.path()), DataError);
  EXPECT_THROW(nn::load_checkpoint<double>(dir.path() / "missing"), DataError);
}

namespace {

// Internal -> external name, the inverse of the documented import mapping.
std::string external_name(std::string n) {
  const std::vector<std::pair<std::string, std::string>> rules = {
      {R"(^frontend\.conv3d\.)", "encoder.frontend.frontend3D.0."},
      {R"(^frontend\.norm\.)", "encoder.frontend.frontend3D.1."},
      {R"(^frontend\.trunk\.(\d)\.(\d+)\.norm1\.)", "encoder.frontend.trunk.layer#$1.$2.bn1."},
      {R"(^frontend\.trunk\.(\d)\.(\d+)\.norm2\.)", "encoder.frontend.trunk.layer#$1.$2.bn2."},
      {R"(^frontend\.trunk\.(\d)\.(\d+)\.down\.conv\.)", "encoder.frontend.trunk.layer#$1.$2.downsample.0."},
      {R"(^frontend\.trunk\.(\d)\.(\d+)\.down\.norm\.)", "encoder.frontend.trunk.layer#$1.$2.downsample.1."},
      {R"(^frontend\.trunk\.(\d)\.(\d+)\.(conv1|conv2)\.)", "encoder.frontend.trunk.layer#$1.$2.$3."},
      {R"(^frontend\.proj\.)", "encoder.embed.0."},
      {R"(^encoder\.(\d+)\.ff1\.norm\.)", "encoder.encoders.$1.norm_ff_macaron."},
      {R"(^encoder\.(\d+)\.ff1\.w(\d)\.)", "encoder.encoders.$1.feed_forward_macaron.w_$2."},
      {R"(^encoder\.(\d+)\.ff2\.norm\.)", "encoder.encoders.$1.norm_ff."},
      {R"(^encoder\.(\d+)\.ff2\.w(\d)\.)", "encoder.encoders.$1.feed_forward.w_$2."},
      {R"(^encoder\.(\d+)\.mhsa\.(q|k|v|out)\.)", "encoder.encoders.$1.self_attn.linear_$2."},
      {R"(^encoder\.(\d+)\.mhsa_norm\.)", "encoder.encoders.$1.norm_mha."},
      {R"(^encoder\.(\d+)\.conv\.norm\.)", "encoder.encoders.$1.norm_conv."},
      {R"(^encoder\.(\d+)\.conv\.pw1\.)", "encoder.encoders.$1.conv_module.pointwise_conv1."},
      {R"(^encoder\.(\d+)\.conv\.dw\.)", "encoder.encoders.$1.conv_module.depthwise_conv."},
      {R"(^encoder\.(\d+)\.conv\.bn\.)", "encoder.encoders.$1.conv_module.norm."},
      {R"(^encoder\.(\d+)\.conv\.pw2\.)", "encoder.encoders.$1.conv_module.pointwise_conv2."},
      {R"(^encoder\.(\d+)\.final_norm\.)", "encoder.encoders.$1.norm_final."},
      {R"(^decoder\.embed\.)", "decoder.embed.0."},
      {R"(^decoder\.(\d+)\.(self_attn|src_attn)\.(q|k|v|out)\.)", "decoder.decoders.$1.$2.linear_$3."},
      {R"(^decoder\.(\d+)\.ff\.norm\.)", "decoder.decoders.$1.norm3."},
      {R"(^decoder\.(\d+)\.ff\.w(\d)\.)", "decoder.decoders.$1.feed_forward.w_$2."},
      {R"(^decoder\.(\d+)\.(norm1|norm2)\.)", "decoder.decoders.$1.$2."},
      {R"(^decoder\.output\.)", "decoder.output_layer."},
      {R"(^ctc\.output\.)", "ctc.ctc_lo."},
  };
  for (const auto& [re, rep] : rules) {
    const std::regex r(re);
    if (std::regex_search(n, r)) {
      n = std::regex_replace(n, r, rep, std::regex_constants::format_first_only);
      break;
    }
  }
  if (auto p = n.find('#'); p != std::string::npos) n = n.substr(0, p) + std::to_string(n[p + 1] - '0' + 1) + n.substr(p + 2);
  n = std::regex_replace(n, std::regex(R"(\.gamma$)"), ".weight");
  n = std::regex_replace(n, std::regex(R"(\.beta$)"), ".bias");
  return n;
}

}  // namespace

TEST(Import, ExternalLayoutLoadsEveryParameter) {
  lipadapt::testing::ScratchDir dir("import");
  nn::VsrModel<double> src(nn::model_preset("toy", 10), 1);
  nlohmann::json index{{"tensors", nlohmann::json::array()}};
  std::ofstream bin(dir.path() / "params.bin", std::ios::binary);
  std::uint64_t offset = 0;
  auto put = [&](const std::string& name, Shape shape, const std::vector<float>& v) {
    index["tensors"].push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    offset += v.size() * sizeof(float);
  };
  for (const auto& e : src.params().entries()) {
    Shape shape = e.shape;
    if (e.name.find("conv.dw.weight") != std::string::npos) shape = {shape[0], 1, shape[1]};
    if (e.name.find("conv.pw1.weight") != std::string::npos) shape.push_back(1);
    std::vector<float> v(e.var.value().data.begin(), e.var.value().data.end());
    put(external_name(e.name), shape, v);
  }
  put("encoder.encoders.0.self_attn.linear_pos.weight", {32, 32}, std::vector<float>(32 * 32, 0.f));
  put("encoder.frontend.frontend3D.1.running_mean", {4}, std::vector<float>(4, 0.f));
  bin.close();
  std::ofstream(dir.path() / "index.json") << index.dump();

  const auto ext = nn::read_external_checkpoint(dir.path());
  nn::VsrModel<double> dst(nn::model_preset("toy", 10), 99);
  nn::import_pretrained(dst, ext);
  for (std::size_t i = 0; i < src.params().entries().size(); ++i) {
    const auto& a = src.params().entries()[i].var.value().data;
    const auto& b = dst.params().entries()[i].var.value().data;
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(static_cast<float>(a[k]), static_cast<float>(b[k]));
  }
}

TEST(Import, MissingAndUnknownTensorsAreListed) {
  const auto layout = nn::VsrModel<double>::layout(nn::model_preset("toy", 10));
  std::vector<nn::ExternalTensorInfo> ext;
  for (const auto& [name, shape] : layout) ext.push_back({external_name(name), shape});
  EXPECT_NO_THROW(nn::plan_import(ext, layout));
  auto missing = ext;
  missing.pop_back();
  EXPECT_THROW(nn::plan_import(missing, layout), ConfigError);
  auto unknown = ext;
  unknown.push_back({"encoder.mystery.weight", {3}});
  EXPECT_THROW(nn::plan_import(unknown, layout), ConfigError);
  EXPECT_EQ(nn::map_external_name("encoder.encoders.3.self_attn.pos_bias_u").outcome, nn::MapOutcome::Skipped);
  EXPECT_EQ(nn::map_external_name("encoder.frontend.trunk.layer2.0.downsample.1.weight").internal,
            "frontend.trunk.1.0.down.norm.gamma");
}
