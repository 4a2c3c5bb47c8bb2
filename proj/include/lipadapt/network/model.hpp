#pragma once

// Hybrid CTC/attention visual speech recognizer:
//   3D-conv stem + residual trunk -> Conformer encoder -> {CTC head, Transformer decoder}.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/ctc/ctc.hpp"
#include "lipadapt/network/config.hpp"
#include "lipadapt/network/layers.hpp"
#include "lipadapt/network/params.hpp"
#include "lipadapt/vision/video.hpp"

namespace lipadapt::nn {

template <class T>
struct Conv {
  ag::Var<T> weight, bias;
  ag::Conv3dGeometry geo{};

  Conv() = default;
  Conv(ParamStore<T>& ps, const std::string& name, int cin, int cout, ag::Conv3dGeometry g) : geo(g) {
    const double fan_in = static_cast<double>(cin) * g.kt * g.kh * g.kw;
    weight = ps.add(name + ".weight", {cout, cin, g.kt, g.kh, g.kw}, Init::Uniform, 1.0 / std::sqrt(fan_in));
    // Convolutions feeding a normalization carry no bias of their own.
    if (!ps.layout_only()) bias = ag::constant(Tensor<T>({cout}));
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::conv3d(x, weight, bias, geo); }
};

// Channel normalization of a [C, T, H, W] activation.
template <class T>
ag::Var<T> norm_video(const ChannelNorm<T>& norm, const ag::Var<T>& x) {
  const Shape s = x.shape();
  auto flat = ag::reshape(x, {s[0], s[1] * s[2] * s[3]});
  return ag::reshape(norm(flat), s);
}

inline ag::Conv3dGeometry spatial_conv(int k, int stride) { return {1, k, k, 1, stride, stride, 0, k / 2, k / 2}; }

template <class T>
struct BasicBlock {
  Conv<T> conv1, conv2, down_conv;
  ChannelNorm<T> norm1, norm2, down_norm;
  bool has_down = false;

  BasicBlock() = default;
  BasicBlock(ParamStore<T>& ps, const std::string& name, int cin, int cout, int stride)
      : conv1(ps, name + ".conv1", cin, cout, spatial_conv(3, stride)),
        conv2(ps, name + ".conv2", cout, cout, spatial_conv(3, 1)),
        norm1(ps, name + ".norm1", cout),
        norm2(ps, name + ".norm2", cout) {
    if (stride != 1 || cin != cout) {
      has_down = true;
      down_conv = Conv<T>(ps, name + ".down.conv", cin, cout, {1, 1, 1, 1, stride, stride, 0, 0, 0});
      down_norm = ChannelNorm<T>(ps, name + ".down.norm", cout);
    }
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    auto h = ag::silu(norm_video(norm1, conv1(x)));
    h = norm_video(norm2, conv2(h));
    auto skip = has_down ? norm_video(down_norm, down_conv(x)) : x;
    return ag::silu(ag::add(h, skip));
  }
};

template <class T>
struct Frontend {
  Conv<T> stem;
  ChannelNorm<T> stem_norm;
  std::vector<BasicBlock<T>> blocks;
  Linear<T> proj;

  Frontend() = default;
  Frontend(ParamStore<T>& ps, const ModelConfig& c) {
    const int kt = c.frontend_kernel_t, k = c.frontend_kernel_hw;
    stem = Conv<T>(ps, "frontend.conv3d", 1, c.frontend_channels, {kt, k, k, 1, 2, 2, kt / 2, k / 2, k / 2});
    stem_norm = ChannelNorm<T>(ps, "frontend.norm", c.frontend_channels);
    int cin = c.frontend_channels;
    for (std::size_t s = 0; s < c.trunk_blocks.size(); ++s)
      for (int b = 0; b < c.trunk_blocks[s]; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        blocks.emplace_back(ps, "frontend.trunk." + std::to_string(s) + "." + std::to_string(b), cin,
                            c.trunk_channels[s], stride);
        cin = c.trunk_channels[s];
      }
    proj = Linear<T>(ps, "frontend.proj", cin, c.model_dim);
  }

  // video [T, H, W] -> [T x model_dim]
  ag::Var<T> operator()(const ag::Var<T>& video) const {
    const Shape s = video.shape();
    auto x = ag::reshape(video, {1, s[0], s[1], s[2]});
    x = ag::silu(norm_video(stem_norm, stem(x)));
    x = ag::max_pool_spatial(x, 3, 2, 1);
    for (const auto& b : blocks) x = b(x);
    return proj(ag::mean_spatial(x));
  }
};

template <class T>
struct ConvModule {
  LayerNorm<T> norm;
  Linear<T> pw1, pw2;
  ag::Var<T> dw_weight, dw_bias;
  ChannelNorm<T> bn;

  ConvModule() = default;
  ConvModule(ParamStore<T>& ps, const std::string& name, int d, int kernel)
      : norm(ps, name + ".norm", d), pw1(ps, name + ".pw1", d, 2 * d), pw2(ps, name + ".pw2", d, d) {
    dw_weight = ps.add(name + ".dw.weight", {d, kernel}, Init::Uniform, 1.0 / std::sqrt(static_cast<double>(kernel)));
    dw_bias = ps.add(name + ".dw.bias", {d}, Init::Zeros);
    bn = ChannelNorm<T>(ps, name + ".bn", d);
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    auto h = ag::glu_cols(pw1(norm(x)));
    h = ag::depthwise_conv_time(h, dw_weight, dw_bias);
    h = ag::transpose(bn(ag::transpose(h)));
    return pw2(ag::silu(h));
  }
};

template <class T>
struct ConformerBlock {
  FeedForward<T> ff1, ff2;
  LayerNorm<T> mhsa_norm, final_norm;
  MultiHeadAttention<T> mhsa;
  ConvModule<T> conv;

  ConformerBlock() = default;
  ConformerBlock(ParamStore<T>& ps, const std::string& name, const ModelConfig& c)
      : ff1(ps, name + ".ff1", c.model_dim, c.feedforward_dim),
        ff2(ps, name + ".ff2", c.model_dim, c.feedforward_dim),
        mhsa_norm(ps, name + ".mhsa_norm", c.model_dim),
        final_norm(ps, name + ".final_norm", c.model_dim),
        mhsa(ps, name + ".mhsa", c.model_dim, c.heads),
        conv(ps, name + ".conv", c.model_dim, c.conv_kernel) {}

  ag::Var<T> operator()(ag::Var<T> x) const {
    x = ag::add(x, ag::scale(ff1(x), T(0.5)));
    auto h = mhsa_norm(x);
    x = ag::add(x, mhsa(h, h));
    x = ag::add(x, conv(x));
    x = ag::add(x, ag::scale(ff2(x), T(0.5)));
    return final_norm(x);
  }
};

template <class T>
struct DecoderBlock {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> self_attn, src_attn;
  FeedForward<T> ff;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<T>& ps, const std::string& name, int d, int heads, int ff_dim)
      : norm1(ps, name + ".norm1", d),
        norm2(ps, name + ".norm2", d),
        self_attn(ps, name + ".self_attn", d, heads),
        src_attn(ps, name + ".src_attn", d, heads),
        ff(ps, name + ".ff", d, ff_dim) {}

  ag::Var<T> operator()(ag::Var<T> x, const ag::Var<T>& memory, const Tensor<T>& mask) const {
    auto h = norm1(x);
    x = ag::add(x, self_attn(h, h, &mask));
    x = ag::add(x, src_attn(norm2(x), memory));
    return ag::add(x, ff(x));
  }
};

template <class T>
struct EncoderOutput {
  ag::Var<T> features;         // [T' x model_dim]
  std::vector<int> length_map;  // input frame -> feature index

  int frames() const { return features.rows(); }
};

template <class T>
struct HybridLoss {
  ag::Var<T> total;
  T ctc = 0;
  T attention = 0;
};

template <class T>
ag::Var<T> ctc_loss_var(const ag::Var<T>& logprobs, const std::vector<int>& target) {
  auto res = ctc::ctc_loss(logprobs.value(), target);
  ag::Node<T>* p = logprobs.node();
  return ag::detail::make_op(Tensor<T>({1}, std::vector<T>{res.loss}), {logprobs},
                             [p, grad = std::move(res.grad)](ag::Node<T>& o) {
                               auto& g = p->ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * grad.data[i];
                             });
}

template <class T>
class VsrModel {
 public:
  using LayoutEntry = std::pair<std::string, Shape>;

  VsrModel(const ModelConfig& cfg, std::uint64_t seed, bool layout_only = false)
      : cfg_(cfg), seed_(seed), ps_(seed, layout_only) {
    cfg_.validate();
    const int d = cfg_.model_dim;
    frontend_ = Frontend<T>(ps_, cfg_);
    for (int i = 0; i < cfg_.encoder_layers; ++i)
      encoder_.emplace_back(ps_, "encoder." + std::to_string(i), cfg_);
    after_norm_ = LayerNorm<T>(ps_, "encoder.after_norm", d);
    ctc_out_ = Linear<T>(ps_, "ctc.output", d, cfg_.vocab_size);
    embed_ = ps_.add("decoder.embed.weight", {cfg_.vocab_size, d}, Init::Normal, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int i = 0; i < cfg_.decoder_layers; ++i)
      decoder_.emplace_back(ps_, "decoder." + std::to_string(i), d, cfg_.heads, cfg_.feedforward_dim);
    dec_norm_ = LayerNorm<T>(ps_, "decoder.after_norm", d);
    dec_out_ = Linear<T>(ps_, "decoder.output", d, cfg_.vocab_size);
  }

  VsrModel(VsrModel&&) = default;

  // Names and shapes of every parameter, without allocating any of them.
  static std::vector<LayoutEntry> layout(const ModelConfig& cfg) {
    VsrModel m(cfg, 0, true);
    std::vector<LayoutEntry> out;
    for (const auto& e : m.params().entries()) out.emplace_back(e.name, e.shape);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }
  std::size_t parameter_count() const { return ps_.parameter_count(); }

  // Deep copy with identical parameter values.
  VsrModel clone() const {
    VsrModel m(cfg_, seed_);
    for (std::size_t i = 0; i < ps_.entries().size(); ++i)
      m.params().entries()[i].var.mutable_value().data = ps_.entries()[i].var.value().data;
    return m;
  }

  EncoderOutput<T> encode(const vision::Video<T>& video) const {
    if (video.height != cfg_.input_size || video.width != cfg_.input_size)
      throw DataError("encode: expected " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                      " frames, got " + std::to_string(video.height) + "x" + std::to_string(video.width));
    if (video.frames < 1) throw DataError("encode: empty video");
    for (const T& v : video.data)
      if (!std::isfinite(v)) throw NumericError("encode: non-finite input value");
    auto x = ag::constant(Tensor<T>({video.frames, video.height, video.width}, video.data));
    auto h = add_positions(frontend_(x));
    for (const auto& blk : encoder_) h = blk(h);
    EncoderOutput<T> out;
    out.features = after_norm_(h);
    out.length_map.resize(video.frames);
    for (int t = 0; t < video.frames; ++t) out.length_map[t] = t;
    return out;
  }

  ag::Var<T> ctc_logprobs(const ag::Var<T>& enc) const { return ag::log_softmax_rows(ctc_out_(enc)); }

  // Teacher-forced decoder logits for each input position: [n x V].
  ag::Var<T> decoder_logits(const ag::Var<T>& enc, const std::vector<int>& input_tokens) const {
    auto x = add_positions(ag::embedding(embed_, input_tokens));
    const auto mask = causal_mask<T>(static_cast<int>(input_tokens.size()));
    for (const auto& blk : decoder_) x = blk(x, enc, mask);
    return dec_out_(dec_norm_(x));
  }

  // Log distribution of the token following `prefix` (which starts with sos).
  std::vector<T> decoder_next_logprobs(const ag::Var<T>& enc, const std::vector<int>& prefix) const {
    ag::NoGradGuard guard;
    auto lp = ag::log_softmax_rows(decoder_logits(enc, prefix));
    const int v = lp.cols();
    const auto& d = lp.value().data;
    return std::vector<T>(d.end() - v, d.end());
  }

  // alpha * CTC + (1 - alpha) * label-smoothed attention cross entropy, both
  // summed over the utterance. `target` holds label ids without sos/eos.
  HybridLoss<T> hybrid_loss(const vision::Video<T>& video, const std::vector<int>& target, int sos_eos,
                            double alpha) const {
    if (alpha < 0 || alpha > 1) throw ConfigError("hybrid loss: alpha outside [0, 1]");
    auto enc = encode(video);
    HybridLoss<T> out;
    ag::Var<T> ctc_part, att_part;
    if (alpha > 0) {
      ctc_part = ctc_loss_var(ctc_logprobs(enc.features), target);
      out.ctc = ctc_part.item();
    }
    if (alpha < 1) {
      std::vector<int> in{sos_eos};
      in.insert(in.end(), target.begin(), target.end());
      std::vector<int> tgt(target.begin(), target.end());
      tgt.push_back(sos_eos);
      att_part = ag::smoothed_cross_entropy(decoder_logits(enc.features, in), tgt, static_cast<T>(cfg_.label_smoothing));
      out.attention = att_part.item();
    }
    if (!ctc_part) out.total = att_part;
    else if (!att_part) out.total = ctc_part;
    else out.total = ag::add(ag::scale(ctc_part, static_cast<T>(alpha)), ag::scale(att_part, static_cast<T>(1 - alpha)));
    return out;
  }

 private:
  ModelConfig cfg_;
  std::uint64_t seed_;
  ParamStore<T> ps_;
  Frontend<T> frontend_;
  std::vector<ConformerBlock<T>> encoder_;
  LayerNorm<T> after_norm_;
  Linear<T> ctc_out_;
  ag::Var<T> embed_;
  std::vector<DecoderBlock<T>> decoder_;
  LayerNorm<T> dec_norm_;
  Linear<T> dec_out_;
};

template <class T>
HybridLoss<T> compute_hybrid_loss(const VsrModel<T>& model, const vision::Video<T>& video,
                                  const std::vector<int>& target, int sos_eos, double alpha) {
  return model.hybrid_loss(video, target, sos_eos, alpha);
}

}  // namespace lipadapt::nn
