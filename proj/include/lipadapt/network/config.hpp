#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"

namespace lipadapt::nn {

// Hybrid CTC/attention VSR model.
struct ModelConfig {
  std::string preset = "toy";
  int input_size = 88;  // square spatial input after cropping

  // 3D-convolution stem: 1 -> frontend_channels, kernel (t, h, w), spatial stride 2, then 3x3/2 max pool.
  int frontend_channels = 4;
  int frontend_kernel_t = 3;
  int frontend_kernel_hw = 5;

  // Residual trunk of 2-conv basic blocks. Stage s has trunk_blocks[s] blocks
  // with trunk_channels[s] channels; stages after the first halve the resolution.
  std::vector<int> trunk_blocks = {1};
  std::vector<int> trunk_channels = {4};

  int model_dim = 32;
  int heads = 4;
  int feedforward_dim = 64;
  int encoder_layers = 2;
  int conv_kernel = 7;  // Conformer depthwise convolution
  int decoder_layers = 2;
  int vocab_size = 0;

  double ctc_weight = 0.1;       // alpha in alpha * CTC + (1 - alpha) * attention
  double label_smoothing = 0.1;  // attention branch

  int trunk_layers() const {
    int n = 0;
    for (int b : trunk_blocks) n += 2 * b;
    return n;
  }

  void validate() const {
    if (input_size < 8) throw ConfigError("model: input_size too small");
    if (frontend_channels < 1 || frontend_kernel_t < 1 || frontend_kernel_hw < 1)
      throw ConfigError("model: invalid front-end geometry");
    if (frontend_kernel_t % 2 == 0 || frontend_kernel_hw % 2 == 0)
      throw ConfigError("model: front-end kernels must be odd");
    if (trunk_blocks.empty() || trunk_blocks.size() != trunk_channels.size())
      throw ConfigError("model: trunk_blocks and trunk_channels must be non-empty and the same length");
    for (std::size_t i = 0; i < trunk_blocks.size(); ++i)
      if (trunk_blocks[i] < 1 || trunk_channels[i] < 1) throw ConfigError("model: trunk stages need >= 1 block and channel");
    if (model_dim < 1 || heads < 1 || feedforward_dim < 1) throw ConfigError("model: dimensions must be positive");
    if (model_dim % heads != 0) throw ConfigError("model: model_dim must be divisible by heads");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("model: layer counts must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("model: conv_kernel must be odd and positive");
    if (vocab_size < 5) throw ConfigError("model: vocab_size must cover the special tokens plus one symbol");
    if (ctc_weight < 0 || ctc_weight > 1) throw ConfigError("model: ctc_weight outside [0, 1]");
    if (label_smoothing < 0 || label_smoothing >= 1) throw ConfigError("model: label_smoothing outside [0, 1)");
  }
};

// Character-level Transformer language model.
struct LmConfig {
  std::string preset = "toy";
  int layers = 2;
  int model_dim = 32;
  int heads = 4;
  int feedforward_dim = 64;
  int vocab_size = 0;

  void validate() const {
    if (layers < 1) throw ConfigError("lm: layers must be >= 1");
    if (model_dim < 1 || heads < 1 || feedforward_dim < 1) throw ConfigError("lm: dimensions must be positive");
    if (model_dim % heads != 0) throw ConfigError("lm: model_dim must be divisible by heads");
    if (vocab_size < 5) throw ConfigError("lm: vocab_size too small");
  }
};

// "toy": CPU-scale model used by the tests. "paper": ResNet-18-style trunk,
// 12 Conformer layers, 6 decoder layers, sized like the released system.
inline ModelConfig model_preset(const std::string& name, int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  if (name == "toy") {
    c.preset = "toy";
    return c;
  }
  if (name == "paper") {
    c.preset = "paper";
    c.frontend_channels = 64;
    c.frontend_kernel_t = 5;
    c.frontend_kernel_hw = 7;
    c.trunk_blocks = {2, 2, 2, 2};
    c.trunk_channels = {64, 128, 256, 512};
    c.model_dim = 768;
    c.heads = 12;
    c.feedforward_dim = 3072;
    c.encoder_layers = 12;
    c.conv_kernel = 31;
    c.decoder_layers = 6;
    return c;
  }
  throw ConfigError("unknown model preset '" + name + "' (expected toy or paper)");
}

inline LmConfig lm_preset(const std::string& name, int vocab_size) {
  LmConfig c;
  c.vocab_size = vocab_size;
  if (name == "toy") return c;
  if (name == "paper") {
    c.preset = "paper";
    c.layers = 6;
    c.model_dim = 512;
    c.heads = 8;
    c.feedforward_dim = 2048;
    return c;
  }
  throw ConfigError("unknown lm preset '" + name + "'");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"preset", c.preset},
          {"input_size", c.input_size},
          {"frontend_channels", c.frontend_channels},
          {"frontend_kernel_t", c.frontend_kernel_t},
          {"frontend_kernel_hw", c.frontend_kernel_hw},
          {"trunk_blocks", c.trunk_blocks},
          {"trunk_channels", c.trunk_channels},
          {"model_dim", c.model_dim},
          {"heads", c.heads},
          {"feedforward_dim", c.feedforward_dim},
          {"encoder_layers", c.encoder_layers},
          {"conv_kernel", c.conv_kernel},
          {"decoder_layers", c.decoder_layers},
          {"vocab_size", c.vocab_size},
          {"ctc_weight", c.ctc_weight},
          {"label_smoothing", c.label_smoothing}};
}

// Starts from the named preset and applies any explicitly given fields.
// Unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "preset",         "input_size",      "frontend_channels", "frontend_kernel_t", "frontend_kernel_hw",
      "trunk_blocks",   "trunk_channels",  "model_dim",         "heads",             "feedforward_dim",
      "encoder_layers", "conv_kernel",     "decoder_layers",    "vocab_size",        "ctc_weight",
      "label_smoothing"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("model config: unknown key '" + it.key() + "'");
  ModelConfig c = model_preset(j.value("preset", std::string("toy")), j.value("vocab_size", 0));
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
  };
  get("input_size", c.input_size);
  get("frontend_channels", c.frontend_channels);
  get("frontend_kernel_t", c.frontend_kernel_t);
  get("frontend_kernel_hw", c.frontend_kernel_hw);
  get("trunk_blocks", c.trunk_blocks);
  get("trunk_channels", c.trunk_channels);
  get("model_dim", c.model_dim);
  get("heads", c.heads);
  get("feedforward_dim", c.feedforward_dim);
  get("encoder_layers", c.encoder_layers);
  get("conv_kernel", c.conv_kernel);
  get("decoder_layers", c.decoder_layers);
  get("ctc_weight", c.ctc_weight);
  get("label_smoothing", c.label_smoothing);
  return c;
}

inline nlohmann::json to_json(const LmConfig& c) {
  return {{"preset", c.preset},
          {"layers", c.layers},
          {"model_dim", c.model_dim},
          {"heads", c.heads},
          {"feedforward_dim", c.feedforward_dim},
          {"vocab_size", c.vocab_size}};
}

inline LmConfig lm_config_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "preset" && k != "layers" && k != "model_dim" && k != "heads" && k != "feedforward_dim" &&
        k != "vocab_size")
      throw ConfigError("lm config: unknown key '" + k + "'");
  }
  LmConfig c = lm_preset(j.value("preset", std::string("toy")), j.value("vocab_size", 0));
  if (j.contains("layers")) c.layers = j["layers"].get<int>();
  if (j.contains("model_dim")) c.model_dim = j["model_dim"].get<int>();
  if (j.contains("heads")) c.heads = j["heads"].get<int>();
  if (j.contains("feedforward_dim")) c.feedforward_dim = j["feedforward_dim"].get<int>();
  return c;
}

}  // namespace lipadapt::nn
