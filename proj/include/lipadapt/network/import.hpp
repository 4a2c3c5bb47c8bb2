#pragma once

// Import of externally pretrained parameters laid out with the ESPnet-style
// names of the released VSR checkpoints.
//
// Name mapping (external -> internal), applied top to bottom:
//
//   encoder.frontend.frontend3D.0.weight          frontend.conv3d.weight
//   encoder.frontend.frontend3D.1.{weight,bias}   frontend.norm.{gamma,beta}
//   encoder.frontend.trunk.layer<S>.<B>.conv1     frontend.trunk.<S-1>.<B>.conv1
//     ... .bn1 / .conv2 / .bn2                      ... .norm1 / .conv2 / .norm2
//     ... .downsample.0 / .downsample.1             ... .down.conv / .down.norm
//   encoder.embed.0                               frontend.proj
//   encoder.encoders.<i>.feed_forward_macaron     encoder.<i>.ff1   (w_1 -> w1, w_2 -> w2)
//   encoder.encoders.<i>.norm_ff_macaron          encoder.<i>.ff1.norm
//   encoder.encoders.<i>.feed_forward             encoder.<i>.ff2
//   encoder.encoders.<i>.norm_ff                  encoder.<i>.ff2.norm
//   encoder.encoders.<i>.self_attn.linear_<x>     encoder.<i>.mhsa.<x>   (x in q,k,v,out)
//   encoder.encoders.<i>.norm_mha                 encoder.<i>.mhsa_norm
//   encoder.encoders.<i>.norm_conv                encoder.<i>.conv.norm
//   encoder.encoders.<i>.conv_module.pointwise_conv1 / depthwise_conv / norm / pointwise_conv2
//                                                 encoder.<i>.conv.pw1 / dw / bn / pw2
//   encoder.encoders.<i>.norm_final               encoder.<i>.final_norm
//   encoder.after_norm                            encoder.after_norm
//   decoder.embed.0                               decoder.embed
//   decoder.decoders.<i>.self_attn / src_attn     decoder.<i>.self_attn / src_attn
//   decoder.decoders.<i>.norm1 / norm2 / norm3    decoder.<i>.norm1 / norm2 / ff.norm
//   decoder.decoders.<i>.feed_forward             decoder.<i>.ff
//   decoder.after_norm                            decoder.after_norm
//   decoder.output_layer                          decoder.output
//   ctc.ctc_lo                                    ctc.output
//
// Normalization ".weight"/".bias" become ".gamma"/".beta". Batch-norm running
// statistics and relative-position parameters (linear_pos, pos_bias_u,
// pos_bias_v) have no counterpart and are skipped. Shapes must agree after
// dropping singleton dimensions (1x1 convolutions become matrices, the
// depthwise [C,1,K] kernel becomes [C,K]).
//
// On-disk external format: a directory with index.json
//   {"tensors": [{"name": ..., "shape": [...], "offset": bytes}, ...]}
// and params.bin holding little-endian float32 values.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/tensor.hpp"
#include "lipadapt/network/model.hpp"

namespace lipadapt::nn {

struct ExternalTensorInfo {
  std::string name;
  Shape shape;
};

enum class MapOutcome { Mapped, Skipped, Unknown };

struct NameMapping {
  MapOutcome outcome = MapOutcome::Unknown;
  std::string internal;
};

inline bool same_shape_modulo_singletons(const Shape& a, const Shape& b) {
  Shape x, y;
  for (int v : a)
    if (v != 1) x.push_back(v);
  for (int v : b)
    if (v != 1) y.push_back(v);
  return x == y;
}

inline NameMapping map_external_name(const std::string& ext) {
  static const std::regex skip(
      R"(.*\.(running_mean|running_var|num_batches_tracked)$|.*\.self_attn\.(linear_pos\..*|pos_bias_u|pos_bias_v)$)");
  if (std::regex_match(ext, skip)) return {MapOutcome::Skipped, ""};

  // Structural renames on the module path; the leaf (weight/bias) is handled after.
  static const std::vector<std::pair<std::regex, std::string>> rules = [] {
    std::vector<std::pair<std::string, std::string>> raw = {
        {R"(^encoder\.frontend\.frontend3D\.0\.)", "frontend.conv3d."},
        {R"(^encoder\.frontend\.frontend3D\.1\.)", "frontend.norm.@"},
        {R"(^encoder\.frontend\.trunk\.layer1\.)", "frontend.trunk.0."},
        {R"(^encoder\.frontend\.trunk\.layer2\.)", "frontend.trunk.1."},
        {R"(^encoder\.frontend\.trunk\.layer3\.)", "frontend.trunk.2."},
        {R"(^encoder\.frontend\.trunk\.layer4\.)", "frontend.trunk.3."},
        {R"(^encoder\.embed\.0\.)", "frontend.proj."},
        {R"(^encoder\.encoders\.(\d+)\.feed_forward_macaron\.w_1\.)", "encoder.$1.ff1.w1."},
        {R"(^encoder\.encoders\.(\d+)\.feed_forward_macaron\.w_2\.)", "encoder.$1.ff1.w2."},
        {R"(^encoder\.encoders\.(\d+)\.norm_ff_macaron\.)", "encoder.$1.ff1.norm.@"},
        {R"(^encoder\.encoders\.(\d+)\.feed_forward\.w_1\.)", "encoder.$1.ff2.w1."},
        {R"(^encoder\.encoders\.(\d+)\.feed_forward\.w_2\.)", "encoder.$1.ff2.w2."},
        {R"(^encoder\.encoders\.(\d+)\.norm_ff\.)", "encoder.$1.ff2.norm.@"},
        {R"(^encoder\.encoders\.(\d+)\.self_attn\.linear_(q|k|v|out)\.)", "encoder.$1.mhsa.$2."},
        {R"(^encoder\.encoders\.(\d+)\.norm_mha\.)", "encoder.$1.mhsa_norm.@"},
        {R"(^encoder\.encoders\.(\d+)\.norm_conv\.)", "encoder.$1.conv.norm.@"},
        {R"(^encoder\.encoders\.(\d+)\.conv_module\.pointwise_conv1\.)", "encoder.$1.conv.pw1."},
        {R"(^encoder\.encoders\.(\d+)\.conv_module\.depthwise_conv\.)", "encoder.$1.conv.dw."},
        {R"(^encoder\.encoders\.(\d+)\.conv_module\.norm\.)", "encoder.$1.conv.bn.@"},
        {R"(^encoder\.encoders\.(\d+)\.conv_module\.pointwise_conv2\.)", "encoder.$1.conv.pw2."},
        {R"(^encoder\.encoders\.(\d+)\.norm_final\.)", "encoder.$1.final_norm.@"},
        {R"(^encoder\.after_norm\.)", "encoder.after_norm.@"},
        {R"(^decoder\.embed\.0\.)", "decoder.embed."},
        {R"(^decoder\.decoders\.(\d+)\.(self_attn|src_attn)\.linear_(q|k|v|out)\.)", "decoder.$1.$2.$3."},
        {R"(^decoder\.decoders\.(\d+)\.norm1\.)", "decoder.$1.norm1.@"},
        {R"(^decoder\.decoders\.(\d+)\.norm2\.)", "decoder.$1.norm2.@"},
        {R"(^decoder\.decoders\.(\d+)\.norm3\.)", "decoder.$1.ff.norm.@"},
        {R"(^decoder\.decoders\.(\d+)\.feed_forward\.w_1\.)", "decoder.$1.ff.w1."},
        {R"(^decoder\.decoders\.(\d+)\.feed_forward\.w_2\.)", "decoder.$1.ff.w2."},
        {R"(^decoder\.after_norm\.)", "decoder.after_norm.@"},
        {R"(^decoder\.output_layer\.)", "decoder.output."},
        {R"(^ctc\.ctc_lo\.)", "ctc.output."},
    };
    std::vector<std::pair<std::regex, std::string>> out;
    for (auto& [re, rep] : raw) out.emplace_back(std::regex(re), rep);
    return out;
  }();

  std::string name = ext;
  // Residual-block internals inside the trunk.
  static const std::regex block_part(R"(^(encoder\.frontend\.trunk\.layer\d\.\d+\.)(conv1|conv2|bn1|bn2|downsample\.0|downsample\.1)\.)");
  std::smatch m;
  std::string block_suffix;
  if (std::regex_search(name, m, block_part)) {
    const std::string part = m[2];
    if (part == "bn1") block_suffix = "norm1.@";
    else if (part == "bn2") block_suffix = "norm2.@";
    else if (part == "downsample.0") block_suffix = "down.conv.";
    else if (part == "downsample.1") block_suffix = "down.norm.@";
    else block_suffix = part + ".";
    name = m[1].str() + "#" + name.substr(m[0].length());
  }
  for (const auto& [re, rep] : rules) {
    if (!std::regex_search(name, re)) continue;
    std::string out = std::regex_replace(name, re, rep, std::regex_constants::format_first_only);
    if (!block_suffix.empty()) {
      const auto pos = out.find('#');
      out = out.substr(0, pos) + block_suffix + out.substr(pos + 1);
    }
    // '@' marks a normalization module: rename weight/bias.
    const auto at = out.find('@');
    if (at != std::string::npos) {
      const std::string leaf = out.substr(at + 1);
      std::string renamed;
      if (leaf == "weight") renamed = "gamma";
      else if (leaf == "bias") renamed = "beta";
      else return {MapOutcome::Unknown, ""};
      out = out.substr(0, at) + renamed;
    }
    if (out.find('#') != std::string::npos) return {MapOutcome::Unknown, ""};
    return {MapOutcome::Mapped, out};
  }
  return {MapOutcome::Unknown, ""};
}

struct ImportPlan {
  std::vector<std::pair<std::string, std::string>> pairs;  // external -> internal
  std::vector<std::string> skipped;
};

// Validates that the external layout covers every internal parameter exactly
// once with agreeing shapes. Throws ConfigError listing every problem.
inline ImportPlan plan_import(const std::vector<ExternalTensorInfo>& external,
                              const std::vector<std::pair<std::string, Shape>>& internal) {
  std::map<std::string, Shape> want(internal.begin(), internal.end());
  std::map<std::string, std::string> covered;
  std::vector<std::string> problems;
  ImportPlan plan;
  for (const auto& e : external) {
    const auto m = map_external_name(e.name);
    if (m.outcome == MapOutcome::Skipped) {
      plan.skipped.push_back(e.name);
      continue;
    }
    if (m.outcome == MapOutcome::Unknown) {
      problems.push_back(e.name + ": no mapping");
      continue;
    }
    auto it = want.find(m.internal);
    if (it == want.end()) {
      problems.push_back(e.name + " -> " + m.internal + ": not a model parameter");
      continue;
    }
    if (!same_shape_modulo_singletons(e.shape, it->second))
      problems.push_back(e.name + " -> " + m.internal + ": shape " + shape_str(e.shape) + " vs " + shape_str(it->second));
    if (!covered.emplace(m.internal, e.name).second) problems.push_back(m.internal + ": mapped twice");
    plan.pairs.emplace_back(e.name, m.internal);
  }
  for (const auto& [name, shape] : internal)
    if (!covered.count(name)) problems.push_back(name + ": not provided by the external checkpoint");
  if (!problems.empty()) {
    std::string msg = "pretrained import failed (" + std::to_string(problems.size()) + " problems):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return plan;
}

struct ExternalCheckpoint {
  std::vector<ExternalTensorInfo> tensors;
  std::map<std::string, std::vector<float>> values;
};

inline ExternalCheckpoint read_external_checkpoint(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "index.json");
  if (!idx) throw DataError("external checkpoint index not found: " + (dir / "index.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(idx);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("external checkpoint index: ") + e.what());
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError("external checkpoint params.bin not found in " + dir.string());
  ExternalCheckpoint out;
  for (const auto& t : j.at("tensors")) {
    ExternalTensorInfo info{t.at("name").get<std::string>(), t.at("shape").get<Shape>()};
    std::vector<float> v(shape_numel(info.shape));
    bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!bin) throw DataError("external tensor " + info.name + ": truncated params.bin");
    out.values[info.name] = std::move(v);
    out.tensors.push_back(std::move(info));
  }
  return out;
}

template <class T>
void import_pretrained(VsrModel<T>& model, const ExternalCheckpoint& ext) {
  std::vector<std::pair<std::string, Shape>> internal;
  for (const auto& e : model.params().entries()) internal.emplace_back(e.name, e.shape);
  const auto plan = plan_import(ext.tensors, internal);
  for (const auto& [from, to] : plan.pairs) {
    const auto& src = ext.values.at(from);
    ag::Var<T> dst = model.params().find(to)->var;
    auto& data = dst.mutable_value().data;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(src[i]);
  }
}

}  // namespace lipadapt::nn
