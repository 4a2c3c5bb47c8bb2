#pragma once

// Checkpoint directory layout:
//   meta.json   format_version, kind, dtype, config, lineage, norm_stats, vocab,
//               blob index {name, shape, offset, bytes, checksum}, id
//   params.bin  parameter values, concatenated in registration order
//
// The checkpoint id is a content hash over the metadata and parameter bytes,
// so two byte-identical checkpoints share an id.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/network/config.hpp"
#include "lipadapt/network/lm.hpp"
#include "lipadapt/network/model.hpp"
#include "lipadapt/network/params.hpp"

namespace lipadapt::nn {

inline constexpr int kCheckpointFormatVersion = 1;

struct LineageEntry {
  std::string tag;                  // "random-init", "pretrained", "MST(TRAIN)", "FT(spkr19,TRAIN)", ...
  std::string dataset_fingerprint;  // empty for roots
  std::string config_hash;          // empty for roots

  bool operator==(const LineageEntry&) const = default;
};

inline nlohmann::json to_json(const LineageEntry& e) {
  return {{"tag", e.tag}, {"dataset_fingerprint", e.dataset_fingerprint}, {"config_hash", e.config_hash}};
}

inline LineageEntry lineage_entry_from_json(const nlohmann::json& j) {
  return {j.at("tag").get<std::string>(), j.value("dataset_fingerprint", std::string()),
          j.value("config_hash", std::string())};
}

// Everything a checkpoint carries besides parameter values.
struct CheckpointMeta {
  std::vector<LineageEntry> lineage;
  nlohmann::json norm_stats;  // null when absent
  nlohmann::json vocab;       // null when absent
  std::string id;             // filled by save/load
};

template <class T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, double> ? "f64" : "f32";
}

namespace detail {

template <class T>
std::uint64_t blob_checksum(const std::vector<T>& v) {
  return Fnv1a{}.update_raw(v.data(), v.size() * sizeof(T)).digest();
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

template <class T>
std::string save_store(const ParamStore<T>& ps, const std::string& kind, nlohmann::json config,
                       const CheckpointMeta& meta, const std::filesystem::path& dir) {
  if (meta.lineage.empty()) throw ConfigError("checkpoint lineage must not be empty");
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = kind;
  j["dtype"] = dtype_name<T>();
  j["config"] = std::move(config);
  j["lineage"] = nlohmann::json::array();
  for (const auto& e : meta.lineage) j["lineage"].push_back(to_json(e));
  j["norm_stats"] = meta.norm_stats;
  j["vocab"] = meta.vocab;
  j["blobs"] = nlohmann::json::array();

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write " + (dir / "params.bin").string());
  Fnv1a content;
  std::uint64_t offset = 0;
  for (const auto& e : ps.entries()) {
    const auto& data = e.var.value().data;
    const std::uint64_t bytes = data.size() * sizeof(T);
    bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(bytes));
    const auto sum = blob_checksum(data);
    content.update(e.name).update(to_hex(sum));
    j["blobs"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"bytes", bytes}, {"checksum", to_hex(sum)}});
    offset += bytes;
  }
  bin.close();
  if (!bin) throw DataError("failed writing " + (dir / "params.bin").string());
  content.update(j.dump());
  const std::string id = to_hex(content.digest());
  j["id"] = id;
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + (dir / "meta.json").string());
  return id;
}

inline nlohmann::json read_meta(const std::filesystem::path& dir, const std::string& kind) {
  if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint not found: " + dir.string());
  auto j = read_json_file(dir / "meta.json");
  if (!j.contains("format_version")) throw DataError(dir.string() + ": missing format_version");
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointFormatVersion)
    throw DataError(dir.string() + ": unsupported checkpoint format_version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  if (j.value("kind", std::string()) != kind)
    throw DataError(dir.string() + ": checkpoint kind '" + j.value("kind", std::string()) + "', expected '" + kind + "'");
  return j;
}

// Loads blob values into `ps`, checking the name/shape layout and checksums.
template <class T>
void load_store(ParamStore<T>& ps, const nlohmann::json& meta, const std::filesystem::path& dir) {
  const auto& blobs = meta.at("blobs");
  std::ostringstream diff;
  int problems = 0;
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& b : blobs) by_name[b.at("name").get<std::string>()] = &b;
  for (const auto& e : ps.entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      diff << "\n  " << e.name << ": missing from checkpoint (model " << shape_str(e.shape) << ")";
      ++problems;
      continue;
    }
    const Shape s = it->second->at("shape").template get<Shape>();
    if (s != e.shape) {
      diff << "\n  " << e.name << ": checkpoint " << shape_str(s) << " vs model " << shape_str(e.shape);
      ++problems;
    }
    by_name.erase(it);
  }
  for (const auto& [name, b] : by_name) {
    diff << "\n  " << name << ": not in model (checkpoint " << shape_str(b->at("shape").template get<Shape>()) << ")";
    ++problems;
  }
  if (problems) throw ConfigError("checkpoint/model shape mismatch (" + std::to_string(problems) + "):" + diff.str());

  const std::string dtype = meta.value("dtype", std::string("f32"));
  if (dtype != "f32" && dtype != "f64") throw DataError(dir.string() + ": unknown dtype " + dtype);
  const std::size_t width = dtype == "f64" ? 8 : 4;
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError("cannot read " + (dir / "params.bin").string());
  for (const auto& b : blobs) {
    const std::string name = b.at("name").get<std::string>();
    ag::Var<T> target = ps.find(name)->var;
    const std::uint64_t offset = b.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = b.at("bytes").get<std::uint64_t>();
    auto& dst = target.mutable_value().data;
    if (bytes != dst.size() * width) throw DataError("blob " + name + ": byte size disagrees with its shape");
    std::vector<char> raw(bytes);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(raw.data(), static_cast<std::streamsize>(bytes));
    if (!bin) throw DataError("blob " + name + ": truncated params.bin");
    const std::uint64_t sum = Fnv1a{}.update_raw(raw.data(), raw.size()).digest();
    if (to_hex(sum) != b.at("checksum").get<std::string>())
      throw DataError("blob " + name + ": checksum mismatch (corrupted checkpoint)");
    if (width == sizeof(T)) {
      std::memcpy(dst.data(), raw.data(), bytes);
    } else if (width == 8) {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        double v;
        std::memcpy(&v, raw.data() + i * 8, 8);
        dst[i] = static_cast<T>(v);
      }
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        float v;
        std::memcpy(&v, raw.data() + i * 4, 4);
        dst[i] = static_cast<T>(v);
      }
    }
  }
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  for (const auto& e : j.at("lineage")) m.lineage.push_back(lineage_entry_from_json(e));
  if (m.lineage.empty()) throw DataError("checkpoint lineage is empty");
  m.norm_stats = j.value("norm_stats", nlohmann::json());
  m.vocab = j.value("vocab", nlohmann::json());
  m.id = j.at("id").get<std::string>();
  return m;
}

}  // namespace detail

template <class T>
struct LoadedCheckpoint {
  VsrModel<T> model;
  CheckpointMeta meta;
};

template <class T>
std::string save_checkpoint(const VsrModel<T>& model, const CheckpointMeta& meta, const std::filesystem::path& dir) {
  nlohmann::json cfg = to_json(model.config());
  cfg["seed"] = model.seed();
  return detail::save_store(model.params(), "vsr", cfg, meta, dir);
}

// Rebuilds the model from the stored config and loads its parameters.
template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& dir) {
  auto j = detail::read_meta(dir, "vsr");
  nlohmann::json cfg_json = j.at("config");
  const auto seed = cfg_json.value("seed", std::uint64_t{0});
  cfg_json.erase("seed");
  VsrModel<T> model(model_config_from_json(cfg_json), seed);
  detail::load_store(model.params(), j, dir);
  return {std::move(model), detail::meta_from_json(j)};
}

// Loads parameters into an existing model; the layouts must agree exactly.
template <class T>
CheckpointMeta load_checkpoint_into(VsrModel<T>& model, const std::filesystem::path& dir) {
  auto j = detail::read_meta(dir, "vsr");
  detail::load_store(model.params(), j, dir);
  return detail::meta_from_json(j);
}

// Reads only the metadata (lineage, id, ...) without touching parameters.
inline CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  return detail::meta_from_json(detail::read_meta(dir, "vsr"));
}

inline CheckpointMeta read_lm_meta(const std::filesystem::path& dir) {
  return detail::meta_from_json(detail::read_meta(dir, "lm"));
}

template <class T>
std::string save_lm(const TransformerLm<T>& lm, const CheckpointMeta& meta, const std::filesystem::path& dir) {
  nlohmann::json cfg = to_json(lm.config());
  cfg["seed"] = lm.seed();
  return detail::save_store(lm.params(), "lm", cfg, meta, dir);
}

template <class T>
TransformerLm<T> load_lm(const std::filesystem::path& dir) {
  auto j = detail::read_meta(dir, "lm");
  nlohmann::json cfg_json = j.at("config");
  const auto seed = cfg_json.value("seed", std::uint64_t{0});
  cfg_json.erase("seed");
  auto cfg = lm_config_from_json(cfg_json);
  cfg.vocab_size = cfg_json.at("vocab_size").get<int>();
  TransformerLm<T> lm(cfg, seed);
  detail::load_store(lm.params(), j, dir);
  return lm;
}

}  // namespace lipadapt::nn
