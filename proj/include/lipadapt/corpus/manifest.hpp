#pragma once

// Line-delimited corpus manifest.
//
// Each non-empty line is a JSON object:
//   {"id": "u1", "speaker_id": "spkr00", "video_ref": "frames/u1.u8",
//    "landmark_ref": "lm/u1.json", "transcript": "hola mundo",
//    "split": "TRAIN", "duration_s": 2.0, "frame_count": 50}
// `landmark_ref` may be null or absent. An optional first line
//   {"header": {"frame_rate": 25, "source_resolution": [480, 270]}}
// overrides the corpus defaults.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/text.hpp"

namespace lipadapt::corpus {

enum class Split { Train, Dev, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "TRAIN";
    case Split::Dev:
      return "DEV";
    case Split::Test:
      return "TEST";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (s == "TRAIN") return Split::Train;
  if (s == "DEV") return Split::Dev;
  if (s == "TEST") return Split::Test;
  return std::nullopt;
}

struct UtteranceRecord {
  std::string id;
  std::string speaker_id;
  std::string video_ref;
  std::optional<std::string> landmark_ref;
  std::string transcript;
  Split split = Split::Train;
  double duration_s = 0;
  int frame_count = 0;
};

struct CorpusManifest {
  std::vector<UtteranceRecord> records;
  double frame_rate = 25.0;
  int source_width = 480;
  int source_height = 270;
  std::filesystem::path base_dir;  // relative media refs resolve against this

  const UtteranceRecord* find(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }

  std::filesystem::path resolve(const std::string& ref) const {
    std::filesystem::path p(ref);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.speaker_id);
    return {s.begin(), s.end()};
  }
};

inline nlohmann::json record_to_json(const UtteranceRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["speaker_id"] = r.speaker_id;
  j["video_ref"] = r.video_ref;
  j["landmark_ref"] = r.landmark_ref ? nlohmann::json(*r.landmark_ref) : nlohmann::json(nullptr);
  j["transcript"] = r.transcript;
  j["split"] = split_name(r.split);
  j["duration_s"] = r.duration_s;
  j["frame_count"] = r.frame_count;
  return j;
}

namespace detail {

inline std::string where(std::size_t line, const std::string& id) {
  std::string s = "manifest line " + std::to_string(line);
  if (!id.empty()) s += " (record '" + id + "')";
  return s;
}

}  // namespace detail

// Checks every record and manifest-level invariant. Throws DataError naming
// the offending record.
inline void validate(const CorpusManifest& m) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const std::string at = "record '" + r.id + "'";
    if (r.id.empty()) throw DataError("record " + std::to_string(i) + " has an empty id");
    if (!ids.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
    if (r.speaker_id.empty()) throw DataError(at + ": empty speaker_id");
    if (!(r.duration_s > 0)) throw DataError(at + ": non-positive duration_s");
    if (r.frame_count <= 0) throw DataError(at + ": non-positive frame_count");
    if (std::abs(r.frame_count - r.duration_s * m.frame_rate) > 1.0 + 1e-9)
      throw DataError(at + ": frame_count " + std::to_string(r.frame_count) + " inconsistent with duration " +
                      std::to_string(r.duration_s) + " s at " + std::to_string(m.frame_rate) + " fps");
    if (r.transcript.empty()) throw DataError(at + ": empty transcript");
  }
}

inline UtteranceRecord parse_record(const nlohmann::json& j, std::size_t line) {
  UtteranceRecord r;
  auto id_of = [&]() -> std::string { return j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : ""; };
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key) || j[key].is_null())
      throw DataError(detail::where(line, id_of()) + ": missing field '" + key + "'");
    return j[key];
  };
  try {
    r.id = need("id").get<std::string>();
    r.speaker_id = need("speaker_id").get<std::string>();
    r.video_ref = need("video_ref").get<std::string>();
    if (j.contains("landmark_ref") && !j["landmark_ref"].is_null()) r.landmark_ref = j["landmark_ref"].get<std::string>();
    r.transcript = text::normalize_transcript(need("transcript").get<std::string>());
    const auto split_label = need("split").get<std::string>();
    auto split = parse_split(split_label);
    if (!split) throw DataError(detail::where(line, r.id) + ": unknown split label '" + split_label + "'");
    r.split = *split;
    r.duration_s = need("duration_s").get<double>();
    r.frame_count = need("frame_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(detail::where(line, r.id.empty() ? id_of() : r.id) + ": " + e.what());
  }
  if (!(r.duration_s > 0)) throw DataError(detail::where(line, r.id) + ": non-positive duration_s");
  return r;
}

inline CorpusManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  CorpusManifest m;
  m.base_dir = base_dir;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(detail::where(lineno, "") + ": " + e.what());
    }
    if (j.contains("header")) {
      const auto& h = j["header"];
      if (h.contains("frame_rate")) m.frame_rate = h["frame_rate"].get<double>();
      if (h.contains("source_resolution")) {
        m.source_width = h["source_resolution"].at(0).get<int>();
        m.source_height = h["source_resolution"].at(1).get<int>();
      }
      continue;
    }
    UtteranceRecord r = parse_record(j, lineno);
    if (auto it = seen.find(r.id); it != seen.end())
      throw DataError(detail::where(lineno, r.id) + ": duplicate id '" + r.id + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    seen.emplace(r.id, lineno);
    if (r.frame_count <= 0) throw DataError(detail::where(lineno, r.id) + ": non-positive frame_count");
    m.records.push_back(std::move(r));
  }
  try {
    validate(m);
  } catch (const DataError& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path.string());
  return parse_manifest(in, path.parent_path());
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  nlohmann::json header;
  header["header"]["frame_rate"] = m.frame_rate;
  header["header"]["source_resolution"] = {m.source_width, m.source_height};
  out << header.dump() << '\n';
  for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
}

}  // namespace lipadapt::corpus
