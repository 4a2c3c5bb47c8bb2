#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lipadapt/corpus/manifest.hpp"

namespace lipadapt::corpus {

struct SpeakerPartition {
  std::string speaker_id;
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
  double total_seconds = 0;

  const std::vector<std::string>& ids(Split s) const {
    switch (s) {
      case Split::Train:
        return train;
      case Split::Dev:
        return dev;
      case Split::Test:
        return test;
    }
    return train;
  }
};

inline std::map<std::string, SpeakerPartition> partition_by_speaker(const CorpusManifest& manifest) {
  std::map<std::string, SpeakerPartition> parts;
  for (const auto& r : manifest.records) {
    auto& p = parts[r.speaker_id];
    p.speaker_id = r.speaker_id;
    p.total_seconds += r.duration_s;
    switch (r.split) {
      case Split::Train:
        p.train.push_back(r.id);
        break;
      case Split::Dev:
        p.dev.push_back(r.id);
        break;
      case Split::Test:
        p.test.push_back(r.id);
        break;
    }
  }
  return parts;
}

// The k speakers with the most speech (seconds across all splits). Ordered by
// descending duration; ties go to the lexicographically smaller speaker id.
inline std::vector<SpeakerPartition> select_top_speakers(const CorpusManifest& manifest, int k) {
  if (k < 1) throw ConfigError("select_top_speakers: k must be >= 1");
  if (manifest.records.empty()) throw DataError("select_top_speakers: manifest is empty");
  auto parts = partition_by_speaker(manifest);
  if (static_cast<std::size_t>(k) > parts.size())
    throw ConfigError("select_top_speakers: requested " + std::to_string(k) + " speakers but only " +
                      std::to_string(parts.size()) + " are available");
  std::vector<SpeakerPartition> all;
  all.reserve(parts.size());
  for (auto& [id, p] : parts) all.push_back(std::move(p));
  std::stable_sort(all.begin(), all.end(), [](const SpeakerPartition& a, const SpeakerPartition& b) {
    if (a.total_seconds != b.total_seconds) return a.total_seconds > b.total_seconds;
    return a.speaker_id < b.speaker_id;
  });
  all.resize(static_cast<std::size_t>(k));
  return all;
}

}  // namespace lipadapt::corpus
