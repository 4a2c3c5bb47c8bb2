#pragma once

#include <map>
#include <set>
#include <string>

#include "lipadapt/core/text.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/corpus/vocabulary.hpp"

namespace lipadapt::corpus {

struct SplitSeconds {
  double train_s = 0;
  double dev_s = 0;
  double test_s = 0;
  double total() const { return train_s + dev_s + test_s; }
};

struct CorpusStats {
  int n_speakers = 0;
  int n_utterances = 0;
  double total_seconds = 0;
  double total_hours = 0;
  int vocab_words = 0;
  std::map<std::string, SplitSeconds> per_speaker_seconds;
  std::map<std::string, double> words_per_utterance;
  // Characters of DEV/TEST transcripts that the TRAIN vocabulary maps to <unk>.
  int unk_chars = 0;
};

inline CorpusStats corpus_stats(const CorpusManifest& manifest) {
  CorpusStats st;
  std::set<std::string> words;
  std::map<std::string, std::pair<double, int>> word_acc;
  for (const auto& r : manifest.records) {
    auto& sec = st.per_speaker_seconds[r.speaker_id];
    switch (r.split) {
      case Split::Train:
        sec.train_s += r.duration_s;
        break;
      case Split::Dev:
        sec.dev_s += r.duration_s;
        break;
      case Split::Test:
        sec.test_s += r.duration_s;
        break;
    }
    st.total_seconds += r.duration_s;
    auto w = text::split_words(r.transcript);
    words.insert(w.begin(), w.end());
    auto& acc = word_acc[r.speaker_id];
    acc.first += static_cast<double>(w.size());
    acc.second += 1;
  }
  for (const auto& [spk, acc] : word_acc) st.words_per_utterance[spk] = acc.first / acc.second;
  st.n_speakers = static_cast<int>(st.per_speaker_seconds.size());
  st.n_utterances = static_cast<int>(manifest.records.size());
  st.total_hours = st.total_seconds / 3600.0;
  st.vocab_words = static_cast<int>(words.size());

  bool has_train = false;
  for (const auto& r : manifest.records) has_train = has_train || r.split == Split::Train;
  if (has_train) {
    const auto vocab = build_vocabulary(manifest);
    for (const auto& r : manifest.records) {
      if (r.split == Split::Train) continue;
      int unk = 0;
      vocab.encode(r.transcript, &unk);
      st.unk_chars += unk;
    }
  }
  return st;
}

}  // namespace lipadapt::corpus
