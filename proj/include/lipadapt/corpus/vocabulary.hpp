#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/text.hpp"
#include "lipadapt/corpus/manifest.hpp"

namespace lipadapt::corpus {

// Character vocabulary. Special tokens occupy the first four indices; the
// blank index is shared with the CTC module and never changes.
class CharVocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kSosEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kSpace = 3;
  static constexpr int kNumSpecial = 4;

  CharVocabulary() : CharVocabulary(std::vector<std::string>{}) {}

  // `chars` are the non-special symbols, one UTF-8 code point each.
  explicit CharVocabulary(std::vector<std::string> chars) {
    tokens_ = {"<blank>", "<sos/eos>", "<unk>", "<space>"};
    for (auto& c : chars) tokens_.push_back(std::move(c));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  int id_of(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  // Characters outside the vocabulary map to <unk>; `unknown` counts them.
  std::vector<int> encode(const std::string& s, int* unknown = nullptr) const {
    std::vector<int> ids;
    int unk = 0;
    for (char32_t cp : text::utf8_decode(s)) {
      if (cp == U' ') {
        ids.push_back(kSpace);
        continue;
      }
      auto it = index_.find(text::utf8_encode(cp));
      if (it == index_.end() || it->second < kNumSpecial) {
        ids.push_back(kUnk);
        ++unk;
      } else {
        ids.push_back(it->second);
      }
    }
    if (unknown) *unknown = unk;
    return ids;
  }

  // blank and sos/eos are dropped; <unk> renders literally.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id == kBlank || id == kSosEos) continue;
      if (id == kSpace) out.push_back(' ');
      else out += token(id);
    }
    return out;
  }

  nlohmann::json to_json() const {
    return std::vector<std::string>(tokens_.begin() + kNumSpecial, tokens_.end());
  }

  static CharVocabulary from_json(const nlohmann::json& j) {
    return CharVocabulary(j.get<std::vector<std::string>>());
  }

  bool operator==(const CharVocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

// Specials first, then every character of the TRAIN transcripts ordered by
// code point.
inline CharVocabulary build_vocabulary(const CorpusManifest& manifest) {
  std::set<char32_t> chars;
  bool any = false;
  for (const auto& r : manifest.records) {
    if (r.split != Split::Train || r.transcript.empty()) continue;
    any = true;
    for (char32_t cp : text::utf8_decode(r.transcript))
      if (cp != U' ') chars.insert(cp);
  }
  if (!any) throw DataError("build_vocabulary: no TRAIN transcripts in manifest");
  std::vector<std::string> syms;
  for (char32_t cp : chars) syms.push_back(text::utf8_encode(cp));
  return CharVocabulary(std::move(syms));
}

}  // namespace lipadapt::corpus
