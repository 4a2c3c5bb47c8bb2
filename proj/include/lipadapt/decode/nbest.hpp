#pragma once

// N-best audit file: one JSON object per utterance and line,
//   {"utterance_id": ..., "hypotheses": [{"rank": 1, "text": ..., "tokens": [...],
//     "score": ..., "att": ..., "ctc": ..., "lm": ..., "length": ..., "penalty": ...}, ...]}
// The component scores allow offline re-ranking under other weights.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/decode/beam_search.hpp"

namespace lipadapt::decode {

struct NbestEntry {
  std::string text;
  std::vector<int> tokens;
  double score = 0, att = 0, ctc = 0, lm = 0, penalty = 0;
  int length = 0;
};

struct NbestRecord {
  std::string utterance_id;
  std::vector<NbestEntry> hypotheses;
};

inline NbestRecord make_nbest_record(const std::string& utt_id, const DecodeResult& res, const DecodeConfig& cfg,
                                     const std::function<std::string(const std::vector<int>&)>& detokenize,
                                     int sos_eos) {
  NbestRecord r;
  r.utterance_id = utt_id;
  for (const auto& h : res.nbest) {
    NbestEntry e;
    e.tokens = h.tokens;
    e.text = detokenize(strip_markers(h.tokens, sos_eos));
    e.score = h.total_score;
    e.att = h.att_logprob;
    e.ctc = h.ctc_logprob;
    e.lm = h.lm_logprob;
    e.length = h.length();
    e.penalty = cfg.length_penalty * h.length();
    r.hypotheses.push_back(std::move(e));
  }
  return r;
}

inline nlohmann::json to_json(const NbestRecord& r) {
  nlohmann::json hyps = nlohmann::json::array();
  for (std::size_t i = 0; i < r.hypotheses.size(); ++i) {
    const auto& e = r.hypotheses[i];
    hyps.push_back({{"rank", i + 1},
                    {"text", e.text},
                    {"tokens", e.tokens},
                    {"score", e.score},
                    {"att", e.att},
                    {"ctc", e.ctc},
                    {"lm", e.lm},
                    {"length", e.length},
                    {"penalty", e.penalty}});
  }
  return {{"utterance_id", r.utterance_id}, {"hypotheses", hyps}};
}

inline NbestRecord nbest_from_json(const nlohmann::json& j) {
  NbestRecord r;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  for (const auto& h : j.at("hypotheses")) {
    NbestEntry e;
    e.text = h.at("text").get<std::string>();
    e.tokens = h.at("tokens").get<std::vector<int>>();
    e.score = h.at("score").get<double>();
    e.att = h.at("att").get<double>();
    e.ctc = h.at("ctc").get<double>();
    e.lm = h.at("lm").get<double>();
    e.length = h.at("length").get<int>();
    e.penalty = h.at("penalty").get<double>();
    r.hypotheses.push_back(std::move(e));
  }
  return r;
}

inline void write_nbest(const std::vector<NbestRecord>& records, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<NbestRecord> read_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<NbestRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nbest_from_json(nlohmann::json::parse(line)));
  return out;
}

// Re-scores stored hypotheses under different weights without re-decoding.
inline double rescore(const NbestEntry& e, const DecodeConfig& cfg) {
  Hypothesis h;
  h.tokens = e.tokens;
  h.att_logprob = e.att;
  h.ctc_logprob = e.ctc;
  h.lm_logprob = e.lm;
  return score_hypothesis(h, cfg);
}

}  // namespace lipadapt::decode
