#pragma once

// Offline preprocessing: mouth ROIs for every utterance, the TRAIN
// normalization statistics and the character vocabulary.
//
// Layout under the output directory:
//   roi/<id>.u8 (+ .json header)   96x96 grayscale ROI frames
//   index.json                     per utterance: source checksum, ROI checksum
//   norm_stats.json                mean/variance over TRAIN ROIs
//   vocab.json                     character vocabulary from TRAIN transcripts
//   failures.json                  utterances that could not be prepared

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/corpus/vocabulary.hpp"
#include "lipadapt/vision/detector.hpp"
#include "lipadapt/vision/frames.hpp"
#include "lipadapt/vision/landmarks.hpp"
#include "lipadapt/vision/normalize.hpp"
#include "lipadapt/vision/roi.hpp"

namespace lipadapt::cli {

struct PrepareOptions {
  std::filesystem::path landmarks_dir;  // empty: resolve against the manifest directory
  bool strict = false;
  vision::RoiOptions roi;
  vision::LandmarkDetector* detector = nullptr;  // used when a record has no landmark file
};

struct PrepareFailure {
  std::string id;
  std::string reason;
};

struct PrepareReport {
  int written = 0;
  int skipped = 0;
  std::vector<PrepareFailure> failures;
  vision::NormStats stats;
};

inline std::filesystem::path roi_path(const std::filesystem::path& prepared, const std::string& id) {
  return prepared / "roi" / (id + ".u8");
}

namespace detail {

inline std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update_raw(buf, static_cast<std::size_t>(in.gcount()));
  }
  return to_hex(h.digest());
}

inline nlohmann::json read_json_or(const std::filesystem::path& p, nlohmann::json fallback) {
  std::ifstream in(p);
  if (!in) return fallback;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return fallback;
  }
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + p.string());
}

}  // namespace detail

// Idempotent: an utterance whose inputs (video, landmarks, ROI options) hash
// to the recorded source checksum and whose ROI file still matches its
// recorded checksum is not rewritten.
inline PrepareReport prepare_corpus(const corpus::CorpusManifest& manifest, const std::filesystem::path& out,
                                    const PrepareOptions& opt) {
  std::filesystem::create_directories(out / "roi");
  auto index = detail::read_json_or(out / "index.json", nlohmann::json::object());
  PrepareReport rep;
  for (const auto& r : manifest.records) {
    try {
      const auto video = manifest.resolve(r.video_ref);
      std::optional<std::filesystem::path> lm_path;
      if (r.landmark_ref)
        lm_path = opt.landmarks_dir.empty() ? manifest.resolve(*r.landmark_ref) : opt.landmarks_dir / *r.landmark_ref;
      if (!lm_path && !opt.detector) throw DataError("no landmark track and no detector configured");

      Fnv1a src;
      src.update(detail::file_digest(video)).update("|");
      src.update(detail::file_digest(vision::sidecar_path(video))).update("|");
      src.update(lm_path ? detail::file_digest(*lm_path) : std::string("detector")).update("|");
      src.update(std::to_string(opt.roi.roi_size) + "/" + std::to_string(opt.roi.smoothing_window));
      const auto source = to_hex(src.digest());
      const auto dst = roi_path(out, r.id);

      if (index.contains(r.id) && index[r.id].value("source", "") == source && std::filesystem::exists(dst) &&
          std::filesystem::exists(vision::sidecar_path(dst))) {
        if (detail::file_digest(dst) == index[r.id].value("roi", "")) {
          ++rep.skipped;
          continue;
        }
      }

      const auto frames = vision::read_frame_tensor(video);
      if (frames.frames != r.frame_count)
        throw DataError("video has " + std::to_string(frames.frames) + " frames, manifest says " +
                        std::to_string(r.frame_count));
      const auto track = lm_path ? vision::load_landmarks(*lm_path) : opt.detector->detect(frames);
      vision::validate_landmarks(track, frames.width, frames.height);
      const auto roi = vision::extract_roi(frames, track, opt.roi);
      vision::write_frame_tensor(vision::frames_from_roi(roi), dst);
      index[r.id] = {{"source", source}, {"roi", detail::file_digest(dst)}};
      ++rep.written;
    } catch (const Error& e) {
      rep.failures.push_back({r.id, e.what()});
      index.erase(r.id);
      if (opt.strict) {
        detail::write_json(index, out / "index.json");
        throw DataError("prepare: utterance '" + r.id + "': " + e.what());
      }
    }
  }
  detail::write_json(index, out / "index.json");

  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : rep.failures) failures.push_back({{"id", f.id}, {"reason", f.reason}});
  detail::write_json(failures, out / "failures.json");

  // Statistics over the quantized TRAIN ROIs, exactly as training reads them.
  vision::NormAccumulator acc;
  int n_train = 0;
  for (const auto& r : manifest.records) {
    if (r.split != corpus::Split::Train || !std::filesystem::exists(roi_path(out, r.id))) continue;
    acc.add(vision::roi_from_frames(vision::read_frame_tensor(roi_path(out, r.id))));
    ++n_train;
  }
  if (n_train == 0) throw DataError("prepare: no TRAIN utterance could be prepared; cannot compute statistics");
  rep.stats = acc.stats();
  detail::write_json(rep.stats.to_json(), out / "norm_stats.json");
  detail::write_json(corpus::build_vocabulary(manifest).to_json(), out / "vocab.json");
  return rep;
}

inline vision::NormStats load_norm_stats(const std::filesystem::path& prepared) {
  auto j = detail::read_json_or(prepared / "norm_stats.json", nullptr);
  if (j.is_null()) throw DataError("missing " + (prepared / "norm_stats.json").string() + " (run prepare first)");
  return vision::NormStats::from_json(j);
}

inline corpus::CharVocabulary load_vocabulary(const std::filesystem::path& prepared) {
  auto j = detail::read_json_or(prepared / "vocab.json", nullptr);
  if (j.is_null()) throw DataError("missing " + (prepared / "vocab.json").string() + " (run prepare first)");
  return corpus::CharVocabulary::from_json(j);
}

inline vision::RoiSequence load_roi(const std::filesystem::path& prepared, const std::string& id) {
  const auto p = roi_path(prepared, id);
  if (!std::filesystem::exists(p)) throw DataError("utterance '" + id + "' was not prepared (" + p.string() + ")");
  return vision::roi_from_frames(vision::read_frame_tensor(p));
}

}  // namespace lipadapt::cli
