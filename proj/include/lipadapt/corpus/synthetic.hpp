#pragma once

// Synthetic "moving pattern" corpora for tests and smoke runs. Each character
// of a transcript is shown for a few frames as a mouth-centred patch whose
// brightness identifies the character and whose stripes drift over time.
// Neutral frames separate characters, so repeated letters stay separable.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "lipadapt/core/rng.hpp"
#include "lipadapt/corpus/manifest.hpp"
#include "lipadapt/vision/frames.hpp"
#include "lipadapt/vision/landmarks.hpp"
#include "lipadapt/vision/roi.hpp"

namespace lipadapt::corpus {

struct SyntheticSpec {
  int speakers = 3;
  int train_per_speaker = 4;
  int dev_per_speaker = 2;
  int test_per_speaker = 2;
  std::string alphabet = "abcd";
  int min_chars = 2;
  int max_chars = 4;
  int words = 1;  // words per transcript
  int frames_per_char = 3;
  int lead_frames = 2;  // neutral frames before and after the text
  int width = 128;
  int height = 128;
  double frame_rate = 25.0;
  std::uint64_t seed = 0;
};

struct SyntheticItem {
  UtteranceRecord record;
  vision::FrameTensor frames;
  vision::LandmarkTrack landmarks;
};

namespace detail {

inline double char_level(const std::string& alphabet, char c) {
  const auto k = alphabet.find(c);
  if (k == std::string::npos) return 0.5;
  return 0.15 + 0.7 * static_cast<double>(k) / std::max<double>(1.0, static_cast<double>(alphabet.size() - 1));
}

}  // namespace detail

// Renders one utterance. `speaker_shift` moves the mouth and changes the
// background so speakers differ; the character code is unaffected.
inline SyntheticItem render_synthetic(const std::string& id, const std::string& speaker, const std::string& transcript,
                                      Split split, const SyntheticSpec& spec, double speaker_shift) {
  std::vector<double> levels;  // per frame; negative marks a neutral frame
  for (int i = 0; i < spec.lead_frames; ++i) levels.push_back(-1);
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const double lv = transcript[i] == ' ' ? -1 : detail::char_level(spec.alphabet, transcript[i]);
    for (int f = 0; f < spec.frames_per_char; ++f) levels.push_back(lv);
    levels.push_back(-1);
  }
  for (int i = 1; i < spec.lead_frames; ++i) levels.push_back(-1);

  SyntheticItem item;
  const int T = static_cast<int>(levels.size());
  auto& ft = item.frames;
  ft.frames = T;
  ft.width = spec.width;
  ft.height = spec.height;
  ft.fps = spec.frame_rate;
  ft.data.assign(static_cast<std::size_t>(T) * ft.width * ft.height, 0);
  const double cx0 = spec.width / 2.0 + 6.0 * speaker_shift;
  const double cy0 = spec.height / 2.0 + 4.0 * speaker_shift;
  const double background = 0.3 + 0.1 * speaker_shift;
  for (int t = 0; t < T; ++t) {
    const double cx = cx0 + std::sin(0.3 * t), cy = cy0;
    for (int y = 0; y < ft.height; ++y)
      for (int x = 0; x < ft.width; ++x) {
        const double dx = x - cx, dy = y - cy;
        double v = background;
        if (std::abs(dx) < 36 && std::abs(dy) < 28) {
          const double stripes = 0.08 * std::sin(0.35 * x + 0.8 * t);
          v = (levels[t] < 0 ? 0.5 : levels[t]) + stripes;
        }
        ft.data[(static_cast<std::size_t>(t) * ft.height + y) * ft.width + x] =
            static_cast<std::uint8_t>(std::clamp(v * 255.0 + 0.5, 0.0, 255.0));
      }
    std::vector<vision::Point> mouth;
    for (int k = 0; k < 20; ++k) {
      const double a = 2 * M_PI * k / 20.0;
      mouth.push_back({cx + 20 * std::cos(a), cy + 10 * std::sin(a)});
    }
    item.landmarks.frames.emplace_back(std::move(mouth));
  }

  auto& r = item.record;
  r.id = id;
  r.speaker_id = speaker;
  r.video_ref = "frames/" + id + ".u8";
  r.landmark_ref = "landmarks/" + id + ".json";
  r.transcript = transcript;
  r.split = split;
  r.frame_count = T;
  r.duration_s = T / spec.frame_rate;
  return item;
}

inline std::string random_word(Rng& rng, const SyntheticSpec& spec) {
  const int n = static_cast<int>(rng.uniform_int(spec.min_chars, spec.max_chars));
  std::string w;
  for (int i = 0; i < n; ++i) w += spec.alphabet[rng.below(spec.alphabet.size())];
  return w;
}

// Speaker k is "spk<k>"; speaker k has k extra TRAIN utterances so the
// speakers differ in total duration.
inline std::vector<SyntheticItem> synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.speakers < 1 || spec.alphabet.empty() || spec.min_chars < 1 || spec.max_chars < spec.min_chars ||
      spec.words < 1 || spec.frames_per_char < 1 || spec.width < vision::kRoiSize || spec.height < vision::kRoiSize)
    throw ConfigError("invalid synthetic corpus spec");
  std::vector<SyntheticItem> out;
  for (int s = 0; s < spec.speakers; ++s) {
    const std::string spk = "spk" + std::to_string(s);
    Rng rng(derive_seed(spec.seed, spk));
    const double shift = spec.speakers == 1 ? 0.0 : static_cast<double>(s) / (spec.speakers - 1) - 0.5;
    const std::pair<Split, int> plan[] = {{Split::Train, spec.train_per_speaker + s},
                                          {Split::Dev, spec.dev_per_speaker},
                                          {Split::Test, spec.test_per_speaker}};
    for (const auto& [split, count] : plan)
      for (int i = 0; i < count; ++i) {
        std::string text;
        for (int w = 0; w < spec.words; ++w) text += (w ? " " : "") + random_word(rng, spec);
        std::string tag = split_name(split);
        for (auto& c : tag) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(render_synthetic(spk + "_" + tag + "_" + std::to_string(i), spk, text, split, spec, shift));
      }
  }
  return out;
}

// Writes frames/, landmarks/ and manifest.jsonl under `dir`; returns the manifest path.
inline std::filesystem::path write_synthetic_corpus(const std::vector<SyntheticItem>& items, const SyntheticSpec& spec,
                                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  std::filesystem::create_directories(dir / "landmarks");
  CorpusManifest m;
  m.frame_rate = spec.frame_rate;
  m.source_width = spec.width;
  m.source_height = spec.height;
  for (const auto& it : items) {
    vision::write_frame_tensor(it.frames, dir / it.record.video_ref);
    vision::save_landmarks(it.landmarks, dir / *it.record.landmark_ref);
    m.records.push_back(it.record);
  }
  const auto path = dir / "manifest.jsonl";
  save_manifest(m, path);
  return path;
}

// The ROI the prepare step would extract, without touching disk.
inline vision::RoiSequence synthetic_roi(const SyntheticItem& item) {
  return vision::roi_from_frames(vision::frames_from_roi(vision::extract_roi(item.frames, item.landmarks)));
}

}  // namespace lipadapt::corpus
