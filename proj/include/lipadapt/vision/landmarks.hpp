#pragma once

// Landmark files are JSON documents indexed by frame:
//   {"frame_count": T, "frames": [[[x, y], [x, y], ...], null, ...]}
// A null entry marks a frame the detector missed; it is filled by linear
// interpolation. An empty point list is an error (no mouth to centre on).
// Frames with 68 points follow the iBUG layout and use points 48-67 as the
// mouth; any other count is treated as mouth-only.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"

namespace lipadapt::vision {

struct Point {
  double x = 0;
  double y = 0;
};

struct LandmarkTrack {
  std::vector<std::optional<std::vector<Point>>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

inline LandmarkTrack parse_landmarks(const nlohmann::json& j) {
  LandmarkTrack track;
  try {
    const auto& fr = j.at("frames");
    for (const auto& f : fr) {
      if (f.is_null()) {
        track.frames.emplace_back(std::nullopt);
        continue;
      }
      std::vector<Point> pts;
      for (const auto& p : f) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      track.frames.emplace_back(std::move(pts));
    }
    if (j.contains("frame_count") && j["frame_count"].get<int>() != track.frame_count())
      throw DataError("landmark frame_count does not match the number of frame entries");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed landmark document: ") + e.what());
  }
  return track;
}

inline LandmarkTrack load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("landmark file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed landmark file " + path.string() + ": " + e.what());
  }
  return parse_landmarks(j);
}

inline nlohmann::json landmarks_to_json(const LandmarkTrack& track) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : track.frames) {
    if (!f) {
      frames.push_back(nullptr);
      continue;
    }
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : *f) pts.push_back({p.x, p.y});
    frames.push_back(pts);
  }
  return {{"frame_count", track.frame_count()}, {"frames", frames}};
}

inline void save_landmarks(const LandmarkTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file " + path.string());
  out << landmarks_to_json(track).dump() << '\n';
}

// Every coordinate must lie inside the source frame.
inline void validate_landmarks(const LandmarkTrack& track, int width, int height) {
  for (int t = 0; t < track.frame_count(); ++t) {
    if (!track.frames[t]) continue;
    for (const auto& p : *track.frames[t])
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0 || p.y < 0 || p.x > width || p.y > height)
        throw DataError("landmark outside the " + std::to_string(width) + "x" + std::to_string(height) +
                        " frame at frame " + std::to_string(t));
  }
}

// Mean of the mouth points for each frame; null frames are interpolated
// linearly, leading/trailing gaps copy the nearest detected frame.
inline std::vector<Point> mouth_centroids(const LandmarkTrack& track) {
  const int n = track.frame_count();
  if (n == 0) throw DataError("empty landmark track");
  std::vector<std::optional<Point>> raw(n);
  for (int t = 0; t < n; ++t) {
    const auto& f = track.frames[t];
    if (!f) continue;
    if (f->empty()) throw DataError("no mouth points at frame " + std::to_string(t));
    std::size_t begin = 0, end = f->size();
    if (f->size() == 68) {
      begin = 48;
      end = 68;
    }
    Point c;
    for (std::size_t i = begin; i < end; ++i) {
      c.x += (*f)[i].x;
      c.y += (*f)[i].y;
    }
    c.x /= static_cast<double>(end - begin);
    c.y /= static_cast<double>(end - begin);
    raw[t] = c;
  }
  int first = -1;
  for (int t = 0; t < n; ++t)
    if (raw[t]) {
      first = t;
      break;
    }
  if (first < 0) throw DataError("landmark track has no detected frame");
  std::vector<Point> out(n);
  int prev = -1;
  for (int t = 0; t < n; ++t) {
    if (raw[t]) {
      out[t] = *raw[t];
      if (prev >= 0 && t - prev > 1) {
        for (int k = prev + 1; k < t; ++k) {
          const double a = static_cast<double>(k - prev) / (t - prev);
          out[k] = {out[prev].x + a * (out[t].x - out[prev].x), out[prev].y + a * (out[t].y - out[prev].y)};
        }
      }
      prev = t;
    }
  }
  for (int t = 0; t < first; ++t) out[t] = out[first];
  for (int t = prev + 1; t < n; ++t) out[t] = out[prev];
  return out;
}

// Centered moving average; the window is truncated at the sequence ends.
inline std::vector<Point> smooth_centroids(const std::vector<Point>& c, int window) {
  if (window <= 1) return c;
  const int n = static_cast<int>(c.size());
  const int half = window / 2;
  std::vector<Point> out(n);
  for (int t = 0; t < n; ++t) {
    Point s;
    int cnt = 0;
    for (int k = std::max(0, t - half); k <= std::min(n - 1, t + half); ++k) {
      s.x += c[k].x;
      s.y += c[k].y;
      ++cnt;
    }
    out[t] = {s.x / cnt, s.y / cnt};
  }
  return out;
}

}  // namespace lipadapt::vision
