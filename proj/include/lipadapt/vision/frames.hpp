#pragma once

// Frame-tensor files: a raw blob of unsigned 8-bit frames (<name>.u8) and a
// JSON sidecar (<name>.u8.json):
//   {"frame_count": T, "height": H, "width": W, "channels": 1, "fps": 25,
//    "chunk_frames": 32, "chunks": [{"frames": 32, "checksum": "<fnv1a hex>"}, ...]}
// Frames are stored back to back, each H*W*channels bytes, pixel-interleaved
// when channels == 3 (RGB).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lipadapt/core/error.hpp"
#include "lipadapt/core/hash.hpp"
#include "lipadapt/vision/video.hpp"

namespace lipadapt::vision {

struct FrameTensor {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 1;
  double fps = 25.0;
  std::vector<std::uint8_t> data;

  std::size_t frame_bytes() const { return static_cast<std::size_t>(height) * width * channels; }
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& blob) {
  return std::filesystem::path(blob.string() + ".json");
}

inline void write_frame_tensor(const FrameTensor& ft, const std::filesystem::path& path, int chunk_frames = 32) {
  if (ft.data.size() != ft.frame_bytes() * ft.frames) throw DataError("frame tensor size mismatch");
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  nlohmann::json chunks = nlohmann::json::array();
  for (int t0 = 0; t0 < ft.frames; t0 += chunk_frames) {
    const int n = std::min(chunk_frames, ft.frames - t0);
    const auto* p = ft.data.data() + ft.frame_bytes() * t0;
    const std::size_t bytes = ft.frame_bytes() * n;
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(bytes));
    chunks.push_back({{"frames", n}, {"checksum", to_hex(Fnv1a{}.update_raw(p, bytes).digest())}});
  }
  nlohmann::json side = {{"frame_count", ft.frames}, {"height", ft.height},   {"width", ft.width},
                         {"channels", ft.channels},  {"fps", ft.fps},         {"chunk_frames", chunk_frames},
                         {"chunks", chunks}};
  std::ofstream sc(sidecar_path(path));
  sc << side.dump(2) << '\n';
  if (!out || !sc) throw DataError("failed writing " + path.string());
}

inline FrameTensor read_frame_tensor(const std::filesystem::path& path) {
  std::ifstream sc(sidecar_path(path));
  if (!sc) throw DataError("missing frame tensor header: " + sidecar_path(path).string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(sc);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad frame tensor header " + sidecar_path(path).string() + ": " + e.what());
  }
  FrameTensor ft;
  ft.frames = side.at("frame_count").get<int>();
  ft.height = side.at("height").get<int>();
  ft.width = side.at("width").get<int>();
  ft.channels = side.value("channels", 1);
  ft.fps = side.value("fps", 25.0);
  if (ft.frames <= 0 || ft.height <= 0 || ft.width <= 0 || (ft.channels != 1 && ft.channels != 3))
    throw DataError("invalid frame tensor header: " + sidecar_path(path).string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing frame tensor: " + path.string());
  ft.data.resize(ft.frame_bytes() * ft.frames);
  in.read(reinterpret_cast<char*>(ft.data.data()), static_cast<std::streamsize>(ft.data.size()));
  if (static_cast<std::size_t>(in.gcount()) != ft.data.size())
    throw DataError("truncated frame tensor: " + path.string());
  if (side.contains("chunks")) {
    std::size_t offset = 0;
    for (const auto& c : side["chunks"]) {
      const std::size_t bytes = ft.frame_bytes() * c.at("frames").get<int>();
      if (offset + bytes > ft.data.size()) throw DataError("chunk table overruns " + path.string());
      const auto sum = to_hex(Fnv1a{}.update_raw(ft.data.data() + offset, bytes).digest());
      if (sum != c.at("checksum").get<std::string>()) throw DataError("checksum mismatch in " + path.string());
      offset += bytes;
    }
  }
  return ft;
}

// Luma conversion (0.299 R + 0.587 G + 0.114 B); grayscale input is copied.
inline FrameTensor to_grayscale(const FrameTensor& ft) {
  if (ft.channels == 1) return ft;
  FrameTensor g = ft;
  g.channels = 1;
  g.data.assign(static_cast<std::size_t>(ft.frames) * ft.height * ft.width, 0);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const double y = 0.299 * ft.data[3 * i] + 0.587 * ft.data[3 * i + 1] + 0.114 * ft.data[3 * i + 2];
    g.data[i] = static_cast<std::uint8_t>(std::clamp(y + 0.5, 0.0, 255.0));
  }
  return g;
}

inline RoiSequence roi_from_frames(const FrameTensor& ft) {
  const FrameTensor g = to_grayscale(ft);
  RoiSequence r(g.frames, g.height, g.width, 0.0f, g.fps);
  for (std::size_t i = 0; i < g.data.size(); ++i) r.data[i] = static_cast<float>(g.data[i]) / 255.0f;
  return r;
}

inline FrameTensor frames_from_roi(const RoiSequence& roi) {
  FrameTensor ft;
  ft.frames = roi.frames;
  ft.height = roi.height;
  ft.width = roi.width;
  ft.fps = roi.fps;
  ft.data.resize(roi.data.size());
  for (std::size_t i = 0; i < roi.data.size(); ++i)
    ft.data[i] = static_cast<std::uint8_t>(std::clamp(roi.data[i] * 255.0f + 0.5f, 0.0f, 255.0f));
  return ft;
}

}  // namespace lipadapt::vision
