#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipadapt/core/error.hpp"

namespace lipadapt::vision {

// Grayscale video laid out as [frames][height][width].
template <class T>
struct Video {
  int frames = 0;
  int height = 0;
  int width = 0;
  double fps = 25.0;
  std::vector<T> data;

  Video() = default;
  Video(int t, int h, int w, T fill = T(0), double rate = 25.0)
      : frames(t), height(h), width(w), fps(rate),
        data(static_cast<std::size_t>(t) * h * w, fill) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  T& at(int t, int y, int x) { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
  const T& at(int t, int y, int x) const { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
};

// ROI crops, intensities in [0, 1] before normalization.
using RoiSequence = Video<float>;

inline constexpr int kRoiSize = 96;

inline void require_roi_size(int h, int w, int expected, const char* op) {
  if (h != expected || w != expected)
    throw DataError(std::string(op) + ": expected " + std::to_string(expected) + "x" + std::to_string(expected) +
                    " frames, got " + std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace lipadapt::vision
