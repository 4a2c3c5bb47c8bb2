#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "lipadapt/vision/frames.hpp"
#include "lipadapt/vision/landmarks.hpp"
#include "lipadapt/vision/video.hpp"

namespace lipadapt::vision {

struct RoiOptions {
  int roi_size = kRoiSize;
  int smoothing_window = 5;
};

struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int size = 0;
};

// Box of `size` pixels centred on (cx, cy), shifted to stay inside the frame.
inline CropBox crop_box(double cx, double cy, int size, int width, int height) {
  CropBox b;
  b.size = size;
  b.x0 = std::clamp(static_cast<int>(std::floor(cx + 0.5)) - size / 2, 0, width - size);
  b.y0 = std::clamp(static_cast<int>(std::floor(cy + 0.5)) - size / 2, 0, height - size);
  return b;
}

// Crops a mouth-centred square from every grayscale frame. Output
// intensities are scaled to [0, 1].
inline RoiSequence extract_roi(const FrameTensor& frames, const LandmarkTrack& landmarks,
                               const RoiOptions& opt = {}) {
  if (landmarks.frame_count() == 0) throw DataError("extract_roi: empty landmark track");
  if (landmarks.frame_count() != frames.frames)
    throw DataError("extract_roi: " + std::to_string(frames.frames) + " frames but " +
                    std::to_string(landmarks.frame_count()) + " landmark entries");
  const FrameTensor gray = to_grayscale(frames);
  if (gray.width < opt.roi_size || gray.height < opt.roi_size)
    throw DataError("extract_roi: frame smaller than the ROI");
  const auto centres = smooth_centroids(mouth_centroids(landmarks), opt.smoothing_window);
  RoiSequence roi(gray.frames, opt.roi_size, opt.roi_size, 0.0f, gray.fps);
  for (int t = 0; t < gray.frames; ++t) {
    const auto box = crop_box(centres[t].x, centres[t].y, opt.roi_size, gray.width, gray.height);
    const std::uint8_t* src = gray.data.data() + static_cast<std::size_t>(t) * gray.height * gray.width;
    for (int y = 0; y < opt.roi_size; ++y)
      for (int x = 0; x < opt.roi_size; ++x)
        roi.at(t, y, x) = static_cast<float>(src[(box.y0 + y) * gray.width + box.x0 + x]) / 255.0f;
  }
  return roi;
}

}  // namespace lipadapt::vision
