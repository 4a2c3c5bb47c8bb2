#pragma once

// Pluggable landmark detection. The library ships no detection models; a
// detector is anything that turns frames into a LandmarkTrack. The command
// adapter runs an external program as
//   <command> <frames.u8> <landmarks.json>
// and reads back the landmark file it wrote.

#include <cstdlib>
#include <filesystem>
#include <string>

#include "lipadapt/core/error.hpp"
#include "lipadapt/vision/frames.hpp"
#include "lipadapt/vision/landmarks.hpp"

namespace lipadapt::vision {

class LandmarkDetector {
 public:
  virtual ~LandmarkDetector() = default;
  virtual LandmarkTrack detect(const FrameTensor& frames) = 0;
};

class CommandLandmarkDetector : public LandmarkDetector {
 public:
  CommandLandmarkDetector(std::string command, std::filesystem::path scratch_dir)
      : command_(std::move(command)), scratch_(std::move(scratch_dir)) {}

  LandmarkTrack detect(const FrameTensor& frames) override {
    std::filesystem::create_directories(scratch_);
    const auto in = scratch_ / "detector_input.u8";
    const auto out = scratch_ / "detector_output.json";
    std::filesystem::remove(out);
    write_frame_tensor(frames, in);
    const std::string cmd = command_ + " '" + in.string() + "' '" + out.string() + "'";
    if (std::system(cmd.c_str()) != 0) throw DataError("landmark detector failed: " + command_);
    auto track = load_landmarks(out);
    if (track.frame_count() != frames.frames)
      throw DataError("landmark detector returned " + std::to_string(track.frame_count()) + " frames for " +
                      std::to_string(frames.frames));
    return track;
  }

 private:
  std::string command_;
  std::filesystem::path scratch_;
};

}  // namespace lipadapt::vision
