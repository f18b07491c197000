#pragma once

#include <vector>

#include "dynrecon/geometry.hpp"

namespace dynrecon {

struct TimedPose {
  double timestamp = 0.0;
  PoseSE3 pose;  // camera-to-world, TUM convention
};

/// Ordered camera trajectory. Timestamps must be strictly increasing.
struct Trajectory {
  std::vector<TimedPose> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
  const TimedPose& operator[](std::size_t i) const { return poses[i]; }

  void validate() const {
    for (std::size_t i = 1; i < poses.size(); ++i) {
      if (!(poses[i].timestamp > poses[i - 1].timestamp))
        throw InvalidArgument("trajectory timestamps must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
};

}  // namespace dynrecon
