#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "dynrecon/dyn_ba.hpp"
#include "dynrecon/motion_mask.hpp"
#include "dynrecon/renderer.hpp"

namespace dynrecon {

struct FieldSettings {
  std::array<int, 4> resolution{32, 32, 32, 16};  // initial x, y, z, t nodes
  std::array<int, 3> ranks{4, 4, 4};
  int feature_dim = 16;
  double bounds_margin = 0.05;  // fraction of the box size added on every side
  std::uint64_t seed = 0;

  void validate() const;
};

struct PathSettings {
  std::string data;
  std::string out;
};

/// Every tunable of a run. Loaded from JSON with sections ba, mask, field, train, paths;
/// unknown keys are rejected and omitted keys keep the defaults below.
struct RunConfig {
  BAConfig ba;
  KeyframePolicy keyframes;  // lives under "ba" in the file
  MaskConfig mask;
  FieldSettings field;
  TrainConfig train = default_train_config();
  PathSettings paths;

  static TrainConfig default_train_config();
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

}  // namespace dynrecon
