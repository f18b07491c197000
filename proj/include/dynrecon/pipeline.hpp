#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynrecon/config.hpp"
#include "dynrecon/dyn_ba.hpp"
#include "dynrecon/field.hpp"
#include "dynrecon/renderer.hpp"
#include "dynrecon/synth.hpp"
#include "dynrecon/trajectory.hpp"

namespace dynrecon {

/// Flow between arbitrary frames built from consecutive flows only: forward
/// pairs compose along the chain, backward pairs invert it by nearest-pixel splatting.
class ChainedFlowProvider : public FlowProvider {
 public:
  explicit ChainedFlowProvider(std::vector<FlowField> to_next) : to_next_(std::move(to_next)) {}
  int frame_count() const override { return static_cast<int>(to_next_.size()) + 1; }
  FlowObservation flow(int from, int to) const override;

 private:
  FlowField forward(int from, int to) const;
  std::vector<FlowField> to_next_;
};

/// A dataset directory as written by write_dataset.
struct Dataset {
  std::string dir;
  CameraIntrinsics K;
  std::vector<double> times;
  std::vector<ImageRGB> images;
  std::vector<Grid> depth;
  std::optional<Trajectory> ground_truth;
  std::optional<SceneSpec> scene;  // enables exact pairwise flow
  std::shared_ptr<const FlowProvider> flow;

  int size() const { return static_cast<int>(times.size()); }
};

Dataset load_dataset(const std::string& dir);

enum class MaskMode { None, Motion, MotionSemantic };
MaskMode parse_mask_mode(const std::string& text);
std::string to_string(MaskMode mode);

struct LocalizeResult {
  SolveResult solve;
  std::vector<BoolGrid> masks;  // per frame, empty in MaskMode::None
  std::vector<bool> mask_discarded;
};

/// Motion masks from refine() on each frame's flow to its neighbour (optionally
/// OR-ed with semantic masks from <data>/mask), then masked dense BA initialized
/// from the dataset depth.
LocalizeResult localize(const Dataset& data, MaskMode mode, const RunConfig& config);

/// Axis-aligned box around all depth points seen through the trajectory, plus a margin; time spans [0, 1].
FieldBounds estimate_bounds(const Dataset& data, const Trajectory& trajectory, double margin);

/// Frames with index % 5 == 2 are held out for evaluation.
inline bool is_holdout(int frame) { return frame % 5 == 2; }

double normalized_time(const Dataset& data, double timestamp);

NvsDataset make_nvs_dataset(const Dataset& data, const Trajectory& trajectory);

/// Pose of the trajectory entry closest in time, failing when none lies within 20 ms.
PoseSE3 pose_at(const Trajectory& trajectory, double timestamp);

TrainResult train_field(const Dataset& data, const Trajectory& trajectory, const RunConfig& config,
                        const TrainCallback& on_log = {});

}  // namespace dynrecon
