#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynrecon/dyn_ba.hpp"
#include "dynrecon/geometry.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

/// Per-pixel dynamic-content indicator (true = dynamic).
struct MotionMask {
  BoolGrid grid;
  bool discarded = false;  // set by discard_if_excessive

  MotionMask() = default;
  explicit MotionMask(BoolGrid g) : grid(std::move(g)) {}
  static MotionMask empty(int height, int width) { return MotionMask(BoolGrid::Constant(height, width, false)); }

  double coverage() const {
    return grid.size() == 0 ? 0.0 : static_cast<double>(grid.count()) / static_cast<double>(grid.size());
  }
};

/// Class-based mask ingested from disk.
struct SemanticMask {
  BoolGrid grid;
  std::vector<std::string> classes;
};

struct MaskConfig {
  double threshold_init = 0.95;
  double threshold_final = 0.98;
  int refinement_passes = 2;
  double max_dynamic_fraction = 0.5;
  double residual_floor_px = 0.5;

  void validate() const;
  /// Threshold used by refinement pass k (0 = the unrefined segmentation).
  double threshold_for_pass(int pass) const;
};

struct ResidualGrid {
  Grid values;
  BoolGrid valid;
};

/// Flow induced by camera motion G_ij over the static geometry d_i.
FlowField ego_flow(const PoseSE3& G_ij, const InverseDepthMap& depth, const CameraIntrinsics& K);

/// Per-pixel norm of observed minus ego flow; invalid where either flow is.
ResidualGrid motion_residual(const FlowField& observed, const FlowField& ego);

/// Residual above which a pixel is flagged: the `threshold` quantile of a
/// Rayleigh model whose scale is fitted to the median valid residual, never
/// below `floor_px`.
double segmentation_cutoff(const ResidualGrid& residual, double threshold, double floor_px);

/// Flags pixels whose residual strictly exceeds segmentation_cutoff.
/// Throws EmptyInput when no residual is valid.
MotionMask segment(const ResidualGrid& residual, double threshold, double floor_px = 0.5);

struct RefineResult {
  MotionMask mask;
  PoseSE3 pose;  // relative motion G_ij
  std::vector<PoseSE3> pass_poses;
  std::vector<MotionMask> pass_masks;
  bool degenerate = false;
};

/// Alternates motion-only pose estimation (excluding the current mask) and
/// re-segmentation with a threshold rising from threshold_init to
/// threshold_final. Pass 0 estimates the pose from every pixel.
RefineResult refine(const FlowObservation& flow_ij, const PoseSE3& G_init, const InverseDepthMap& depth,
                    const CameraIntrinsics& K, const MaskConfig& config, const BAConfig& ba_config = {});

/// All-false (and flagged) when coverage exceeds max_dynamic_fraction.
MotionMask discard_if_excessive(const MotionMask& mask, const MaskConfig& config);

/// Pointwise OR with an optional semantic mask.
MotionMask combine(const MotionMask& motion, const std::optional<SemanticMask>& semantic);

/// Intersection over union of two masks (1 when both are empty).
double mask_iou(const BoolGrid& a, const BoolGrid& b);

}  // namespace dynrecon
