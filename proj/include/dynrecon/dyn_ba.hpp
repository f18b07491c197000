#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dynrecon/geometry.hpp"
#include "dynrecon/trajectory.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

// Masked dense bundle adjustment over keyframe poses and per-pixel inverse depths.
//
// Poses inside the solver are world-to-camera. The relative motion of an edge
// (i, j) is G_ij = G_j * G_i^-1 and the residual of pixel p is
//
//   r_ij(p) = (p + flow_ij(p)) - project(G_ij * backproject(p, d_i(p)))
//
// weighted by w_ij(p). Pixels with w_ij(p) == 0 never enter the system.

struct Keyframe {
  int frame_id = 0;
  PoseSE3 pose;  // world-to-camera
  InverseDepthMap depth;
};

struct Edge {
  int i = 0;  // keyframe index (not frame id)
  int j = 0;
  FlowField flow;
  Grid weight;
};

struct FrameGraph {
  CameraIntrinsics K;
  std::vector<Keyframe> keyframes;
  std::vector<Edge> edges;

  /// Distinct endpoints, matching grid shapes, non-negative weights, every keyframe on some edge.
  void validate() const;
};

struct BAConfig {
  int max_iterations = 30;
  double damping_init = 1e-4;
  double damping_scale = 10.0;     // multiplier on a rejected step
  double damping_decrease = 5.0;   // divisor on an accepted step
  double convergence_tol = 1e-6;   // relative energy decrease that ends solve()
  double depth_prior_weight = 1e-4;
  int max_damping_escalations = 12;
  int min_valid_pixels = 64;
  double min_inverse_depth = 1e-3;
  int motion_only_iterations = 25;

  void validate() const;
};

/// Keyframe selection and edge construction rules for build_frame_graph.
struct KeyframePolicy {
  double keyframe_flow_px = 2.4;   // new keyframe once mean flow to the last one exceeds this
  int temporal_radius = 3;         // in keyframe indices
  double overlap_flow_px = 32.0;   // edges need mean flow below this

  void validate() const;
};

class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual int frame_count() const = 0;
  /// Flow from frame `from` to frame `to` plus its confidence.
  virtual FlowObservation flow(int from, int to) const = 0;
};

/// Input sequence for localization.
struct Sequence {
  CameraIntrinsics K;
  std::vector<double> timestamps;
  std::vector<InverseDepthMap> depth_init;  // empty: constant inverse depth 1
  std::vector<PoseSE3> initial_poses;       // world-to-camera; empty: chained motion-only estimates

  int size() const { return static_cast<int>(timestamps.size()); }
  InverseDepthMap initial_depth(int frame) const;
};

/// Mean flow magnitude over pixels with positive confidence and valid flow, skipping `exclude`.
double mean_flow_magnitude(const FlowObservation& obs, const BoolGrid* exclude = nullptr);

/// Pixel-wise edge weight: confidence where the flow is valid, 0 elsewhere.
Grid edge_weight(const FlowObservation& obs);

/// Chooses keyframes with the mean-flow policy (the final frame is always a
/// keyframe) and connects keyframes within the temporal radius in both
/// directions. `exclude`, when non-empty, holds per-frame pixels to ignore in
/// the flow statistics.
FrameGraph build_frame_graph(const Sequence& seq, const FlowProvider& provider, const KeyframePolicy& policy,
                             const std::vector<BoolGrid>& exclude = {});

/// Zeroes w_ij(p) wherever motion_i(p) or semantic_i(p) is set (i = source
/// frame id). Either vector may be empty to mean "absent".
FrameGraph apply_masks(const FrameGraph& graph, const std::vector<BoolGrid>& motion,
                       const std::vector<BoolGrid>& semantic = {});

struct EnergyReport {
  double energy = 0.0;
  long residuals = 0;
  long invalid_reprojections = 0;
  std::vector<long> edge_valid_pixels;
};

double energy(const FrameGraph& graph);
EnergyReport energy_report(const FrameGraph& graph);

/// Number of pixels on an edge with positive weight and a valid source depth.
long edge_valid_pixels(const FrameGraph& graph, const Edge& edge);

/// Damped Gauss-Newton increment, depths eliminated by Schur complement.
/// pose_deltas[0] is always zero (gauge).
struct BAIncrement {
  std::vector<TwistD> pose_deltas;
  std::vector<Grid> depth_deltas;
};

/// Damping applied to a normal-equation diagonal entry h: h + lambda * (h + kDampingFloor).
inline constexpr double kDampingFloor = 1e-6;

BAIncrement solve_increment(const FrameGraph& graph, const BAConfig& config, double damping);

/// Applies an increment: left retraction on poses, inverse depths clamped to min_inverse_depth.
FrameGraph apply_increment(const FrameGraph& graph, const BAIncrement& inc, const BAConfig& config);

struct BAStepResult {
  FrameGraph graph;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double next_damping = 0.0;
  bool accepted = false;
  int attempts = 0;
};

/// One Levenberg-Marquardt step. Rejected steps raise the damping and retry;
/// if no attempt lowers the energy the input graph is returned unchanged.
BAStepResult ba_step(const FrameGraph& graph, const BAConfig& config, std::optional<double> damping = std::nullopt);

/// Pose-only Gauss-Newton of `frame` against a fixed keyframe using the flow
/// keyframe -> frame. Returns the world-to-camera pose of the frame.
/// Throws DegenerateFrame when fewer than min_valid_pixels remain.
PoseSE3 motion_only_ba(const CameraIntrinsics& K, const Keyframe& reference, const FlowObservation& flow,
                       const BoolGrid* mask, const PoseSE3& initial, const BAConfig& config);

struct IterationLog {
  int iteration = 0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double damping = 0.0;
  bool accepted = false;
};

struct SolveResult {
  Trajectory trajectory;  // camera-to-world, one entry per frame
  std::vector<int> keyframe_ids;
  std::vector<IterationLog> iterations;
  std::vector<std::pair<int, int>> kept_edges;     // (from frame, to frame)
  std::vector<long> edge_valid_pixels;
  std::vector<std::pair<int, int>> dropped_edges;  // frame ids
  std::vector<int> degenerate_frames;
  std::vector<std::string> warnings;
  std::optional<std::string> error;  // set when the trajectory is partial
  FrameGraph graph;

  bool ok() const { return !error.has_value(); }
};

/// Full localization: frame graph, masks, iterated ba_step, then motion-only
/// BA for every non-keyframe against its nearest keyframe. `masks` holds one
/// grid per frame (empty: no masking).
SolveResult solve(const Sequence& seq, const FlowProvider& provider, const std::vector<BoolGrid>& masks,
                  const BAConfig& config, const KeyframePolicy& policy = {});

/// Line-oriented dump: per-iteration energies, then per-edge valid-pixel counts.
std::string format_diagnostics(const SolveResult& result);

}  // namespace dynrecon
