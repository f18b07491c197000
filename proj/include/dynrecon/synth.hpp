#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynrecon/dyn_ba.hpp"
#include "dynrecon/geometry.hpp"
#include "dynrecon/motion_mask.hpp"
#include "dynrecon/trajectory.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

/// Smooth value-noise color: base + amplitude * (noise - 0.5) per channel.
struct Texture {
  std::uint64_t seed = 1;
  double cell = 0.5;  // noise lattice spacing in scene units
  Eigen::Vector3d base = Eigen::Vector3d::Constant(0.5);
  double amplitude = 0.4;
};

/// Rectangle center + s * axis_u + t * axis_v, |s| <= half_u, |t| <= half_v.
struct PlaneSurface {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;
  Texture texture;
};

/// Rigid box: center(t) = center + velocity * t, rotation(t) = exp(angular_velocity * t).
struct BoxMover {
  Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
  Texture texture;

  PoseSE3 pose_at(double t) const;  // box-local to world
};

/// Camera on a horizontal circular arc about `target`, looking at it. World is y-up,
/// the camera looks along +z with +x right and +y down.
struct OrbitPath {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double radius = 4.0;
  double height = 0.5;
  double arc_start_deg = -15.0;
  double arc_end_deg = 15.0;
};

struct FlowNoise {
  double sigma = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct SceneSpec {
  std::string name = "scene";
  int frames = 20;
  double fps = 10.0;
  CameraIntrinsics K{60.0, 60.0, 31.5, 23.5, 64, 48};
  OrbitPath camera;
  std::vector<PlaneSurface> background;
  std::vector<BoxMover> movers;
  FlowNoise flow_noise;

  void validate() const;
  double timestamp(int frame) const { return frame / fps; }
  PoseSE3 camera_to_world(int frame) const;
};

/// JSON (de)serialization; unknown keys are rejected.
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec load_scene(const std::string& path);
void save_scene(const SceneSpec& spec, const std::string& path);

/// The pinned reference scene: 20 frames, 64x48, one textured box covering about 20% of pixels.
SceneSpec box_orbit_scene();

struct GroundTruthFrame {
  ImageRGB image;
  Grid depth;  // z in the camera frame
  FlowField flow_to_next;  // all invalid on the last frame
  MotionMask motion_mask;
  PoseSE3 pose;  // camera-to-world
  double timestamp = 0.0;
};

/// Ray-cast rendering at pixel centers. Throws DegenerateSpec when the camera
/// sits inside a mover or a pixel sees no surface. `seed` offsets all texture seeds.
std::vector<GroundTruthFrame> generate(const SceneSpec& spec, std::uint64_t seed = 0);

/// Exact flow from frame i to frame j (static points stay, mover points move rigidly).
FlowField analytic_flow(const SceneSpec& spec, int from, int to);

Trajectory ground_truth_trajectory(const SceneSpec& spec);

/// Analytic flow with the spec's flow noise, seeded per frame pair. Confidence is
/// 1 on valid pixels, 0 elsewhere.
class SyntheticFlowProvider : public FlowProvider {
 public:
  explicit SyntheticFlowProvider(SceneSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  int frame_count() const override { return spec_.frames; }
  FlowObservation flow(int from, int to) const override;

 private:
  SceneSpec spec_;
};

/// Independent Gaussian twist noise per pose, applied in the body frame.
Trajectory perturb_trajectory(const Trajectory& traj, double sigma_t, double sigma_r, std::uint64_t seed);

/// Gaussian noise on every pixel plus uniform outliers in [-range, range] px on a seeded subset.
FlowField corrupt_flow(const FlowField& flow, double noise_sigma, double outlier_fraction, std::uint64_t seed,
                       double outlier_range = 16.0);

/// Seed for the flow noise of a frame pair.
std::uint64_t pair_seed(std::uint64_t seed, int from, int to);

/// Writes poses_gt.txt, times.txt, intrinsics.txt, scene.json and rgb/, depth/, flow/, mask/ per frame.
void write_dataset(const SceneSpec& spec, const std::vector<GroundTruthFrame>& frames, const std::string& dir);

}  // namespace dynrecon
