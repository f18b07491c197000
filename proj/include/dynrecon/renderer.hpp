#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynrecon/field.hpp"
#include "dynrecon/geometry.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  double time = 0.0;  // normalized
  double near = 0.0;
  double far = 1.0;
};

/// Rays through the pixel centres (u, v) of a camera with camera-to-world pose.
std::vector<Ray> generate_rays(const CameraIntrinsics& K, const PoseSE3& camera_to_world,
                               const std::vector<Eigen::Vector2d>& pixels, double time, double near = 0.0,
                               double far = 1e3);

/// Shrinks [near, far] to the part inside the box. Returns false on a miss.
bool clip_to_bounds(Ray& ray, const FieldBounds& bounds);

struct RenderOutput {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  std::vector<double> sample_weights;
  double expected_depth = 0.0;
  double transmittance_final = 1.0;
};

/// Emission-absorption compositing:
///   alpha_k = 1 - exp(-sigma_k delta_k),  w_k = alpha_k prod_{l<k} (1 - alpha_l),  rgb = sum w_k c_k.
/// `t_values`, when given, must be non-decreasing; they feed expected_depth.
RenderOutput composite(std::span<const double> densities, std::span<const Eigen::Vector3d> colors,
                       std::span<const double> deltas, std::span<const double> t_values = {});

/// Gradients of rgb with respect to the per-sample densities and colors.
void composite_backward(std::span<const double> densities, std::span<const Eigen::Vector3d> colors,
                        std::span<const double> deltas, const Eigen::Vector3d& d_rgb, std::span<double> d_densities,
                        std::span<Eigen::Vector3d> d_colors);

/// Mean over rays of the squared RGB error.
double loss_rgb(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target);
/// Same, also writing d(loss)/d(rendered).
double loss_rgb(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target,
                std::span<Eigen::Vector3d> d_rendered);

/// Total variation on a single-channel plane, first index i, second j:
///   (2/b) [ (1/N) sum (x_ij - x_{i+1,j})^2 + (second_weight/M) sum (x_ij - x_{i,j+1})^2 ]
/// with N and M the number of differences along each dimension.
double loss_tv_spatial(const Grid& plane, double batch_size);
/// Second (time) dimension weighted by lambda_ts.
double loss_tv_spatiotemporal(const Grid& plane, double lambda_ts, double batch_size);

/// TV over a subset of channels of a multi-channel plane, scaled by `scale`;
/// accumulates scale * gradient into `grad` when non-null.
double plane_tv(const Plane& plane, const std::function<bool(int)>& channel_selected, double second_weight,
                double batch_size, double scale = 1.0, Plane* grad = nullptr);

struct TrainConfig {
  double lambda_tv = 0.005;
  double lambda_ts = 20.0;
  double w_rgb_tv = 0.1;
  int batch_size = 512;
  int samples_per_ray = 64;
  int iterations = 3000;
  std::vector<std::pair<int, std::array<int, 4>>> upsample_schedule;
  double lr_grid = 0.02;
  double lr_decoder = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double lambda_tv_decay = 0.5;  // applied at each upsample event
  int eval_every = 500;
  int eval_max_views = 0;  // 0 = all held-out views
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double rgb = 0.0;
  double tv_sigma = 0.0;
  double tv_rgb = 0.0;
};

/// TV terms over all six planes: density channels into tv_sigma, color channels into tv_rgb.
/// Accumulates d(lambda_tv * (tv_sigma + w * tv_rgb))/d(planes) into `grads` when non-null.
LossBreakdown tv_losses(const HexPlaneField& field, double lambda_tv, double lambda_ts, double w_rgb_tv,
                        double batch_size, FieldGradients* grads = nullptr);

/// L = L_rgb + lambda_tv (L_tv_sigma + w L_tv_rgb).
LossBreakdown total_loss(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target,
                         const HexPlaneField& field, double lambda_tv, double lambda_ts, double w_rgb_tv);

/// Sample positions along a ray: stratified with jitter when `rng` is given,
/// bin midpoints otherwise.
struct RaySamples {
  std::vector<double> t;
  std::vector<double> delta;
};
RaySamples sample_ray(const Ray& ray, int count, std::mt19937_64* rng);

std::vector<RenderOutput> render_rays(const HexPlaneField& field, const std::vector<Ray>& rays, int samples_per_ray,
                                      std::mt19937_64* rng = nullptr);

/// Forward pass plus reverse pass of the RGB loss against `target`;
/// gradients accumulate in `grads`.
struct RenderBackwardResult {
  std::vector<Eigen::Vector3d> rgb;
  double loss_rgb = 0.0;
};
RenderBackwardResult render_and_backprop(const HexPlaneField& field, const std::vector<Ray>& rays,
                                         std::span<const Eigen::Vector3d> target, int samples_per_ray,
                                         std::mt19937_64* rng, FieldGradients& grads);

ImageRGB render_image(const HexPlaneField& field, const CameraIntrinsics& K, const PoseSE3& camera_to_world,
                      double time, int samples_per_ray);

struct TrainingView {
  ImageRGB image;
  PoseSE3 camera_to_world;
  double time = 0.0;  // normalized to the field's time bounds
};

struct NvsDataset {
  CameraIntrinsics K;
  std::vector<TrainingView> train;
  std::vector<TrainingView> holdout;
};

struct TrainLogEntry {
  int iteration = 0;
  LossBreakdown loss;
  std::optional<double> psnr_holdout;
};

struct TrainResult {
  HexPlaneField field;
  std::vector<TrainLogEntry> log;
  std::optional<double> final_psnr;
  std::optional<double> final_ssim;
};

/// Adaptive-moment optimizer over the field's parameter blocks.
class Adam {
 public:
  Adam(const HexPlaneField& field, const TrainConfig& config);
  void step(HexPlaneField& field, FieldGradients& grads);
  /// Moments restart after the parameter shapes change.
  void reset(const HexPlaneField& field);

 private:
  TrainConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

using TrainCallback = std::function<void(const TrainLogEntry&)>;

/// Coarse-to-fine training with seeded ray sampling. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const NvsDataset& dataset, HexPlaneField field, const TrainConfig& config,
                  const TrainCallback& on_log = {});

/// Mean held-out PSNR and SSIM of the field over the given views.
std::pair<double, double> evaluate_views(const HexPlaneField& field, const CameraIntrinsics& K,
                                         const std::vector<TrainingView>& views, int samples_per_ray,
                                         int max_views = 0);

/// `iter,loss,l_rgb,l_tv_sigma,l_tv_rgb,psnr_holdout` records.
std::string format_train_log(const std::vector<TrainLogEntry>& log);

}  // namespace dynrecon
