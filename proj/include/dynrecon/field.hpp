#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/types.hpp"

namespace dynrecon {

// Factorized space-time feature volume. Three plane pairs, each one spatial
// and one spatio-temporal plane:
//
//   pair 0: XY with ZT,  pair 1: XZ with YT,  pair 2: YZ with XT
//
// For a point (x, y, z, t) the F-dimensional feature is
//
//   sum_pairs sum_r  A_r(spatial coords) * B_r(partner coords) * v_r
//
// with A_r, B_r bilinearly sampled F-vectors and all products elementwise.
// The 4D volume itself is never materialized.

enum Axis : int { kX = 0, kY = 1, kZ = 2, kT = 3 };

struct PlanePairAxes {
  std::array<int, 2> spatial;
  std::array<int, 2> partner;  // second axis is always time
};

inline constexpr std::array<PlanePairAxes, 3> kPlanePairs{{
    {{kX, kY}, {kZ, kT}},
    {{kX, kZ}, {kY, kT}},
    {{kY, kZ}, {kX, kT}},
}};

/// Row-major grid of `channels`-vectors: value(a, b, ch) at ((a * cols) + b) * channels + ch.
struct Plane {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int rows_, int cols_, int channels_, double fill = 0.0)
      : rows(rows_), cols(cols_), channels(channels_),
        data(static_cast<std::size_t>(rows_) * cols_ * channels_, fill) {}

  double& at(int a, int b, int ch) { return data[(static_cast<std::size_t>(a) * cols + b) * channels + ch]; }
  double at(int a, int b, int ch) const { return data[(static_cast<std::size_t>(a) * cols + b) * channels + ch]; }
  const double* cell(int a, int b) const { return data.data() + (static_cast<std::size_t>(a) * cols + b) * channels; }
  double* cell(int a, int b) { return data.data() + (static_cast<std::size_t>(a) * cols + b) * channels; }
};

struct FieldBounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
  double t_min = 0.0;
  double t_max = 1.0;

  void validate() const;
};

inline constexpr int kDecoderHidden = 64;
inline constexpr int kViewFrequencies = 4;
inline constexpr int kViewEncodingDim = 3 + 6 * kViewFrequencies;

/// Two tiny perceptrons: density features -> raw density, color features plus
/// encoded view direction -> raw RGB. Hidden activations are ReLU.
struct Decoder {
  Eigen::MatrixXd density_w1, density_w2;
  Eigen::VectorXd density_b1, density_b2;
  Eigen::MatrixXd color_w1, color_w2;
  Eigen::VectorXd color_b1, color_b2;

  static Decoder zeros(int feature_dim, int hidden = kDecoderHidden);
  int feature_dim() const { return static_cast<int>(density_w1.cols() + color_w1.cols()) - kViewEncodingDim; }
  int hidden() const { return static_cast<int>(density_w1.rows()); }
};

/// Feature channels [0, density_channels(F)) drive density, the rest drive color.
inline int density_channels(int feature_dim) { return (feature_dim + 1) / 2; }

struct HexPlaneField {
  FieldBounds bounds;
  std::array<int, 4> resolution{};  // nodes along x, y, z, t
  std::array<int, 3> ranks{};
  int feature_dim = 0;
  std::array<Plane, 3> spatial;
  std::array<Plane, 3> partner;
  std::array<Eigen::VectorXd, 3> vectors;  // R_i * F entries each
  Decoder decoder;

  /// Number of plane entries: sum over planes of A * B * R_i * F.
  std::size_t plane_parameter_count() const;
};

/// Same shapes as HexPlaneField, all zero.
struct FieldGradients {
  std::array<Plane, 3> spatial;
  std::array<Plane, 3> partner;
  std::array<Eigen::VectorXd, 3> vectors;
  Decoder decoder;

  static FieldGradients zeros_like(const HexPlaneField& field);
  void set_zero();
  FieldGradients& operator+=(const FieldGradients& other);
};

/// A contiguous run of parameters. Grid blocks (planes, vectors) and decoder
/// blocks use different optimizer step sizes.
struct ParameterBlock {
  std::span<double> values;
  bool is_grid = true;
  std::string name;
};

std::vector<ParameterBlock> parameter_blocks(HexPlaneField& field);
std::vector<ParameterBlock> parameter_blocks(FieldGradients& grads);

/// Planes uniform in [-0.1, 0.1], vectors 1, decoder weights Xavier-uniform,
/// biases zero. Deterministic per seed.
HexPlaneField init_field(const FieldBounds& bounds, const std::array<int, 4>& resolution, const std::array<int, 3>& ranks,
                         int feature_dim, std::uint64_t seed);

struct NormalizedCoords {
  std::array<double, 4> c{};  // x, y, z, t in [0, 1]
  bool clamped = false;
};

/// Maps a world point and time into [0, 1]^4, clamping (and flagging) outside the bounds.
NormalizedCoords normalize(const FieldBounds& bounds, const Eigen::Vector3d& point, double time);
/// Clamps already-normalized coordinates. Throws InvalidArgument on non-finite input.
NormalizedCoords clamp_coords(double x, double y, double z, double t);

Eigen::VectorXd query_feature(const HexPlaneField& field, const NormalizedCoords& coords);
Eigen::VectorXd query_feature(const HexPlaneField& field, double x, double y, double z, double t);
/// Writes the F-vector to `out`.
void query_feature_into(const HexPlaneField& field, const NormalizedCoords& coords, double* out);

Eigen::VectorXd encode_view(const Eigen::Vector3d& dir);

struct DecodedSample {
  double density = 0.0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
};

DecodedSample decode(const Eigen::VectorXd& feature, const Eigen::Vector3d& view_dir, const Decoder& decoder);

/// Batched decoder pass over S columns, with the activations the backward pass needs.
struct DecoderCache {
  Eigen::MatrixXd features;  // F x S
  Eigen::MatrixXd color_in;  // (F_c + E) x S
  Eigen::MatrixXd density_pre, color_pre;  // H x S
  Eigen::RowVectorXd density_raw;
  Eigen::MatrixXd color_raw;  // 3 x S
  Eigen::RowVectorXd density;
  Eigen::MatrixXd rgb;
};

void decode_batch(const Decoder& decoder, const Eigen::MatrixXd& features, const Eigen::MatrixXd& view_dirs,
                  DecoderCache& cache);

/// Reverse pass; accumulates parameter gradients into `grads` and returns d(loss)/d(features).
Eigen::MatrixXd decode_backward(const Decoder& decoder, const DecoderCache& cache, const Eigen::RowVectorXd& d_density,
                                const Eigen::MatrixXd& d_rgb, Decoder& grads);

/// Scatters d(loss)/d(feature) at one point into plane and vector gradients.
void feature_backward(const HexPlaneField& field, const NormalizedCoords& coords, const double* d_feature,
                      FieldGradients& grads);

struct SampleUpstream {
  double d_density = 0.0;
  Eigen::Vector3d d_rgb = Eigen::Vector3d::Zero();
};

/// Exact gradients of decode(query_feature(coords)) for the given upstream
/// derivatives, accumulated into `grads`.
void query_backward(const HexPlaneField& field, const NormalizedCoords& coords, const Eigen::Vector3d& view_dir,
                    const SampleUpstream& upstream, FieldGradients& grads);
FieldGradients query_backward(const HexPlaneField& field, const NormalizedCoords& coords,
                              const Eigen::Vector3d& view_dir, const SampleUpstream& upstream);

/// Bilinear resampling of every plane onto finer node counts.
HexPlaneField upsample(const HexPlaneField& field, const std::array<int, 4>& new_resolution);

/// Little-endian binary checkpoint: magic, version, bounds, resolutions,
/// ranks, F, decoder shape, then planes, vectors and decoder parameters.
void save_checkpoint(const HexPlaneField& field, const std::string& path);
HexPlaneField load_checkpoint(const std::string& path);

}  // namespace dynrecon
