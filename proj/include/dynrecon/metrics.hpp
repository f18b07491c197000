#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/trajectory.hpp"
#include "dynrecon/types.hpp"

namespace dynrecon {

inline constexpr double kAssociationWindow = 0.02;  // seconds
inline constexpr double kPsnrCap = 99.0;

/// Similarity that maps estimate positions onto the reference: p_ref ~ scale * R * p_est + t.
struct AlignmentResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;
  std::vector<double> residuals;  // per associated pose
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (estimate index, reference index)

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

/// Nearest-timestamp pairs within `window`, each reference pose used at most once.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& estimate, const Trajectory& reference,
                                                           double window = kAssociationWindow);

/// Closed-form (Umeyama) alignment of two point sets given column-wise.
AlignmentResult align_points(const Eigen::Matrix3Xd& estimate, const Eigen::Matrix3Xd& reference, bool with_scale);

/// Throws InsufficientOverlap with fewer than three associations.
AlignmentResult align(const Trajectory& estimate, const Trajectory& reference, bool with_scale);

double ate_rms(const Trajectory& estimate, const Trajectory& reference, bool with_scale);

/// 10 log10(1 / MSE) over all channels, capped at kPsnrCap.
double psnr(const ImageRGB& a, const ImageRGB& b);
double psnr(const Grid& a, const Grid& b);

/// Windowed SSIM (11x11 Gaussian, sigma 1.5) averaged over valid windows.
double ssim(const Grid& a, const Grid& b);
/// Per-channel SSIM, averaged over the three channels.
double ssim(const ImageRGB& a, const ImageRGB& b);

/// Luma (Rec. 601) of an RGB image.
Grid to_gray(const ImageRGB& image);

struct ReportRow {
  std::string name;
  double ate = std::numeric_limits<double>::quiet_NaN();
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
};

enum class ReportFormat { Table, Csv };

/// Per-row metrics followed by Mean and Max rows over the finite entries.
/// `alignment` is printed in the header so readers know which convention produced the ATE.
std::string format_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::string& alignment);

}  // namespace dynrecon
