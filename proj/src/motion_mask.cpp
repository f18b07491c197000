#include "dynrecon/motion_mask.hpp"

#include <algorithm>
#include <cmath>

namespace dynrecon {

void MaskConfig::validate() const {
  if (!(threshold_init > 0.0 && threshold_init < 1.0) || !(threshold_final > 0.0 && threshold_final < 1.0) ||
      threshold_init > threshold_final)
    throw InvalidArgument("mask config: need 0 < threshold_init <= threshold_final < 1");
  if (refinement_passes < 1) throw InvalidArgument("mask config: refinement_passes must be >= 1");
  if (!(max_dynamic_fraction > 0.0 && max_dynamic_fraction <= 1.0))
    throw InvalidArgument("mask config: max_dynamic_fraction must be in (0, 1]");
  if (!(residual_floor_px >= 0.0)) throw InvalidArgument("mask config: residual floor must be non-negative");
}

double MaskConfig::threshold_for_pass(int pass) const {
  if (pass <= 0 || refinement_passes <= 0) return threshold_init;
  const double alpha = std::min(1.0, static_cast<double>(pass) / refinement_passes);
  return threshold_init + alpha * (threshold_final - threshold_init);
}

FlowField ego_flow(const PoseSE3& G_ij, const InverseDepthMap& depth, const CameraIntrinsics& K) {
  const ReprojectionGrid rep = reproject(G_ij, K, depth);
  FlowField out(K.height, K.width);
  for (int r = 0; r < K.height; ++r)
    for (int c = 0; c < K.width; ++c) {
      out.valid(r, c) = rep.valid(r, c);
      if (!rep.valid(r, c)) continue;
      out.du(r, c) = rep.u(r, c) - c;
      out.dv(r, c) = rep.v(r, c) - r;
    }
  return out;
}

ResidualGrid motion_residual(const FlowField& observed, const FlowField& ego) {
  if (observed.height() != ego.height() || observed.width() != ego.width())
    throw InvalidArgument("motion_residual: flow shapes differ");
  ResidualGrid out;
  out.valid = observed.valid && ego.valid;
  out.values = out.valid.select(((observed.du - ego.du).square() + (observed.dv - ego.dv).square()).sqrt(), 0.0);
  return out;
}

double segmentation_cutoff(const ResidualGrid& residual, double threshold, double floor_px) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("segment: threshold must be in (0, 1)");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(residual.values.size()));
  for (Eigen::Index i = 0; i < residual.values.size(); ++i)
    if (residual.valid(i)) values.push_back(residual.values(i));
  if (values.empty()) throw EmptyInput("segment: no valid residuals");

  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  // Rayleigh(s) has median s * sqrt(2 ln 2) and quantile s * sqrt(-2 ln(1 - q)).
  const double scale = median / std::sqrt(2.0 * std::log(2.0));
  const double quantile = scale * std::sqrt(-2.0 * std::log(1.0 - threshold));
  return std::max(quantile, floor_px);
}

MotionMask segment(const ResidualGrid& residual, double threshold, double floor_px) {
  const double cutoff = segmentation_cutoff(residual, threshold, floor_px);
  return MotionMask(residual.valid && (residual.values > cutoff));
}

RefineResult refine(const FlowObservation& flow_ij, const PoseSE3& G_init, const InverseDepthMap& depth,
                    const CameraIntrinsics& K, const MaskConfig& config, const BAConfig& ba_config) {
  config.validate();
  const Keyframe reference{0, PoseSE3::Identity(), depth};

  auto segment_at = [&](const PoseSE3& pose, double threshold) {
    return segment(motion_residual(flow_ij.flow, ego_flow(pose, depth, K)), threshold, config.residual_floor_px);
  };

  RefineResult out;
  PoseSE3 pose = G_init;
  try {
    pose = motion_only_ba(K, reference, flow_ij, nullptr, G_init, ba_config);
  } catch (const DegenerateFrame&) {
    out.degenerate = true;
  }
  MotionMask mask = segment_at(pose, config.threshold_for_pass(0));
  out.pass_poses.push_back(pose);
  out.pass_masks.push_back(mask);
  out.pose = pose;
  out.mask = mask;
  if (out.degenerate) return out;

  for (int pass = 1; pass <= config.refinement_passes; ++pass) {
    try {
      pose = motion_only_ba(K, reference, flow_ij, &mask.grid, pose, ba_config);
    } catch (const DegenerateFrame&) {
      out.degenerate = true;
      out.pose = out.pass_poses.front();
      out.mask = out.pass_masks.front();
      return out;
    }
    mask = segment_at(pose, config.threshold_for_pass(pass));
    out.pass_poses.push_back(pose);
    out.pass_masks.push_back(mask);
  }
  out.pose = pose;
  out.mask = mask;
  return out;
}

MotionMask discard_if_excessive(const MotionMask& mask, const MaskConfig& config) {
  if (mask.coverage() > config.max_dynamic_fraction) {
    MotionMask out = MotionMask::empty(static_cast<int>(mask.grid.rows()), static_cast<int>(mask.grid.cols()));
    out.discarded = true;
    return out;
  }
  return mask;
}

MotionMask combine(const MotionMask& motion, const std::optional<SemanticMask>& semantic) {
  if (!semantic) return motion;
  if (semantic->grid.rows() != motion.grid.rows() || semantic->grid.cols() != motion.grid.cols())
    throw InvalidArgument("combine: semantic mask shape differs from motion mask");
  MotionMask out(motion.grid || semantic->grid);
  out.discarded = motion.discarded;
  return out;
}

double mask_iou(const BoolGrid& a, const BoolGrid& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("mask_iou: shape mismatch");
  const auto uni = (a || b).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((a && b).count()) / static_cast<double>(uni);
}

}  // namespace dynrecon
