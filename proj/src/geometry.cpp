#include "dynrecon/geometry.hpp"

#include <string>

namespace dynrecon {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw InvalidArgument("intrinsics: principal point outside the image");
}

Eigen::Vector2d project(const CameraIntrinsics& K, const Eigen::Vector3d& X) {
  if (!X.allFinite()) throw InvalidArgument("project: non-finite point");
  if (X.z() <= kDepthEpsilon) throw BehindCamera("project: point behind camera (z = " + std::to_string(X.z()) + ")");
  return {K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
}

Eigen::Vector3d backproject(const CameraIntrinsics& K, const Eigen::Vector2d& p, double inverse_depth) {
  if (!(inverse_depth > 0.0) || !std::isfinite(inverse_depth))
    throw InvalidDepth("backproject: inverse depth must be positive");
  const double z = 1.0 / inverse_depth;
  return {z * (p.x() - K.cx) / K.fx, z * (p.y() - K.cy) / K.fy, z};
}

bool reproject_point(const PoseSE3& G_ij, const CameraIntrinsics& K, const Eigen::Vector2d& p, double inverse_depth,
                     Eigen::Vector2d& out, ReprojectionJacobians* jacobians) {
  if (!(inverse_depth > 0.0)) return false;
  const Eigen::Vector3d Xi = backproject(K, p, inverse_depth);
  const Eigen::Matrix3d R = G_ij.rotationMatrix();
  const Eigen::Vector3d Xj = R * Xi + G_ij.translation();
  if (Xj.z() <= kDepthEpsilon) return false;

  const double iz = 1.0 / Xj.z();
  out << K.fx * Xj.x() * iz + K.cx, K.fy * Xj.y() * iz + K.cy;
  if (jacobians == nullptr) return true;

  Eigen::Matrix<double, 2, 3> dproj;
  dproj << K.fx * iz, 0.0, -K.fx * Xj.x() * iz * iz, 0.0, K.fy * iz, -K.fy * Xj.y() * iz * iz;

  // Left increment on G_j moves Xj by v + omega x Xj.
  Eigen::Matrix<double, 3, 6> dXj_dtarget;
  dXj_dtarget << Eigen::Matrix3d::Identity(), -hat(Xj);
  // Left increment on G_i acts on G_i^-1 from the right: Xj -= R (v + omega x Xi).
  Eigen::Matrix<double, 3, 6> dXj_dsource;
  dXj_dsource << -R, R * hat(Xi);

  const Eigen::Vector3d dXi_dd = -Xi / inverse_depth;
  jacobians->d_target_pose = dproj * dXj_dtarget;
  jacobians->d_source_pose = dproj * dXj_dsource;
  jacobians->d_inverse_depth = dproj * (R * dXi_dd);
  return true;
}

ReprojectionGrid reproject(const PoseSE3& G_ij, const CameraIntrinsics& K, const InverseDepthMap& depth) {
  if (depth.height() != K.height || depth.width() != K.width || depth.valid.rows() != depth.values.rows() ||
      depth.valid.cols() != depth.values.cols())
    throw InvalidArgument("reproject: depth map shape does not match intrinsics");
  ReprojectionGrid out{Grid::Zero(K.height, K.width), Grid::Zero(K.height, K.width),
                       BoolGrid::Constant(K.height, K.width, false)};
  Eigen::Vector2d q;
  for (int r = 0; r < K.height; ++r) {
    for (int c = 0; c < K.width; ++c) {
      if (!depth.valid(r, c)) continue;
      if (reproject_point(G_ij, K, Eigen::Vector2d(c, r), depth.values(r, c), q)) {
        out.u(r, c) = q.x();
        out.v(r, c) = q.y();
        out.valid(r, c) = true;
      }
    }
  }
  return out;
}

PoseSE3 interpolate(const PoseSE3& a, const PoseSE3& b, double alpha) {
  return PoseSE3(a.rotation().slerp(alpha, b.rotation()),
                 (1.0 - alpha) * a.translation() + alpha * b.translation());
}

}  // namespace dynrecon
