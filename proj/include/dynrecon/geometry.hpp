#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dynrecon/types.hpp"

namespace dynrecon {

/// Tangent increment on SE(3): translational part v, rotational part omega.
/// Stacked as (v, omega) wherever a 6-vector is needed.
template <typename Scalar>
struct Twist {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Vector6 = Eigen::Matrix<Scalar, 6, 1>;

  Vector3 v = Vector3::Zero();
  Vector3 omega = Vector3::Zero();

  Twist() = default;
  Twist(const Vector3& v_, const Vector3& omega_) : v(v_), omega(omega_) {}
  explicit Twist(const Vector6& xi) : v(xi.template head<3>()), omega(xi.template tail<3>()) {}

  static Twist Zero() { return Twist(); }

  Vector6 vector() const {
    Vector6 out;
    out << v, omega;
    return out;
  }

  bool allFinite() const { return v.allFinite() && omega.allFinite(); }
};

/// Rigid transform x -> R x + t with R stored as a unit quaternion.
template <typename Scalar>
class Pose {
 public:
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Quaternion = Eigen::Quaternion<Scalar>;

  Pose() : rotation_(Quaternion::Identity()), translation_(Vector3::Zero()) {}
  Pose(const Quaternion& q, const Vector3& t) : rotation_(q.normalized()), translation_(t) {}
  Pose(const Matrix3& R, const Vector3& t) : rotation_(Quaternion(R).normalized()), translation_(t) {}

  static Pose Identity() { return Pose(); }

  const Quaternion& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }
  Matrix3 rotationMatrix() const { return rotation_.toRotationMatrix(); }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotationMatrix();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  Pose inverse() const {
    const Quaternion qi = rotation_.conjugate();
    return Pose(qi, -(qi * translation_));
  }

  Vector3 operator*(const Vector3& x) const { return rotation_ * x + translation_; }

  // Renormalized after every composition to keep long chains on the manifold.
  Pose operator*(const Pose& other) const {
    return Pose((rotation_ * other.rotation_).normalized(), rotation_ * other.translation_ + translation_);
  }

  template <typename Other>
  Pose<Other> cast() const {
    return Pose<Other>(rotation_.template cast<Other>(), translation_.template cast<Other>());
  }

 private:
  Quaternion rotation_;
  Vector3 translation_;
};

using TwistD = Twist<double>;
using PoseSE3 = Pose<double>;

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> hat(const Eigen::Matrix<Scalar, 3, 1>& w) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
  return m;
}

inline constexpr double kSmallAngle = 1e-8;

/// Closed-form exponential map. Rodrigues for the rotation, left Jacobian for
/// the translation, first-order series below kSmallAngle.
template <typename Scalar>
Pose<Scalar> se3_exp(const Twist<Scalar>& xi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  if (!xi.allFinite()) throw InvalidArgument("se3_exp: non-finite twist");

  const Scalar theta = xi.omega.norm();
  const Matrix3 W = hat(xi.omega);
  Matrix3 V;
  Eigen::Quaternion<Scalar> q;
  if (theta < Scalar(kSmallAngle)) {
    q = Eigen::Quaternion<Scalar>(Scalar(1), xi.omega.x() / 2, xi.omega.y() / 2, xi.omega.z() / 2);
    V = Matrix3::Identity() + W / Scalar(2);
  } else {
    const Scalar half = theta / 2;
    const Eigen::Matrix<Scalar, 3, 1> axis = xi.omega / theta;
    q = Eigen::Quaternion<Scalar>(cos(half), sin(half) * axis.x(), sin(half) * axis.y(), sin(half) * axis.z());
    const Scalar t2 = theta * theta;
    V = Matrix3::Identity() + (Scalar(1) - cos(theta)) / t2 * W + (theta - sin(theta)) / (t2 * theta) * W * W;
  }
  return Pose<Scalar>(q.normalized(), V * xi.v);
}

/// Inverse of se3_exp for rotation angles in [0, pi].
template <typename Scalar>
Twist<Scalar> se3_log(const Pose<Scalar>& G) {
  using std::atan2;
  using std::cos;
  using std::sin;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  Eigen::Quaternion<Scalar> q = G.rotation();
  if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
  const Eigen::Matrix<Scalar, 3, 1> qv = q.vec();
  const Scalar sin_half = qv.norm();
  const Scalar theta = Scalar(2) * atan2(sin_half, q.w());

  Eigen::Matrix<Scalar, 3, 1> omega;
  if (sin_half < Scalar(kSmallAngle)) {
    omega = Scalar(2) * qv / q.w();
  } else {
    omega = theta / sin_half * qv;
  }
  const Matrix3 W = hat(omega);
  Matrix3 Vinv;
  if (theta < Scalar(kSmallAngle)) {
    Vinv = Matrix3::Identity() - W / Scalar(2) + W * W / Scalar(12);
  } else {
    const Scalar coeff = (Scalar(1) - theta * sin(theta) / (Scalar(2) * (Scalar(1) - cos(theta)))) / (theta * theta);
    Vinv = Matrix3::Identity() - W / Scalar(2) + coeff * W * W;
  }
  return Twist<Scalar>(Vinv * G.translation(), omega);
}

/// Left-multiplicative retraction: exp(xi) * G.
template <typename Scalar>
Pose<Scalar> retract(const Pose<Scalar>& G, const Twist<Scalar>& xi) {
  return se3_exp(xi) * G;
}

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws InvalidArgument unless fx, fy > 0 and the principal point lies inside the image.
  void validate() const;
};

inline constexpr double kDepthEpsilon = 1e-8;

Eigen::Vector2d project(const CameraIntrinsics& K, const Eigen::Vector3d& X);
Eigen::Vector3d backproject(const CameraIntrinsics& K, const Eigen::Vector2d& p, double inverse_depth);

/// Derivatives of one reprojected pixel with respect to left increments of the
/// source pose (world-to-camera G_i), the target pose G_j and the source inverse depth.
struct ReprojectionJacobians {
  Eigen::Matrix<double, 2, 6> d_source_pose;
  Eigen::Matrix<double, 2, 6> d_target_pose;
  Eigen::Vector2d d_inverse_depth;
};

/// Reprojects pixel p with inverse depth d from frame i into frame j, where
/// G_ij = G_j * G_i^-1. Returns false when the point lands behind frame j.
bool reproject_point(const PoseSE3& G_ij, const CameraIntrinsics& K, const Eigen::Vector2d& p, double inverse_depth,
                     Eigen::Vector2d& out, ReprojectionJacobians* jacobians = nullptr);

struct ReprojectionGrid {
  Grid u;
  Grid v;
  BoolGrid valid;
};

/// Predicted correspondence in frame j for every pixel centre of frame i.
/// Pixel (row r, col c) has coordinates (u, v) = (c, r).
ReprojectionGrid reproject(const PoseSE3& G_ij, const CameraIntrinsics& K, const InverseDepthMap& depth);

/// Spherical interpolation between two poses, alpha in [0, 1].
PoseSE3 interpolate(const PoseSE3& a, const PoseSE3& b, double alpha);

}  // namespace dynrecon
