#include <doctest.h>

#include <random>

#include "dynrecon/geometry.hpp"

using namespace dynrecon;

namespace {

TwistD random_twist(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  return TwistD(Eigen::Vector3d(n(rng), n(rng), n(rng)), Eigen::Vector3d(n(rng), n(rng), n(rng)));
}

// Rodrigues written out independently of the implementation under test.
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const double th = w.norm();
  if (th == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(th, w / th).toRotationMatrix();
}

CameraIntrinsics small_camera() { return CameraIntrinsics{50.0, 52.0, 31.5, 23.5, 64, 48}; }

}  // namespace

TEST_CASE("se3_exp of zero is identity") {
  const PoseSE3 G = se3_exp(TwistD::Zero());
  CHECK(G.matrix().isApprox(Eigen::Matrix4d::Identity(), 1e-15));
}

TEST_CASE("se3_exp rotation matches Rodrigues and translation matches the left Jacobian") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const TwistD xi = random_twist(rng, 0.8);
    const PoseSE3 G = se3_exp(xi);
    CHECK((G.rotationMatrix() - rodrigues(xi.omega)).norm() < 1e-12);

    // Translation of exp is the integral of exp(s W) v over s in [0, 1]; Simpson with many panels.
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    const int n = 400;
    for (int i = 0; i <= n; ++i) {
      const double s = static_cast<double>(i) / n;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      t += w * rodrigues(s * xi.omega) * xi.v;
    }
    t /= 3.0 * n;
    CHECK((G.translation() - t).norm() < 1e-9);
  }
}

TEST_CASE("se3_log inverts se3_exp") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const TwistD xi = random_twist(rng, 0.7);
    const TwistD back = se3_log(se3_exp(xi));
    CHECK((back.vector() - xi.vector()).norm() < 1e-10);
  }
  SUBCASE("tiny angles use the series branch") {
    const TwistD xi(Eigen::Vector3d(0.1, -0.2, 0.3), Eigen::Vector3d(1e-10, -2e-10, 0.0));
    CHECK((se3_log(se3_exp(xi)).vector() - xi.vector()).norm() < 1e-14);
  }
}

TEST_CASE("se3_exp rejects non-finite twists") {
  const TwistD bad(Eigen::Vector3d(std::nan(""), 0, 0), Eigen::Vector3d::Zero());
  CHECK_THROWS_AS(se3_exp(bad), InvalidArgument);
}

TEST_CASE("pose composition and inverse") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const PoseSE3 A = se3_exp(random_twist(rng, 1.0));
    const PoseSE3 B = se3_exp(random_twist(rng, 1.0));
    CHECK(((A * B).matrix() - A.matrix() * B.matrix()).norm() < 1e-12);
    CHECK(((A * A.inverse()).matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("retract is left multiplication") {
  std::mt19937_64 rng(4);
  const PoseSE3 G = se3_exp(random_twist(rng, 1.0));
  const TwistD xi = random_twist(rng, 0.1);
  CHECK((retract(G, xi).matrix() - se3_exp(xi).matrix() * G.matrix()).norm() < 1e-12);
}

TEST_CASE("project and backproject are inverse") {
  const CameraIntrinsics K = small_camera();
  const Eigen::Vector2d p(12.25, 30.5);
  const Eigen::Vector3d X = backproject(K, p, 0.25);
  CHECK(X.z() == doctest::Approx(4.0));
  CHECK((project(K, X) - p).norm() < 1e-12);
}

TEST_CASE("camera validation") {
  CHECK_NOTHROW(small_camera().validate());
  CameraIntrinsics bad = small_camera();
  bad.fx = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = small_camera();
  bad.cx = 80.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("identity motion reprojects every pixel onto itself") {
  const CameraIntrinsics K = small_camera();
  InverseDepthMap depth(K.height, K.width, 0.5);
  const ReprojectionGrid g = reproject(PoseSE3::Identity(), K, depth);
  for (int r = 0; r < K.height; ++r)
    for (int c = 0; c < K.width; ++c) {
      REQUIRE(g.valid(r, c));
      CHECK(g.u(r, c) == doctest::Approx(c).epsilon(1e-12));
      CHECK(g.v(r, c) == doctest::Approx(r).epsilon(1e-12));
    }
}

TEST_CASE("sideways translation over a fronto-parallel plane shifts by fx * t * d") {
  const CameraIntrinsics K = small_camera();
  const double d = 0.5, tx = 0.2;
  InverseDepthMap depth(K.height, K.width, d);
  const PoseSE3 G(Eigen::Quaterniond::Identity(), Eigen::Vector3d(tx, 0, 0));
  const ReprojectionGrid g = reproject(G, K, depth);
  CHECK(((g.u - Grid::NullaryExpr(K.height, K.width, [](Eigen::Index, Eigen::Index c) { return double(c); })) -
         K.fx * tx * d)
            .abs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("points behind the target camera are flagged") {
  const CameraIntrinsics K = small_camera();
  const PoseSE3 G(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, -5.0));
  Eigen::Vector2d q;
  CHECK_FALSE(reproject_point(G, K, Eigen::Vector2d(10, 10), 0.5, q));
  CHECK_FALSE(reproject_point(PoseSE3::Identity(), K, Eigen::Vector2d(10, 10), 0.0, q));
  InverseDepthMap depth(K.height, K.width, 0.5);
  const ReprojectionGrid g = reproject(G, K, depth);
  CHECK(g.valid.count() == 0);
}

TEST_CASE("reproject rejects a depth map of the wrong shape") {
  InverseDepthMap depth(10, 10, 0.5);
  CHECK_THROWS_AS(reproject(PoseSE3::Identity(), small_camera(), depth), InvalidArgument);
}

TEST_CASE("reprojection Jacobians match central differences") {
  const CameraIntrinsics K = small_camera();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 63.0), v(0.0, 47.0), dd(0.2, 1.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const PoseSE3 Gi = se3_exp(random_twist(rng, 0.05));
    const PoseSE3 Gj = se3_exp(random_twist(rng, 0.05));
    const PoseSE3 Gij = Gj * Gi.inverse();
    const Eigen::Vector2d p(u(rng), v(rng));
    const double d = dd(rng);
    Eigen::Vector2d q;
    ReprojectionJacobians J;
    REQUIRE(reproject_point(Gij, K, p, d, q, &J));

    auto at = [&](const PoseSE3& gi, const PoseSE3& gj, double depth) {
      Eigen::Vector2d out;
      REQUIRE(reproject_point(gj * gi.inverse(), K, p, depth, out));
      return out;
    };
    auto rel = [](const Eigen::Vector2d& num, const Eigen::Vector2d& ana) {
      return (num - ana).norm() / std::max(1.0, ana.norm());
    };
    for (int a = 0; a < 6; ++a) {
      Eigen::Matrix<double, 6, 1> e = Eigen::Matrix<double, 6, 1>::Zero();
      e[a] = h;
      const Eigen::Vector2d ds =
          (at(se3_exp(TwistD(e)) * Gi, Gj, d) - at(se3_exp(TwistD(Eigen::Matrix<double, 6, 1>(-e))) * Gi, Gj, d)) /
          (2 * h);
      const Eigen::Vector2d dt =
          (at(Gi, se3_exp(TwistD(e)) * Gj, d) - at(Gi, se3_exp(TwistD(Eigen::Matrix<double, 6, 1>(-e))) * Gj, d)) /
          (2 * h);
      worst = std::max({worst, rel(ds, J.d_source_pose.col(a)), rel(dt, J.d_target_pose.col(a))});
    }
    const Eigen::Vector2d dnum = (at(Gi, Gj, d + h) - at(Gi, Gj, d - h)) / (2 * h);
    worst = std::max(worst, rel(dnum, J.d_inverse_depth));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("interpolate hits the endpoints and the midpoint") {
  std::mt19937_64 rng(6);
  const PoseSE3 a = se3_exp(random_twist(rng, 0.5));
  const PoseSE3 b = se3_exp(random_twist(rng, 0.5));
  CHECK((interpolate(a, b, 0.0).matrix() - a.matrix()).norm() < 1e-12);
  CHECK((interpolate(a, b, 1.0).matrix() - b.matrix()).norm() < 1e-12);
  const PoseSE3 m = interpolate(a, b, 0.5);
  CHECK((m.translation() - 0.5 * (a.translation() + b.translation())).norm() < 1e-12);
  CHECK(m.rotation().angularDistance(a.rotation()) ==
        doctest::Approx(m.rotation().angularDistance(b.rotation())).epsilon(1e-9));
}
