#include <doctest.h>

#include <cmath>
#include <random>

#include "dynrecon/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dynrecon;
using testing::reference_psnr;
using testing::reference_ssim;

namespace {

Trajectory random_trajectory(std::mt19937_64& rng, int n) {
  Trajectory t;
  for (int k = 0; k < n; ++k) t.poses.push_back({0.1 * k, se3_exp(testing::random_twist(rng, 1.0, 0.5))});
  return t;
}

Trajectory transformed(const Trajectory& t, const PoseSE3& G, double scale) {
  Trajectory out = t;
  for (auto& p : out.poses) p.pose = PoseSE3(G.rotation() * p.pose.rotation(), scale * (G * p.pose.translation()));
  return out;
}

ImageRGB random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageRGB img(h, w);
  for (auto& ch : img.channels)
    for (Eigen::Index i = 0; i < ch.size(); ++i) ch(i) = u(rng);
  return img;
}

}  // namespace

TEST_CASE("identical trajectories align to the identity") {
  std::mt19937_64 rng(1);
  const Trajectory t = random_trajectory(rng, 10);
  const AlignmentResult a = align(t, t, true);
  CHECK(a.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-12));
  CHECK(a.translation.norm() < 1e-12);
  CHECK(a.scale == doctest::Approx(1.0));
  CHECK(ate_rms(t, t, true) < 1e-12);
  CHECK(ate_rms(t, t, false) < 1e-12);
}

TEST_CASE("a scaled estimate recovers the inverse scale") {
  std::mt19937_64 rng(2);
  const Trajectory ref = random_trajectory(rng, 10);
  const Trajectory est = transformed(ref, PoseSE3::Identity(), 2.0);
  const AlignmentResult a = align(est, ref, true);
  CHECK(a.scale == doctest::Approx(0.5).epsilon(1e-12));
  for (double r : a.residuals) CHECK(r < 1e-12);
}

TEST_CASE("a constant offset is absorbed by rigid alignment") {
  std::mt19937_64 rng(3);
  const Trajectory ref = random_trajectory(rng, 8);
  const Trajectory est = transformed(ref, PoseSE3(Eigen::Quaterniond::Identity(), Eigen::Vector3d(1, 0, 0)), 1.0);
  CHECK(ate_rms(est, ref, false) < 1e-12);
}

TEST_CASE("ATE is invariant under rigid and similarity transforms") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.05);
  const Trajectory ref = random_trajectory(rng, 15);
  Trajectory est = ref;
  for (auto& p : est.poses) p.pose = PoseSE3(p.pose.rotation(), p.pose.translation() + Eigen::Vector3d(n(rng), n(rng), n(rng)));
  const double base_rigid = ate_rms(est, ref, false);
  const double base_sim = ate_rms(est, ref, true);
  for (int k = 0; k < 10; ++k) {
    const PoseSE3 G = se3_exp(testing::random_twist(rng, 2.0, 1.0));
    CHECK(std::abs(ate_rms(transformed(est, G, 1.0), ref, false) - base_rigid) < 1e-9);
    CHECK(std::abs(ate_rms(transformed(est, G, 0.3 + k * 0.4), ref, true) - base_sim) < 1e-9);
  }
}

TEST_CASE("the similarity alignment is a minimum of the residual") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  const Trajectory ref = random_trajectory(rng, 12);
  Trajectory est = transformed(ref, se3_exp(testing::random_twist(rng, 1.0, 0.7)), 1.7);
  for (auto& p : est.poses) p.pose = PoseSE3(p.pose.rotation(), p.pose.translation() + Eigen::Vector3d(n(rng), n(rng), n(rng)));
  const AlignmentResult a = align(est, ref, true);
  auto cost = [&](const Eigen::Matrix3d& R, const Eigen::Vector3d& t, double s) {
    double c = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k)
      c += (s * R * est[k].pose.translation() + t - ref[k].pose.translation()).squaredNorm();
    return c;
  };
  const double best = cost(a.rotation, a.translation, a.scale);
  // Every coordinate direction (rotation, translation, scale) must increase the cost.
  for (int d = 0; d < 7; ++d)
    for (double h : {-1e-4, 1e-4}) {
      Eigen::Matrix3d R = a.rotation;
      Eigen::Vector3d t = a.translation;
      double s = a.scale;
      if (d < 3) R = Eigen::AngleAxisd(h, Eigen::Vector3d::Unit(d)).toRotationMatrix() * R;
      else if (d < 6) t[d - 3] += h;
      else s += h;
      CHECK(cost(R, t, s) > best);
    }
}

TEST_CASE("association by timestamp") {
  Trajectory a, b;
  for (int k = 0; k < 5; ++k) a.poses.push_back({0.1 * k, PoseSE3::Identity()});
  for (int k = 0; k < 5; ++k) b.poses.push_back({0.1 * k + 0.005, PoseSE3::Identity()});
  b.poses[3].timestamp = 0.35;  // too far from 0.3
  const auto pairs = associate(a, b);
  CHECK(pairs.size() == 4);
  for (const auto& [i, j] : pairs) CHECK(i == j);
  Trajectory few;
  few.poses = {a.poses[0], a.poses[1]};
  CHECK_THROWS_AS(align(few, few, true), InsufficientOverlap);
}

TEST_CASE("PSNR") {
  std::mt19937_64 rng(6);
  const ImageRGB a = random_image(rng, 12, 9);
  CHECK(psnr(a, a) == 99.0);
  ImageRGB b = a;
  for (auto& ch : b.channels) ch += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  for (int k = 0; k < 10; ++k) {
    const ImageRGB x = random_image(rng, 7, 11), y = random_image(rng, 7, 11);
    CHECK(std::abs(psnr(x, y) - reference_psnr(x, y)) < 1e-9);
  }
  CHECK_THROWS_AS(psnr(a, random_image(rng, 12, 8)), InvalidArgument);
}

TEST_CASE("SSIM") {
  std::mt19937_64 rng(7);
  const ImageRGB a = random_image(rng, 20, 24);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  const Grid half = Grid::Constant(16, 16, 0.5);
  CHECK(ssim(half, Grid(1.0 - half)) == doctest::Approx(1.0).epsilon(1e-9));
  for (int k = 0; k < 5; ++k) {
    const ImageRGB x = random_image(rng, 16, 19);
    ImageRGB y = x;
    std::normal_distribution<double> n(0.0, 0.2);
    for (auto& ch : y.channels)
      for (Eigen::Index i = 0; i < ch.size(); ++i) ch(i) += n(rng);
    double expected = 0.0;
    for (int ch = 0; ch < 3; ++ch) expected += reference_ssim(x.channels[ch], y.channels[ch]) / 3.0;
    CHECK(std::abs(ssim(x, y) - expected) < 1e-6);
    CHECK(std::abs(ssim(to_gray(x), to_gray(y)) - reference_ssim(to_gray(x), to_gray(y))) < 1e-6);
  }
  CHECK_THROWS_AS(ssim(Grid::Zero(5, 5), Grid::Zero(5, 5)), InvalidArgument);
}

TEST_CASE("report formatting") {
  std::vector<ReportRow> rows{{"a", 0.01, 25.0, 0.9}, {"b", 0.03, 27.0, 0.7}};
  const std::string csv = format_report(rows, ReportFormat::Csv, "sim3");
  CHECK(csv.find("sequence,ate_rms_m,psnr_db,ssim,alignment") == 0);
  CHECK(csv.find("Mean,0.020000") != std::string::npos);
  CHECK(csv.find("Max,0.030000") != std::string::npos);
  const std::string table = format_report(rows, ReportFormat::Table, "se3");
  CHECK(table.find("# alignment: se3") == 0);
  CHECK(table.find("Mean") != std::string::npos);
}
