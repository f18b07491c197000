#include "dynrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Geometry>

namespace dynrecon {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

Eigen::Matrix<double, kSsimWindow, kSsimWindow> gaussian_window() {
  Eigen::Matrix<double, kSsimWindow, 1> g;
  const int half = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) g[i] = std::exp(-0.5 * (i - half) * (i - half) / (kSsimSigma * kSsimSigma));
  g /= g.sum();
  return g * g.transpose();
}

void check_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument(std::string(what) + ": image shapes differ");
  if (a.size() == 0) throw InvalidArgument(std::string(what) + ": empty image");
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& estimate, const Trajectory& reference,
                                                           double window) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(reference.size(), false);
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double t = estimate[i].timestamp;
    // reference timestamps are sorted; binary search for the closest
    auto it = std::lower_bound(reference.poses.begin(), reference.poses.end(), t,
                               [](const TimedPose& p, double value) { return p.timestamp < value; });
    std::size_t best = reference.size();
    double best_dt = window;
    for (auto cand : {it, it == reference.poses.begin() ? it : std::prev(it)}) {
      if (cand == reference.poses.end()) continue;
      const auto j = static_cast<std::size_t>(cand - reference.poses.begin());
      const double dt = std::abs(cand->timestamp - t);
      if (!used[j] && dt <= best_dt) {
        best_dt = dt;
        best = j;
      }
    }
    if (best < reference.size()) {
      used[best] = true;
      pairs.emplace_back(i, best);
    }
  }
  return pairs;
}

AlignmentResult align_points(const Eigen::Matrix3Xd& estimate, const Eigen::Matrix3Xd& reference, bool with_scale) {
  if (estimate.cols() != reference.cols()) throw InvalidArgument("align: point counts differ");
  if (estimate.cols() < 3) throw InsufficientOverlap("align: need at least 3 associated poses");
  const Eigen::Matrix4d T = Eigen::umeyama(estimate, reference, with_scale);
  AlignmentResult out;
  const Eigen::Matrix3d sR = T.topLeftCorner<3, 3>();
  out.scale = with_scale ? std::cbrt(sR.determinant()) : 1.0;
  out.rotation = sR / out.scale;
  out.translation = T.topRightCorner<3, 1>();
  out.residuals.resize(static_cast<std::size_t>(estimate.cols()));
  for (Eigen::Index k = 0; k < estimate.cols(); ++k)
    out.residuals[static_cast<std::size_t>(k)] = (out.apply(estimate.col(k)) - reference.col(k)).norm();
  return out;
}

AlignmentResult align(const Trajectory& estimate, const Trajectory& reference, bool with_scale) {
  const auto pairs = associate(estimate, reference);
  if (pairs.size() < 3)
    throw InsufficientOverlap("align: only " + std::to_string(pairs.size()) +
                              " poses associate within 20 ms (need 3)");
  Eigen::Matrix3Xd est(3, static_cast<Eigen::Index>(pairs.size()));
  Eigen::Matrix3Xd ref(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    est.col(static_cast<Eigen::Index>(k)) = estimate[pairs[k].first].pose.translation();
    ref.col(static_cast<Eigen::Index>(k)) = reference[pairs[k].second].pose.translation();
  }
  AlignmentResult out = align_points(est, ref, with_scale);
  out.pairs = pairs;
  return out;
}

double ate_rms(const Trajectory& estimate, const Trajectory& reference, bool with_scale) {
  const AlignmentResult a = align(estimate, reference, with_scale);
  double sum = 0.0;
  for (double r : a.residuals) sum += r * r;
  return std::sqrt(sum / static_cast<double>(a.residuals.size()));
}

double psnr(const Grid& a, const Grid& b) {
  check_same_shape(a, b, "psnr");
  const double mse = (a - b).square().mean();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (int c = 0; c < 3; ++c) {
    check_same_shape(a.channels[c], b.channels[c], "psnr");
    sum += (a.channels[c] - b.channels[c]).square().sum();
    count += a.channels[c].size();
  }
  const double mse = sum / static_cast<double>(count);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Grid& a, const Grid& b) {
  check_same_shape(a, b, "ssim");
  if (a.rows() < kSsimWindow || a.cols() < kSsimWindow)
    throw InvalidArgument("ssim: image smaller than the 11x11 window");
  static const auto w = gaussian_window();
  const Eigen::Index rows = a.rows() - kSsimWindow + 1;
  const Eigen::Index cols = a.cols() - kSsimWindow + 1;
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto pa = a.block(r, c, kSsimWindow, kSsimWindow).matrix();
      const auto pb = b.block(r, c, kSsimWindow, kSsimWindow).matrix();
      const double mu_a = w.cwiseProduct(pa).sum();
      const double mu_b = w.cwiseProduct(pb).sum();
      const double var_a = w.cwiseProduct(pa.cwiseProduct(pa)).sum() - mu_a * mu_a;
      const double var_b = w.cwiseProduct(pb.cwiseProduct(pb)).sum() - mu_b * mu_b;
      const double cov = w.cwiseProduct(pa.cwiseProduct(pb)).sum() - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
    }
  return total / static_cast<double>(rows * cols);
}

double ssim(const ImageRGB& a, const ImageRGB& b) {
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) sum += ssim(a.channels[c], b.channels[c]);
  return sum / 3.0;
}

Grid to_gray(const ImageRGB& image) {
  return 0.299 * image.channels[0] + 0.587 * image.channels[1] + 0.114 * image.channels[2];
}

std::string format_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::string& alignment) {
  std::vector<ReportRow> all = rows;
  ReportRow mean{"Mean"}, max{"Max"};
  auto summarize = [&](double ReportRow::*field) {
    double sum = 0.0, hi = -std::numeric_limits<double>::infinity();
    int n = 0;
    for (const auto& r : rows)
      if (std::isfinite(r.*field)) {
        sum += r.*field;
        hi = std::max(hi, r.*field);
        ++n;
      }
    if (n > 0) {
      mean.*field = sum / n;
      max.*field = hi;
    }
  };
  summarize(&ReportRow::ate);
  summarize(&ReportRow::psnr);
  summarize(&ReportRow::ssim);
  all.push_back(mean);
  all.push_back(max);

  auto cell = [](double v, int precision) {
    if (!std::isfinite(v)) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return std::string(buf);
  };

  std::ostringstream os;
  if (format == ReportFormat::Csv) {
    os << "sequence,ate_rms_m,psnr_db,ssim,alignment\n";
    for (const auto& r : all)
      os << r.name << ',' << cell(r.ate, 6) << ',' << cell(r.psnr, 4) << ',' << cell(r.ssim, 6) << ',' << alignment
         << '\n';
  } else {
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %14s %10s %10s\n", "sequence", "ate_rms_m", "psnr_db", "ssim");
    os << "# alignment: " << alignment << '\n' << line;
    for (std::size_t k = 0; k < all.size(); ++k) {
      if (k == rows.size()) os << std::string(61, '-') << '\n';
      const auto& r = all[k];
      std::snprintf(line, sizeof line, "%-24s %14s %10s %10s\n", r.name.c_str(), cell(r.ate, 6).c_str(),
                    cell(r.psnr, 4).c_str(), cell(r.ssim, 6).c_str());
      os << line;
    }
  }
  return os.str();
}

}  // namespace dynrecon
