#include "dynrecon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "dynrecon/io.hpp"
#include "dynrecon/metrics.hpp"

namespace dynrecon {

namespace {

namespace fs = std::filesystem;

// Bilinear lookup of a flow field at a sub-pixel location; false outside or near invalid pixels.
bool sample_flow(const FlowField& f, double u, double v, double& du, double& dv) {
  const int w = f.width(), h = f.height();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) return false;
  const int c0 = std::min(static_cast<int>(u), w - 2 < 0 ? 0 : w - 2);
  const int r0 = std::min(static_cast<int>(v), h - 2 < 0 ? 0 : h - 2);
  const int c1 = std::min(c0 + 1, w - 1), r1 = std::min(r0 + 1, h - 1);
  if (!(f.valid(r0, c0) && f.valid(r0, c1) && f.valid(r1, c0) && f.valid(r1, c1))) return false;
  const double a = u - c0, b = v - r0;
  auto lerp = [&](const Grid& g) {
    return (1 - b) * ((1 - a) * g(r0, c0) + a * g(r0, c1)) + b * ((1 - a) * g(r1, c0) + a * g(r1, c1));
  };
  du = lerp(f.du);
  dv = lerp(f.dv);
  return true;
}

}  // namespace

FlowField ChainedFlowProvider::forward(int from, int to) const {
  FlowField acc = to_next_.at(static_cast<std::size_t>(from));
  for (int k = from + 1; k < to; ++k) {
    const FlowField& step = to_next_.at(static_cast<std::size_t>(k));
    for (int r = 0; r < acc.height(); ++r)
      for (int c = 0; c < acc.width(); ++c) {
        if (!acc.valid(r, c)) continue;
        double du, dv;
        if (!sample_flow(step, c + acc.du(r, c), r + acc.dv(r, c), du, dv)) {
          acc.valid(r, c) = false;
          continue;
        }
        acc.du(r, c) += du;
        acc.dv(r, c) += dv;
      }
  }
  return acc;
}

FlowObservation ChainedFlowProvider::flow(int from, int to) const {
  const int n = frame_count();
  if (from < 0 || to < 0 || from >= n || to >= n || from == to)
    throw InvalidArgument("chained flow: bad frame pair " + std::to_string(from) + " -> " + std::to_string(to));
  FlowObservation obs;
  if (from < to) {
    obs.flow = forward(from, to);
  } else {
    const FlowField fwd = forward(to, from);
    obs.flow = FlowField(fwd.height(), fwd.width());
    for (int r = 0; r < fwd.height(); ++r)
      for (int c = 0; c < fwd.width(); ++c) {
        if (!fwd.valid(r, c)) continue;
        const int tc = static_cast<int>(std::lround(c + fwd.du(r, c)));
        const int tr = static_cast<int>(std::lround(r + fwd.dv(r, c)));
        if (tc < 0 || tr < 0 || tc >= fwd.width() || tr >= fwd.height()) continue;
        obs.flow.du(tr, tc) = -fwd.du(r, c);
        obs.flow.dv(tr, tc) = -fwd.dv(r, c);
        obs.flow.valid(tr, tc) = true;
      }
  }
  obs.confidence = obs.flow.valid.cast<double>();
  return obs;
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw InvalidArgument("dataset: '" + dir + "' is not a directory");
  Dataset d;
  d.dir = dir;
  d.K = read_intrinsics((root / "intrinsics.txt").string());
  d.times = read_times((root / "times.txt").string());
  for (std::size_t k = 1; k < d.times.size(); ++k)
    if (!(d.times[k] > d.times[k - 1])) throw ParseError("dataset: times.txt must increase");
  const int n = d.size();
  for (int i = 0; i < n; ++i) {
    d.images.push_back(read_ppm((root / "rgb" / frame_name(i, ".ppm")).string()));
    if (d.images.back().height() != d.K.height || d.images.back().width() != d.K.width)
      throw ParseError("dataset: image " + std::to_string(i) + " does not match intrinsics");
    const fs::path depth = root / "depth" / frame_name(i, ".pfm");
    if (fs::exists(depth)) d.depth.push_back(read_depth_pfm(depth.string()));
  }
  if (!d.depth.empty() && static_cast<int>(d.depth.size()) != n)
    throw ParseError("dataset: depth maps present for some frames only");
  if (fs::exists(root / "poses_gt.txt")) d.ground_truth = read_tum_trajectory((root / "poses_gt.txt").string());
  if (fs::exists(root / "scene.json")) {
    d.scene = load_scene((root / "scene.json").string());
    if (d.scene->frames != n) throw ParseError("dataset: scene.json frame count differs from times.txt");
    d.flow = std::make_shared<SyntheticFlowProvider>(*d.scene);
  } else {
    std::vector<FlowField> to_next;
    for (int i = 0; i + 1 < n; ++i) to_next.push_back(read_flow_pfm((root / "flow" / frame_name(i, ".pfm")).string()));
    d.flow = std::make_shared<ChainedFlowProvider>(std::move(to_next));
  }
  return d;
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "none") return MaskMode::None;
  if (text == "ms") return MaskMode::Motion;
  if (text == "ms+ss") return MaskMode::MotionSemantic;
  throw InvalidArgument("unknown mask mode '" + text + "' (expected none, ms or ms+ss)");
}

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::None:
      return "none";
    case MaskMode::Motion:
      return "ms";
    case MaskMode::MotionSemantic:
      return "ms+ss";
  }
  return "?";
}

LocalizeResult localize(const Dataset& data, MaskMode mode, const RunConfig& config) {
  config.validate();
  const int n = data.size();
  if (n < 2) throw EmptyInput("localize: need at least two frames");
  Sequence seq;
  seq.K = data.K;
  seq.timestamps = data.times;
  for (const Grid& z : data.depth) seq.depth_init.push_back(InverseDepthMap::from_depth(z));

  LocalizeResult out;
  if (mode != MaskMode::None) {
    const std::string semantic_dir = (fs::path(data.dir) / "mask").string();
    std::vector<PoseSE3> relative(static_cast<std::size_t>(n - 1));
    for (int f = 0; f < n; ++f) {
      const int other = f + 1 < n ? f + 1 : f - 1;
      const RefineResult ref = refine(data.flow->flow(f, other), PoseSE3::Identity(), seq.initial_depth(f), data.K,
                                      config.mask, config.ba);
      MotionMask mask = discard_if_excessive(ref.mask, config.mask);
      if (mode == MaskMode::MotionSemantic) mask = combine(mask, load_semantic_mask(semantic_dir, f));
      out.masks.push_back(mask.grid);
      out.mask_discarded.push_back(mask.discarded);
      if (other == f + 1) relative[static_cast<std::size_t>(f)] = ref.pose;
    }
    seq.initial_poses.push_back(PoseSE3::Identity());
    for (int f = 1; f < n; ++f)
      seq.initial_poses.push_back(relative[static_cast<std::size_t>(f - 1)] * seq.initial_poses.back());
  }
  out.solve = solve(seq, *data.flow, out.masks, config.ba, config.keyframes);
  return out;
}

FieldBounds estimate_bounds(const Dataset& data, const Trajectory& trajectory, double margin) {
  if (data.depth.empty()) throw InvalidArgument("bounds: dataset has no depth maps");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int f = 0; f < data.size(); ++f) {
    const PoseSE3 c2w = pose_at(trajectory, data.times[static_cast<std::size_t>(f)]);
    const Grid& z = data.depth[static_cast<std::size_t>(f)];
    for (int r = 0; r < z.rows(); ++r)
      for (int c = 0; c < z.cols(); ++c) {
        if (!(z(r, c) > 0.0)) continue;
        const Eigen::Vector3d X =
            c2w * Eigen::Vector3d((c - data.K.cx) / data.K.fx * z(r, c), (r - data.K.cy) / data.K.fy * z(r, c), z(r, c));
        lo = lo.cwiseMin(X);
        hi = hi.cwiseMax(X);
      }
  }
  if (!lo.allFinite()) throw InvalidArgument("bounds: no valid depth");
  const Eigen::Vector3d pad = margin * (hi - lo).cwiseMax(1e-3);
  FieldBounds b;
  b.min = lo - pad;
  b.max = hi + pad;
  b.t_min = 0.0;
  b.t_max = 1.0;
  return b;
}

double normalized_time(const Dataset& data, double timestamp) {
  const double span = data.times.back() - data.times.front();
  return span > 0.0 ? (timestamp - data.times.front()) / span : 0.0;
}

PoseSE3 pose_at(const Trajectory& trajectory, double timestamp) {
  const TimedPose* best = nullptr;
  for (const auto& p : trajectory.poses)
    if (!best || std::abs(p.timestamp - timestamp) < std::abs(best->timestamp - timestamp)) best = &p;
  if (!best || std::abs(best->timestamp - timestamp) > kAssociationWindow)
    throw InsufficientOverlap("trajectory has no pose near t=" + std::to_string(timestamp));
  return best->pose;
}

NvsDataset make_nvs_dataset(const Dataset& data, const Trajectory& trajectory) {
  NvsDataset nvs;
  nvs.K = data.K;
  for (int f = 0; f < data.size(); ++f) {
    const double t = data.times[static_cast<std::size_t>(f)];
    TrainingView view{data.images[static_cast<std::size_t>(f)], pose_at(trajectory, t), normalized_time(data, t)};
    (is_holdout(f) ? nvs.holdout : nvs.train).push_back(std::move(view));
  }
  return nvs;
}

TrainResult train_field(const Dataset& data, const Trajectory& trajectory, const RunConfig& config,
                        const TrainCallback& on_log) {
  config.validate();
  const FieldBounds bounds = estimate_bounds(data, trajectory, config.field.bounds_margin);
  HexPlaneField field =
      init_field(bounds, config.field.resolution, config.field.ranks, config.field.feature_dim, config.field.seed);
  return train(make_nvs_dataset(data, trajectory), std::move(field), config.train, on_log);
}

}  // namespace dynrecon
