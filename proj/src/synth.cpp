#include "dynrecon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "dynrecon/io.hpp"

namespace dynrecon {

namespace {

using json = nlohmann::json;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL ^
                                                   static_cast<std::uint64_t>(j) * 0x85157af5ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy);
  const double u = fade(x - fx), v = fade(y - fy);
  const double a = lattice(seed, i, j), b = lattice(seed, i + 1, j);
  const double c = lattice(seed, i, j + 1), d = lattice(seed, i + 1, j + 1);
  return (a * (1 - u) + b * u) * (1 - v) + (c * (1 - u) + d * u) * v;
}

Eigen::Vector3d shade(const Texture& tex, std::uint64_t seed_offset, double s, double t) {
  Eigen::Vector3d rgb;
  for (int ch = 0; ch < 3; ++ch) {
    const std::uint64_t seed = splitmix(tex.seed + seed_offset * 0x9e37ULL + static_cast<std::uint64_t>(ch));
    const double n = 0.65 * value_noise(seed, s / tex.cell, t / tex.cell) +
                     0.35 * value_noise(seed ^ 0x5bd1e995ULL, 2.0 * s / tex.cell, 2.0 * t / tex.cell);
    rgb[ch] = std::clamp(tex.base[ch] + tex.amplitude * (n - 0.5), 0.0, 1.0);
  }
  return rgb;
}

constexpr double kHitEpsilon = 1e-9;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int mover = -1;  // -1: background
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
};

// Casts o + t d (d has unit camera-frame z, so t is the camera depth).
Hit cast(const SceneSpec& spec, const std::vector<PoseSE3>& mover_poses, const Eigen::Vector3d& o,
         const Eigen::Vector3d& d, std::uint64_t seed, bool need_color) {
  Hit hit;
  for (const auto& pl : spec.background) {
    const Eigen::Vector3d n = pl.axis_u.cross(pl.axis_v);
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-15) continue;
    const double t = n.dot(pl.center - o) / denom;
    if (!(t > kHitEpsilon) || t >= hit.t) continue;
    const Eigen::Vector3d x = o + t * d;
    const double s = (x - pl.center).dot(pl.axis_u), r = (x - pl.center).dot(pl.axis_v);
    if (std::abs(s) > pl.half_u || std::abs(r) > pl.half_v) continue;
    hit.t = t;
    hit.mover = -1;
    hit.point = x;
    if (need_color) hit.rgb = shade(pl.texture, seed, s, r);
  }
  for (std::size_t m = 0; m < spec.movers.size(); ++m) {
    const BoxMover& box = spec.movers[m];
    const PoseSE3& P = mover_poses[m];
    const Eigen::Matrix3d Rt = P.rotationMatrix().transpose();
    const Eigen::Vector3d lo = Rt * (o - P.translation()), ld = Rt * d;
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      const double h = box.half_extent[a];
      if (std::abs(ld[a]) < 1e-15) {
        miss = std::abs(lo[a]) > h;
        continue;
      }
      double ta = (-h - lo[a]) / ld[a], tb = (h - lo[a]) / ld[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (miss || t0 > t1 || t1 <= kHitEpsilon) continue;
    if (t0 <= kHitEpsilon) throw DegenerateSpec("synth: camera is inside mover " + std::to_string(m));
    if (t0 >= hit.t) continue;
    hit.t = t0;
    hit.mover = static_cast<int>(m);
    hit.point = o + t0 * d;
    if (need_color) {
      const Eigen::Vector3d x = lo + t0 * ld;
      int face = 0;
      double best = -1.0;
      for (int a = 0; a < 3; ++a) {
        const double r = std::abs(x[a]) / box.half_extent[a];
        if (r > best) {
          best = r;
          face = a;
        }
      }
      const int ua = (face + 1) % 3, va = (face + 2) % 3;
      const std::uint64_t face_id = static_cast<std::uint64_t>(2 * face + (x[face] > 0 ? 1 : 0));
      hit.rgb = shade(box.texture, seed + 101 * (face_id + 1), x[ua], x[va]);
    }
  }
  return hit;
}

std::vector<PoseSE3> mover_poses_at(const SceneSpec& spec, double t) {
  std::vector<PoseSE3> out;
  for (const auto& m : spec.movers) out.push_back(m.pose_at(t));
  return out;
}

Eigen::Vector3d pixel_direction(const CameraIntrinsics& K, const Eigen::Matrix3d& R, int r, int c) {
  return R * Eigen::Vector3d((c - K.cx) / K.fx, (r - K.cy) / K.fy, 1.0);
}

// --- JSON helpers -----------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError("scene: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ParseError("scene: unknown key '" + key + "' in " + where);
}

Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError("scene: '" + where + "' must be a 3-element array");
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_vec(const json& j, const char* key, Eigen::Vector3d& out, const std::string& where) {
  if (j.contains(key)) out = vec3(j.at(key), where + "." + key);
}

Texture texture_from_json(const json& j, const std::string& where) {
  check_keys(j, {"seed", "cell", "base", "amplitude"}, where);
  Texture t;
  read_opt(j, "seed", t.seed);
  read_opt(j, "cell", t.cell);
  read_vec(j, "base", t.base, where);
  read_opt(j, "amplitude", t.amplitude);
  return t;
}

json texture_to_json(const Texture& t) {
  return {{"seed", t.seed}, {"cell", t.cell}, {"base", to_json(t.base)}, {"amplitude", t.amplitude}};
}

}  // namespace

PoseSE3 BoxMover::pose_at(double t) const {
  return PoseSE3(se3_exp(TwistD(Eigen::Vector3d::Zero(), angular_velocity * t)).rotation(), center + velocity * t);
}

void SceneSpec::validate() const {
  if (frames < 1) throw DegenerateSpec("scene: frames must be >= 1");
  if (!(fps > 0.0)) throw DegenerateSpec("scene: fps must be positive");
  try {
    K.validate();
  } catch (const InvalidArgument& e) {
    throw DegenerateSpec(std::string("scene: ") + e.what());
  }
  if (!(camera.radius > 0.0)) throw DegenerateSpec("scene: orbit radius must be positive");
  for (const auto& p : background) {
    if (std::abs(p.axis_u.norm() - 1.0) > 1e-9 || std::abs(p.axis_v.norm() - 1.0) > 1e-9 ||
        std::abs(p.axis_u.dot(p.axis_v)) > 1e-9)
      throw DegenerateSpec("scene: plane axes must be orthonormal");
    if (!(p.half_u > 0.0 && p.half_v > 0.0)) throw DegenerateSpec("scene: plane extents must be positive");
  }
  for (const auto& m : movers) {
    if (!(m.half_extent.array() > 0.0).all()) throw DegenerateSpec("scene: box extents must be positive");
    if (!(m.texture.cell > 0.0)) throw DegenerateSpec("scene: texture cell must be positive");
  }
  for (const auto& p : background)
    if (!(p.texture.cell > 0.0)) throw DegenerateSpec("scene: texture cell must be positive");
  if (!(flow_noise.sigma >= 0.0) || !(flow_noise.outlier_fraction >= 0.0 && flow_noise.outlier_fraction <= 1.0))
    throw DegenerateSpec("scene: flow noise must have sigma >= 0 and outlier fraction in [0, 1]");
}

PoseSE3 SceneSpec::camera_to_world(int frame) const {
  const double alpha = frames > 1 ? static_cast<double>(frame) / (frames - 1) : 0.0;
  const double theta = (camera.arc_start_deg + alpha * (camera.arc_end_deg - camera.arc_start_deg)) * M_PI / 180.0;
  const Eigen::Vector3d eye =
      camera.target + Eigen::Vector3d(camera.radius * std::sin(theta), camera.height, camera.radius * std::cos(theta));
  const Eigen::Vector3d forward = (camera.target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitY()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d R;
  R << right, down, forward;
  return PoseSE3(R, eye);
}

SceneSpec scene_from_json(const json& j) {
  check_keys(j, {"name", "frames", "fps", "intrinsics", "camera", "background", "movers", "flow_noise"}, "scene");
  SceneSpec s;
  try {
    read_opt(j, "name", s.name);
    read_opt(j, "frames", s.frames);
    read_opt(j, "fps", s.fps);
    if (j.contains("intrinsics")) {
      const json& k = j.at("intrinsics");
      check_keys(k, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
      read_opt(k, "fx", s.K.fx);
      read_opt(k, "fy", s.K.fy);
      read_opt(k, "cx", s.K.cx);
      read_opt(k, "cy", s.K.cy);
      read_opt(k, "width", s.K.width);
      read_opt(k, "height", s.K.height);
    }
    if (j.contains("camera")) {
      const json& c = j.at("camera");
      check_keys(c, {"target", "radius", "height", "arc_start_deg", "arc_end_deg"}, "camera");
      read_vec(c, "target", s.camera.target, "camera");
      read_opt(c, "radius", s.camera.radius);
      read_opt(c, "height", s.camera.height);
      read_opt(c, "arc_start_deg", s.camera.arc_start_deg);
      read_opt(c, "arc_end_deg", s.camera.arc_end_deg);
    }
    if (j.contains("background"))
      for (const json& p : j.at("background")) {
        check_keys(p, {"center", "axis_u", "axis_v", "half_u", "half_v", "texture"}, "background");
        PlaneSurface pl;
        read_vec(p, "center", pl.center, "background");
        read_vec(p, "axis_u", pl.axis_u, "background");
        read_vec(p, "axis_v", pl.axis_v, "background");
        read_opt(p, "half_u", pl.half_u);
        read_opt(p, "half_v", pl.half_v);
        if (p.contains("texture")) pl.texture = texture_from_json(p.at("texture"), "background.texture");
        s.background.push_back(pl);
      }
    if (j.contains("movers"))
      for (const json& m : j.at("movers")) {
        check_keys(m, {"shape", "half_extent", "center", "velocity", "angular_velocity", "texture"}, "movers");
        if (m.value("shape", std::string("box")) != "box") throw ParseError("scene: only box movers are supported");
        BoxMover b;
        read_vec(m, "half_extent", b.half_extent, "movers");
        read_vec(m, "center", b.center, "movers");
        read_vec(m, "velocity", b.velocity, "movers");
        read_vec(m, "angular_velocity", b.angular_velocity, "movers");
        if (m.contains("texture")) b.texture = texture_from_json(m.at("texture"), "movers.texture");
        s.movers.push_back(b);
      }
    if (j.contains("flow_noise")) {
      const json& n = j.at("flow_noise");
      check_keys(n, {"sigma", "outlier_fraction", "seed"}, "flow_noise");
      read_opt(n, "sigma", s.flow_noise.sigma);
      read_opt(n, "outlier_fraction", s.flow_noise.outlier_fraction);
      read_opt(n, "seed", s.flow_noise.seed);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

json scene_to_json(const SceneSpec& s) {
  json j;
  j["name"] = s.name;
  j["frames"] = s.frames;
  j["fps"] = s.fps;
  j["intrinsics"] = {{"fx", s.K.fx}, {"fy", s.K.fy}, {"cx", s.K.cx},
                     {"cy", s.K.cy}, {"width", s.K.width}, {"height", s.K.height}};
  j["camera"] = {{"target", to_json(s.camera.target)},
                 {"radius", s.camera.radius},
                 {"height", s.camera.height},
                 {"arc_start_deg", s.camera.arc_start_deg},
                 {"arc_end_deg", s.camera.arc_end_deg}};
  j["background"] = json::array();
  for (const auto& p : s.background)
    j["background"].push_back({{"center", to_json(p.center)},
                               {"axis_u", to_json(p.axis_u)},
                               {"axis_v", to_json(p.axis_v)},
                               {"half_u", p.half_u},
                               {"half_v", p.half_v},
                               {"texture", texture_to_json(p.texture)}});
  j["movers"] = json::array();
  for (const auto& m : s.movers)
    j["movers"].push_back({{"shape", "box"},
                           {"half_extent", to_json(m.half_extent)},
                           {"center", to_json(m.center)},
                           {"velocity", to_json(m.velocity)},
                           {"angular_velocity", to_json(m.angular_velocity)},
                           {"texture", texture_to_json(m.texture)}});
  j["flow_noise"] = {{"sigma", s.flow_noise.sigma},
                     {"outlier_fraction", s.flow_noise.outlier_fraction},
                     {"seed", s.flow_noise.seed}};
  return j;
}

SceneSpec load_scene(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return scene_from_json(j);
}

void save_scene(const SceneSpec& spec, const std::string& path) { write_file(path, scene_to_json(spec).dump(2) + "\n"); }

SceneSpec box_orbit_scene() {
  SceneSpec s;
  s.name = "box-orbit";
  s.frames = 20;
  s.fps = 10.0;
  s.K = CameraIntrinsics{60.0, 60.0, 31.5, 23.5, 64, 48};
  s.camera = OrbitPath{Eigen::Vector3d::Zero(), 4.0, 0.5, -30.0, 30.0};
  PlaneSurface wall;
  wall.center = Eigen::Vector3d(0.0, 0.0, -2.0);
  wall.half_u = 7.0;
  wall.half_v = 4.0;
  wall.texture = Texture{11, 0.6, Eigen::Vector3d(0.55, 0.5, 0.45), 0.5};
  PlaneSurface floor;
  floor.center = Eigen::Vector3d(0.0, -1.5, 2.5);
  floor.axis_u = Eigen::Vector3d::UnitX();
  floor.axis_v = Eigen::Vector3d::UnitZ();
  floor.half_u = 7.0;
  floor.half_v = 4.5;
  floor.texture = Texture{23, 0.5, Eigen::Vector3d(0.35, 0.42, 0.5), 0.5};
  s.background = {wall, floor};
  BoxMover box;
  box.half_extent = Eigen::Vector3d::Constant(0.65);
  box.center = Eigen::Vector3d(0.1, -0.35, 0.2);
  box.velocity = Eigen::Vector3d(-0.1, 0.1, 0.0);
  // Mostly a spin about the viewing axis: a translating box alone is largely
  // explained away by camera motion plus depth.
  box.angular_velocity = Eigen::Vector3d(0.0, 0.0, 3.0);
  box.texture = Texture{37, 0.35, Eigen::Vector3d(0.8, 0.35, 0.25), 0.5};
  s.movers = {box};
  s.flow_noise = FlowNoise{0.1, 0.0, 7};
  return s;
}

std::vector<GroundTruthFrame> generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const CameraIntrinsics& K = spec.K;
  std::vector<GroundTruthFrame> frames(static_cast<std::size_t>(spec.frames));
  for (int f = 0; f < spec.frames; ++f) {
    GroundTruthFrame& out = frames[static_cast<std::size_t>(f)];
    out.timestamp = spec.timestamp(f);
    out.pose = spec.camera_to_world(f);
    out.image = ImageRGB(K.height, K.width);
    out.depth = Grid::Zero(K.height, K.width);
    out.motion_mask = MotionMask::empty(K.height, K.width);
    const auto movers = mover_poses_at(spec, out.timestamp);
    const Eigen::Matrix3d R = out.pose.rotationMatrix();
    for (int r = 0; r < K.height; ++r)
      for (int c = 0; c < K.width; ++c) {
        const Hit hit = cast(spec, movers, out.pose.translation(), pixel_direction(K, R, r, c), seed, true);
        if (!std::isfinite(hit.t))
          throw DegenerateSpec("synth: frame " + std::to_string(f) + " pixel (" + std::to_string(c) + ", " +
                               std::to_string(r) + ") sees no surface");
        out.depth(r, c) = hit.t;
        out.motion_mask.grid(r, c) = hit.mover >= 0;
        for (int ch = 0; ch < 3; ++ch) out.image.channels[ch](r, c) = hit.rgb[ch];
      }
    if (f + 1 < spec.frames) {
      out.flow_to_next = analytic_flow(spec, f, f + 1);
    } else {
      out.flow_to_next = FlowField(K.height, K.width);
      out.flow_to_next.valid.setConstant(false);
    }
  }
  return frames;
}

FlowField analytic_flow(const SceneSpec& spec, int from, int to) {
  if (from < 0 || to < 0 || from >= spec.frames || to >= spec.frames)
    throw InvalidArgument("analytic_flow: frame index out of range");
  const CameraIntrinsics& K = spec.K;
  const PoseSE3 c2w = spec.camera_to_world(from);
  const PoseSE3 w2c_to = spec.camera_to_world(to).inverse();
  const auto movers_from = mover_poses_at(spec, spec.timestamp(from));
  std::vector<PoseSE3> carry;  // world point at `from` -> world point at `to`
  for (std::size_t m = 0; m < spec.movers.size(); ++m)
    carry.push_back(spec.movers[m].pose_at(spec.timestamp(to)) * movers_from[m].inverse());
  const Eigen::Matrix3d R = c2w.rotationMatrix();

  FlowField flow(K.height, K.width);
  for (int r = 0; r < K.height; ++r)
    for (int c = 0; c < K.width; ++c) {
      const Hit hit = cast(spec, movers_from, c2w.translation(), pixel_direction(K, R, r, c), 0, false);
      if (!std::isfinite(hit.t)) continue;
      const Eigen::Vector3d X = hit.mover >= 0 ? carry[static_cast<std::size_t>(hit.mover)] * hit.point : hit.point;
      const Eigen::Vector3d Xc = w2c_to * X;
      if (Xc.z() <= kDepthEpsilon) continue;
      flow.du(r, c) = K.fx * Xc.x() / Xc.z() + K.cx - c;
      flow.dv(r, c) = K.fy * Xc.y() / Xc.z() + K.cy - r;
      flow.valid(r, c) = true;
    }
  return flow;
}

Trajectory ground_truth_trajectory(const SceneSpec& spec) {
  Trajectory traj;
  for (int f = 0; f < spec.frames; ++f) traj.poses.push_back({spec.timestamp(f), spec.camera_to_world(f)});
  return traj;
}

std::uint64_t pair_seed(std::uint64_t seed, int from, int to) {
  return splitmix(seed ^ splitmix((static_cast<std::uint64_t>(from) << 32) | static_cast<std::uint32_t>(to)));
}

FlowObservation SyntheticFlowProvider::flow(int from, int to) const {
  FlowObservation obs;
  const FlowField clean = analytic_flow(spec_, from, to);
  obs.flow = spec_.flow_noise.sigma > 0.0 || spec_.flow_noise.outlier_fraction > 0.0
                 ? corrupt_flow(clean, spec_.flow_noise.sigma, spec_.flow_noise.outlier_fraction,
                                pair_seed(spec_.flow_noise.seed, from, to))
                 : clean;
  obs.confidence = obs.flow.valid.cast<double>();
  return obs;
}

Trajectory perturb_trajectory(const Trajectory& traj, double sigma_t, double sigma_r, std::uint64_t seed) {
  if (!(sigma_t >= 0.0) || !(sigma_r >= 0.0)) throw InvalidArgument("perturb_trajectory: sigmas must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Trajectory out = traj;
  for (auto& p : out.poses) {
    Eigen::Vector3d v, w;
    for (int a = 0; a < 3; ++a) v[a] = sigma_t * n01(rng);
    for (int a = 0; a < 3; ++a) w[a] = sigma_r * n01(rng);
    if (sigma_t == 0.0 && sigma_r == 0.0) continue;
    p.pose = p.pose * se3_exp(TwistD(v, w));
  }
  return out;
}

FlowField corrupt_flow(const FlowField& flow, double noise_sigma, double outlier_fraction, std::uint64_t seed,
                       double outlier_range) {
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("corrupt_flow: noise sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0))
    throw InvalidArgument("corrupt_flow: outlier fraction must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> outlier(-outlier_range, outlier_range);
  FlowField out = flow;
  for (Eigen::Index c = 0; c < out.du.cols(); ++c)
    for (Eigen::Index r = 0; r < out.du.rows(); ++r) {
      if (noise_sigma > 0.0) {
        out.du(r, c) += noise_sigma * noise(rng);
        out.dv(r, c) += noise_sigma * noise(rng);
      }
      if (outlier_fraction > 0.0 && unit(rng) < outlier_fraction) {
        out.du(r, c) = outlier(rng);
        out.dv(r, c) = outlier(rng);
      }
    }
  return out;
}

void write_dataset(const SceneSpec& spec, const std::vector<GroundTruthFrame>& frames, const std::string& dir) {
  namespace fs = std::filesystem;
  if (static_cast<int>(frames.size()) != spec.frames) throw InvalidArgument("write_dataset: frame count mismatch");
  fs::create_directories(dir);
  const fs::path root(dir);
  Trajectory gt;
  std::vector<double> times;
  for (const auto& f : frames) {
    gt.poses.push_back({f.timestamp, f.pose});
    times.push_back(f.timestamp);
  }
  write_tum_trajectory(gt, (root / "poses_gt.txt").string());
  write_times(times, (root / "times.txt").string());
  write_intrinsics(spec.K, (root / "intrinsics.txt").string());
  save_scene(spec, (root / "scene.json").string());
  const SyntheticFlowProvider provider(spec);
  for (int i = 0; i < spec.frames; ++i) {
    const auto& f = frames[static_cast<std::size_t>(i)];
    write_ppm(f.image, (root / "rgb" / frame_name(i, ".ppm")).string());
    write_depth_pfm(f.depth, (root / "depth" / frame_name(i, ".pfm")).string());
    write_pbm(f.motion_mask.grid, (root / "mask" / frame_name(i, ".pbm")).string());
    if (i + 1 < spec.frames) write_flow_pfm(provider.flow(i, i + 1).flow, (root / "flow" / frame_name(i, ".pfm")).string());
  }
}

}  // namespace dynrecon
