#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "dynrecon/cli.hpp"
#include "dynrecon/io.hpp"
#include "dynrecon/synth.hpp"

using namespace dynrecon;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "dynrecon_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// The box-orbit dataset, synthesized once for the whole binary.
fs::path box_orbit_data() {
  static const fs::path dir = [] {
    const fs::path d = workdir() / "box";
    const Run r = cli({"synth", "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

double ate_from(const std::string& text) {
  const auto pos = text.find("ate_rms_m ");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + 10));
}

}  // namespace

TEST_CASE("eval-traj on identical files reports zero") {
  const fs::path traj = workdir() / "gt.txt";
  write_tum_trajectory(ground_truth_trajectory(box_orbit_scene()), traj.string());
  const Run r = cli({"eval-traj", "--est", traj.string(), "--ref", traj.string()});
  CHECK(r.code == 0);
  CHECK(r.out == "ate_rms_m 0.000000\n");
  const Run csv = cli({"eval-traj", "--est", traj.string(), "--ref", traj.string(), "--align", "se3", "--report", "csv"});
  CHECK(csv.code == 0);
  CHECK(csv.out.find("sequence,ate_rms_m") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  const Run unknown = cli({"eval-traj", "--est", "a.txt", "--ref", "b.txt", "--bogus", "1"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  CHECK(unknown.err.find("--est") != std::string::npos);  // usage text for the subcommand

  CHECK(cli({}).code == 2);
  CHECK(cli({"teleport"}).code == 2);
  CHECK(cli({"eval-traj", "--est", "/nonexistent/a.txt", "--ref", "/nonexistent/b.txt"}).code == 2);
  CHECK(cli({"localize", "--data", box_orbit_data().string(), "--masks", "sometimes", "--out",
             (workdir() / "x.txt").string()})
            .code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("synth writes the dataset layout deterministically") {
  const fs::path a = workdir() / "s1", b = workdir() / "s2";
  REQUIRE(cli({"synth", "--out", a.string(), "--seed", "3"}).code == 0);
  REQUIRE(cli({"synth", "--out", b.string(), "--seed", "3"}).code == 0);
  for (const char* f : {"poses_gt.txt", "times.txt", "intrinsics.txt", "scene.json"}) CHECK(fs::exists(a / f));
  for (const char* sub : {"rgb/0005.ppm", "depth/0005.pfm", "flow/0005.pfm", "mask/0005.pbm"}) {
    CHECK(fs::exists(a / sub));
    CHECK(read_file((a / sub).string()) == read_file((b / sub).string()));
  }
}

TEST_CASE("masking lowers the localization error") {
  const fs::path none = workdir() / "none.txt", ms = workdir() / "ms.txt";
  const Run rn = cli({"localize", "--data", box_orbit_data().string(), "--masks", "none", "--out", none.string()});
  const Run rm = cli({"localize", "--data", box_orbit_data().string(), "--masks", "ms", "--out", ms.string()});
  REQUIRE(rn.code == 0);
  REQUIRE(rm.code == 0);
  CHECK(ate_from(rm.out) < ate_from(rn.out));
  CHECK(read_tum_trajectory(ms.string()).size() == 20);
}

TEST_CASE("all-false semantic masks leave the motion-masked result unchanged") {
  const fs::path data = workdir() / "blank_semantic";
  fs::copy(box_orbit_data(), data, fs::copy_options::recursive);
  const CameraIntrinsics K = read_intrinsics((data / "intrinsics.txt").string());
  for (const auto& entry : fs::directory_iterator(data / "mask"))
    write_pbm(BoolGrid::Constant(K.height, K.width, false), entry.path().string());
  const fs::path ms = workdir() / "blank_ms.txt", ss = workdir() / "blank_ss.txt";
  REQUIRE(cli({"localize", "--data", data.string(), "--masks", "ms", "--out", ms.string()}).code == 0);
  REQUIRE(cli({"localize", "--data", data.string(), "--masks", "ms+ss", "--out", ss.string()}).code == 0);
  CHECK(read_file(ms.string()) == read_file(ss.string()));
}

TEST_CASE("train, render and eval-nvs chain through files") {
  const fs::path data = box_orbit_data();
  const fs::path ckpt = workdir() / "field.ckpt", log = workdir() / "train_log.csv";
  const Run tr = cli({"train", "--data", data.string(), "--traj", (data / "poses_gt.txt").string(), "--out",
                      ckpt.string(), "--iterations", "5", "--log", log.string()});
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(ckpt));
  CHECK(tr.out.find("psnr_holdout") != std::string::npos);

  const fs::path renders = workdir() / "renders";
  fs::create_directories(renders);
  const Trajectory gt = read_tum_trajectory((data / "poses_gt.txt").string());
  const auto& p = gt[2].pose;
  std::ostringstream pose;
  pose.precision(17);
  pose << p.translation().x() << " " << p.translation().y() << " " << p.translation().z() << " "
       << p.rotation().x() << " " << p.rotation().y() << " " << p.rotation().z() << " " << p.rotation().w();
  const Run rd = cli({"render", "--ckpt", ckpt.string(), "--pose", pose.str(), "--time", "0.105263", "--intrinsics",
                      (data / "intrinsics.txt").string(), "--samples", "16", "--out", (renders / "0002.ppm").string()});
  REQUIRE(rd.code == 0);
  CHECK(read_ppm((renders / "0002.ppm").string()).width() == 64);
  CHECK(cli({"render", "--ckpt", ckpt.string(), "--pose", "0 0 0 0 0 0", "--time", "0", "--intrinsics",
             (data / "intrinsics.txt").string(), "--out", (renders / "bad.ppm").string()})
            .code == 2);

  const Run ev = cli({"eval-nvs", "--renders", renders.string(), "--gt", data.string(), "--report", "csv"});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("0002,") != std::string::npos);

  const fs::path self = workdir() / "self";
  fs::create_directories(self);
  fs::copy_file(data / "rgb" / "0002.ppm", self / "0002.ppm");
  const Run same = cli({"eval-nvs", "--renders", self.string(), "--gt", data.string()});
  CHECK(same.code == 0);
  CHECK(same.out.find("99.0") != std::string::npos);
}

TEST_CASE("pipeline runs end to end") {
  const fs::path out = workdir() / "pipeline";
  const Run r = cli({"pipeline", "--out", out.string(), "--iterations", "10", "--report", "csv"});
  REQUIRE(r.code == 0);
  for (const char* f : {"trajectory.txt", "diagnostics.txt", "field.ckpt", "train_log.csv", "report.txt"})
    CHECK(fs::exists(out / f));
  for (int f : {2, 7, 12, 17}) CHECK(fs::exists(out / "renders" / frame_name(f, ".ppm")));
  const std::string report = read_file((out / "report.txt").string());
  CHECK(report.find("data,") != std::string::npos);
  CHECK(report.find("Mean,") != std::string::npos);
  CHECK(r.out.find(report) != std::string::npos);
}
