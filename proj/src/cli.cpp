#include "dynrecon/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "dynrecon/io.hpp"
#include "dynrecon/metrics.hpp"
#include "dynrecon/pipeline.hpp"

namespace dynrecon {
namespace {

namespace fs = std::filesystem;

constexpr const char* kBuiltinScene = "box-orbit";

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

SceneSpec scene_for(const std::string& spec) {
  if (spec == kBuiltinScene) return box_orbit_scene();
  return load_scene(spec);
}

RunConfig config_for(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

ReportFormat parse_report(const std::string& text) {
  if (text == "table") return ReportFormat::Table;
  if (text == "csv") return ReportFormat::Csv;
  throw InvalidArgument("unknown report format '" + text + "' (expected csv or table)");
}

bool parse_alignment(const std::string& text) {
  if (text == "sim3") return true;
  if (text == "se3") return false;
  throw InvalidArgument("unknown alignment '" + text + "' (expected sim3 or se3)");
}

PoseSE3 parse_pose(const std::string& text) {
  std::istringstream in(text);
  double v[7];
  for (double& x : v)
    if (!(in >> x)) throw InvalidArgument("--pose expects 'tx ty tz qx qy qz qw', got '" + text + "'");
  std::string extra;
  if (in >> extra) throw InvalidArgument("--pose has trailing text '" + extra + "'");
  const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (!(q.norm() > 1e-12)) throw InvalidArgument("--pose quaternion is zero");
  return PoseSE3(q, Eigen::Vector3d(v[0], v[1], v[2]));
}

std::vector<GroundTruthFrame> run_synth(const std::string& spec_arg, const std::string& out_dir, std::uint64_t seed,
                                        std::ostream& out) {
  SceneSpec spec = scene_for(spec_arg);
  spec.flow_noise.seed = seed;
  auto frames = generate(spec, seed);
  write_dataset(spec, frames, out_dir);
  double coverage = 0.0;
  for (const auto& f : frames) coverage += f.motion_mask.coverage();
  out << "synth: " << frames.size() << " frames of '" << spec.name << "' (" << spec.K.width << "x" << spec.K.height
      << ", mean dynamic fraction " << fixed6(coverage / static_cast<double>(frames.size())) << ") -> " << out_dir
      << "\n";
  return frames;
}

struct LocalizeOutput {
  Trajectory trajectory;
  std::optional<double> ate;
};

LocalizeOutput run_localize(const Dataset& data, MaskMode mode, const RunConfig& config, const std::string& traj_out,
                            const std::string& diagnostics_out, const std::string& mask_dir, std::ostream& out,
                            std::ostream& err) {
  const LocalizeResult result = localize(data, mode, config);
  for (const auto& w : result.solve.warnings) err << "warning: " << w << "\n";
  if (!result.solve.ok()) throw SolverError("localize: " + *result.solve.error);

  write_tum_trajectory(result.solve.trajectory, traj_out);
  if (!diagnostics_out.empty()) write_file(diagnostics_out, format_diagnostics(result.solve));
  if (!mask_dir.empty())
    for (std::size_t f = 0; f < result.masks.size(); ++f)
      write_pbm(result.masks[f], (fs::path(mask_dir) / frame_name(static_cast<int>(f), ".pbm")).string());

  const auto discarded = std::count(result.mask_discarded.begin(), result.mask_discarded.end(), true);
  out << "localize: masks " << to_string(mode) << ", " << result.solve.keyframe_ids.size() << " keyframes, "
      << result.solve.kept_edges.size() << " edges, " << discarded << " masks discarded -> " << traj_out << "\n";

  LocalizeOutput lo{result.solve.trajectory, std::nullopt};
  if (data.ground_truth) {
    lo.ate = ate_rms(lo.trajectory, *data.ground_truth, true);
    out << "ate_rms_m " << fixed6(*lo.ate) << "\n";
  }
  return lo;
}

TrainResult run_train(const Dataset& data, const Trajectory& traj, const RunConfig& config, const std::string& ckpt,
                      const std::string& log_path, std::ostream& out) {
  const TrainResult result = train_field(data, traj, config, [&](const TrainLogEntry& e) {
    if (e.psnr_holdout)
      out << "iter " << e.iteration << " loss " << fixed6(e.loss.total) << " psnr_holdout " << fixed6(*e.psnr_holdout)
          << "\n";
  });
  save_checkpoint(result.field, ckpt);
  if (!log_path.empty()) write_file(log_path, format_train_log(result.log));
  out << "train: " << config.train.iterations << " iterations -> " << ckpt << "\n";
  if (result.final_psnr) out << "psnr_holdout " << fixed6(*result.final_psnr) << "\n";
  if (result.final_ssim) out << "ssim_holdout " << fixed6(*result.final_ssim) << "\n";
  return result;
}

std::vector<ReportRow> compare_images(const std::string& renders, const std::string& gt) {
  if (!fs::is_directory(renders)) throw InvalidArgument("eval-nvs: '" + renders + "' is not a directory");
  fs::path gt_dir(gt);
  if (fs::is_directory(gt_dir / "rgb")) gt_dir /= "rgb";
  if (!fs::is_directory(gt_dir)) throw InvalidArgument("eval-nvs: '" + gt + "' is not a directory");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(renders))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInput("eval-nvs: no .ppm renders in '" + renders + "'");

  std::vector<ReportRow> rows;
  for (const auto& file : files) {
    const fs::path ref = gt_dir / file.filename();
    if (!fs::exists(ref)) throw InvalidArgument("eval-nvs: no ground truth for " + file.filename().string());
    const ImageRGB a = read_ppm(file.string());
    const ImageRGB b = read_ppm(ref.string());
    ReportRow row;
    row.name = file.stem().string();
    row.psnr = psnr(a, b);
    row.ssim = ssim(a, b);
    rows.push_back(row);
  }
  return rows;
}

std::string render_holdout(const Dataset& data, const Trajectory& traj, const HexPlaneField& field,
                           int samples_per_ray, const std::string& dir) {
  for (int f = 0; f < data.size(); ++f) {
    if (!is_holdout(f)) continue;
    const double t = data.times[static_cast<std::size_t>(f)];
    const ImageRGB img = render_image(field, data.K, pose_at(traj, t), normalized_time(data, t), samples_per_ray);
    write_ppm(img, (fs::path(dir) / frame_name(f, ".ppm")).string());
  }
  return dir;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic-scene localization and space-time radiance field toolkit", "dynrecon"};
  app.require_subcommand(1);

  std::string spec = kBuiltinScene, data_dir, out_path, config_path, masks = "ms", traj_path, ckpt, pose_text,
              intrinsics, est, ref, align = "sim3", report, renders, gt, diagnostics, mask_dir, log_path;
  std::uint64_t seed = 7;
  double time = 0.0;
  int samples = 64;
  std::optional<int> iterations;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", spec, "Scene JSON file or 'box-orbit'")->capture_default_str();
  synth->add_option("--out", out_path, "Output dataset directory")->required();
  synth->add_option("--seed", seed, "Texture and flow-noise seed")->capture_default_str();

  auto* loc = app.add_subcommand("localize", "Estimate camera poses with masked dense bundle adjustment");
  loc->add_option("--data", data_dir, "Dataset directory")->required();
  loc->add_option("--masks", masks, "none | ms | ms+ss")->capture_default_str();
  loc->add_option("--out", out_path, "Output TUM trajectory")->required();
  loc->add_option("--config", config_path, "JSON run configuration");
  loc->add_option("--diagnostics", diagnostics, "Write per-iteration energies and edge pixel counts");
  loc->add_option("--mask-out", mask_dir, "Directory for the per-frame masks (PBM)");

  auto* tr = app.add_subcommand("train", "Fit the space-time field to a dataset and trajectory");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--traj", traj_path, "TUM trajectory (camera-to-world)")->required();
  tr->add_option("--config", config_path, "JSON run configuration");
  tr->add_option("--out", out_path, "Output checkpoint")->required();
  tr->add_option("--iterations", iterations, "Override train.iterations");
  tr->add_option("--log", log_path, "Write the per-iteration loss log (CSV)");

  auto* rd = app.add_subcommand("render", "Render a view from a checkpoint");
  rd->add_option("--ckpt", ckpt, "Field checkpoint")->required();
  rd->add_option("--pose", pose_text, "Camera-to-world pose 'tx ty tz qx qy qz qw'")->required();
  rd->add_option("--time", time, "Normalized time in [0, 1]")->required();
  rd->add_option("--intrinsics", intrinsics, "Intrinsics file 'fx fy cx cy W H'")->required();
  rd->add_option("--samples", samples, "Samples per ray")->capture_default_str();
  rd->add_option("--out", out_path, "Output image (PPM)")->required();

  auto* et = app.add_subcommand("eval-traj", "Absolute trajectory error after alignment");
  et->add_option("--est", est, "Estimated TUM trajectory")->required();
  et->add_option("--ref", ref, "Reference TUM trajectory")->required();
  et->add_option("--align", align, "sim3 | se3")->capture_default_str();
  et->add_option("--report", report, "Also print a csv | table report");

  auto* en = app.add_subcommand("eval-nvs", "PSNR and SSIM of rendered images against ground truth");
  en->add_option("--renders", renders, "Directory of rendered PPM images")->required();
  en->add_option("--gt", gt, "Directory (or dataset) with same-named ground-truth images")->required();
  en->add_option("--report", report, "csv | table");

  auto* pl = app.add_subcommand("pipeline", "synth, localize, train, render and evaluate in one run");
  pl->add_option("--spec", spec, "Scene JSON file or 'box-orbit'")->capture_default_str();
  pl->add_option("--data", data_dir, "Use an existing dataset instead of synthesizing one");
  pl->add_option("--out", out_path, "Output directory")->required();
  pl->add_option("--seed", seed, "Texture and flow-noise seed")->capture_default_str();
  pl->add_option("--masks", masks, "none | ms | ms+ss")->capture_default_str();
  pl->add_option("--config", config_path, "JSON run configuration");
  pl->add_option("--iterations", iterations, "Override train.iterations");
  pl->add_option("--report", report, "csv | table");

  std::vector<const char*> argv{"dynrecon"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInvalid;
  }

  if (synth->parsed()) {
    run_synth(spec, out_path, seed, out);
  } else if (loc->parsed()) {
    const RunConfig config = config_for(config_path);
    const MaskMode mode = parse_mask_mode(masks);
    run_localize(load_dataset(data_dir), mode, config, out_path, diagnostics, mask_dir, out, err);
  } else if (tr->parsed()) {
    RunConfig config = config_for(config_path);
    if (iterations) config.train.iterations = *iterations;
    run_train(load_dataset(data_dir), read_tum_trajectory(traj_path), config, out_path, log_path, out);
  } else if (rd->parsed()) {
    const PoseSE3 pose = parse_pose(pose_text);
    const CameraIntrinsics K = read_intrinsics(intrinsics);
    const HexPlaneField field = load_checkpoint(ckpt);
    if (samples < 1) throw InvalidArgument("--samples must be positive");
    write_ppm(render_image(field, K, pose, time, samples), out_path);
    out << "render: " << K.width << "x" << K.height << " -> " << out_path << "\n";
  } else if (et->parsed()) {
    const bool with_scale = parse_alignment(align);
    std::optional<ReportFormat> format;
    if (!report.empty()) format = parse_report(report);
    std::vector<std::string> warnings;
    const Trajectory e = read_tum_trajectory(est, &warnings);
    const Trajectory r = read_tum_trajectory(ref, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    const double ate = ate_rms(e, r, with_scale);
    out << "ate_rms_m " << fixed6(ate) << "\n";
    if (format) out << format_report({ReportRow{fs::path(est).stem().string(), ate}}, *format, align);
  } else if (en->parsed()) {
    const ReportFormat format = parse_report(report.empty() ? "table" : report);
    out << format_report(compare_images(renders, gt), format, "none");
  } else if (pl->parsed()) {
    RunConfig config = config_for(config_path);
    if (iterations) config.train.iterations = *iterations;
    config.validate();
    const MaskMode mode = parse_mask_mode(masks);
    const ReportFormat format = parse_report(report.empty() ? "table" : report);
    const fs::path root(out_path);
    std::string dataset_dir = data_dir;
    if (dataset_dir.empty()) {
      dataset_dir = (root / "data").string();
      run_synth(spec, dataset_dir, seed, out);
    }
    const Dataset data = load_dataset(dataset_dir);
    const LocalizeOutput lo = run_localize(data, mode, config, (root / "trajectory.txt").string(),
                                           (root / "diagnostics.txt").string(), "", out, err);
    const TrainResult tr_result =
        run_train(data, lo.trajectory, config, (root / "field.ckpt").string(), (root / "train_log.csv").string(), out);
    const std::string render_dir = (root / "renders").string();
    fs::create_directories(render_dir);
    render_holdout(data, lo.trajectory, tr_result.field, config.train.samples_per_ray, render_dir);
    std::vector<ReportRow> rows = compare_images(render_dir, dataset_dir);
    ReportRow summary;
    summary.name = fs::path(dataset_dir).filename().string();
    if (lo.ate) summary.ate = *lo.ate;
    if (tr_result.final_psnr) summary.psnr = *tr_result.final_psnr;
    if (tr_result.final_ssim) summary.ssim = *tr_result.final_ssim;
    rows.insert(rows.begin(), summary);
    const std::string text = format_report(rows, format, "sim3");
    write_file((root / "report.txt").string(), text);
    out << text;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SolverStalled& e) {
    err << "solver error: " << e.what() << "\n" << e.diagnostics() << "\n";
    return kExitSolver;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace dynrecon
