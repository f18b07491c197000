#include "dynrecon/config.hpp"

#include <set>

#include "dynrecon/io.hpp"

namespace dynrecon {

namespace {

using json = nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ParseError("config: section '" + name_ + "' must be an object");
  }

  template <typename T>
  Section& get(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) {
      try {
        out = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ParseError("config: " + name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ParseError("config: unknown key '" + name_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

void FieldSettings::validate() const {
  for (int r : resolution)
    if (r < 2) throw InvalidArgument("config: field resolutions must be >= 2");
  for (int r : ranks)
    if (r < 1) throw InvalidArgument("config: field ranks must be >= 1");
  if (feature_dim < 2) throw InvalidArgument("config: field feature_dim must be >= 2");
  if (!(bounds_margin >= 0.0)) throw InvalidArgument("config: bounds_margin must be >= 0");
}

TrainConfig RunConfig::default_train_config() {
  TrainConfig t;
  t.upsample_schedule = {{1000, {48, 48, 48, 24}}, {2000, {64, 64, 64, 32}}};
  return t;
}

void RunConfig::validate() const {
  ba.validate();
  keyframes.validate();
  mask.validate();
  field.validate();
  train.validate();
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("config: top level must be an object");
  RunConfig c;
  std::set<std::string> sections{"ba", "mask", "field", "train", "paths"};
  for (const auto& [key, value] : j.items())
    if (!sections.count(key)) throw ParseError("config: unknown section '" + key + "'");

  if (j.contains("ba")) {
    Section s(j.at("ba"), "ba");
    s.get("max_iterations", c.ba.max_iterations)
        .get("damping_init", c.ba.damping_init)
        .get("damping_scale", c.ba.damping_scale)
        .get("damping_decrease", c.ba.damping_decrease)
        .get("convergence_tol", c.ba.convergence_tol)
        .get("depth_prior_weight", c.ba.depth_prior_weight)
        .get("max_damping_escalations", c.ba.max_damping_escalations)
        .get("min_valid_pixels", c.ba.min_valid_pixels)
        .get("min_inverse_depth", c.ba.min_inverse_depth)
        .get("motion_only_iterations", c.ba.motion_only_iterations)
        .get("keyframe_flow_px", c.keyframes.keyframe_flow_px)
        .get("temporal_radius", c.keyframes.temporal_radius)
        .get("overlap_flow_px", c.keyframes.overlap_flow_px)
        .finish();
  }
  if (j.contains("mask")) {
    Section s(j.at("mask"), "mask");
    s.get("threshold_init", c.mask.threshold_init)
        .get("threshold_final", c.mask.threshold_final)
        .get("refinement_passes", c.mask.refinement_passes)
        .get("max_dynamic_fraction", c.mask.max_dynamic_fraction)
        .get("residual_floor_px", c.mask.residual_floor_px)
        .finish();
  }
  if (j.contains("field")) {
    Section s(j.at("field"), "field");
    s.get("resolution", c.field.resolution)
        .get("ranks", c.field.ranks)
        .get("feature_dim", c.field.feature_dim)
        .get("bounds_margin", c.field.bounds_margin)
        .get("seed", c.field.seed)
        .finish();
  }
  if (j.contains("train")) {
    Section s(j.at("train"), "train");
    std::vector<json> schedule;
    bool has_schedule = j.at("train").contains("upsample_schedule");
    s.get("lambda_tv", c.train.lambda_tv)
        .get("lambda_ts", c.train.lambda_ts)
        .get("w_rgb_tv", c.train.w_rgb_tv)
        .get("batch_size", c.train.batch_size)
        .get("samples_per_ray", c.train.samples_per_ray)
        .get("iterations", c.train.iterations)
        .get("upsample_schedule", schedule)
        .get("lr_grid", c.train.lr_grid)
        .get("lr_decoder", c.train.lr_decoder)
        .get("beta1", c.train.beta1)
        .get("beta2", c.train.beta2)
        .get("adam_eps", c.train.adam_eps)
        .get("lambda_tv_decay", c.train.lambda_tv_decay)
        .get("eval_every", c.train.eval_every)
        .get("eval_max_views", c.train.eval_max_views)
        .get("seed", c.train.seed)
        .finish();
    if (has_schedule) {
      c.train.upsample_schedule.clear();
      for (const json& e : schedule) {
        Section ev(e, "train.upsample_schedule[]");
        int iteration = -1;
        std::array<int, 4> res{};
        ev.get("iteration", iteration).get("resolution", res).finish();
        if (!e.contains("iteration") || !e.contains("resolution"))
          throw ParseError("config: upsample events need 'iteration' and 'resolution'");
        c.train.upsample_schedule.emplace_back(iteration, res);
      }
    }
  }
  if (j.contains("paths")) {
    Section s(j.at("paths"), "paths");
    s.get("data", c.paths.data).get("out", c.paths.out).finish();
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json schedule = json::array();
  for (const auto& [it, res] : c.train.upsample_schedule) schedule.push_back({{"iteration", it}, {"resolution", res}});
  return {
      {"ba",
       {{"max_iterations", c.ba.max_iterations},
        {"damping_init", c.ba.damping_init},
        {"damping_scale", c.ba.damping_scale},
        {"damping_decrease", c.ba.damping_decrease},
        {"convergence_tol", c.ba.convergence_tol},
        {"depth_prior_weight", c.ba.depth_prior_weight},
        {"max_damping_escalations", c.ba.max_damping_escalations},
        {"min_valid_pixels", c.ba.min_valid_pixels},
        {"min_inverse_depth", c.ba.min_inverse_depth},
        {"motion_only_iterations", c.ba.motion_only_iterations},
        {"keyframe_flow_px", c.keyframes.keyframe_flow_px},
        {"temporal_radius", c.keyframes.temporal_radius},
        {"overlap_flow_px", c.keyframes.overlap_flow_px}}},
      {"mask",
       {{"threshold_init", c.mask.threshold_init},
        {"threshold_final", c.mask.threshold_final},
        {"refinement_passes", c.mask.refinement_passes},
        {"max_dynamic_fraction", c.mask.max_dynamic_fraction},
        {"residual_floor_px", c.mask.residual_floor_px}}},
      {"field",
       {{"resolution", c.field.resolution},
        {"ranks", c.field.ranks},
        {"feature_dim", c.field.feature_dim},
        {"bounds_margin", c.field.bounds_margin},
        {"seed", c.field.seed}}},
      {"train",
       {{"lambda_tv", c.train.lambda_tv},
        {"lambda_ts", c.train.lambda_ts},
        {"w_rgb_tv", c.train.w_rgb_tv},
        {"batch_size", c.train.batch_size},
        {"samples_per_ray", c.train.samples_per_ray},
        {"iterations", c.train.iterations},
        {"upsample_schedule", schedule},
        {"lr_grid", c.train.lr_grid},
        {"lr_decoder", c.train.lr_decoder},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps},
        {"lambda_tv_decay", c.train.lambda_tv_decay},
        {"eval_every", c.train.eval_every},
        {"eval_max_views", c.train.eval_max_views},
        {"seed", c.train.seed}}},
      {"paths", {{"data", c.paths.data}, {"out", c.paths.out}}},
  };
}

RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace dynrecon
