#include "dynrecon/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dynrecon/metrics.hpp"

namespace dynrecon {

namespace {

constexpr double kMinNear = 1e-3;

void check_composite_inputs(std::span<const double> densities, std::span<const Eigen::Vector3d> colors,
                            std::span<const double> deltas) {
  if (densities.size() != colors.size() || densities.size() != deltas.size())
    throw InvalidArgument("composite: per-sample inputs differ in length");
  for (std::size_t k = 0; k < densities.size(); ++k) {
    if (!std::isfinite(densities[k]) || !std::isfinite(deltas[k]) || !colors[k].allFinite())
      throw InvalidArgument("composite: non-finite sample");
    if (densities[k] < 0.0) throw InvalidArgument("composite: negative density");
    if (!(deltas[k] > 0.0)) throw InvalidArgument("composite: segment lengths must be positive");
  }
}

double tv_channel(const Plane& plane, int ch, double second_weight, double batch_size, double scale, Plane* grad) {
  const double n = static_cast<double>(plane.rows - 1) * plane.cols;
  const double m = static_cast<double>(plane.rows) * (plane.cols - 1);
  const double c1 = 2.0 / (batch_size * n);
  const double c2 = 2.0 * second_weight / (batch_size * m);
  double first = 0.0, second = 0.0;
  for (int a = 0; a < plane.rows; ++a)
    for (int b = 0; b < plane.cols; ++b) {
      const double x = plane.at(a, b, ch);
      if (a + 1 < plane.rows) {
        const double d = x - plane.at(a + 1, b, ch);
        first += d * d;
        if (grad) {
          const double g = scale * c1 * 2.0 * d;
          grad->at(a, b, ch) += g;
          grad->at(a + 1, b, ch) -= g;
        }
      }
      if (b + 1 < plane.cols) {
        const double d = x - plane.at(a, b + 1, ch);
        second += d * d;
        if (grad) {
          const double g = scale * c2 * 2.0 * d;
          grad->at(a, b, ch) += g;
          grad->at(a, b + 1, ch) -= g;
        }
      }
    }
  return c1 * first + c2 * second;
}

Plane grid_as_plane(const Grid& g) {
  Plane p(static_cast<int>(g.rows()), static_cast<int>(g.cols()), 1);
  for (int a = 0; a < p.rows; ++a)
    for (int b = 0; b < p.cols; ++b) p.at(a, b, 0) = g(a, b);
  return p;
}

// All samples of a ray batch laid out column-wise for the batched decoder.
struct SampleBatch {
  std::vector<std::size_t> offset;  // ray r owns columns [offset[r], offset[r + 1])
  std::vector<NormalizedCoords> coords;
  std::vector<double> t, delta;
  Eigen::MatrixXd features, dirs;
};

SampleBatch gather_samples(const HexPlaneField& field, const std::vector<Ray>& rays, int samples_per_ray,
                           std::mt19937_64* rng) {
  SampleBatch batch;
  batch.offset.reserve(rays.size() + 1);
  batch.offset.push_back(0);
  std::vector<const Ray*> owner;
  std::vector<Ray> clipped(rays);
  for (auto& ray : clipped) {
    if (clip_to_bounds(ray, field.bounds)) {
      const RaySamples s = sample_ray(ray, samples_per_ray, rng);
      for (std::size_t k = 0; k < s.t.size(); ++k) {
        batch.t.push_back(s.t[k]);
        batch.delta.push_back(s.delta[k]);
        owner.push_back(&ray);
      }
    }
    batch.offset.push_back(batch.t.size());
  }
  const auto S = static_cast<Eigen::Index>(batch.t.size());
  batch.features.resize(field.feature_dim, S);
  batch.dirs.resize(3, S);
  batch.coords.resize(batch.t.size());
  for (Eigen::Index s = 0; s < S; ++s) {
    const Ray& ray = *owner[static_cast<std::size_t>(s)];
    const Eigen::Vector3d x = ray.origin + batch.t[static_cast<std::size_t>(s)] * ray.direction;
    batch.coords[static_cast<std::size_t>(s)] = normalize(field.bounds, x, ray.time);
    query_feature_into(field, batch.coords[static_cast<std::size_t>(s)], batch.features.col(s).data());
    batch.dirs.col(s) = ray.direction;
  }
  return batch;
}

std::vector<Eigen::Vector3d> columns(const Eigen::MatrixXd& m, std::size_t begin, std::size_t end) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(end - begin);
  for (std::size_t s = begin; s < end; ++s) out.emplace_back(m.col(static_cast<Eigen::Index>(s)));
  return out;
}

}  // namespace

std::vector<Ray> generate_rays(const CameraIntrinsics& K, const PoseSE3& camera_to_world,
                               const std::vector<Eigen::Vector2d>& pixels, double time, double near, double far) {
  K.validate();
  if (!(near < far)) throw InvalidArgument("generate_rays: near must be below far");
  const Eigen::Matrix3d R = camera_to_world.rotationMatrix();
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (!(p.x() >= -0.5 && p.x() <= K.width - 0.5 && p.y() >= -0.5 && p.y() <= K.height - 0.5))
      throw InvalidArgument("generate_rays: pixel outside the image");
    const Eigen::Vector3d dir_cam((p.x() - K.cx) / K.fx, (p.y() - K.cy) / K.fy, 1.0);
    rays.push_back({camera_to_world.translation(), (R * dir_cam).normalized(), time, near, far});
  }
  return rays;
}

bool clip_to_bounds(Ray& ray, const FieldBounds& bounds) {
  double lo = ray.near, hi = ray.far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < bounds.min[a] || o > bounds.max[a]) return false;
      continue;
    }
    double t0 = (bounds.min[a] - o) / d, t1 = (bounds.max[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  lo = std::max(lo, kMinNear);
  if (!(lo < hi)) return false;
  ray.near = lo;
  ray.far = hi;
  return true;
}

RenderOutput composite(std::span<const double> densities, std::span<const Eigen::Vector3d> colors,
                       std::span<const double> deltas, std::span<const double> t_values) {
  check_composite_inputs(densities, colors, deltas);
  if (!t_values.empty()) {
    if (t_values.size() != densities.size()) throw InvalidArgument("composite: t_values length differs");
    for (std::size_t k = 1; k < t_values.size(); ++k)
      if (!(t_values[k] >= t_values[k - 1])) throw InvalidArgument("composite: samples must be sorted by depth");
  }
  RenderOutput out;
  out.sample_weights.resize(densities.size());
  double T = 1.0, depth = 0.0, t_acc = 0.0;
  for (std::size_t k = 0; k < densities.size(); ++k) {
    const double survive = std::exp(-densities[k] * deltas[k]);
    const double w = T * (1.0 - survive);
    out.sample_weights[k] = w;
    out.rgb += w * colors[k];
    const double t = t_values.empty() ? t_acc + 0.5 * deltas[k] : t_values[k];
    t_acc += deltas[k];
    depth += w * t;
    T *= survive;
  }
  out.expected_depth = depth;
  out.transmittance_final = T;
  return out;
}

void composite_backward(std::span<const double> densities, std::span<const Eigen::Vector3d> colors,
                        std::span<const double> deltas, const Eigen::Vector3d& d_rgb, std::span<double> d_densities,
                        std::span<Eigen::Vector3d> d_colors) {
  check_composite_inputs(densities, colors, deltas);
  const std::size_t n = densities.size();
  if (d_densities.size() != n || d_colors.size() != n) throw InvalidArgument("composite_backward: output size");
  std::vector<double> T(n + 1), w(n);
  T[0] = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double survive = std::exp(-densities[k] * deltas[k]);
    w[k] = T[k] * (1.0 - survive);
    T[k + 1] = T[k] * survive;
  }
  // d rgb / d sigma_k = delta_k (T_{k+1} c_k - sum_{m>k} w_m c_m)
  double behind = 0.0;  // g . sum_{m>k} w_m c_m
  for (std::size_t k = n; k-- > 0;) {
    const double gc = d_rgb.dot(colors[k]);
    d_densities[k] = deltas[k] * (T[k + 1] * gc - behind);
    d_colors[k] = w[k] * d_rgb;
    behind += w[k] * gc;
  }
}

double loss_rgb(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target) {
  if (rendered.empty()) throw InvalidArgument("loss_rgb: empty batch");
  if (rendered.size() != target.size()) throw InvalidArgument("loss_rgb: batch sizes differ");
  double sum = 0.0;
  for (std::size_t r = 0; r < rendered.size(); ++r) sum += (rendered[r] - target[r]).squaredNorm();
  return sum / static_cast<double>(rendered.size());
}

double loss_rgb(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target,
                std::span<Eigen::Vector3d> d_rendered) {
  const double loss = loss_rgb(rendered, target);
  if (d_rendered.size() != rendered.size()) throw InvalidArgument("loss_rgb: gradient size differs");
  const double scale = 2.0 / static_cast<double>(rendered.size());
  for (std::size_t r = 0; r < rendered.size(); ++r) d_rendered[r] = scale * (rendered[r] - target[r]);
  return loss;
}

double plane_tv(const Plane& plane, const std::function<bool(int)>& channel_selected, double second_weight,
                double batch_size, double scale, Plane* grad) {
  if (plane.rows < 2 || plane.cols < 2) throw InvalidArgument("tv: plane must be at least 2x2");
  if (!(batch_size > 0.0)) throw InvalidArgument("tv: batch size must be positive");
  if (grad && (grad->rows != plane.rows || grad->cols != plane.cols || grad->channels != plane.channels))
    throw InvalidArgument("tv: gradient plane shape differs");
  double total = 0.0;
  for (int ch = 0; ch < plane.channels; ++ch)
    if (!channel_selected || channel_selected(ch)) total += tv_channel(plane, ch, second_weight, batch_size, scale, grad);
  return total;
}

double loss_tv_spatial(const Grid& plane, double batch_size) {
  if (plane.rows() < 2 || plane.cols() < 2) throw InvalidArgument("tv: plane must be at least 2x2");
  return plane_tv(grid_as_plane(plane), {}, 1.0, batch_size);
}

double loss_tv_spatiotemporal(const Grid& plane, double lambda_ts, double batch_size) {
  if (plane.rows() < 2 || plane.cols() < 2) throw InvalidArgument("tv: plane must be at least 2x2");
  return plane_tv(grid_as_plane(plane), {}, lambda_ts, batch_size);
}

void TrainConfig::validate() const {
  if (!(lambda_tv >= 0.0) || !(lambda_ts >= 0.0) || !(w_rgb_tv >= 0.0))
    throw InvalidArgument("train config: loss weights must be non-negative");
  if (batch_size < 1 || samples_per_ray < 1 || iterations < 0)
    throw InvalidArgument("train config: batch_size and samples_per_ray must be positive, iterations >= 0");
  if (!(lr_grid > 0.0) || !(lr_decoder > 0.0)) throw InvalidArgument("train config: step sizes must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
    throw InvalidArgument("train config: invalid optimizer moments");
  if (!(lambda_tv_decay > 0.0)) throw InvalidArgument("train config: lambda_tv_decay must be positive");
  if (eval_every < 1 || eval_max_views < 0) throw InvalidArgument("train config: invalid evaluation cadence");
  for (std::size_t k = 0; k < upsample_schedule.size(); ++k) {
    if (upsample_schedule[k].first < 0) throw InvalidArgument("train config: negative upsample iteration");
    if (k > 0 && upsample_schedule[k].first <= upsample_schedule[k - 1].first)
      throw InvalidArgument("train config: upsample iterations must increase");
    for (int r : upsample_schedule[k].second)
      if (r < 2) throw InvalidArgument("train config: upsample resolutions must be >= 2");
  }
}

LossBreakdown tv_losses(const HexPlaneField& field, double lambda_tv, double lambda_ts, double w_rgb_tv,
                        double batch_size, FieldGradients* grads) {
  const int F = field.feature_dim;
  const int fd = density_channels(F);
  const auto is_density = [F, fd](int ch) { return ch % F < fd; };
  const auto is_color = [F, fd](int ch) { return ch % F >= fd; };
  LossBreakdown out;
  for (int p = 0; p < 3; ++p) {
    Plane* gs = grads ? &grads->spatial[p] : nullptr;
    Plane* gp = grads ? &grads->partner[p] : nullptr;
    out.tv_sigma += plane_tv(field.spatial[p], is_density, 1.0, batch_size, lambda_tv, gs);
    out.tv_sigma += plane_tv(field.partner[p], is_density, lambda_ts, batch_size, lambda_tv, gp);
    out.tv_rgb += plane_tv(field.spatial[p], is_color, 1.0, batch_size, lambda_tv * w_rgb_tv, gs);
    out.tv_rgb += plane_tv(field.partner[p], is_color, lambda_ts, batch_size, lambda_tv * w_rgb_tv, gp);
  }
  out.total = lambda_tv * (out.tv_sigma + w_rgb_tv * out.tv_rgb);
  return out;
}

LossBreakdown total_loss(std::span<const Eigen::Vector3d> rendered, std::span<const Eigen::Vector3d> target,
                         const HexPlaneField& field, double lambda_tv, double lambda_ts, double w_rgb_tv) {
  const double rgb = loss_rgb(rendered, target);
  LossBreakdown out = tv_losses(field, lambda_tv, lambda_ts, w_rgb_tv, static_cast<double>(rendered.size()));
  out.rgb = rgb;
  out.total = rgb + lambda_tv * (out.tv_sigma + w_rgb_tv * out.tv_rgb);
  return out;
}

RaySamples sample_ray(const Ray& ray, int count, std::mt19937_64* rng) {
  if (count < 1) throw InvalidArgument("sample_ray: need at least one sample");
  if (!(ray.near < ray.far)) throw InvalidArgument("sample_ray: empty interval");
  RaySamples s;
  s.t.resize(static_cast<std::size_t>(count));
  s.delta.assign(static_cast<std::size_t>(count), (ray.far - ray.near) / count);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  for (int k = 0; k < count; ++k) {
    const double u = rng ? jitter(*rng) : 0.5;
    s.t[static_cast<std::size_t>(k)] = ray.near + (k + u) * s.delta[0];
  }
  return s;
}

std::vector<RenderOutput> render_rays(const HexPlaneField& field, const std::vector<Ray>& rays, int samples_per_ray,
                                      std::mt19937_64* rng) {
  SampleBatch batch = gather_samples(field, rays, samples_per_ray, rng);
  DecoderCache cache;
  decode_batch(field.decoder, batch.features, batch.dirs, cache);
  std::vector<RenderOutput> out(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t b = batch.offset[r], e = batch.offset[r + 1];
    if (b == e) continue;  // missed the volume: black, fully transmissive
    const auto colors = columns(cache.rgb, b, e);
    out[r] = composite(std::span<const double>(cache.density.data() + b, e - b), colors,
                       std::span<const double>(batch.delta.data() + b, e - b),
                       std::span<const double>(batch.t.data() + b, e - b));
  }
  return out;
}

RenderBackwardResult render_and_backprop(const HexPlaneField& field, const std::vector<Ray>& rays,
                                         std::span<const Eigen::Vector3d> target, int samples_per_ray,
                                         std::mt19937_64* rng, FieldGradients& grads) {
  if (target.size() != rays.size()) throw InvalidArgument("render: target count differs from ray count");
  SampleBatch batch = gather_samples(field, rays, samples_per_ray, rng);
  DecoderCache cache;
  decode_batch(field.decoder, batch.features, batch.dirs, cache);

  RenderBackwardResult out;
  out.rgb.assign(rays.size(), Eigen::Vector3d::Zero());
  std::vector<std::vector<Eigen::Vector3d>> colors(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t b = batch.offset[r], e = batch.offset[r + 1];
    if (b == e) continue;
    colors[r] = columns(cache.rgb, b, e);
    out.rgb[r] = composite(std::span<const double>(cache.density.data() + b, e - b), colors[r],
                           std::span<const double>(batch.delta.data() + b, e - b))
                     .rgb;
  }
  std::vector<Eigen::Vector3d> d_rgb(rays.size());
  out.loss_rgb = loss_rgb(out.rgb, target, d_rgb);

  const auto S = static_cast<Eigen::Index>(batch.t.size());
  Eigen::RowVectorXd d_density(S);
  Eigen::MatrixXd d_color(3, S);
  std::vector<Eigen::Vector3d> dc;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t b = batch.offset[r], e = batch.offset[r + 1];
    if (b == e) continue;
    dc.resize(e - b);
    composite_backward(std::span<const double>(cache.density.data() + b, e - b), colors[r],
                       std::span<const double>(batch.delta.data() + b, e - b), d_rgb[r],
                       std::span<double>(d_density.data() + b, e - b), dc);
    for (std::size_t k = 0; k < e - b; ++k) d_color.col(static_cast<Eigen::Index>(b + k)) = dc[k];
  }
  const Eigen::MatrixXd d_features = decode_backward(field.decoder, cache, d_density, d_color, grads.decoder);
  for (Eigen::Index s = 0; s < S; ++s)
    feature_backward(field, batch.coords[static_cast<std::size_t>(s)], d_features.col(s).data(), grads);
  return out;
}

ImageRGB render_image(const HexPlaneField& field, const CameraIntrinsics& K, const PoseSE3& camera_to_world,
                      double time, int samples_per_ray) {
  K.validate();
  ImageRGB img(K.height, K.width);
  std::vector<Eigen::Vector2d> pixels(static_cast<std::size_t>(K.width));
  for (int r = 0; r < K.height; ++r) {
    for (int c = 0; c < K.width; ++c) pixels[static_cast<std::size_t>(c)] = Eigen::Vector2d(c, r);
    const auto out = render_rays(field, generate_rays(K, camera_to_world, pixels, time), samples_per_ray);
    for (int c = 0; c < K.width; ++c)
      for (int ch = 0; ch < 3; ++ch) img.channels[ch](r, c) = std::clamp(out[static_cast<std::size_t>(c)].rgb[ch], 0.0, 1.0);
  }
  return img;
}

Adam::Adam(const HexPlaneField& field, const TrainConfig& config) : config_(config) { reset(field); }

void Adam::reset(const HexPlaneField& field) {
  FieldGradients shapes = FieldGradients::zeros_like(field);
  const auto blocks = parameter_blocks(shapes);
  m_.assign(blocks.size(), {});
  v_.assign(blocks.size(), {});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    m_[b].assign(blocks[b].values.size(), 0.0);
    v_[b].assign(blocks[b].values.size(), 0.0);
  }
  t_ = 0;
}

void Adam::step(HexPlaneField& field, FieldGradients& grads) {
  auto params = parameter_blocks(field);
  auto gblocks = parameter_blocks(grads);
  if (params.size() != m_.size() || gblocks.size() != params.size())
    throw InvalidArgument("adam: parameter layout changed without reset");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != m_[b].size() || gblocks[b].values.size() != m_[b].size())
      throw InvalidArgument("adam: parameter shape changed without reset");
    const double lr = params[b].is_grid ? config_.lr_grid : config_.lr_decoder;
    double* x = params[b].values.data();
    const double* g = gblocks[b].values.data();
    double* m = m_[b].data();
    double* v = v_[b].data();
    for (std::size_t k = 0; k < m_[b].size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      x[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
    }
  }
}

std::pair<double, double> evaluate_views(const HexPlaneField& field, const CameraIntrinsics& K,
                                         const std::vector<TrainingView>& views, int samples_per_ray, int max_views) {
  if (views.empty()) throw EmptyInput("evaluate: no views");
  const std::size_t n = max_views > 0 ? std::min(views.size(), static_cast<std::size_t>(max_views)) : views.size();
  double p = 0.0, s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const ImageRGB img = render_image(field, K, views[k].camera_to_world, views[k].time, samples_per_ray);
    p += psnr(img, views[k].image);
    s += ssim(img, views[k].image);
  }
  return {p / static_cast<double>(n), s / static_cast<double>(n)};
}

TrainResult train(const NvsDataset& dataset, HexPlaneField field, const TrainConfig& config,
                  const TrainCallback& on_log) {
  config.validate();
  dataset.K.validate();
  if (dataset.train.empty()) throw EmptyInput("train: no training views");
  for (const auto& view : dataset.train)
    if (view.image.height() != dataset.K.height || view.image.width() != dataset.K.width)
      throw InvalidArgument("train: view size does not match intrinsics");

  TrainResult result{std::move(field), {}, std::nullopt, std::nullopt};
  HexPlaneField& f = result.field;
  if (config.iterations == 0) return result;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_view(0, dataset.train.size() - 1);
  std::uniform_int_distribution<int> pick_u(0, dataset.K.width - 1), pick_v(0, dataset.K.height - 1);

  Adam adam(f, config);
  FieldGradients grads = FieldGradients::zeros_like(f);
  double lambda_tv = config.lambda_tv;
  std::size_t next_event = 0;

  std::vector<Ray> rays(static_cast<std::size_t>(config.batch_size));
  std::vector<Eigen::Vector3d> target(rays.size());
  std::vector<Eigen::Vector2d> pixel(1);

  for (int it = 0; it < config.iterations; ++it) {
    while (next_event < config.upsample_schedule.size() && config.upsample_schedule[next_event].first <= it) {
      f = upsample(f, config.upsample_schedule[next_event].second);
      adam.reset(f);
      grads = FieldGradients::zeros_like(f);
      lambda_tv *= config.lambda_tv_decay;
      ++next_event;
    }

    for (std::size_t r = 0; r < rays.size(); ++r) {
      const TrainingView& view = dataset.train[pick_view(rng)];
      const int u = pick_u(rng), v = pick_v(rng);
      pixel[0] = Eigen::Vector2d(u, v);
      rays[r] = generate_rays(dataset.K, view.camera_to_world, pixel, view.time)[0];
      target[r] = Eigen::Vector3d(view.image.channels[0](v, u), view.image.channels[1](v, u), view.image.channels[2](v, u));
    }

    grads.set_zero();
    const RenderBackwardResult fwd = render_and_backprop(f, rays, target, config.samples_per_ray, &rng, grads);
    LossBreakdown loss =
        tv_losses(f, lambda_tv, config.lambda_ts, config.w_rgb_tv, static_cast<double>(config.batch_size), &grads);
    loss.rgb = fwd.loss_rgb;
    loss.total = loss.rgb + lambda_tv * (loss.tv_sigma + config.w_rgb_tv * loss.tv_rgb);
    if (!std::isfinite(loss.total)) {
      std::ostringstream os;
      os << "training diverged at iteration " << it << ": loss " << loss.total << " (rgb " << loss.rgb
         << ", tv_sigma " << loss.tv_sigma << ", tv_rgb " << loss.tv_rgb << ")";
      throw TrainingDiverged(os.str());
    }
    adam.step(f, grads);

    TrainLogEntry entry{it, loss, std::nullopt};
    const bool last = it + 1 == config.iterations;
    if (!dataset.holdout.empty() && ((it + 1) % config.eval_every == 0 || last))
      entry.psnr_holdout =
          evaluate_views(f, dataset.K, dataset.holdout, config.samples_per_ray, config.eval_max_views).first;
    result.log.push_back(entry);
    if (on_log) on_log(entry);
  }

  if (!dataset.holdout.empty()) {
    const auto [p, s] = evaluate_views(f, dataset.K, dataset.holdout, config.samples_per_ray);
    result.final_psnr = p;
    result.final_ssim = s;
  }
  return result;
}

std::string format_train_log(const std::vector<TrainLogEntry>& log) {
  std::ostringstream os;
  os << "iter,loss,l_rgb,l_tv_sigma,l_tv_rgb,psnr_holdout\n";
  char line[256];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,", e.iteration, e.loss.total, e.loss.rgb,
                  e.loss.tv_sigma, e.loss.tv_rgb);
    os << line;
    if (e.psnr_holdout) {
      std::snprintf(line, sizeof line, "%.6f", *e.psnr_holdout);
      os << line;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dynrecon
