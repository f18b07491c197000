#include "dynrecon/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace dynrecon {

namespace {

struct Taps {
  int i0 = 0;
  int j0 = 0;
  double fi = 0.0;
  double fj = 0.0;
};

// Node-aligned mapping: normalized 0 and 1 sit exactly on the first and last node.
Taps taps_for(double u, double v, int rows, int cols) {
  Taps t;
  const double x = u * (rows - 1);
  const double y = v * (cols - 1);
  t.i0 = std::clamp(static_cast<int>(std::floor(x)), 0, rows - 2);
  t.j0 = std::clamp(static_cast<int>(std::floor(y)), 0, cols - 2);
  t.fi = x - t.i0;
  t.fj = y - t.j0;
  return t;
}

struct TapWeights {
  const double* c00;
  const double* c01;
  const double* c10;
  const double* c11;
  double w00, w01, w10, w11;
};

TapWeights tap_weights(const Plane& plane, const Taps& t) {
  return {plane.cell(t.i0, t.j0),
          plane.cell(t.i0, t.j0 + 1),
          plane.cell(t.i0 + 1, t.j0),
          plane.cell(t.i0 + 1, t.j0 + 1),
          (1.0 - t.fi) * (1.0 - t.fj),
          (1.0 - t.fi) * t.fj,
          t.fi * (1.0 - t.fj),
          t.fi * t.fj};
}

inline double lerp4(const TapWeights& w, int ch) {
  return w.w00 * w.c00[ch] + w.w01 * w.c01[ch] + w.w10 * w.c10[ch] + w.w11 * w.c11[ch];
}

int plane_rows(const std::array<int, 4>& res, const std::array<int, 2>& axes) { return res[axes[0]]; }
int plane_cols(const std::array<int, 4>& res, const std::array<int, 2>& axes) { return res[axes[1]]; }

Eigen::MatrixXd xavier(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  return m;
}

void validate_shape(const std::array<int, 4>& resolution, const std::array<int, 3>& ranks, int feature_dim) {
  for (int r : resolution)
    if (r < 2) throw InvalidArgument("field: every resolution must be >= 2");
  for (int r : ranks)
    if (r < 1) throw InvalidArgument("field: ranks must be >= 1");
  if (feature_dim < 1) throw InvalidArgument("field: feature dimension must be >= 1");
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Fn>
void for_each_block(std::array<Plane, 3>& spatial, std::array<Plane, 3>& partner,
                    std::array<Eigen::VectorXd, 3>& vectors, Decoder& dec, Fn&& fn) {
  for (int p = 0; p < 3; ++p) fn(std::span<double>(spatial[p].data), true, "spatial" + std::to_string(p));
  for (int p = 0; p < 3; ++p) fn(std::span<double>(partner[p].data), true, "partner" + std::to_string(p));
  for (int p = 0; p < 3; ++p)
    fn(std::span<double>(vectors[p].data(), static_cast<std::size_t>(vectors[p].size())), true,
       "vector" + std::to_string(p));
  auto mat = [&](Eigen::MatrixXd& m, const char* name) {
    fn(std::span<double>(m.data(), static_cast<std::size_t>(m.size())), false, name);
  };
  auto vec = [&](Eigen::VectorXd& v, const char* name) {
    fn(std::span<double>(v.data(), static_cast<std::size_t>(v.size())), false, name);
  };
  mat(dec.density_w1, "density_w1");
  vec(dec.density_b1, "density_b1");
  mat(dec.density_w2, "density_w2");
  vec(dec.density_b2, "density_b2");
  mat(dec.color_w1, "color_w1");
  vec(dec.color_b1, "color_b1");
  mat(dec.color_w2, "color_w2");
  vec(dec.color_b2, "color_b2");
}

}  // namespace

void FieldBounds::validate() const {
  if (!min.allFinite() || !max.allFinite() || !std::isfinite(t_min) || !std::isfinite(t_max))
    throw InvalidArgument("field bounds: non-finite values");
  if (!((max - min).array() > 0.0).all() || !(t_max > t_min)) throw InvalidArgument("field bounds: degenerate box");
}

Decoder Decoder::zeros(int feature_dim, int hidden) {
  const int fd = density_channels(feature_dim);
  const int fc = feature_dim - fd;
  Decoder d;
  d.density_w1 = Eigen::MatrixXd::Zero(hidden, fd);
  d.density_b1 = Eigen::VectorXd::Zero(hidden);
  d.density_w2 = Eigen::MatrixXd::Zero(1, hidden);
  d.density_b2 = Eigen::VectorXd::Zero(1);
  d.color_w1 = Eigen::MatrixXd::Zero(hidden, fc + kViewEncodingDim);
  d.color_b1 = Eigen::VectorXd::Zero(hidden);
  d.color_w2 = Eigen::MatrixXd::Zero(3, hidden);
  d.color_b2 = Eigen::VectorXd::Zero(3);
  return d;
}

std::size_t HexPlaneField::plane_parameter_count() const {
  std::size_t n = 0;
  for (int p = 0; p < 3; ++p) n += spatial[p].data.size() + partner[p].data.size();
  return n;
}

FieldGradients FieldGradients::zeros_like(const HexPlaneField& field) {
  FieldGradients g;
  for (int p = 0; p < 3; ++p) {
    g.spatial[p] = Plane(field.spatial[p].rows, field.spatial[p].cols, field.spatial[p].channels);
    g.partner[p] = Plane(field.partner[p].rows, field.partner[p].cols, field.partner[p].channels);
    g.vectors[p] = Eigen::VectorXd::Zero(field.vectors[p].size());
  }
  g.decoder = Decoder::zeros(field.feature_dim, field.decoder.hidden());
  return g;
}

void FieldGradients::set_zero() {
  for (auto& b : parameter_blocks(*this)) std::fill(b.values.begin(), b.values.end(), 0.0);
}

FieldGradients& FieldGradients::operator+=(const FieldGradients& other) {
  auto mine = parameter_blocks(*this);
  auto theirs = parameter_blocks(const_cast<FieldGradients&>(other));
  for (std::size_t b = 0; b < mine.size(); ++b)
    for (std::size_t i = 0; i < mine[b].values.size(); ++i) mine[b].values[i] += theirs[b].values[i];
  return *this;
}

std::vector<ParameterBlock> parameter_blocks(HexPlaneField& field) {
  std::vector<ParameterBlock> out;
  for_each_block(field.spatial, field.partner, field.vectors, field.decoder,
                 [&](std::span<double> s, bool grid, std::string name) { out.push_back({s, grid, std::move(name)}); });
  return out;
}

std::vector<ParameterBlock> parameter_blocks(FieldGradients& grads) {
  std::vector<ParameterBlock> out;
  for_each_block(grads.spatial, grads.partner, grads.vectors, grads.decoder,
                 [&](std::span<double> s, bool grid, std::string name) { out.push_back({s, grid, std::move(name)}); });
  return out;
}

HexPlaneField init_field(const FieldBounds& bounds, const std::array<int, 4>& resolution, const std::array<int, 3>& ranks,
                         int feature_dim, std::uint64_t seed) {
  bounds.validate();
  validate_shape(resolution, ranks, feature_dim);
  HexPlaneField field;
  field.bounds = bounds;
  field.resolution = resolution;
  field.ranks = ranks;
  field.feature_dim = feature_dim;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.1, 0.1);
  for (int p = 0; p < 3; ++p) {
    const int ch = ranks[p] * feature_dim;
    const auto& axes = kPlanePairs[p];
    field.spatial[p] = Plane(plane_rows(resolution, axes.spatial), plane_cols(resolution, axes.spatial), ch);
    field.partner[p] = Plane(plane_rows(resolution, axes.partner), plane_cols(resolution, axes.partner), ch);
    for (double& x : field.spatial[p].data) x = uni(rng);
    for (double& x : field.partner[p].data) x = uni(rng);
    field.vectors[p] = Eigen::VectorXd::Ones(ch);
  }

  const int fd = density_channels(feature_dim);
  const int fc = feature_dim - fd;
  Decoder& d = field.decoder;
  d = Decoder::zeros(feature_dim);
  d.density_w1 = xavier(kDecoderHidden, fd, rng);
  d.density_w2 = xavier(1, kDecoderHidden, rng);
  d.color_w1 = xavier(kDecoderHidden, fc + kViewEncodingDim, rng);
  d.color_w2 = xavier(3, kDecoderHidden, rng);
  return field;
}

NormalizedCoords clamp_coords(double x, double y, double z, double t) {
  NormalizedCoords out;
  const std::array<double, 4> in{x, y, z, t};
  for (int a = 0; a < 4; ++a) {
    if (!std::isfinite(in[a])) throw InvalidArgument("field query: non-finite coordinate");
    out.c[a] = std::clamp(in[a], 0.0, 1.0);
    if (out.c[a] != in[a]) out.clamped = true;
  }
  return out;
}

NormalizedCoords normalize(const FieldBounds& bounds, const Eigen::Vector3d& point, double time) {
  const Eigen::Vector3d n = (point - bounds.min).cwiseQuotient(bounds.max - bounds.min);
  return clamp_coords(n.x(), n.y(), n.z(), (time - bounds.t_min) / (bounds.t_max - bounds.t_min));
}

Eigen::VectorXd query_feature(const HexPlaneField& field, const NormalizedCoords& coords) {
  Eigen::VectorXd out(field.feature_dim);
  query_feature_into(field, coords, out.data());
  return out;
}

void query_feature_into(const HexPlaneField& field, const NormalizedCoords& coords, double* out) {
  const int F = field.feature_dim;
  std::fill(out, out + F, 0.0);
  for (int p = 0; p < 3; ++p) {
    const auto& axes = kPlanePairs[p];
    const Plane& sp = field.spatial[p];
    const Plane& pt = field.partner[p];
    const TapWeights a = tap_weights(sp, taps_for(coords.c[axes.spatial[0]], coords.c[axes.spatial[1]], sp.rows, sp.cols));
    const TapWeights b = tap_weights(pt, taps_for(coords.c[axes.partner[0]], coords.c[axes.partner[1]], pt.rows, pt.cols));
    const double* v = field.vectors[p].data();
    const int channels = sp.channels;
    for (int ch = 0; ch < channels; ++ch) out[ch % F] += lerp4(a, ch) * lerp4(b, ch) * v[ch];
  }
}

Eigen::VectorXd query_feature(const HexPlaneField& field, double x, double y, double z, double t) {
  return query_feature(field, clamp_coords(x, y, z, t));
}

Eigen::VectorXd encode_view(const Eigen::Vector3d& dir) {
  Eigen::VectorXd enc(kViewEncodingDim);
  enc.head<3>() = dir;
  int k = 3;
  for (int f = 0; f < kViewFrequencies; ++f) {
    const double scale = std::ldexp(M_PI, f);
    for (int a = 0; a < 3; ++a) {
      enc[k++] = std::sin(scale * dir[a]);
      enc[k++] = std::cos(scale * dir[a]);
    }
  }
  return enc;
}

void decode_batch(const Decoder& decoder, const Eigen::MatrixXd& features, const Eigen::MatrixXd& view_dirs,
                  DecoderCache& cache) {
  const Eigen::Index S = features.cols();
  const int F = static_cast<int>(features.rows());
  const int fd = density_channels(F);
  const int fc = F - fd;
  if (decoder.density_w1.cols() != fd || decoder.color_w1.cols() != fc + kViewEncodingDim)
    throw InvalidArgument("decode: feature width does not match decoder input");

  cache.features = features;
  cache.color_in.resize(fc + kViewEncodingDim, S);
  cache.color_in.topRows(fc) = features.bottomRows(fc);
  for (Eigen::Index s = 0; s < S; ++s) cache.color_in.col(s).tail(kViewEncodingDim) = encode_view(view_dirs.col(s));

  cache.density_pre.noalias() = decoder.density_w1 * features.topRows(fd);
  cache.density_pre.colwise() += decoder.density_b1;
  cache.density_raw.noalias() = decoder.density_w2 * cache.density_pre.cwiseMax(0.0);
  cache.density_raw.array() += decoder.density_b2[0];

  cache.color_pre.noalias() = decoder.color_w1 * cache.color_in;
  cache.color_pre.colwise() += decoder.color_b1;
  cache.color_raw.noalias() = decoder.color_w2 * cache.color_pre.cwiseMax(0.0);
  cache.color_raw.colwise() += decoder.color_b2;

  cache.density = cache.density_raw.unaryExpr([](double x) { return softplus(x); });
  cache.rgb = cache.color_raw.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::MatrixXd decode_backward(const Decoder& decoder, const DecoderCache& cache, const Eigen::RowVectorXd& d_density,
                                const Eigen::MatrixXd& d_rgb, Decoder& grads) {
  const int F = static_cast<int>(cache.features.rows());
  const int fd = density_channels(F);
  const int fc = F - fd;

  // softplus' = sigmoid(raw); sigmoid' = s (1 - s)
  const Eigen::RowVectorXd d_draw =
      d_density.cwiseProduct(cache.density_raw.unaryExpr([](double x) { return sigmoid(x); }));
  const Eigen::MatrixXd d_craw = d_rgb.cwiseProduct(cache.rgb.cwiseProduct((1.0 - cache.rgb.array()).matrix()));

  const Eigen::MatrixXd dh = cache.density_pre.cwiseMax(0.0);
  grads.density_w2.noalias() += d_draw * dh.transpose();
  grads.density_b2[0] += d_draw.sum();
  Eigen::MatrixXd d_dpre = decoder.density_w2.transpose() * d_draw;
  d_dpre = (cache.density_pre.array() > 0.0).select(d_dpre.array(), 0.0).matrix();
  grads.density_w1.noalias() += d_dpre * cache.features.topRows(fd).transpose();
  grads.density_b1 += d_dpre.rowwise().sum();

  const Eigen::MatrixXd ch = cache.color_pre.cwiseMax(0.0);
  grads.color_w2.noalias() += d_craw * ch.transpose();
  grads.color_b2 += d_craw.rowwise().sum();
  Eigen::MatrixXd d_cpre = decoder.color_w2.transpose() * d_craw;
  d_cpre = (cache.color_pre.array() > 0.0).select(d_cpre.array(), 0.0).matrix();
  grads.color_w1.noalias() += d_cpre * cache.color_in.transpose();
  grads.color_b1 += d_cpre.rowwise().sum();

  Eigen::MatrixXd d_features(F, cache.features.cols());
  d_features.topRows(fd).noalias() = decoder.density_w1.transpose() * d_dpre;
  if (fc > 0) d_features.bottomRows(fc).noalias() = decoder.color_w1.leftCols(fc).transpose() * d_cpre;
  return d_features;
}

DecodedSample decode(const Eigen::VectorXd& feature, const Eigen::Vector3d& view_dir, const Decoder& decoder) {
  if (!feature.allFinite()) throw InvalidArgument("decode: non-finite feature");
  DecoderCache cache;
  decode_batch(decoder, feature, view_dir, cache);
  return {cache.density[0], cache.rgb.col(0)};
}

void feature_backward(const HexPlaneField& field, const NormalizedCoords& coords, const double* d_feature,
                      FieldGradients& grads) {
  const int F = field.feature_dim;
  for (int p = 0; p < 3; ++p) {
    const auto& axes = kPlanePairs[p];
    const Plane& sp = field.spatial[p];
    const Plane& pt = field.partner[p];
    const Taps ta = taps_for(coords.c[axes.spatial[0]], coords.c[axes.spatial[1]], sp.rows, sp.cols);
    const Taps tb = taps_for(coords.c[axes.partner[0]], coords.c[axes.partner[1]], pt.rows, pt.cols);
    const TapWeights a = tap_weights(sp, ta);
    const TapWeights b = tap_weights(pt, tb);
    Plane& gs = grads.spatial[p];
    Plane& gp = grads.partner[p];
    double* ga00 = gs.cell(ta.i0, ta.j0);
    double* ga01 = gs.cell(ta.i0, ta.j0 + 1);
    double* ga10 = gs.cell(ta.i0 + 1, ta.j0);
    double* ga11 = gs.cell(ta.i0 + 1, ta.j0 + 1);
    double* gb00 = gp.cell(tb.i0, tb.j0);
    double* gb01 = gp.cell(tb.i0, tb.j0 + 1);
    double* gb10 = gp.cell(tb.i0 + 1, tb.j0);
    double* gb11 = gp.cell(tb.i0 + 1, tb.j0 + 1);
    const double* v = field.vectors[p].data();
    double* gv = grads.vectors[p].data();
    for (int ch = 0; ch < sp.channels; ++ch) {
      const double g = d_feature[ch % F];
      if (g == 0.0) continue;
      const double av = lerp4(a, ch);
      const double bv = lerp4(b, ch);
      gv[ch] += g * av * bv;
      const double da = g * bv * v[ch];
      const double db = g * av * v[ch];
      ga00[ch] += a.w00 * da;
      ga01[ch] += a.w01 * da;
      ga10[ch] += a.w10 * da;
      ga11[ch] += a.w11 * da;
      gb00[ch] += b.w00 * db;
      gb01[ch] += b.w01 * db;
      gb10[ch] += b.w10 * db;
      gb11[ch] += b.w11 * db;
    }
  }
}

void query_backward(const HexPlaneField& field, const NormalizedCoords& coords, const Eigen::Vector3d& view_dir,
                    const SampleUpstream& upstream, FieldGradients& grads) {
  DecoderCache cache;
  decode_batch(field.decoder, query_feature(field, coords), view_dir, cache);
  Eigen::RowVectorXd dd(1);
  dd[0] = upstream.d_density;
  const Eigen::MatrixXd d_features = decode_backward(field.decoder, cache, dd, upstream.d_rgb, grads.decoder);
  feature_backward(field, coords, d_features.data(), grads);
}

FieldGradients query_backward(const HexPlaneField& field, const NormalizedCoords& coords,
                              const Eigen::Vector3d& view_dir, const SampleUpstream& upstream) {
  FieldGradients grads = FieldGradients::zeros_like(field);
  query_backward(field, coords, view_dir, upstream, grads);
  return grads;
}

namespace {

Plane resample(const Plane& src, int rows, int cols) {
  if (rows == src.rows && cols == src.cols) return src;
  Plane out(rows, cols, src.channels);
  for (int i = 0; i < rows; ++i) {
    // Integer numerators keep node-aligned positions exact.
    const double x = static_cast<double>(i * (src.rows - 1)) / (rows - 1);
    const int i0 = std::min(static_cast<int>(std::floor(x)), src.rows - 2);
    const double fi = x - i0;
    for (int j = 0; j < cols; ++j) {
      const double y = static_cast<double>(j * (src.cols - 1)) / (cols - 1);
      const int j0 = std::min(static_cast<int>(std::floor(y)), src.cols - 2);
      const double fj = y - j0;
      Taps t{i0, j0, fi, fj};
      const TapWeights w = tap_weights(src, t);
      double* dst = out.cell(i, j);
      for (int ch = 0; ch < src.channels; ++ch) dst[ch] = lerp4(w, ch);
    }
  }
  return out;
}

}  // namespace

HexPlaneField upsample(const HexPlaneField& field, const std::array<int, 4>& new_resolution) {
  for (int a = 0; a < 4; ++a)
    if (new_resolution[a] < field.resolution[a]) throw InvalidArgument("upsample: cannot reduce resolution");
  HexPlaneField out = field;
  out.resolution = new_resolution;
  for (int p = 0; p < 3; ++p) {
    const auto& axes = kPlanePairs[p];
    out.spatial[p] =
        resample(field.spatial[p], plane_rows(new_resolution, axes.spatial), plane_cols(new_resolution, axes.spatial));
    out.partner[p] =
        resample(field.partner[p], plane_rows(new_resolution, axes.partner), plane_cols(new_resolution, axes.partner));
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'H', 'X', 'P', 'F'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const HexPlaneField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kCheckpointVersion);
  for (int a = 0; a < 3; ++a) write_le<double>(os, field.bounds.min[a]);
  write_le<double>(os, field.bounds.t_min);
  for (int a = 0; a < 3; ++a) write_le<double>(os, field.bounds.max[a]);
  write_le<double>(os, field.bounds.t_max);
  for (int r : field.resolution) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r));
  for (int r : field.ranks) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.feature_dim));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.decoder.hidden()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(kViewFrequencies));
  for (const auto& block : parameter_blocks(const_cast<HexPlaneField&>(field)))
    for (double x : block.values) write_le<double>(os, x);
  if (!os) throw Error("checkpoint: write failed for " + path);
}

HexPlaneField load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("checkpoint: bad magic in " + path);
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));

  FieldBounds bounds;
  for (int a = 0; a < 3; ++a) bounds.min[a] = read_le<double>(is);
  bounds.t_min = read_le<double>(is);
  for (int a = 0; a < 3; ++a) bounds.max[a] = read_le<double>(is);
  bounds.t_max = read_le<double>(is);
  std::array<int, 4> res{};
  for (int& r : res) r = static_cast<int>(read_le<std::uint32_t>(is));
  std::array<int, 3> ranks{};
  for (int& r : ranks) r = static_cast<int>(read_le<std::uint32_t>(is));
  const int F = static_cast<int>(read_le<std::uint32_t>(is));
  const int hidden = static_cast<int>(read_le<std::uint32_t>(is));
  const int freqs = static_cast<int>(read_le<std::uint32_t>(is));
  if (freqs != kViewFrequencies) throw ParseError("checkpoint: unsupported view encoding");
  if (hidden < 1 || hidden > 4096 || F > 4096) throw ParseError("checkpoint: implausible decoder shape");
  for (int r : res)
    if (r > 1 << 14) throw ParseError("checkpoint: implausible resolution");
  for (int r : ranks)
    if (r > 1024) throw ParseError("checkpoint: implausible rank");

  try {
    bounds.validate();
    validate_shape(res, ranks, F);
  } catch (const InvalidArgument& ex) {
    throw ParseError(std::string("checkpoint: ") + ex.what());
  }

  HexPlaneField field;
  field.bounds = bounds;
  field.resolution = res;
  field.ranks = ranks;
  field.feature_dim = F;
  for (int p = 0; p < 3; ++p) {
    const auto& axes = kPlanePairs[p];
    field.spatial[p] = Plane(plane_rows(res, axes.spatial), plane_cols(res, axes.spatial), ranks[p] * F);
    field.partner[p] = Plane(plane_rows(res, axes.partner), plane_cols(res, axes.partner), ranks[p] * F);
    field.vectors[p] = Eigen::VectorXd::Zero(ranks[p] * F);
  }
  field.decoder = Decoder::zeros(F, hidden);
  for (auto& block : parameter_blocks(field))
    for (double& x : block.values) x = read_le<double>(is);
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes in " + path);
  return field;
}

}  // namespace dynrecon
