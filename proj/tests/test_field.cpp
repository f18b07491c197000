#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "dynrecon/field.hpp"

using namespace dynrecon;

namespace {

FieldBounds unit_bounds() { return FieldBounds{}; }

HexPlaneField random_field(std::uint64_t seed, std::array<int, 4> res = {5, 4, 6, 3}, std::array<int, 3> ranks = {2, 1, 3},
                           int F = 5) {
  HexPlaneField f = init_field(unit_bounds(), res, ranks, F, seed);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : f.vectors)
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + u(rng);
  for (auto* b : {&f.decoder.density_b1, &f.decoder.density_b2, &f.decoder.color_b1, &f.decoder.color_b2})
    for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] = 0.2 * u(rng);
  return f;
}

// Straightforward re-implementation: loops over pairs, ranks and features with
// explicit bilinear interpolation.
double bilinear(const Plane& p, double u, double v, int ch) {
  const double x = u * (p.rows - 1), y = v * (p.cols - 1);
  int i = static_cast<int>(std::floor(x)), j = static_cast<int>(std::floor(y));
  i = std::min(std::max(i, 0), p.rows - 2);
  j = std::min(std::max(j, 0), p.cols - 2);
  const double a = x - i, b = y - j;
  return (1 - a) * (1 - b) * p.at(i, j, ch) + (1 - a) * b * p.at(i, j + 1, ch) + a * (1 - b) * p.at(i + 1, j, ch) +
         a * b * p.at(i + 1, j + 1, ch);
}

Eigen::VectorXd naive_feature(const HexPlaneField& f, const std::array<double, 4>& c) {
  const int pairs[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {1, 2, 0, 3}};
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.feature_dim);
  for (int p = 0; p < 3; ++p)
    for (int r = 0; r < f.ranks[p]; ++r)
      for (int k = 0; k < f.feature_dim; ++k) {
        const int ch = r * f.feature_dim + k;
        out[k] += bilinear(f.spatial[p], c[pairs[p][0]], c[pairs[p][1]], ch) *
                  bilinear(f.partner[p], c[pairs[p][2]], c[pairs[p][3]], ch) * f.vectors[p][ch];
      }
  return out;
}

DecodedSample naive_decode(const Eigen::VectorXd& feat, const Eigen::Vector3d& dir, const Decoder& d) {
  const int fd = static_cast<int>(d.density_w1.cols());
  const int fc = static_cast<int>(feat.size()) - fd;
  std::vector<double> enc{dir.x(), dir.y(), dir.z()};
  for (int l = 0; l < 4; ++l)
    for (int a = 0; a < 3; ++a) {
      enc.push_back(std::sin(std::pow(2.0, l) * M_PI * dir[a]));
      enc.push_back(std::cos(std::pow(2.0, l) * M_PI * dir[a]));
    }
  DecodedSample s;
  double raw = d.density_b2[0];
  for (int h = 0; h < d.hidden(); ++h) {
    double z = d.density_b1[h];
    for (int k = 0; k < fd; ++k) z += d.density_w1(h, k) * feat[k];
    raw += d.density_w2(0, h) * std::max(z, 0.0);
  }
  s.density = std::log(1.0 + std::exp(raw));
  for (int o = 0; o < 3; ++o) {
    double c = d.color_b2[o];
    for (int h = 0; h < d.hidden(); ++h) {
      double z = d.color_b1[h];
      for (int k = 0; k < fc; ++k) z += d.color_w1(h, k) * feat[fd + k];
      for (std::size_t e = 0; e < enc.size(); ++e) z += d.color_w1(h, fc + static_cast<int>(e)) * enc[e];
      c += d.color_w2(o, h) * std::max(z, 0.0);
    }
    s.rgb[o] = 1.0 / (1.0 + std::exp(-c));
  }
  return s;
}

double objective(const HexPlaneField& f, const NormalizedCoords& c, const Eigen::Vector3d& dir,
                 const SampleUpstream& up) {
  const DecodedSample s = decode(query_feature(f, c), dir, f.decoder);
  return up.d_density * s.density + up.d_rgb.dot(s.rgb);
}

}  // namespace

TEST_CASE("init_field is deterministic and has the documented shapes") {
  const HexPlaneField a = init_field(unit_bounds(), {4, 5, 6, 3}, {1, 2, 3}, 4, 9);
  const HexPlaneField b = init_field(unit_bounds(), {4, 5, 6, 3}, {1, 2, 3}, 4, 9);
  for (int p = 0; p < 3; ++p) {
    CHECK(a.spatial[p].data == b.spatial[p].data);
    CHECK(a.partner[p].data == b.partner[p].data);
    CHECK(a.vectors[p].isApproxToConstant(1.0));
  }
  CHECK(a.decoder.color_w1 == b.decoder.color_w1);
  CHECK(a.spatial[0].rows == 4);
  CHECK(a.spatial[0].cols == 5);
  CHECK(a.partner[0].rows == 6);
  CHECK(a.partner[0].cols == 3);
  CHECK(a.spatial[2].channels == 12);
  const std::size_t expected = (4 * 5 + 6 * 3) * 1 * 4 + (4 * 6 + 5 * 3) * 2 * 4 + (5 * 6 + 4 * 3) * 3 * 4;
  CHECK(a.plane_parameter_count() == expected);
  for (int p = 0; p < 3; ++p)
    for (double x : a.spatial[p].data) CHECK(std::abs(x) <= 0.1);

  const HexPlaneField minimal = init_field(unit_bounds(), {2, 2, 2, 2}, {1, 1, 1}, 1, 0);
  CHECK(minimal.vectors[0].size() == 1);
  CHECK(minimal.plane_parameter_count() == 6 * 4);
}

TEST_CASE("init_field rejects bad shapes and bounds") {
  CHECK_THROWS_AS(init_field(unit_bounds(), {1, 4, 4, 4}, {1, 1, 1}, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(init_field(unit_bounds(), {4, 4, 4, 4}, {0, 1, 1}, 4, 0), InvalidArgument);
  FieldBounds flat;
  flat.max.x() = flat.min.x();
  CHECK_THROWS_AS(init_field(flat, {4, 4, 4, 4}, {1, 1, 1}, 4, 0), InvalidArgument);
}

TEST_CASE("constant planes give the closed-form feature") {
  HexPlaneField f = init_field(unit_bounds(), {3, 3, 3, 3}, {1, 1, 1}, 3, 0);
  const double c1[3] = {0.5, -1.0, 2.0}, c2[3] = {3.0, 0.25, -0.5};
  for (int p = 0; p < 3; ++p) {
    std::fill(f.spatial[p].data.begin(), f.spatial[p].data.end(), c1[p]);
    std::fill(f.partner[p].data.begin(), f.partner[p].data.end(), c2[p]);
  }
  const double expected = 0.5 * 3.0 - 1.0 * 0.25 - 2.0 * 0.5;
  const Eigen::VectorXd v = query_feature(f, 0.3, 0.7, 0.1, 0.9);
  for (int k = 0; k < 3; ++k) CHECK(v[k] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("query at a node reads the stored entries") {
  const HexPlaneField f = random_field(1, {3, 3, 3, 3}, {1, 1, 1}, 2);
  const Eigen::VectorXd v = query_feature(f, 0.5, 1.0, 0.0, 0.5);
  // Node indices: x 1, y 2, z 0, t 1.
  for (int k = 0; k < 2; ++k) {
    const double expected = f.spatial[0].at(1, 2, k) * f.partner[0].at(0, 1, k) * f.vectors[0][k] +
                            f.spatial[1].at(1, 0, k) * f.partner[1].at(2, 1, k) * f.vectors[1][k] +
                            f.spatial[2].at(2, 0, k) * f.partner[2].at(1, 1, k) * f.vectors[2][k];
    CHECK(v[k] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("query matches a naive implementation") {
  const HexPlaneField f = random_field(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const std::array<double, 4> c{u(rng), u(rng), u(rng), u(rng)};
    CHECK((query_feature(f, c[0], c[1], c[2], c[3]) - naive_feature(f, c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("query is continuous across cell boundaries") {
  const HexPlaneField f = random_field(4);
  const double edge = 1.0 / 4.0;  // a node of the 5-node x axis
  const Eigen::VectorXd lo = query_feature(f, edge - 1e-9, 0.4, 0.6, 0.3);
  const Eigen::VectorXd hi = query_feature(f, edge + 1e-9, 0.4, 0.6, 0.3);
  CHECK((lo - hi).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a zero second rank changes nothing") {
  HexPlaneField one = random_field(5, {4, 4, 4, 3}, {1, 1, 1}, 3);
  HexPlaneField two = init_field(unit_bounds(), {4, 4, 4, 3}, {2, 2, 2}, 3, 0);
  two.decoder = one.decoder;
  for (int p = 0; p < 3; ++p) {
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < two.spatial[p].cols; ++b)
        for (int ch = 0; ch < 6; ++ch) two.spatial[p].at(a, b, ch) = ch < 3 ? one.spatial[p].at(a, b, ch) : 0.0;
    for (int a = 0; a < two.partner[p].rows; ++a)
      for (int b = 0; b < two.partner[p].cols; ++b)
        for (int ch = 0; ch < 6; ++ch) two.partner[p].at(a, b, ch) = ch < 3 ? one.partner[p].at(a, b, ch) : 0.0;
    two.vectors[p].head(3) = one.vectors[p];
  }
  for (double x : {0.0, 0.13, 0.77, 1.0})
    CHECK((query_feature(one, x, 1 - x, 0.5, x) - query_feature(two, x, 1 - x, 0.5, x)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("coordinates outside the box are clamped and flagged") {
  const NormalizedCoords in = clamp_coords(0.2, 0.3, 0.4, 0.5);
  CHECK_FALSE(in.clamped);
  const NormalizedCoords out = clamp_coords(1.5, -0.1, 0.4, 0.5);
  CHECK(out.clamped);
  CHECK(out.c[0] == 1.0);
  CHECK(out.c[1] == 0.0);
  CHECK_THROWS_AS(clamp_coords(std::nan(""), 0, 0, 0), InvalidArgument);

  FieldBounds b;
  b.min = Eigen::Vector3d(-1, -2, -3);
  b.max = Eigen::Vector3d(1, 2, 3);
  b.t_min = 0.0;
  b.t_max = 2.0;
  const NormalizedCoords n = normalize(b, Eigen::Vector3d(0, 1, -3), 1.5);
  CHECK(n.c[0] == doctest::Approx(0.5));
  CHECK(n.c[1] == doctest::Approx(0.75));
  CHECK(n.c[2] == doctest::Approx(0.0));
  CHECK(n.c[3] == doctest::Approx(0.75));
}

TEST_CASE("decoder at zero") {
  const Decoder d = Decoder::zeros(6);
  const DecodedSample s = decode(Eigen::VectorXd::Zero(6), Eigen::Vector3d::UnitZ(), d);
  CHECK(s.density == doctest::Approx(std::log(2.0)));
  CHECK(s.rgb.isApproxToConstant(0.5));
  CHECK_THROWS_AS(decode(Eigen::VectorXd::Zero(5), Eigen::Vector3d::UnitZ(), d), InvalidArgument);
  CHECK(density_channels(16) == 8);
  CHECK(density_channels(5) == 3);
}

TEST_CASE("decode matches a naive implementation") {
  const HexPlaneField f = random_field(6);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd feat(5);
    for (int i = 0; i < 5; ++i) feat[i] = n(rng);
    const Eigen::Vector3d dir = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    const DecodedSample a = decode(feat, dir, f.decoder), b = naive_decode(feat, dir, f.decoder);
    CHECK(a.density == doctest::Approx(b.density).epsilon(1e-12));
    CHECK((a.rgb - b.rgb).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.density >= 0.0);
  }
}

TEST_CASE("query_backward with zero upstream is zero") {
  const HexPlaneField f = random_field(8);
  const FieldGradients g = query_backward(f, clamp_coords(0.3, 0.4, 0.5, 0.6), Eigen::Vector3d::UnitX(), {});
  FieldGradients copy = g;
  for (auto& b : parameter_blocks(copy))
    for (double x : b.values) CHECK(x == 0.0);
}

TEST_CASE("single pair, single rank gradient follows the product rule") {
  HexPlaneField f = random_field(9, {3, 3, 3, 3}, {1, 1, 1}, 2);
  for (int p = 1; p < 3; ++p) {
    std::fill(f.spatial[p].data.begin(), f.spatial[p].data.end(), 0.0);
    std::fill(f.partner[p].data.begin(), f.partner[p].data.end(), 0.0);
  }
  // Upstream on the feature itself: use the node (x=0, y=0, z=0, t=0) so both
  // samples read a single stored entry.
  const NormalizedCoords c = clamp_coords(0.0, 0.0, 0.0, 0.0);
  const Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();
  const SampleUpstream up{1.0, Eigen::Vector3d(0.3, -0.2, 0.5)};
  const FieldGradients g = query_backward(f, c, dir, up);

  const Eigen::VectorXd feat = query_feature(f, c);
  DecoderCache cache;
  Eigen::MatrixXd dirs(3, 1);
  dirs.col(0) = dir;
  decode_batch(f.decoder, feat, dirs, cache);
  Decoder scratch = Decoder::zeros(2);
  const Eigen::MatrixXd dfeat = decode_backward(f.decoder, cache, Eigen::RowVectorXd::Constant(1, up.d_density),
                                                up.d_rgb, scratch);
  for (int k = 0; k < 2; ++k) {
    const double A = f.spatial[0].at(0, 0, k), B = f.partner[0].at(0, 0, k), v = f.vectors[0][k];
    CHECK(g.spatial[0].at(0, 0, k) == doctest::Approx(dfeat(k, 0) * B * v).epsilon(1e-12));
    CHECK(g.partner[0].at(0, 0, k) == doctest::Approx(dfeat(k, 0) * A * v).epsilon(1e-12));
    CHECK(g.vectors[0][k] == doctest::Approx(dfeat(k, 0) * A * B).epsilon(1e-12));
  }
}

TEST_CASE("query_backward matches central differences") {
  HexPlaneField f = random_field(10);
  const NormalizedCoords c = clamp_coords(0.37, 0.61, 0.22, 0.8);
  const Eigen::Vector3d dir = Eigen::Vector3d(0.2, -0.3, 0.9).normalized();
  const SampleUpstream up{0.7, Eigen::Vector3d(-0.4, 0.9, 0.25)};
  FieldGradients g = query_backward(f, c, dir, up);
  auto params = parameter_blocks(f);
  auto grads = parameter_blocks(g);
  std::mt19937_64 rng(11);
  int checked = 0;
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::uniform_int_distribution<std::size_t> pick(0, params[b].values.size() - 1);
    for (int k = 0; k < 12; ++k) {
      const std::size_t i = pick(rng);
      double& x = params[b].values[i];
      const double keep = x, h = 1e-4;
      x = keep + h;
      const double fp = objective(f, c, dir, up);
      x = keep - h;
      const double fm = objective(f, c, dir, up);
      x = keep;
      const double num = (fp - fm) / (2 * h), ana = grads[b].values[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
      ++checked;
    }
  }
  CHECK(checked >= 100);
  CHECK(worst < 1e-3);
}

TEST_CASE("upsample") {
  SUBCASE("same resolution is bit-identical") {
    const HexPlaneField f = random_field(12);
    const HexPlaneField u = upsample(f, f.resolution);
    for (int p = 0; p < 3; ++p) CHECK(u.spatial[p].data == f.spatial[p].data);
  }
  SUBCASE("linear ramps are reproduced exactly") {
    HexPlaneField f = init_field(unit_bounds(), {3, 3, 3, 3}, {1, 1, 1}, 1, 0);
    for (int p = 0; p < 3; ++p) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          f.spatial[p].at(a, b, 0) = 1.0 + 0.5 * a / 2.0 - 0.25 * b / 2.0;
          f.partner[p].at(a, b, 0) = 2.0;
        }
    }
    const HexPlaneField u = upsample(f, {5, 7, 9, 4});
    CHECK(u.spatial[0].rows == 5);
    CHECK(u.spatial[0].cols == 7);
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 7; ++b) CHECK(u.spatial[0].at(a, b, 0) == doctest::Approx(1.0 + 0.5 * a / 4.0 - 0.25 * b / 6.0));
    for (double x : {0.1, 0.45, 0.9})
      CHECK(query_feature(u, x, 0.3, 0.6, 0.2)[0] == doctest::Approx(query_feature(f, x, 0.3, 0.6, 0.2)[0]).epsilon(1e-12));
  }
  SUBCASE("downsampling is rejected") {
    const HexPlaneField f = random_field(13);
    CHECK_THROWS_AS(upsample(f, {4, 4, 6, 3}), InvalidArgument);
  }
}

TEST_CASE("checkpoint round trip") {
  const HexPlaneField f = random_field(14);
  const auto path = (std::filesystem::temp_directory_path() / "dynrecon_field_test.ckpt").string();
  save_checkpoint(f, path);
  const HexPlaneField g = load_checkpoint(path);
  CHECK(g.resolution == f.resolution);
  CHECK(g.ranks == f.ranks);
  CHECK(g.feature_dim == f.feature_dim);
  CHECK(g.bounds.max == f.bounds.max);
  for (int p = 0; p < 3; ++p) {
    CHECK(g.spatial[p].data == f.spatial[p].data);
    CHECK(g.partner[p].data == f.partner[p].data);
    CHECK(g.vectors[p] == f.vectors[p]);
  }
  CHECK(g.decoder.color_w2 == f.decoder.color_w2);
  CHECK(g.decoder.density_b2 == f.decoder.density_b2);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}
