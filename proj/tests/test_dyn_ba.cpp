#include <doctest.h>

#include <random>

#include "dynrecon/dyn_ba.hpp"
#include "dynrecon/metrics.hpp"
#include "dynrecon/synth.hpp"
#include "test_support.hpp"

using namespace dynrecon;

namespace {

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k].pose.matrix() != b[k].pose.matrix() || a[k].timestamp != b[k].timestamp) return false;
  return true;
}

Sequence sequence_for(const SceneSpec& spec, const std::vector<GroundTruthFrame>& frames) {
  Sequence seq;
  seq.K = spec.K;
  for (const auto& f : frames) {
    seq.timestamps.push_back(f.timestamp);
    seq.depth_init.push_back(InverseDepthMap::from_depth(f.depth));
  }
  return seq;
}

}  // namespace

TEST_CASE("reduced solve matches the dense normal equations") {
  std::mt19937_64 rng(11);
  const BAConfig config;
  for (int trial = 0; trial < 10; ++trial) {
    const FrameGraph g = testing::random_tiny_graph(rng, 3, 3, 4);
    for (double damping : {1e-4, 1e-1}) {
      const BAIncrement reduced = solve_increment(g, config, damping);
      const BAIncrement dense = testing::dense_increment(g, config, damping);
      CHECK(testing::increment_distance(reduced, dense) < 1e-8);
      CHECK(reduced.pose_deltas[0].vector().isZero(0.0));
    }
  }
}

TEST_CASE("energy vanishes for flows generated from the current estimate") {
  std::mt19937_64 rng(12);
  FrameGraph g = testing::random_tiny_graph(rng, 3, 4, 5);
  for (auto& e : g.edges) {
    const PoseSE3 rel = g.keyframes[e.j].pose * g.keyframes[e.i].pose.inverse();
    const ReprojectionGrid rep = reproject(rel, g.K, g.keyframes[e.i].depth);
    for (int r = 0; r < g.K.height; ++r)
      for (int c = 0; c < g.K.width; ++c) {
        e.flow.du(r, c) = rep.u(r, c) - c;
        e.flow.dv(r, c) = rep.v(r, c) - r;
      }
  }
  CHECK(energy(g) < 1e-20);
  const BAStepResult step = ba_step(g, BAConfig{});
  CHECK(step.energy_after == step.energy_before);
}

TEST_CASE("energy is the weighted sum of squared residuals") {
  std::mt19937_64 rng(13);
  const FrameGraph g = testing::random_tiny_graph(rng, 2, 3, 3);
  double expected = 0.0;
  for (const auto& e : g.edges) {
    const PoseSE3 rel = g.keyframes[e.j].pose * g.keyframes[e.i].pose.inverse();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Eigen::Vector2d q;
        if (!reproject_point(rel, g.K, Eigen::Vector2d(c, r), g.keyframes[e.i].depth.values(r, c), q)) continue;
        expected += e.weight(r, c) * (Eigen::Vector2d(c + e.flow.du(r, c), r + e.flow.dv(r, c)) - q).squaredNorm();
      }
  }
  CHECK(energy(g) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("an accepted LM step lowers the energy and leaves keyframe 0 alone") {
  std::mt19937_64 rng(14);
  const FrameGraph g = testing::random_tiny_graph(rng, 3, 4, 4);
  const BAStepResult step = ba_step(g, BAConfig{});
  REQUIRE(step.accepted);
  CHECK(step.energy_after < step.energy_before);
  CHECK(step.graph.keyframes[0].pose.matrix() == g.keyframes[0].pose.matrix());
  CHECK(step.next_damping == doctest::Approx(BAConfig{}.damping_init / 5.0 * std::pow(10.0, step.attempts - 1)));
}

TEST_CASE("apply_masks zeroes weights on the source frame only") {
  std::mt19937_64 rng(15);
  const FrameGraph g = testing::random_tiny_graph(rng, 2, 3, 3);
  std::vector<BoolGrid> motion(2, BoolGrid::Constant(3, 3, false));
  motion[0](1, 1) = true;
  std::vector<BoolGrid> semantic(2, BoolGrid::Constant(3, 3, false));
  semantic[1](0, 2) = true;
  const FrameGraph m = apply_masks(g, motion, semantic);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto& before = g.edges[k];
    const auto& after = m.edges[k];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        const bool masked = before.i == 0 ? (r == 1 && c == 1) : (r == 0 && c == 2);
        CHECK(after.weight(r, c) == (masked ? 0.0 : before.weight(r, c)));
      }
  }
  SUBCASE("absent masks are the identity") {
    const FrameGraph same = apply_masks(g, {}, {});
    for (std::size_t k = 0; k < g.edges.size(); ++k) CHECK((same.edges[k].weight == g.edges[k].weight).all());
  }
  SUBCASE("shape mismatch") {
    std::vector<BoolGrid> bad(2, BoolGrid::Constant(2, 2, false));
    CHECK_THROWS_AS(apply_masks(g, bad), InvalidArgument);
  }
}

TEST_CASE("frame graph validation") {
  std::mt19937_64 rng(16);
  FrameGraph g = testing::random_tiny_graph(rng, 2, 3, 3);
  CHECK_NOTHROW(g.validate());
  g.edges[0].j = g.edges[0].i;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = testing::random_tiny_graph(rng, 2, 3, 3);
  g.edges[0].weight(0, 0) = -1.0;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
}

TEST_CASE("keyframes and edges on a static orbit") {
  const SceneSpec spec = testing::static_scene(10);
  const auto frames = generate(spec);
  SyntheticFlowProvider provider(spec);
  const Sequence seq = sequence_for(spec, frames);
  const KeyframePolicy policy;
  const FrameGraph g = build_frame_graph(seq, provider, policy);
  REQUIRE(g.keyframes.size() >= 2);
  CHECK(g.keyframes.front().frame_id == 0);
  CHECK(g.keyframes.back().frame_id == spec.frames - 1);
  for (const auto& e : g.edges) {
    CHECK(std::abs(e.i - e.j) <= policy.temporal_radius);
    bool reverse = false;
    for (const auto& o : g.edges) reverse |= (o.i == e.j && o.j == e.i);
    CHECK(reverse);
  }
  for (std::size_t k = 1; k + 1 < g.keyframes.size(); ++k) {
    const FlowObservation obs = provider.flow(g.keyframes[k - 1].frame_id, g.keyframes[k].frame_id);
    CHECK(mean_flow_magnitude(obs) > policy.keyframe_flow_px);
  }
}

TEST_CASE("solve recovers a static orbit from depth and flow") {
  SceneSpec spec = testing::static_scene(10);
  spec.flow_noise.sigma = 0.0;
  const auto frames = generate(spec);
  SyntheticFlowProvider provider(spec);
  const SolveResult result = solve(sequence_for(spec, frames), provider, {}, BAConfig{});
  REQUIRE(result.ok());
  CHECK(result.trajectory.size() == 10);
  CHECK(ate_rms(result.trajectory, ground_truth_trajectory(spec), true) < 1e-3);
  CHECK(!result.iterations.empty());
  const std::string diag = format_diagnostics(result);
  CHECK(diag.find("iter 0 energy_before") != std::string::npos);
  CHECK(diag.find("valid_pixels") != std::string::npos);
}

TEST_CASE("flow under masked pixels cannot influence the solution") {
  SceneSpec spec = testing::static_scene(6);
  const auto frames = generate(spec);
  SyntheticFlowProvider provider(spec);
  const Sequence seq = sequence_for(spec, frames);
  std::vector<BoolGrid> masks;
  std::mt19937_64 rng(17);
  std::bernoulli_distribution coin(0.1);
  for (int f = 0; f < spec.frames; ++f)
    masks.push_back(BoolGrid::NullaryExpr(spec.K.height, spec.K.width, [&](Eigen::Index, Eigen::Index) { return coin(rng); }));
  const SolveResult reference = solve(seq, provider, masks, BAConfig{});
  for (std::uint64_t s = 0; s < 2; ++s) {
    testing::MaskedPerturbation perturbed(provider, masks, s);
    CHECK(same_trajectory(solve(seq, perturbed, masks, BAConfig{}).trajectory, reference.trajectory));
  }
}

TEST_CASE("edges left with too few pixels are dropped and reported") {
  const SceneSpec spec = testing::static_scene(4);
  const auto frames = generate(spec);
  SyntheticFlowProvider provider(spec);
  std::vector<BoolGrid> masks(4, BoolGrid::Constant(spec.K.height, spec.K.width, false));
  masks[0].setConstant(true);
  const SolveResult result = solve(sequence_for(spec, frames), provider, masks, BAConfig{});
  CHECK(!result.dropped_edges.empty());
  for (const auto& e : result.dropped_edges) CHECK(e.first == 0);
}

TEST_CASE("motion-only BA needs enough pixels") {
  const SceneSpec spec = testing::static_scene(2);
  const auto frames = generate(spec);
  SyntheticFlowProvider provider(spec);
  const Keyframe ref{0, PoseSE3::Identity(), InverseDepthMap::from_depth(frames[0].depth)};
  BoolGrid all = BoolGrid::Constant(spec.K.height, spec.K.width, true);
  CHECK_THROWS_AS(motion_only_ba(spec.K, ref, provider.flow(0, 1), &all, PoseSE3::Identity(), BAConfig{}),
                  DegenerateFrame);
  const PoseSE3 est = motion_only_ba(spec.K, ref, provider.flow(0, 1), nullptr, PoseSE3::Identity(), BAConfig{});
  const PoseSE3 truth = frames[1].pose.inverse() * frames[0].pose;
  CHECK((est.translation() - truth.translation()).norm() < 5e-3);
}

TEST_CASE("configuration validation") {
  BAConfig c;
  CHECK_NOTHROW(c.validate());
  c.damping_scale = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  KeyframePolicy p;
  p.temporal_radius = 0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
