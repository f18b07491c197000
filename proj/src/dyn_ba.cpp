#include "dynrecon/dyn_ba.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include <Eigen/Cholesky>

namespace dynrecon {

namespace {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

bool same_shape(const Grid& a, int height, int width) { return a.rows() == height && a.cols() == width; }

double mean_valid_depth(const InverseDepthMap& depth) {
  double sum = 0.0;
  long n = 0;
  for (Eigen::Index r = 0; r < depth.values.rows(); ++r)
    for (Eigen::Index c = 0; c < depth.values.cols(); ++c)
      if (depth.valid(r, c)) {
        sum += depth.values(r, c);
        ++n;
      }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

PoseSE3 relative(const Keyframe& from, const Keyframe& to) { return to.pose * from.pose.inverse(); }

// Normal equations with the per-pixel depth couplings kept for Schur elimination.
struct DepthCoupling {
  int pose = 0;  // keyframe index
  Vector6d e = Vector6d::Zero();
};

struct DepthVariable {
  int keyframe = 0;
  int row = 0;
  int col = 0;
  double c = 0.0;   // J_d^T W J_d (+ prior)
  double bd = 0.0;  // J_d^T W r (+ prior)
  int first = 0;
  int count = 0;
};

struct Linearization {
  Eigen::MatrixXd Hpp;
  Eigen::VectorXd bp;
  std::vector<DepthVariable> depths;
  std::vector<DepthCoupling> couplings;
};

Linearization linearize(const FrameGraph& graph, const BAConfig& config) {
  const int n = static_cast<int>(graph.keyframes.size());
  const auto& K = graph.K;
  Linearization lin;
  lin.Hpp = Eigen::MatrixXd::Zero(6 * n, 6 * n);
  lin.bp = Eigen::VectorXd::Zero(6 * n);

  std::vector<std::vector<int>> outgoing(n);
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) outgoing[graph.edges[e].i].push_back(e);

  ReprojectionJacobians J;
  Eigen::Vector2d q;
  for (int k = 0; k < n; ++k) {
    const Keyframe& kf = graph.keyframes[k];
    const double prior_mean = mean_valid_depth(kf.depth);
    std::vector<PoseSE3> rel;
    for (int e : outgoing[k]) rel.push_back(relative(kf, graph.keyframes[graph.edges[e].j]));

    for (int r = 0; r < K.height; ++r) {
      for (int c = 0; c < K.width; ++c) {
        if (!kf.depth.valid(r, c)) continue;
        const double d = kf.depth.values(r, c);
        DepthVariable var;
        var.keyframe = k;
        var.row = r;
        var.col = c;
        var.first = static_cast<int>(lin.couplings.size());
        Vector6d e_source = Vector6d::Zero();
        bool any = false;

        for (std::size_t oe = 0; oe < outgoing[k].size(); ++oe) {
          const Edge& edge = graph.edges[outgoing[k][oe]];
          const double w = edge.weight(r, c);
          if (!(w > 0.0)) continue;
          if (!reproject_point(rel[oe], K, Eigen::Vector2d(c, r), d, q, &J)) continue;
          const Eigen::Vector2d res(c + edge.flow.du(r, c) - q.x(), r + edge.flow.dv(r, c) - q.y());
          const int j = edge.j;
          const auto& Js = J.d_source_pose;
          const auto& Jt = J.d_target_pose;
          const auto& Jd = J.d_inverse_depth;

          lin.Hpp.block<6, 6>(6 * k, 6 * k).noalias() += w * Js.transpose() * Js;
          lin.Hpp.block<6, 6>(6 * j, 6 * j).noalias() += w * Jt.transpose() * Jt;
          const Matrix6d cross = w * Js.transpose() * Jt;
          lin.Hpp.block<6, 6>(6 * k, 6 * j) += cross;
          lin.Hpp.block<6, 6>(6 * j, 6 * k) += cross.transpose();
          lin.bp.segment<6>(6 * k).noalias() += w * Js.transpose() * res;
          lin.bp.segment<6>(6 * j).noalias() += w * Jt.transpose() * res;

          var.c += w * Jd.squaredNorm();
          var.bd += w * Jd.dot(res);
          e_source.noalias() += w * Js.transpose() * Jd;
          lin.couplings.push_back({j, w * Jt.transpose() * Jd});
          any = true;
        }
        if (any) lin.couplings.push_back({k, e_source});
        var.count = static_cast<int>(lin.couplings.size()) - var.first;

        var.c += config.depth_prior_weight;
        var.bd += config.depth_prior_weight * (prior_mean - d);
        if (var.c > 0.0 || var.count > 0) lin.depths.push_back(var);
      }
    }
  }
  return lin;
}

BAIncrement solve_linearization(const FrameGraph& graph, const Linearization& lin, double damping) {
  const int n = static_cast<int>(graph.keyframes.size());
  const int nv = 6 * (n - 1);

  Eigen::MatrixXd S = lin.Hpp.bottomRightCorner(nv, nv);
  Eigen::VectorXd rhs = lin.bp.tail(nv);
  for (int i = 0; i < nv; ++i) S(i, i) += damping * (S(i, i) + kDampingFloor);

  auto damped = [damping](double h) { return h + damping * (h + kDampingFloor); };

  for (const auto& var : lin.depths) {
    const double c = damped(var.c);
    if (!(c > 0.0)) continue;
    const double inv_c = 1.0 / c;
    for (int a = 0; a < var.count; ++a) {
      const auto& ca = lin.couplings[var.first + a];
      if (ca.pose == 0) continue;
      const int ia = 6 * (ca.pose - 1);
      rhs.segment<6>(ia) -= ca.e * (var.bd * inv_c);
      for (int b = 0; b < var.count; ++b) {
        const auto& cb = lin.couplings[var.first + b];
        if (cb.pose == 0) continue;
        S.block<6, 6>(ia, 6 * (cb.pose - 1)).noalias() -= (ca.e * inv_c) * cb.e.transpose();
      }
    }
  }

  Eigen::VectorXd dp = Eigen::VectorXd::Zero(nv);
  if (nv > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw SolverError("reduced pose system is not positive definite");
    dp = llt.solve(rhs);
    if (!dp.allFinite()) throw SolverError("reduced pose system produced a non-finite solution");
  }

  BAIncrement inc;
  inc.pose_deltas.resize(n);
  for (int m = 1; m < n; ++m) inc.pose_deltas[m] = TwistD(Vector6d(dp.segment<6>(6 * (m - 1))));
  inc.depth_deltas.reserve(n);
  for (int m = 0; m < n; ++m) inc.depth_deltas.push_back(Grid::Zero(graph.K.height, graph.K.width));

  for (const auto& var : lin.depths) {
    const double c = damped(var.c);
    if (!(c > 0.0)) continue;
    double rhs_d = var.bd;
    for (int a = 0; a < var.count; ++a) {
      const auto& ca = lin.couplings[var.first + a];
      if (ca.pose == 0) continue;
      rhs_d -= ca.e.dot(dp.segment<6>(6 * (ca.pose - 1)));
    }
    inc.depth_deltas[var.keyframe](var.row, var.col) = rhs_d / c;
  }
  return inc;
}

bool connected(int n, const std::vector<Edge>& edges) {
  if (n == 0) return true;
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : edges) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> open;
  open.push(0);
  seen[0] = true;
  int count = 1;
  while (!open.empty()) {
    const int a = open.front();
    open.pop();
    for (int b : adj[a])
      if (!seen[b]) {
        seen[b] = true;
        ++count;
        open.push(b);
      }
  }
  return count == n;
}

const BoolGrid* mask_for(const std::vector<BoolGrid>& masks, int frame) {
  if (masks.empty()) return nullptr;
  return &masks[frame];
}

}  // namespace

void FrameGraph::validate() const {
  K.validate();
  const int n = static_cast<int>(keyframes.size());
  std::vector<int> degree(n, 0);
  for (const auto& kf : keyframes) {
    if (!same_shape(kf.depth.values, K.height, K.width) || kf.depth.valid.rows() != K.height ||
        kf.depth.valid.cols() != K.width)
      throw InvalidArgument("frame graph: keyframe depth shape mismatch");
  }
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) throw InvalidArgument("frame graph: edge endpoint out of range");
    if (e.i == e.j) throw InvalidArgument("frame graph: edge connects a keyframe to itself");
    if (!same_shape(e.weight, K.height, K.width) || !same_shape(e.flow.du, K.height, K.width) ||
        !same_shape(e.flow.dv, K.height, K.width))
      throw InvalidArgument("frame graph: edge grid shape mismatch");
    if (!(e.weight >= 0.0).all()) throw InvalidArgument("frame graph: negative confidence weight");
    ++degree[e.i];
    ++degree[e.j];
  }
  for (int k = 0; k < n; ++k)
    if (degree[k] == 0) throw InvalidArgument("frame graph: keyframe " + std::to_string(k) + " has no edge");
}

void BAConfig::validate() const {
  if (max_iterations <= 0 || !(damping_init > 0.0) || !(damping_scale > 1.0) || !(damping_decrease > 1.0) ||
      !(convergence_tol > 0.0) || !(convergence_tol < 1.0) || depth_prior_weight < 0.0 ||
      max_damping_escalations <= 0 || min_valid_pixels <= 0 || !(min_inverse_depth > 0.0) ||
      motion_only_iterations <= 0)
    throw InvalidArgument("invalid BA configuration");
}

void KeyframePolicy::validate() const {
  if (!(keyframe_flow_px >= 0.0) || temporal_radius < 1 || !(overlap_flow_px > 0.0))
    throw InvalidArgument("invalid keyframe policy");
}

InverseDepthMap Sequence::initial_depth(int frame) const {
  if (!depth_init.empty()) return depth_init.at(frame);
  return InverseDepthMap(K.height, K.width, 1.0);
}

double mean_flow_magnitude(const FlowObservation& obs, const BoolGrid* exclude) {
  const auto& f = obs.flow;
  double sum = 0.0;
  long n = 0;
  for (Eigen::Index r = 0; r < f.du.rows(); ++r)
    for (Eigen::Index c = 0; c < f.du.cols(); ++c) {
      if (!f.valid(r, c) || !(obs.confidence(r, c) > 0.0)) continue;
      if (exclude != nullptr && (*exclude)(r, c)) continue;
      sum += std::hypot(f.du(r, c), f.dv(r, c));
      ++n;
    }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

Grid edge_weight(const FlowObservation& obs) {
  Grid w = obs.confidence;
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      if (!obs.flow.valid(r, c) || !std::isfinite(w(r, c)) || w(r, c) < 0.0) w(r, c) = 0.0;
  return w;
}

FrameGraph build_frame_graph(const Sequence& seq, const FlowProvider& provider, const KeyframePolicy& policy,
                             const std::vector<BoolGrid>& exclude) {
  policy.validate();
  seq.K.validate();
  const int n = seq.size();
  if (n < 2) throw InvalidArgument("build_frame_graph: need at least 2 frames");
  if (!exclude.empty() && static_cast<int>(exclude.size()) != n)
    throw InvalidArgument("build_frame_graph: mask count does not match frame count");

  auto fetch = [&](int a, int b) {
    try {
      FlowObservation obs = provider.flow(a, b);
      if (!same_shape(obs.flow.du, seq.K.height, seq.K.width) || !same_shape(obs.confidence, seq.K.height, seq.K.width))
        throw InvalidArgument("flow shape does not match intrinsics");
      return obs;
    } catch (const FlowProviderError&) {
      throw;
    } catch (const std::exception& ex) {
      throw FlowProviderError(a, b, ex.what());
    }
  };

  std::vector<int> ids{0};
  for (int f = 1; f < n - 1; ++f) {
    const double m = mean_flow_magnitude(fetch(ids.back(), f), mask_for(exclude, ids.back()));
    if (m > policy.keyframe_flow_px) ids.push_back(f);
  }
  ids.push_back(n - 1);

  FrameGraph graph;
  graph.K = seq.K;
  for (int id : ids) {
    Keyframe kf;
    kf.frame_id = id;
    kf.pose = seq.initial_poses.empty() ? PoseSE3::Identity() : seq.initial_poses.at(id);
    kf.depth = seq.initial_depth(id);
    graph.keyframes.push_back(std::move(kf));
  }

  const int nk = static_cast<int>(ids.size());
  for (int a = 0; a < nk; ++a) {
    for (int b = a + 1; b < nk && b - a <= policy.temporal_radius; ++b) {
      FlowObservation ab = fetch(ids[a], ids[b]);
      if (mean_flow_magnitude(ab, mask_for(exclude, ids[a])) >= policy.overlap_flow_px) continue;
      FlowObservation ba = fetch(ids[b], ids[a]);
      Grid wab = edge_weight(ab);
      Grid wba = edge_weight(ba);
      graph.edges.push_back({a, b, std::move(ab.flow), std::move(wab)});
      graph.edges.push_back({b, a, std::move(ba.flow), std::move(wba)});
    }
  }
  return graph;
}

FrameGraph apply_masks(const FrameGraph& graph, const std::vector<BoolGrid>& motion,
                       const std::vector<BoolGrid>& semantic) {
  FrameGraph out = graph;
  for (auto& e : out.edges) {
    const int frame = out.keyframes.at(e.i).frame_id;
    for (const auto* masks : {&motion, &semantic}) {
      if (masks->empty()) continue;
      if (frame >= static_cast<int>(masks->size())) throw InvalidArgument("apply_masks: no mask for frame");
      const BoolGrid& m = (*masks)[frame];
      if (m.rows() != e.weight.rows() || m.cols() != e.weight.cols())
        throw InvalidArgument("apply_masks: mask shape does not match confidence grid");
      e.weight = m.select(0.0, e.weight);
    }
  }
  return out;
}

EnergyReport energy_report(const FrameGraph& graph) {
  EnergyReport rep;
  const auto& K = graph.K;
  Eigen::Vector2d q;
  for (const auto& e : graph.edges) {
    const Keyframe& src = graph.keyframes[e.i];
    const PoseSE3 rel = relative(src, graph.keyframes[e.j]);
    long valid = 0;
    for (int r = 0; r < K.height; ++r)
      for (int c = 0; c < K.width; ++c) {
        const double w = e.weight(r, c);
        if (!(w > 0.0) || !src.depth.valid(r, c)) continue;
        ++valid;
        if (!reproject_point(rel, K, Eigen::Vector2d(c, r), src.depth.values(r, c), q)) {
          ++rep.invalid_reprojections;
          continue;
        }
        const double ru = c + e.flow.du(r, c) - q.x();
        const double rv = r + e.flow.dv(r, c) - q.y();
        rep.energy += w * (ru * ru + rv * rv);
        ++rep.residuals;
      }
    rep.edge_valid_pixels.push_back(valid);
  }
  return rep;
}

double energy(const FrameGraph& graph) { return energy_report(graph).energy; }

long edge_valid_pixels(const FrameGraph& graph, const Edge& edge) {
  const auto& depth = graph.keyframes.at(edge.i).depth;
  return ((edge.weight > 0.0) && depth.valid).count();
}

BAIncrement solve_increment(const FrameGraph& graph, const BAConfig& config, double damping) {
  return solve_linearization(graph, linearize(graph, config), damping);
}

FrameGraph apply_increment(const FrameGraph& graph, const BAIncrement& inc, const BAConfig& config) {
  FrameGraph out = graph;
  for (std::size_t m = 0; m < out.keyframes.size(); ++m) {
    auto& kf = out.keyframes[m];
    if (m > 0) kf.pose = retract(kf.pose, inc.pose_deltas[m]);
    auto& d = kf.depth;
    d.values = d.valid.select((d.values + inc.depth_deltas[m]).max(config.min_inverse_depth), d.values);
  }
  return out;
}

BAStepResult ba_step(const FrameGraph& graph, const BAConfig& config, std::optional<double> damping) {
  config.validate();
  BAStepResult out;
  out.energy_before = energy(graph);
  out.energy_after = out.energy_before;
  out.next_damping = damping.value_or(config.damping_init);
  out.graph = graph;
  if (out.energy_before == 0.0 || graph.keyframes.size() < 2) return out;

  const Linearization lin = linearize(graph, config);
  double lambda = out.next_damping;
  std::string last_failure;
  bool solved_once = false;
  for (int attempt = 0; attempt <= config.max_damping_escalations; ++attempt) {
    ++out.attempts;
    BAIncrement inc;
    try {
      inc = solve_linearization(graph, lin, lambda);
      solved_once = true;
    } catch (const SolverError& ex) {
      last_failure = ex.what();
      lambda *= config.damping_scale;
      continue;
    }
    FrameGraph candidate = apply_increment(graph, inc, config);
    const double e = energy(candidate);
    if (std::isfinite(e) && e <= out.energy_before) {
      out.graph = std::move(candidate);
      out.energy_after = e;
      out.accepted = true;
      out.next_damping = lambda / config.damping_decrease;
      return out;
    }
    lambda *= config.damping_scale;
  }
  if (!solved_once) {
    std::ostringstream diag;
    diag << "keyframes " << graph.keyframes.size() << " edges " << graph.edges.size() << " energy "
         << out.energy_before << " final_damping " << lambda << " last_failure " << last_failure;
    throw SolverStalled("ba_step: reduced system singular after damping escalation", diag.str());
  }
  out.next_damping = lambda;
  return out;
}

PoseSE3 motion_only_ba(const CameraIntrinsics& K, const Keyframe& reference, const FlowObservation& flow,
                       const BoolGrid* mask, const PoseSE3& initial, const BAConfig& config) {
  const auto& depth = reference.depth;
  if (depth.height() != K.height || depth.width() != K.width || flow.flow.height() != K.height ||
      flow.flow.width() != K.width || (mask != nullptr && (mask->rows() != K.height || mask->cols() != K.width)))
    throw InvalidArgument("motion_only_ba: shape mismatch");
  const Grid w = edge_weight(flow);

  struct Sample {
    Eigen::Vector2d p;
    Eigen::Vector2d target;
    double d;
    double w;
  };
  std::vector<Sample> samples;
  for (int r = 0; r < K.height; ++r)
    for (int c = 0; c < K.width; ++c) {
      if (!depth.valid(r, c) || !(w(r, c) > 0.0)) continue;
      if (mask != nullptr && (*mask)(r, c)) continue;
      samples.push_back({Eigen::Vector2d(c, r), Eigen::Vector2d(c + flow.flow.du(r, c), r + flow.flow.dv(r, c)),
                         depth.values(r, c), w(r, c)});
    }
  if (static_cast<int>(samples.size()) < config.min_valid_pixels)
    throw DegenerateFrame("motion_only_ba: " + std::to_string(samples.size()) + " valid pixels, need " +
                          std::to_string(config.min_valid_pixels));

  const PoseSE3 ref_inv = reference.pose.inverse();
  auto eval = [&](const PoseSE3& pose) {
    const PoseSE3 rel = pose * ref_inv;
    Eigen::Vector2d q;
    double e = 0.0;
    for (const auto& s : samples)
      if (reproject_point(rel, K, s.p, s.d, q)) e += s.w * (s.target - q).squaredNorm();
    return e;
  };

  PoseSE3 pose = initial;
  double e_cur = eval(pose);
  double lambda = config.damping_init;
  ReprojectionJacobians J;
  for (int it = 0; it < config.motion_only_iterations && e_cur > 0.0; ++it) {
    const PoseSE3 rel = pose * ref_inv;
    Matrix6d H = Matrix6d::Zero();
    Vector6d b = Vector6d::Zero();
    Eigen::Vector2d q;
    for (const auto& s : samples) {
      if (!reproject_point(rel, K, s.p, s.d, q, &J)) continue;
      H.noalias() += s.w * J.d_target_pose.transpose() * J.d_target_pose;
      b.noalias() += s.w * J.d_target_pose.transpose() * (s.target - q);
    }
    bool accepted = false;
    Vector6d step = Vector6d::Zero();
    for (int attempt = 0; attempt <= config.max_damping_escalations; ++attempt) {
      Matrix6d Hd = H;
      for (int i = 0; i < 6; ++i) Hd(i, i) += lambda * (H(i, i) + kDampingFloor);
      Eigen::LDLT<Matrix6d> ldlt(Hd);
      step = ldlt.solve(b);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        lambda *= config.damping_scale;
        continue;
      }
      const PoseSE3 cand = retract(pose, TwistD(step));
      const double e_new = eval(cand);
      if (e_new <= e_cur) {
        pose = cand;
        const double decrease = e_cur - e_new;
        e_cur = e_new;
        lambda /= config.damping_decrease;
        accepted = decrease > 0.0 || step.norm() > 0.0;
        break;
      }
      lambda *= config.damping_scale;
    }
    if (!accepted || step.norm() < 1e-12) break;
  }
  return pose;
}

SolveResult solve(const Sequence& seq, const FlowProvider& provider, const std::vector<BoolGrid>& masks,
                  const BAConfig& config, const KeyframePolicy& policy) {
  config.validate();
  seq.K.validate();
  const int n = seq.size();
  if (n < 2) throw InvalidArgument("solve: need at least 2 frames");
  if (provider.frame_count() < n) throw InvalidArgument("solve: flow provider covers fewer frames than the sequence");
  if (!masks.empty() && static_cast<int>(masks.size()) != n)
    throw InvalidArgument("solve: mask count does not match frame count");
  if (!seq.initial_poses.empty() && static_cast<int>(seq.initial_poses.size()) != n)
    throw InvalidArgument("solve: initial pose count does not match frame count");

  SolveResult result;

  // Initial world-to-camera poses, chained frame to frame when not supplied.
  std::vector<PoseSE3> init = seq.initial_poses;
  if (init.empty()) {
    init.assign(n, PoseSE3::Identity());
    for (int f = 1; f < n; ++f) {
      Keyframe ref{f - 1, init[f - 1], seq.initial_depth(f - 1)};
      try {
        init[f] = motion_only_ba(seq.K, ref, provider.flow(f - 1, f), mask_for(masks, f - 1), init[f - 1], config);
      } catch (const DegenerateFrame& ex) {
        init[f] = init[f - 1];
        result.warnings.push_back("initialization: frame " + std::to_string(f) + ": " + ex.what());
      }
    }
  }
  Sequence seeded = seq;
  seeded.initial_poses = init;

  auto to_trajectory = [&](const std::vector<PoseSE3>& world_to_cam) {
    Trajectory t;
    for (int f = 0; f < n; ++f) t.poses.push_back({seq.timestamps[f], world_to_cam[f].inverse()});
    return t;
  };

  FrameGraph graph = apply_masks(build_frame_graph(seeded, provider, policy, masks), masks);

  std::vector<Edge> kept;
  for (auto& e : graph.edges) {
    const long valid = edge_valid_pixels(graph, e);
    const int fi = graph.keyframes[e.i].frame_id;
    const int fj = graph.keyframes[e.j].frame_id;
    if (valid < config.min_valid_pixels) {
      result.dropped_edges.emplace_back(fi, fj);
      result.warnings.push_back("edge " + std::to_string(fi) + "->" + std::to_string(fj) + " dropped: " +
                                std::to_string(valid) + " valid pixels");
      continue;
    }
    result.kept_edges.emplace_back(fi, fj);
    result.edge_valid_pixels.push_back(valid);
    kept.push_back(std::move(e));
  }
  graph.edges = std::move(kept);
  for (const auto& kf : graph.keyframes) result.keyframe_ids.push_back(kf.frame_id);

  bool isolated = false;
  {
    std::vector<int> degree(graph.keyframes.size(), 0);
    for (const auto& e : graph.edges) ++degree[e.i], ++degree[e.j];
    isolated = std::any_of(degree.begin(), degree.end(), [](int d) { return d == 0; });
  }
  if (isolated || !connected(static_cast<int>(graph.keyframes.size()), graph.edges)) {
    result.error = "frame graph disconnected after dropping edges with too few valid pixels";
    result.trajectory = to_trajectory(init);
    result.graph = std::move(graph);
    return result;
  }

  double lambda = config.damping_init;
  try {
    for (int it = 0; it < config.max_iterations; ++it) {
      BAStepResult step = ba_step(graph, config, lambda);
      result.iterations.push_back({it, step.energy_before, step.energy_after, lambda, step.accepted});
      lambda = step.next_damping;
      graph = std::move(step.graph);
      if (!step.accepted) break;
      if (step.energy_before <= 0.0 ||
          (step.energy_before - step.energy_after) / step.energy_before < config.convergence_tol)
        break;
    }
  } catch (const SolverStalled& ex) {
    result.error = std::string(ex.what()) + " [" + ex.diagnostics() + "]";
  }

  // Keyframes take the BA estimate; the rest get motion-only BA against the nearest keyframe.
  std::vector<PoseSE3> poses(n);
  std::vector<bool> solved(n, false);
  for (const auto& kf : graph.keyframes) {
    poses[kf.frame_id] = kf.pose;
    solved[kf.frame_id] = true;
  }
  for (int f = 0; f < n; ++f) {
    if (solved[f]) continue;
    const Keyframe* nearest = nullptr;
    for (const auto& kf : graph.keyframes)
      if (nearest == nullptr || std::abs(kf.frame_id - f) < std::abs(nearest->frame_id - f)) nearest = &kf;
    const PoseSE3 guess = init[f] * init[nearest->frame_id].inverse() * nearest->pose;
    try {
      poses[f] = motion_only_ba(seq.K, *nearest, provider.flow(nearest->frame_id, f),
                                mask_for(masks, nearest->frame_id), guess, config);
      solved[f] = true;
    } catch (const DegenerateFrame& ex) {
      result.degenerate_frames.push_back(f);
      result.warnings.push_back("frame " + std::to_string(f) + ": " + ex.what() + "; pose interpolated");
    }
  }
  for (int f : result.degenerate_frames) {
    int lo = f, hi = f;
    while (lo >= 0 && !solved[lo]) --lo;
    while (hi < n && !solved[hi]) ++hi;
    if (lo < 0) {
      poses[f] = poses[hi];
    } else if (hi >= n) {
      poses[f] = poses[lo];
    } else {
      const double alpha = (seq.timestamps[f] - seq.timestamps[lo]) / (seq.timestamps[hi] - seq.timestamps[lo]);
      poses[f] = interpolate(poses[lo].inverse(), poses[hi].inverse(), alpha).inverse();
    }
  }

  result.trajectory = to_trajectory(poses);
  result.graph = std::move(graph);
  return result;
}

std::string format_diagnostics(const SolveResult& result) {
  std::ostringstream out;
  out.precision(12);
  for (const auto& it : result.iterations)
    out << "iter " << it.iteration << " energy_before " << it.energy_before << " energy_after " << it.energy_after
        << " damping " << it.damping << " accepted " << (it.accepted ? 1 : 0) << "\n";
  for (std::size_t e = 0; e < result.kept_edges.size(); ++e)
    out << "edge " << result.kept_edges[e].first << " " << result.kept_edges[e].second << " valid_pixels "
        << result.edge_valid_pixels[e] << "\n";
  for (const auto& d : result.dropped_edges) out << "dropped_edge " << d.first << " " << d.second << "\n";
  for (int f : result.degenerate_frames) out << "degenerate_frame " << f << "\n";
  for (const auto& w : result.warnings) out << "warning " << w << "\n";
  if (result.error) out << "error " << *result.error << "\n";
  return out.str();
}

}  // namespace dynrecon
