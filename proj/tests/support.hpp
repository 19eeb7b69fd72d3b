#pragma once

// Test oracles, random generators and synthetic scenes shared by the unit
// suites and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "artrack/collision.hpp"
#include "artrack/procedural.hpp"
#include "artrack/salient.hpp"
#include "artrack/solver.hpp"
#include "artrack/synth.hpp"

namespace artrack::testing {

inline constexpr double kDeg = std::numbers::pi / 180.0;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(gen_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen_); }
  Vec3 vec(double a, double b) { return {uniform(a, b), uniform(a, b), uniform(a, b)}; }
  Vec3 unit() {
    Vec3 v;
    do v = Vec3(normal(), normal(), normal());
    while (v.norm() < 1e-3);
    return v.normalized();
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Finite differences

/// Central differences of r(retract(pose, h e_k)) over every tangent
/// coordinate k.
inline Eigen::MatrixXd fd_jacobian(const Skeleton& s, const Pose& pose,
                                   const std::function<Eigen::VectorXd(const Pose&)>& r, double h = 1e-6) {
  const int dof = s.dof_count();
  const Eigen::VectorXd r0 = r(pose);
  Eigen::MatrixXd J(r0.size(), dof);
  for (int k = 0; k < dof; ++k) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(dof);
    d[k] = h;
    J.col(k) = (r(retract(s, pose, d)) - r(retract(s, pose, -d))) / (2.0 * h);
  }
  return J;
}

/// ||A - B||_F / ||B||_F, or the absolute Frobenius gap when B vanishes.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double nb = b.norm();
  const double gap = (a - b).norm();
  return nb > 1e-12 ? gap / nb : gap;
}

// ---------------------------------------------------------------------------
// Brute-force oracles

inline std::vector<CollisionPair> brute_collisions(std::span<const Vec3> v, std::span<const Triangle> t,
                                                   const PairFilter& skip = {}) {
  std::vector<CollisionPair> out;
  for (int a = 0; a < static_cast<int>(t.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(t.size()); ++b) {
      if (triangles_share_vertex(t[a], t[b])) continue;
      if (skip && skip(a, b)) continue;
      if (triangles_intersect(v[t[a][0]], v[t[a][1]], v[t[a][2]], v[t[b][0]], v[t[b][1]], v[t[b][2]]))
        out.push_back({a, b});
    }
  return out;
}

/// O(N^2) Euclidean distance transform with lowest-id tie breaking.
inline DistanceTransform brute_distance_transform(std::span<const std::uint8_t> mask, int w, int h) {
  DistanceTransform dt{w, h, std::vector<double>(mask.size()), std::vector<int>(mask.size())};
  for (int p = 0; p < w * h; ++p) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    int arg = -1;
    for (int q = 0; q < w * h; ++q) {
      if (!mask[q]) continue;
      const std::int64_t dx = p % w - q % w, dy = p / w - q / w;
      const std::int64_t d2 = dx * dx + dy * dy;
      if (d2 < best) best = d2, arg = q;
    }
    dt.distance[p] = std::sqrt(static_cast<double>(best));
    dt.nearest[p] = arg;
  }
  return dt;
}

inline std::optional<int> linear_nearest(std::span<const Vec3> pts, const Vec3& q, double radius) {
  int best = -1;
  double bd = radius * radius;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const double d = (pts[i] - q).squaredNorm();
    if (d < bd || (d == bd && best < 0)) bd = d, best = i;
  }
  if (best < 0) return std::nullopt;
  return best;
}

/// Minimum objective over every feasible labelling: each detection picks a
/// distinct fingertip or is rejected.
inline double enumerate_assignment(const Eigen::MatrixXd& w_st, const Eigen::VectorXd& w_s, double lambda) {
  const int S = static_cast<int>(w_st.rows()), T = static_cast<int>(w_st.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(S, -1);
  std::vector<char> used(T, 0);
  std::function<void(int)> rec = [&](int s) {
    if (s == S) {
      Eigen::MatrixXi e = Eigen::MatrixXi::Zero(S, T);
      Eigen::VectorXi alpha = Eigen::VectorXi::Zero(S), beta = Eigen::VectorXi::Ones(T);
      for (int i = 0; i < S; ++i) {
        if (pick[i] < 0) alpha[i] = 1;
        else e(i, pick[i]) = 1, beta[pick[i]] = 0;
      }
      best = std::min(best, assignment_objective(e, alpha, beta, w_st, w_s, lambda));
      return;
    }
    pick[s] = -1;
    rec(s + 1);
    for (int t = 0; t < T; ++t) {
      if (used[t]) continue;
      used[t] = 1;
      pick[s] = t;
      rec(s + 1);
      used[t] = 0;
    }
    pick[s] = -1;
  };
  rec(0);
  return best;
}

/// Piecewise field intensity written out directly from its three branches.
inline double upsilon_reference(double x, double sigma) {
  if (x <= -sigma) return -x + 1.0 - sigma;
  if (x >= sigma) return 0.0;
  return -(1.0 - 2.0 * sigma) / (4.0 * sigma * sigma) * x * x - x / (2.0 * sigma) + 0.25 * (3.0 - 2.0 * sigma);
}

// ---------------------------------------------------------------------------
// Meshes and poses

/// Random closed mesh: a jittered UV sphere.
inline MeshPart random_blob(Rng& rng, const Vec3& center, double radius, int around = 10, int rings = 6) {
  MeshPart m = sphere_mesh(center, radius, rng.unit(), around, rings);
  for (Vec3& v : m.vertices) v += (v - center).normalized() * rng.uniform(-0.2, 0.2) * radius;
  return m;
}

inline Pose random_angles(const SkinnedModel& m, Pose p, Rng& rng, double fraction) {
  const Skeleton& s = m.skeleton;
  for (int j = 0; j < s.size(); ++j) {
    const Joint& jt = s.joint(j);
    if (jt.type != JointType::revolute) continue;
    const double mid = 0.5 * (jt.lower + jt.upper), half = 0.5 * (jt.upper - jt.lower);
    p.theta[s.dof_offset(j)] = mid + fraction * rng.uniform(-half, half);
  }
  return p;
}

/// Collision-free articulated motion of the procedural hand around its
/// home pose.
inline std::vector<Pose> hand_motion(const SkinnedModel& hand, int frames, std::uint64_t seed) {
  MotionOptions mo;
  mo.frames = frames;
  mo.seed = seed;
  mo.dof_scale = lateral_dof_scale(hand, 0.3);
  return synthetic_motion(hand, hand_home_pose(hand), mo);
}

/// Random hand pose: root rotated up to ~20 degrees around the home pose and
/// angles drawn from the middle of their ranges.
inline Pose random_hand_pose(const SkinnedModel& hand, Rng& rng, double fraction = 0.5) {
  Pose p = random_angles(hand, Pose::zero(hand.skeleton), rng, fraction);
  const Vec3 w = rng.unit() * rng.uniform(0.0, 0.35);
  const RigidTransform t{Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix(),
                         Vec3(rng.uniform(-20, 20), rng.uniform(-30, 10), rng.uniform(420, 480))};
  set_root_transform(hand.skeleton, p, hand.skeleton.roots().front(), t);
  return p;
}

/// Index of the first joint whose name ends with `suffix`.
inline int joint_named(const SkinnedModel& m, const std::string& suffix) {
  for (int j = 0; j < m.skeleton.size(); ++j)
    if (m.skeleton.joint(j).name.ends_with(suffix)) return j;
  throw ValidationError("no joint named " + suffix);
}

inline void set_angle(const SkinnedModel& m, Pose& p, const std::string& suffix, double angle) {
  p.theta[m.skeleton.dof_offset(joint_named(m, suffix))] = angle;
}

/// Largest penetration field value over the model's current collisions.
inline double model_penetration(const SkinnedModel& m, const Pose& pose, double sigma = 0.5) {
  const PosedModel posed = pose_model(m, pose);
  const PairFilter skip = [&](int a, int b) { return m.bones_adjacent(m.triangle_bone[a], m.triangle_bone[b]); };
  const auto pairs = find_collisions(posed.vertices, m.mesh.triangles, skip);
  return max_penetration(pairs, posed.vertices, m.mesh.triangles, sigma);
}

/// Rendered observation of a pose (optionally with depth noise and
/// fingertip detections).
inline FrameObservation observe(const SkinnedModel& m, const Pose& pose, double noise = 0.0, std::uint64_t seed = 1,
                                bool detections = false, const CameraIntrinsics& k = {}) {
  SynthOptions so;
  so.noise = noise;
  so.seed = seed;
  so.detections = detections;
  const std::vector<Pose> one{pose};
  SyntheticSequence seq = generate_synthetic(m, one, k, so);
  FrameObservation obs;
  obs.depth = std::move(seq.frames.front());
  obs.detections = detections_for_frame(seq.detections, 0, obs.depth);
  return obs;
}

inline std::vector<FrameObservation> observe_all(const SkinnedModel& m, std::span<const Pose> poses, double noise,
                                                 std::uint64_t seed, bool detections = false) {
  SynthOptions so;
  so.noise = noise;
  so.seed = seed;
  so.detections = detections;
  SyntheticSequence seq = generate_synthetic(m, poses, CameraIntrinsics{}, so);
  std::vector<FrameObservation> out;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    FrameObservation obs;
    obs.depth = std::move(seq.frames[f]);
    obs.detections = detections_for_frame(seq.detections, static_cast<int>(f), obs.depth);
    out.push_back(std::move(obs));
  }
  return out;
}

inline double mean_joint_error(const SkinnedModel& m, std::span<const Pose> est, std::span<const Pose> ref) {
  return evaluate(trajectory_joints(m, est), trajectory_joints(m, ref), CameraIntrinsics{}).stats_3d.mean;
}

/// Concatenated pose of merged models, in part order.
inline Pose concat_poses(std::initializer_list<const Pose*> parts) {
  Eigen::Index n = 0;
  for (const Pose* p : parts) n += p->theta.size();
  Pose out{Eigen::VectorXd(n)};
  n = 0;
  for (const Pose* p : parts) {
    out.theta.segment(n, p->theta.size()) = p->theta;
    n += p->theta.size();
  }
  return out;
}

/// Invalidates every rendered pixel covered by a bone whose name contains
/// `part`.
inline void mask_part(RenderResult& r, const SkinnedModel& m, const std::string& part) {
  for (std::size_t i = 0; i < r.triangle.size(); ++i) {
    const int t = r.triangle[i];
    if (t >= 0 && m.skeleton.joint(m.triangle_bone[t]).name.find(part) != std::string::npos) r.depth.depth[i] = 0.0f;
  }
}

/// Palm-up hand with index and middle extended as two parallel rods and a
/// ball cradled on them. `slipped` lowers the middle finger so the ball
/// only rests on the index.
struct GraspScene {
  SkinnedModel model;
  Pose truth;
  Pose slipped;
  FrameObservation occluded;  // truth rendered with the middle finger masked out
};

inline GraspScene grasp_scene(double radius = 25.0) {
  const SkinnedModel hand = procedural_hand(), ball = procedural_ball(radius);
  GraspScene g{merge_models({hand, ball}), {}, {}, {}};
  Pose hp = placed_pose(hand, {Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitX()).toRotationMatrix(),
                               Vec3(0, -90, 380)});
  for (const char* n : {"ring_mcp_flex", "pinky_mcp_flex"}) set_angle(hand, hp, n, 1.5);
  for (const char* n : {"ring_pip", "pinky_pip"}) set_angle(hand, hp, n, 1.9);
  set_angle(hand, hp, "thumb_cmc_abd", -0.1);
  const std::vector<Vec3> jp = joint_positions(hand, hp);
  const Vec3 ip = jp[joint_named(hand, "index_pip")], mp = jp[joint_named(hand, "middle_pip")];
  const double rod = 7.75, half = 0.5 * (mp.x() - ip.x());
  const Vec3 c(0.5 * (ip.x() + mp.x()), ip.y() + std::sqrt((radius + rod) * (radius + rod) - half * half) - 0.5,
               ip.z() + 12.0);
  const Pose bp = placed_pose(ball, {Mat3::Identity(), c});
  g.truth = concat_poses({&hp, &bp});
  g.slipped = g.truth;
  set_angle(g.model, g.slipped, "middle_mcp_flex", -0.1);
  const PosedModel posed = pose_model(g.model, g.truth);
  RenderResult r = render_depth(posed.vertices, g.model.mesh.triangles, CameraIntrinsics{});
  mask_part(r, g.model, "middle_");
  g.occluded.depth = std::move(r.depth);
  return g;
}

/// Simulated object displacement at a pose, with no fixed scene.
inline double object_displacement(const SkinnedModel& m, const Pose& pose) {
  return analyze_stability(m, pose_model(m, pose), {}, Metric::point_to_plane).current.displacement;
}

// Correspondences of the grasp scene at a perturbed pose, with the ball
// pushed 2 mm into the index so collision rows exist.
struct Linearized {
  GraspScene g;
  Pose pose;
  CorrespondenceSet corr;
};

inline Linearized grasp_linearization(Rng& rng, Metric metric) {
  Linearized l{grasp_scene(), {}, {}};
  const SkinnedModel& m = l.g.model;
  l.pose = l.g.slipped;
  for (int j = 0; j < m.skeleton.size(); ++j)
    if (m.skeleton.joint(j).type == JointType::revolute) l.pose.theta[m.skeleton.dof_offset(j)] += rng.uniform(-0.03, 0.03);
  // Index tip lifted ~12 mm off its detection so salient rows exist.
  l.pose.theta[m.skeleton.dof_offset(joint_named(m, "index_mcp_flex"))] += 0.15;
  const int ball_root = m.skeleton.roots().back();
  RigidTransform t = root_transform(m.skeleton, l.pose, ball_root);
  t.translation += Vec3(rng.uniform(-1, 1), -2.0, rng.uniform(-1, 1));
  set_root_transform(m.skeleton, l.pose, ball_root, t);
  TrackerConfig cfg;
  cfg.metric = metric;
  const FrameObservation obs = observe(m, l.g.truth, 0.0, 1, true);
  const PreparedFrame f = prepare_frame(obs, cfg);
  l.corr = find_correspondences(m, l.pose, f, cfg);
  // With mm costs and lambda = 1.2 the optimal assignment rejects pairs
  // farther than lambda (w_s + 1) mm, inside the 10 mm skip distance, so
  // salient rows come from assigning each detection to its nearest tip.
  const PosedModel posed = pose_model(m, l.pose);
  const RenderResult render = render_depth(posed.vertices, m.mesh.triangles, obs.depth.intrinsics);
  const auto tips = fingertip_regions(m, posed, render.visible);
  const AssignmentCosts costs = assignment_costs(f.detections, tips, cfg.weight_mode, cfg.confidence_threshold);
  AssignmentSolution sol;
  sol.e = Eigen::MatrixXi::Zero(costs.w_st.rows(), costs.w_st.cols());
  for (Eigen::Index d = 0; d < costs.w_st.rows(); ++d) {
    Eigen::Index t = 0;
    costs.w_st.row(d).minCoeff(&t);
    sol.e(d, t) = 1;
  }
  l.corr.salient = salient_correspondences(sol, costs, f.detections, tips, posed, obs.depth.intrinsics, metric,
                                           cfg.salient);
  return l;
}

}  // namespace artrack::testing
