#pragma once

// Seven-term objective assembled as a stacked least-squares system and
// minimized by damped Gauss-Newton inside the alternating
// correspondence/solve loop.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "artrack/collision.hpp"
#include "artrack/data_terms.hpp"
#include "artrack/model.hpp"
#include "artrack/nearest_neighbor.hpp"
#include "artrack/physics.hpp"
#include "artrack/raster.hpp"
#include "artrack/salient.hpp"

namespace artrack {

enum class Term { m2d, d2m, collision, salient, physics, anatomy, regularization };
inline constexpr int kTermCount = 7;

inline const char* term_name(Term t) {
  constexpr std::array<const char*, kTermCount> names{"m2d", "d2m", "collision", "salient", "physics", "anatomy",
                                                      "regularization"};
  return names[static_cast<int>(t)];
}

struct EnergyWeights {
  double gamma_m2d = 1.0;
  double gamma_d2m = 1.0;
  double gamma_c = 10.0;
  double gamma_s = 1.0;
  double gamma_ph = 10.0;
  double anatomy_factor = 0.0015;        // gamma_a = factor * C_all
  double regularization_factor = 0.02;   // gamma_r = factor * C_all
  std::optional<double> gamma_a;         // fixed value instead of the C_all rule
  std::optional<double> gamma_r;
  double lambda = 1.2;
  double p = 10.0;

  double anatomy(std::size_t c_all) const { return gamma_a.value_or(anatomy_factor * static_cast<double>(c_all)); }
  double regularization(std::size_t c_all) const {
    return gamma_r.value_or(regularization_factor * static_cast<double>(c_all));
  }

  void validate() const {
    for (double g : {gamma_m2d, gamma_d2m, gamma_c, gamma_s, gamma_ph, anatomy_factor, regularization_factor, lambda, p})
      if (!(g >= 0.0)) throw ValidationError("energy weights must be non-negative");
    if ((gamma_a && !(*gamma_a >= 0.0)) || (gamma_r && !(*gamma_r >= 0.0)))
      throw ValidationError("energy weights must be non-negative");
  }
};

/// Correspondences of one outer iteration, fixed while the step is taken.
struct CorrespondenceSet {
  std::vector<PointCorrespondence> m2d;
  std::vector<LineCorrespondence> d2m;
  std::vector<CollisionCorrespondence> collision;
  std::vector<PointCorrespondence> salient;
  std::vector<PointCorrespondence> physics;

  /// C_all
  std::size_t count() const { return m2d.size() + d2m.size() + collision.size() + salient.size() + physics.size(); }
};

/// gamma values resolved for one iteration (C_all frozen).
struct TermWeights {
  std::array<double, kTermCount> gamma{};
  double p = 10.0;

  static TermWeights resolve(const EnergyWeights& w, std::size_t c_all) {
    TermWeights t;
    t.gamma = {w.gamma_m2d, w.gamma_d2m, w.gamma_c, w.gamma_s, w.gamma_ph, w.anatomy(c_all), w.regularization(c_all)};
    t.p = w.p;
    return t;
  }
  double operator[](Term term) const { return gamma[static_cast<int>(term)]; }
};

struct RowSpan {
  int begin = 0;
  int rows = 0;
};

struct ResidualSystem {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;  // empty when not requested
  std::array<RowSpan, kTermCount> spans{};

  double energy() const { return r.squaredNorm(); }
  double term_energy(Term t) const {
    const RowSpan& s = spans[static_cast<int>(t)];
    return r.segment(s.begin, s.rows).squaredNorm();
  }
};

struct ObjectiveContext {
  const SkinnedModel* model = nullptr;
  Pose previous;  // theta tilde
  Metric metric = Metric::point_to_plane;
  double sigma = 0.5;
};

namespace detail {

/// Lazily computed per-vertex Jacobians at one pose.
class VertexJacobians {
 public:
  VertexJacobians(const SkinnedModel& m, const PoseLinearization& lin) : m_(m), lin_(lin) {
    jv_.resize(m.mesh.vertices.size());
    jn_.resize(m.mesh.vertices.size());
  }
  const Mat3X& point(int v) {
    if (!jv_[v]) jv_[v] = lin_.vertex_jacobian(m_.mesh.vertices[v], m_.weights[v]);
    return *jv_[v];
  }
  const Mat3X& normal(int v) {
    if (!jn_[v]) jn_[v] = lin_.normal_jacobian(m_.mesh.vertex_normals[v], m_.weights[v]);
    return *jn_[v];
  }

 private:
  const SkinnedModel& m_;
  const PoseLinearization& lin_;
  std::vector<std::optional<Mat3X>> jv_, jn_;
};

inline int point_rows(Metric m) { return m == Metric::point_to_point ? 3 : 1; }

}  // namespace detail

/// Residuals (and optionally the Jacobian) of the full objective at `pose`
/// with correspondences held fixed. Terms with gamma = 0 contribute no rows.
inline ResidualSystem assemble(const ObjectiveContext& ctx, const Pose& pose, const CorrespondenceSet& corr,
                               const TermWeights& w, bool with_jacobian) {
  const SkinnedModel& m = *ctx.model;
  const Skeleton& s = m.skeleton;
  const int dof = s.dof_count();
  const PosedModel posed = pose_model(m, pose);
  const int prow = detail::point_rows(ctx.metric);

  ResidualSystem sys;
  std::array<int, kTermCount> rows{};
  auto active = [&](Term t) { return w[t] > 0.0; };
  if (active(Term::m2d)) rows[0] = prow * static_cast<int>(corr.m2d.size());
  if (active(Term::d2m)) rows[1] = 3 * static_cast<int>(corr.d2m.size());
  if (active(Term::collision)) rows[2] = prow * static_cast<int>(corr.collision.size());
  if (active(Term::salient)) rows[3] = prow * static_cast<int>(corr.salient.size());
  if (active(Term::physics)) rows[4] = prow * static_cast<int>(corr.physics.size());
  int n_revolute = 0, n_angles = 0;
  for (int k = 0; k < dof; ++k) n_angles += s.is_angle_coordinate(k) ? 1 : 0;
  for (const Joint& j : s.joints()) n_revolute += j.type == JointType::revolute ? 1 : 0;
  if (active(Term::anatomy)) rows[5] = 2 * n_revolute;
  if (active(Term::regularization)) rows[6] = n_angles;
  int total = 0;
  for (int t = 0; t < kTermCount; ++t) {
    sys.spans[t] = {total, rows[t]};
    total += rows[t];
  }
  sys.r = Eigen::VectorXd::Zero(total);
  if (with_jacobian) sys.J = Eigen::MatrixXd::Zero(total, dof);

  std::optional<PoseLinearization> lin;
  std::optional<detail::VertexJacobians> vj;
  if (with_jacobian) {
    lin.emplace(s, m.rest_transforms, posed.transforms);
    vj.emplace(m, *lin);
  }

  auto point_term = [&](Term t, std::span<const PointCorrespondence> list) {
    if (!active(t)) return;
    const double sw = std::sqrt(w[t]);
    int row = sys.spans[static_cast<int>(t)].begin;
    for (const PointCorrespondence& c : list) {
      const Vec3& v = posed.vertices[c.vertex];
      const Vec3& n = posed.normals[c.vertex];
      if (ctx.metric == Metric::point_to_point) {
        sys.r.segment<3>(row) = sw * residual_point(c, v);
        if (with_jacobian) sys.J.middleRows(row, 3) = sw * jacobian_point(vj->point(c.vertex));
        row += 3;
      } else {
        sys.r[row] = sw * residual_plane(c, v, n);
        if (with_jacobian) sys.J.row(row) = sw * jacobian_plane(c, v, n, vj->point(c.vertex), vj->normal(c.vertex));
        row += 1;
      }
    }
  };
  point_term(Term::m2d, corr.m2d);
  point_term(Term::salient, corr.salient);
  point_term(Term::physics, corr.physics);

  if (active(Term::d2m)) {
    const double sw = std::sqrt(w[Term::d2m]);
    int row = sys.spans[static_cast<int>(Term::d2m)].begin;
    for (const LineCorrespondence& c : corr.d2m) {
      sys.r.segment<3>(row) = sw * residual_line(c, posed.vertices[c.vertex]);
      if (with_jacobian) sys.J.middleRows(row, 3) = sw * jacobian_line(c, vj->point(c.vertex));
      row += 3;
    }
  }

  if (active(Term::collision)) {
    const double sw = std::sqrt(w[Term::collision]);
    int row = sys.spans[static_cast<int>(Term::collision)].begin;
    for (const CollisionCorrespondence& c : corr.collision) {
      const Triangle& f = m.mesh.triangles[c.receiver_face];
      const Vec3& v = posed.vertices[c.intruder_vertex];
      const PsiGradient g = psi_with_gradient(v, posed.vertices[f[0]], posed.vertices[f[1]], posed.vertices[f[2]],
                                              ctx.sigma);
      Eigen::RowVectorXd dpsi;
      if (with_jacobian) {
        dpsi = g.grad.segment<3>(0) * vj->point(c.intruder_vertex);
        for (int k = 0; k < 3; ++k) dpsi += g.grad.segment<3>(3 + 3 * k) * vj->point(f[k]);
      }
      if (ctx.metric == Metric::point_to_point) {
        const Vec3& n = posed.normals[c.intruder_vertex];
        sys.r.segment<3>(row) = -sw * g.value * n;
        if (with_jacobian)
          sys.J.middleRows(row, 3) = -sw * (n * dpsi + g.value * vj->normal(c.intruder_vertex));
        row += 3;
      } else {
        sys.r[row] = -sw * g.value;
        if (with_jacobian) sys.J.row(row) = -sw * dpsi;
        row += 1;
      }
    }
  }

  if (active(Term::anatomy)) {
    const double sw = std::sqrt(w[Term::anatomy]);
    int row = sys.spans[static_cast<int>(Term::anatomy)].begin;
    for (int j = 0; j < s.size(); ++j) {
      const Joint& jt = s.joint(j);
      if (jt.type != JointType::revolute) continue;
      const int k = s.dof_offset(j);
      const double th = pose.theta[k];
      const double lo = sw * std::exp(w.p * (jt.lower - th) / 2.0);
      const double hi = sw * std::exp(w.p * (th - jt.upper) / 2.0);
      sys.r[row] = lo;
      sys.r[row + 1] = hi;
      if (with_jacobian) {
        sys.J(row, k) = -w.p / 2.0 * lo;
        sys.J(row + 1, k) = w.p / 2.0 * hi;
      }
      row += 2;
    }
  }

  if (active(Term::regularization)) {
    const double sw = std::sqrt(w[Term::regularization]);
    int row = sys.spans[static_cast<int>(Term::regularization)].begin;
    for (int k = 0; k < dof; ++k) {
      if (!s.is_angle_coordinate(k)) continue;
      sys.r[row] = sw * (pose.theta[k] - ctx.previous.theta[k]);
      if (with_jacobian) sys.J(row, k) = sw;
      ++row;
    }
  }
  return sys;
}

struct LmParams {
  double initial_damping = 1e-6;
  double increase = 10.0;
  double decrease = 10.0;
  int max_retries = 5;
};

struct StepResult {
  Pose pose;
  Eigen::VectorXd delta;  // zero when rejected
  double energy_before = 0.0;
  double energy_after = 0.0;
  double damping = 0.0;  // damping of the accepted step, or the last tried
  int retries = 0;
  bool accepted = false;
};

/// One damped Gauss-Newton step: (J^T J + mu I) delta = -J^T r, retried
/// with larger mu while the energy goes up. `damping` carries mu across
/// calls (divided by `decrease` after an accepted step).
inline StepResult gauss_newton_step(const ObjectiveContext& ctx, const Pose& pose, const CorrespondenceSet& corr,
                                    const TermWeights& w, double& damping, const LmParams& lm = {}) {
  const ResidualSystem sys = assemble(ctx, pose, corr, w, true);
  if (sys.r.size() == 0) throw InsufficientObservation("objective has no residual rows");
  const Eigen::MatrixXd jtj = sys.J.transpose() * sys.J;
  const Eigen::VectorXd jtr = sys.J.transpose() * sys.r;
  const int dof = static_cast<int>(jtj.rows());

  StepResult out{pose, Eigen::VectorXd::Zero(dof), sys.energy(), sys.energy(), damping, 0, false};
  for (int attempt = 0; attempt <= lm.max_retries; ++attempt) {
    const Eigen::MatrixXd a = jtj + damping * Eigen::MatrixXd::Identity(dof, dof);
    const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
    out.damping = damping;
    out.retries = attempt;
    if (delta.allFinite()) {
      const Pose cand = retract(ctx.model->skeleton, pose, delta);
      const double e = assemble(ctx, cand, corr, w, false).energy();
      if (std::isfinite(e) && e <= out.energy_before) {
        out.pose = cand;
        out.delta = delta;
        out.energy_after = e;
        out.accepted = true;
        damping /= lm.decrease;
        return out;
      }
    }
    damping *= lm.increase;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tracking loop.

struct IterationPolicy {
  int iterations = 10;              // fixed count per frame
  int first_frame_iterations = 50;
  std::optional<double> stop_eps;   // mm; switches to the convergence criterion
  int max_iterations = 50;          // cap under stop_eps

  void validate() const {
    if (iterations < 1 || first_frame_iterations < 1 || max_iterations < 1 || (stop_eps && !(*stop_eps > 0)))
      throw ValidationError("invalid iteration policy");
  }
};

struct TrackerConfig {
  EnergyWeights weights;
  Metric metric = Metric::point_to_plane;
  IterationPolicy policy;
  GatingParams gating;
  double sigma = 0.5;
  SalientParams salient;
  WeightMode weight_mode = WeightMode::confidence;
  double confidence_threshold = 3.0;  // c_thr
  PhysicsParams physics;
  std::vector<StaticBody> static_scene;
  bool smooth_depth = true;
  LmParams lm;

  void validate() const {
    weights.validate();
    policy.validate();
    gating.validate();
    physics.sim.validate();
    if (!(sigma > 0 && sigma < 1) || !(confidence_threshold > 0)) throw ValidationError("invalid tracker parameters");
  }
};

struct FrameObservation {
  DepthFrame depth;
  std::vector<Detection> detections;  // already lifted to 3D
};

struct IterationRecord {
  std::array<std::size_t, 5> correspondences{};  // m2d, d2m, collision, salient, physics
  double energy_before = 0.0;
  double energy_after = 0.0;
  double damping = 0.0;
  bool accepted = false;
  double joint_displacement = 0.0;  // mm, mean over joints
};

struct SolveReport {
  int iterations = 0;
  double final_energy = 0.0;
  std::vector<double> energy_trace;  // energy after each iteration's step
  std::vector<IterationRecord> steps;
  double last_displacement = 0.0;
  bool converged = false;
};

struct FrameResult {
  Pose pose;
  SolveReport report;
};

/// Mean distance between corresponding joint positions of two poses.
inline double mean_joint_displacement(const SkinnedModel& m, const Pose& a, const Pose& b) {
  const std::vector<Vec3> ja = joint_positions(m, a), jb = joint_positions(m, b);
  double sum = 0.0;
  for (std::size_t j = 0; j < ja.size(); ++j) sum += (ja[j] - jb[j]).norm();
  return ja.empty() ? 0.0 : sum / static_cast<double>(ja.size());
}

/// Per-frame data that does not depend on the pose.
struct PreparedFrame {
  const DepthFrame* depth = nullptr;
  PointCloud cloud;
  NearestNeighborIndex index;
  std::vector<Detection> detections;  // confident, non-empty
};

inline PreparedFrame prepare_frame(const FrameObservation& obs, const TrackerConfig& cfg) {
  PreparedFrame f;
  f.depth = &obs.depth;
  f.cloud = cfg.smooth_depth ? bilateral_smooth_and_normals(obs.depth) : cloud_with_normals(obs.depth);
  f.index = NearestNeighborIndex(f.cloud.points);
  f.detections = filter_detections(obs.detections, cfg.confidence_threshold);
  return f;
}

/// Correspondence search at the current pose.
inline CorrespondenceSet find_correspondences(const SkinnedModel& m, const Pose& pose, const PreparedFrame& f,
                                              const TrackerConfig& cfg) {
  CorrespondenceSet c;
  const PosedModel posed = pose_model(m, pose);
  const CameraIntrinsics& k = f.depth->intrinsics;
  const RenderResult render = render_depth(posed.vertices, m.mesh.triangles, k);
  const EnergyWeights& w = cfg.weights;
  if (w.gamma_m2d > 0) c.m2d = model_to_data(posed, render.visible, f.cloud, f.index, cfg.gating, cfg.metric);
  if (w.gamma_d2m > 0) c.d2m = data_to_model(*f.depth, render, posed, cfg.gating);
  if (w.gamma_c > 0) {
    const PairFilter skip = [&](int a, int b) { return m.bones_adjacent(m.triangle_bone[a], m.triangle_bone[b]); };
    const auto pairs = find_collisions(posed.vertices, m.mesh.triangles, skip);
    c.collision = collision_correspondences(pairs, posed.vertices, m.mesh.triangles, cfg.sigma);
  }
  if (w.gamma_s > 0 && !f.detections.empty() && !m.fingertips.empty()) {
    const auto tips = fingertip_regions(m, posed, render.visible);
    const AssignmentCosts costs = assignment_costs(f.detections, tips, cfg.weight_mode, cfg.confidence_threshold);
    const AssignmentSolution sol = solve_assignment(costs.w_st, costs.w_s, w.lambda);
    c.salient = salient_correspondences(sol, costs, f.detections, tips, posed, k, cfg.metric, cfg.salient);
  }
  if (w.gamma_ph > 0 && m.object_group >= 0)
    c.physics = analyze_stability(m, posed, cfg.static_scene, cfg.metric, cfg.physics).correspondences;
  return c;
}

/// Alternates correspondence search and one damped Gauss-Newton step, for
/// `iterations` rounds (or until the mean joint displacement drops below
/// the policy's stop_eps). Throws InsufficientObservation when the first
/// round has no residual rows.
inline FrameResult track_frame(const SkinnedModel& m, const FrameObservation& obs, const Pose& previous,
                               const TrackerConfig& cfg, bool first_frame = false) {
  cfg.validate();
  check_pose(m.skeleton, previous);
  const PreparedFrame f = prepare_frame(obs, cfg);
  const ObjectiveContext ctx{&m, previous, cfg.metric, cfg.sigma};
  const int limit = cfg.policy.stop_eps ? cfg.policy.max_iterations
                    : first_frame       ? cfg.policy.first_frame_iterations
                                        : cfg.policy.iterations;

  FrameResult out{previous, {}};
  double damping = cfg.lm.initial_damping;
  for (int it = 0; it < limit; ++it) {
    const CorrespondenceSet corr = find_correspondences(m, out.pose, f, cfg);
    const TermWeights w = TermWeights::resolve(cfg.weights, corr.count());
    StepResult step;
    try {
      step = gauss_newton_step(ctx, out.pose, corr, w, damping, cfg.lm);
    } catch (const InsufficientObservation&) {
      if (it == 0) throw;
      break;
    }
    IterationRecord rec;
    rec.correspondences = {corr.m2d.size(), corr.d2m.size(), corr.collision.size(), corr.salient.size(),
                           corr.physics.size()};
    rec.energy_before = step.energy_before;
    rec.energy_after = step.energy_after;
    rec.damping = step.damping;
    rec.accepted = step.accepted;
    rec.joint_displacement = mean_joint_displacement(m, out.pose, step.pose);
    out.pose = step.pose;
    out.report.steps.push_back(rec);
    out.report.energy_trace.push_back(step.energy_after);
    out.report.iterations = it + 1;
    out.report.final_energy = step.energy_after;
    out.report.last_displacement = rec.joint_displacement;
    if (cfg.policy.stop_eps && rec.joint_displacement < *cfg.policy.stop_eps) {
      out.report.converged = true;
      break;
    }
  }
  return out;
}

struct SequenceResult {
  std::vector<Pose> poses;
  std::vector<SolveReport> reports;
  std::vector<std::string> errors;  // empty string when the frame tracked normally
};

/// Tracks frames in order, each initialized from the previous estimate.
/// A frame that cannot be tracked keeps the previous pose.
inline SequenceResult track_sequence(const SkinnedModel& m, std::span<const FrameObservation> frames,
                                     const Pose& initial, const TrackerConfig& cfg) {
  SequenceResult out;
  Pose current = initial;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    try {
      FrameResult r = track_frame(m, frames[i], current, cfg, i == 0);
      current = r.pose;
      out.reports.push_back(std::move(r.report));
      out.errors.emplace_back();
    } catch (const InsufficientObservation& e) {
      out.reports.emplace_back();
      out.errors.emplace_back(e.what());
    }
    out.poses.push_back(current);
  }
  return out;
}

}  // namespace artrack
