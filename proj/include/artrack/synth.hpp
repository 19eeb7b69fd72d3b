#pragma once

// Depth preprocessing, synthetic sequence generation and evaluation metrics.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "artrack/io.hpp"
#include "artrack/model.hpp"
#include "artrack/raster.hpp"
#include "artrack/salient.hpp"

namespace artrack {

/// Invalidates depths beyond `threshold` mm and intersects the optional
/// foreground mask.
inline DepthFrame preprocess(DepthFrame f, double threshold, std::span<const std::uint8_t> mask = {}) {
  if (!mask.empty() && mask.size() != f.depth.size()) throw DimensionMismatch("mask size differs from depth frame");
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    if (f.depth[i] > threshold) f.depth[i] = 0.0f;
    if (!mask.empty() && !mask[i]) f.depth[i] = 0.0f;
  }
  if (!mask.empty()) f.mask.assign(mask.begin(), mask.end());
  return f;
}

struct SyntheticSequence {
  std::vector<DepthFrame> frames;
  std::vector<std::vector<Vec3>> joints;  // ground-truth joint positions per frame
  std::vector<DetectionRecord> detections;
};

struct SynthOptions {
  double noise = 0.0;          // mm, std of additive Gaussian depth noise
  std::uint64_t seed = 1;
  bool detections = true;      // one box per visible fingertip
  double detection_box = 24.0; // px
  double detection_confidence = 5.0;
};

/// Renders every pose, adds clamped Gaussian noise to covered pixels and
/// records ground-truth joints plus fingertip boxes around projected tips.
inline SyntheticSequence generate_synthetic(const SkinnedModel& m, std::span<const Pose> poses,
                                            const CameraIntrinsics& k, const SynthOptions& opt = {}) {
  SyntheticSequence out;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t f = 0; f < poses.size(); ++f) {
    const PosedModel posed = pose_model(m, poses[f]);
    RenderResult r = render_depth(posed.vertices, m.mesh.triangles, k);
    if (opt.noise > 0.0)
      for (float& d : r.depth.depth)
        if (d > 0.0f) d = static_cast<float>(std::max(0.0, d + opt.noise * gauss(rng)));
    out.frames.push_back(std::move(r.depth));
    out.joints.push_back(joint_positions(m, posed.transforms));
    if (!opt.detections) continue;
    for (const FingertipSet& tip : m.fingertips) {
      Vec2 c = Vec2::Zero();
      int n = 0;
      for (int v : tip.vertices)
        if (r.visible[v]) c += r.projected[v], ++n;
      if (n * 2 < static_cast<int>(tip.vertices.size())) continue;
      c /= n;
      const double h = opt.detection_box / 2.0;
      out.detections.push_back(
          {static_cast<int>(f), {c.x() - h, c.y() - h, opt.detection_box, opt.detection_box}, opt.detection_confidence});
    }
  }
  return out;
}

/// Lifts the detection records of frame `frame` against its depth image.
inline std::vector<Detection> detections_for_frame(std::span<const DetectionRecord> records, int frame,
                                                   const DepthFrame& depth) {
  std::vector<Detection> out;
  for (const DetectionRecord& r : records)
    if (r.frame == frame) out.push_back(make_detection(frame, r.bbox, r.confidence, depth));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double max = 0.0;
  std::size_t count = 0;
};

inline ErrorStats error_stats(std::span<const double> values) {
  ErrorStats s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v, s.max = std::max(s.max, v);
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

struct EvaluationRecord {
  std::vector<std::vector<double>> error_2d;  // [frame][joint], px
  std::vector<std::vector<double>> error_3d;  // [frame][joint], mm
  ErrorStats stats_2d;
  ErrorStats stats_3d;
};

/// Per-joint image-plane and 3D distances between estimated and reference
/// joint positions; `subset` selects joints (all when empty).
inline EvaluationRecord evaluate(std::span<const std::vector<Vec3>> estimate,
                                 std::span<const std::vector<Vec3>> reference, const CameraIntrinsics& k,
                                 std::span<const int> subset = {}) {
  if (estimate.size() != reference.size()) throw DimensionMismatch("trajectory and reference lengths differ");
  EvaluationRecord rec;
  std::vector<double> all2, all3;
  for (std::size_t f = 0; f < estimate.size(); ++f) {
    if (estimate[f].size() != reference[f].size()) throw DimensionMismatch("joint counts differ");
    std::vector<int> joints(subset.begin(), subset.end());
    if (joints.empty())
      for (int j = 0; j < static_cast<int>(estimate[f].size()); ++j) joints.push_back(j);
    std::vector<double> e2, e3;
    for (int j : joints) {
      if (j < 0 || j >= static_cast<int>(estimate[f].size())) throw ValidationError("joint subset out of range");
      e2.push_back((k.project(estimate[f][j]) - k.project(reference[f][j])).norm());
      e3.push_back((estimate[f][j] - reference[f][j]).norm());
    }
    all2.insert(all2.end(), e2.begin(), e2.end());
    all3.insert(all3.end(), e3.begin(), e3.end());
    rec.error_2d.push_back(std::move(e2));
    rec.error_3d.push_back(std::move(e3));
  }
  rec.stats_2d = error_stats(all2);
  rec.stats_3d = error_stats(all3);
  return rec;
}

inline std::vector<std::vector<Vec3>> trajectory_joints(const SkinnedModel& m, std::span<const Pose> poses) {
  std::vector<std::vector<Vec3>> out;
  for (const Pose& p : poses) out.push_back(joint_positions(m, p));
  return out;
}

// ---------------------------------------------------------------------------
// Motion

struct MotionOptions {
  int frames = 50;
  double max_joint_step = 2.0 * std::numbers::pi / 180.0;  // rad per frame
  double max_global_step = 5.0;                            // mm per frame
  double amplitude = 0.5;  // fraction of each joint's range swept
  std::uint64_t seed = 7;
  std::vector<double> dof_scale;  // optional per-coordinate amplitude factor
};

/// Smooth pseudo-random motion: every revolute joint oscillates inside its
/// limits and the roots translate and rotate gently, with per-frame steps
/// bounded by the options.
inline std::vector<Pose> synthetic_motion(const SkinnedModel& m, const Pose& start, const MotionOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Skeleton& s = m.skeleton;
  const int dof = s.dof_count();
  struct Wave {
    double amp, freq, phase;
  };
  std::vector<Wave> waves(dof);
  if (!opt.dof_scale.empty() && static_cast<int>(opt.dof_scale.size()) != dof)
    throw DimensionMismatch("dof_scale length differs from pose size");
  for (int j = 0; j < s.size(); ++j) {
    const Joint& jt = s.joint(j);
    const int o = s.dof_offset(j);
    if (jt.type == JointType::revolute) {
      const double range = std::min(jt.upper, 1.5) - std::max(jt.lower, -1.5);
      const double freq = 2.0 * std::numbers::pi / (30.0 + 30.0 * uni(rng));
      double amp = opt.amplitude * range / 2.0;
      amp = std::min(amp, 0.95 * opt.max_joint_step / freq);
      waves[o] = {amp, freq, 2.0 * std::numbers::pi * uni(rng)};
    } else {
      for (int i = 0; i < 3; ++i) {
        const double freq = 2.0 * std::numbers::pi / (40.0 + 40.0 * uni(rng));
        waves[o + i] = {std::min(15.0, 0.5 * opt.max_global_step / freq), freq, 2.0 * std::numbers::pi * uni(rng)};
      }
      for (int i = 3; i < 6; ++i) {
        const double freq = 2.0 * std::numbers::pi / (40.0 + 40.0 * uni(rng));
        waves[o + i] = {std::min(0.08, 0.5 * opt.max_joint_step / freq), freq, 2.0 * std::numbers::pi * uni(rng)};
      }
    }
  }
  if (!opt.dof_scale.empty())
    for (int k = 0; k < dof; ++k) waves[k].amp *= opt.dof_scale[k];
  std::vector<Pose> out;
  for (int f = 0; f < opt.frames; ++f) {
    Eigen::VectorXd delta(dof);
    for (int k = 0; k < dof; ++k)
      delta[k] = waves[k].amp * (std::sin(waves[k].freq * f + waves[k].phase) - std::sin(waves[k].phase));
    Pose p = start;
    for (int j = 0; j < s.size(); ++j) {
      const int o = s.dof_offset(j);
      if (s.joint(j).type == JointType::root) {
        const RigidTransform base = root_transform(s, start, j);
        const RigidTransform rot = exp_coordinates((Vec6() << 0, 0, 0, delta.segment<3>(o + 3)).finished());
        // Rotate about the root's own origin, then translate.
        RigidTransform t{rot.rotation * base.rotation, base.translation + delta.segment<3>(o)};
        set_root_transform(s, p, j, t);
      } else {
        const Joint& jt = s.joint(j);
        p.theta[o] = std::clamp(start.theta[o] + delta[o], jt.lower, jt.upper);
      }
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace artrack
