#pragma once

// Sequence configuration (JSON) and loading of the frames it references.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "artrack/io.hpp"
#include "artrack/physics.hpp"
#include "artrack/procedural.hpp"
#include "artrack/solver.hpp"
#include "artrack/synth.hpp"

namespace artrack {

struct SceneHull {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // box extents, mm
  double friction = 3.0;
  double restitution = 0.0;
};

struct SequenceConfig {
  fs::path model;
  fs::path frames;  // directory with depth_NNNN.pgm (or .raw)
  std::string frame_format = "pgm";
  int frame_count = -1;  // -1: count files
  CameraIntrinsics intrinsics;
  double depth_threshold = 1500.0;  // mm
  std::optional<fs::path> masks;    // directory with mask_NNNN.pgm
  std::optional<fs::path> detections;
  std::optional<fs::path> initial_pose;  // pose CSV, first row used
  std::optional<fs::path> ground_truth_joints;
  std::vector<int> joint_subset;
  std::vector<SceneHull> static_scene;
  TrackerConfig tracker;
  fs::path output = "out";
};

inline std::string metric_name(Metric m) { return m == Metric::point_to_point ? "p2p" : "p2plane"; }

inline Metric parse_metric(const std::string& s) {
  if (s == "p2p") return Metric::point_to_point;
  if (s == "p2plane") return Metric::point_to_plane;
  throw ValidationError("metric must be p2p or p2plane, got '" + s + "'");
}

inline std::vector<StaticBody> static_bodies(std::span<const SceneHull> hulls) {
  std::vector<StaticBody> out;
  for (const SceneHull& h : hulls) {
    const MeshPart box = box_mesh(h.center, h.size);
    out.push_back({convex_hull(box.vertices), h.friction, h.restitution});
  }
  return out;
}

namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline fs::path existing(const fs::path& base, const std::string& p, const char* what) {
  const fs::path r = resolve(base, p);
  if (!fs::exists(r)) throw ValidationError(std::string(what) + " not found: " + r.string());
  return r;
}

}  // namespace detail

/// Parses a config document; relative paths resolve against `base`.
inline SequenceConfig config_from_json(const json& j, const fs::path& base) {
  SequenceConfig c;
  try {
    c.model = detail::existing(base, j.at("model").get<std::string>(), "model");
    c.frames = detail::existing(base, j.at("frames").get<std::string>(), "frame directory");
    detail::maybe(j, "frame_format", c.frame_format);
    if (c.frame_format != "pgm" && c.frame_format != "raw") throw ValidationError("frame_format must be pgm or raw");
    detail::maybe(j, "frame_count", c.frame_count);
    if (j.contains("intrinsics")) {
      const json& k = j["intrinsics"];
      detail::maybe(k, "fx", c.intrinsics.fx);
      detail::maybe(k, "fy", c.intrinsics.fy);
      detail::maybe(k, "cx", c.intrinsics.cx);
      detail::maybe(k, "cy", c.intrinsics.cy);
      detail::maybe(k, "width", c.intrinsics.width);
      detail::maybe(k, "height", c.intrinsics.height);
    }
    c.intrinsics.validate();
    detail::maybe(j, "depth_threshold", c.depth_threshold);
    if (j.contains("masks") && !j["masks"].is_null())
      c.masks = detail::existing(base, j["masks"].get<std::string>(), "mask directory");
    if (j.contains("detections") && !j["detections"].is_null())
      c.detections = detail::existing(base, j["detections"].get<std::string>(), "detection file");
    if (j.contains("initial_pose") && !j["initial_pose"].is_null())
      c.initial_pose = detail::existing(base, j["initial_pose"].get<std::string>(), "initial pose");
    if (j.contains("ground_truth_joints") && !j["ground_truth_joints"].is_null())
      c.ground_truth_joints = detail::existing(base, j["ground_truth_joints"].get<std::string>(), "ground truth");
    detail::maybe(j, "joint_subset", c.joint_subset);
    if (j.contains("static_scene"))
      for (const json& h : j["static_scene"]) {
        SceneHull s;
        s.center = detail::vec3(h.at("center"));
        s.size = detail::vec3(h.at("size"));
        detail::maybe(h, "friction", s.friction);
        detail::maybe(h, "restitution", s.restitution);
        c.static_scene.push_back(s);
      }
    if (j.contains("output")) c.output = detail::resolve(base, j["output"].get<std::string>());

    TrackerConfig& t = c.tracker;
    if (j.contains("metric")) t.metric = parse_metric(j["metric"].get<std::string>());
    if (j.contains("weights")) {
      const json& w = j["weights"];
      EnergyWeights& e = t.weights;
      detail::maybe(w, "gamma_m2d", e.gamma_m2d);
      detail::maybe(w, "gamma_d2m", e.gamma_d2m);
      detail::maybe(w, "gamma_c", e.gamma_c);
      detail::maybe(w, "gamma_s", e.gamma_s);
      detail::maybe(w, "gamma_ph", e.gamma_ph);
      detail::maybe(w, "anatomy_factor", e.anatomy_factor);
      detail::maybe(w, "regularization_factor", e.regularization_factor);
      if (w.contains("gamma_a") && !w["gamma_a"].is_null()) e.gamma_a = w["gamma_a"].get<double>();
      if (w.contains("gamma_r") && !w["gamma_r"].is_null()) e.gamma_r = w["gamma_r"].get<double>();
      detail::maybe(w, "lambda", e.lambda);
      detail::maybe(w, "p", e.p);
    }
    if (j.contains("salient_weight_mode")) {
      const std::string mode = j["salient_weight_mode"].get<std::string>();
      if (mode != "unit" && mode != "confidence") throw ValidationError("salient_weight_mode must be unit or confidence");
      t.weight_mode = mode == "unit" ? WeightMode::unit : WeightMode::confidence;
    }
    detail::maybe(j, "confidence_threshold", t.confidence_threshold);
    detail::maybe(j, "iterations", t.policy.iterations);
    detail::maybe(j, "first_frame_iterations", t.policy.first_frame_iterations);
    if (j.contains("stop_eps") && !j["stop_eps"].is_null()) t.policy.stop_eps = j["stop_eps"].get<double>();
    detail::maybe(j, "max_iterations", t.policy.max_iterations);
    detail::maybe(j, "sigma", t.sigma);
    detail::maybe(j, "smooth_depth", t.smooth_depth);
    if (j.contains("physics")) {
      const json& p = j["physics"];
      PhysicsParams& ph = t.physics;
      detail::maybe(p, "object_mass", ph.object_mass);
      detail::maybe(p, "object_restitution", ph.object_restitution);
      detail::maybe(p, "hand_friction", ph.hand_friction);
      detail::maybe(p, "hand_restitution", ph.hand_restitution);
      detail::maybe(p, "candidate_distance", ph.candidate_distance);
      detail::maybe(p, "grip_depth", ph.grip_depth);
      detail::maybe(p, "steps", ph.sim.steps);
      detail::maybe(p, "dt", ph.sim.dt);
      detail::maybe(p, "stable_threshold", ph.sim.stable_threshold);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.tracker.static_scene = static_bodies(c.static_scene);
  c.tracker.validate();
  return c;
}

inline SequenceConfig load_config(const fs::path& path) {
  const json j = detail::parse_json(detail::read_text(path), path.string());
  return config_from_json(j, path.parent_path());
}

inline std::string frame_name(const char* prefix, int i, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", prefix, i, ext.c_str());
  return buf;
}

/// Reads, thresholds and masks every frame, and lifts its detections.
inline std::vector<FrameObservation> load_frames(const SequenceConfig& c) {
  int count = c.frame_count;
  if (count < 0) {
    count = 0;
    while (fs::exists(c.frames / frame_name("depth", count, c.frame_format))) ++count;
  }
  std::vector<DetectionRecord> records;
  if (c.detections) records = parse_detections(detail::read_text(*c.detections));
  std::vector<FrameObservation> out;
  for (int i = 0; i < count; ++i) {
    const fs::path p = c.frames / frame_name("depth", i, c.frame_format);
    DepthFrame raw = c.frame_format == "pgm" ? read_depth_pgm(p, c.intrinsics) : read_depth_raw(p, c.intrinsics);
    std::vector<std::uint8_t> mask;
    if (c.masks) mask = read_mask_pgm(*c.masks / frame_name("mask", i, "pgm"), c.intrinsics);
    FrameObservation obs;
    obs.depth = preprocess(std::move(raw), c.depth_threshold, mask);
    obs.detections = detections_for_frame(records, i, obs.depth);
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace artrack
