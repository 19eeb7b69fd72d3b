#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "artrack/config.hpp"
#include "artrack/io.hpp"
#include "support.hpp"

using namespace artrack;
using namespace artrack::testing;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("artrack_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json rig_of(const SkinnedModel& m) { return rig_to_json(m); }

template <typename F>
std::size_t parse_error_line(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Formats

TEST(Io, ObjRoundTripIsExact) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MeshPart blob = random_blob(rng, rng.vec(-500, 500), rng.uniform(1, 80));
    const TriangleMesh back = parse_obj(format_obj({blob.vertices, blob.triangles}));
    ASSERT_EQ(back.vertices.size(), blob.vertices.size());
    for (std::size_t i = 0; i < blob.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], blob.vertices[i]);
    EXPECT_EQ(back.triangles, blob.triangles);
  }
}

TEST(Io, ObjAcceptsSlashAndNegativeIndices) {
  const TriangleMesh m = parse_obj("# tri\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1/1/1 2//1 -1\n");
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
}

TEST(Io, ObjErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line([] { parse_obj("v 0 0 0\nv 1 0\n"); }), 2u);
  EXPECT_EQ(parse_error_line([] { parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 4\n"); }), 5u);
  EXPECT_EQ(parse_error_line([] { parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"); }), 5u);
  EXPECT_EQ(parse_error_line([] { parse_obj("v 0 0 0\nf a b c\n"); }), 2u);
}

TEST(Io, ModelRoundTripIsLossless) {
  const fs::path dir = scratch("model");
  for (const SkinnedModel& m : {procedural_hand(), procedural_pipe(), merge_models({procedural_hand(), procedural_ball()})}) {
    save_model(m, dir / "m.obj");
    const SkinnedModel back = load_model(dir / "m.obj");
    EXPECT_EQ(back.name, m.name);
    EXPECT_EQ(back.dof_count(), m.dof_count());
    EXPECT_EQ(back.mesh.triangles, m.mesh.triangles);
    EXPECT_EQ(back.groups, m.groups);
    EXPECT_EQ(back.object_group, m.object_group);
    EXPECT_EQ(back.joint_group, m.joint_group);
    EXPECT_EQ(back.physics_part, m.physics_part);
    EXPECT_EQ(back.vertex_bone, m.vertex_bone);
    EXPECT_EQ(back.triangle_bone, m.triangle_bone);
    ASSERT_EQ(back.fingertips.size(), m.fingertips.size());
    for (std::size_t f = 0; f < m.fingertips.size(); ++f) {
      EXPECT_EQ(back.fingertips[f].name, m.fingertips[f].name);
      EXPECT_EQ(back.fingertips[f].vertices, m.fingertips[f].vertices);
    }
    for (int j = 0; j < m.skeleton.size(); ++j) {
      const Joint &a = m.skeleton.joint(j), &b = back.skeleton.joint(j);
      EXPECT_EQ(a.name, b.name);
      EXPECT_EQ(a.parent, b.parent);
      EXPECT_EQ(a.axis, b.axis);
      EXPECT_EQ(a.point, b.point);
      EXPECT_EQ(a.lower, b.lower);
      EXPECT_EQ(a.upper, b.upper);
    }
    // Same deformation at an arbitrary pose.
    Rng rng(5);
    Pose p = random_angles(m, Pose::zero(m.skeleton), rng, 0.8);
    for (int r : m.skeleton.roots()) p.theta.segment<6>(m.skeleton.dof_offset(r)) = Vec6::Random();
    EXPECT_EQ(pose_model(m, p).vertices, pose_model(back, p).vertices);
  }
}

TEST(Io, ProceduralModelsHaveDocumentedDof) {
  EXPECT_EQ(procedural_hand().dof_count(), 37);
  EXPECT_EQ(procedural_hand().skeleton.size(), 32);  // root + 31 revolute
  EXPECT_EQ(procedural_ball().dof_count(), 6);
  EXPECT_EQ(procedural_box().dof_count(), 6);
  EXPECT_EQ(procedural_pipe().dof_count(), 7);
  for (int f = 2; f <= 5; ++f) {
    HandOptions o;
    o.fingers = f;
    EXPECT_EQ(static_cast<int>(procedural_hand(o).fingertips.size()), f);
  }
  HandOptions bad;
  bad.fingers = 6;
  EXPECT_THROW(procedural_hand(bad), ValidationError);
}

TEST(Io, CyclicParentsRejected) {
  const SkinnedModel hand = procedural_hand();
  json j = rig_of(hand);
  j["joints"][1]["parent"] = 2;
  j["joints"][2]["parent"] = 1;
  EXPECT_THROW(model_from(hand.mesh, j), ValidationError);
  j = rig_of(hand);
  j["joints"][3]["parent"] = 3;
  EXPECT_THROW(model_from(hand.mesh, j), ValidationError);
}

TEST(Io, WeightRowsMustSumToOne) {
  const SkinnedModel hand = procedural_hand();
  json j = rig_of(hand);
  j["weights"][10][0][1] = j["weights"][10][0][1].get<double>() + 0.05;
  EXPECT_THROW(model_from(hand.mesh, j), ValidationError);
  j = rig_of(hand);
  j["weights"].erase(j["weights"].size() - 1);
  EXPECT_THROW(model_from(hand.mesh, j), ValidationError);
}

TEST(Io, MalformedRigReportsLine) {
  const fs::path dir = scratch("badrig");
  detail::write_text(dir / "m.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  detail::write_text(dir / "m.json", "{\n  \"joints\": [\n    {\"name\": \"r\",}\n  ]\n}\n");
  EXPECT_EQ(parse_error_line([&] { load_model(dir / "m.obj"); }), 3u);
}

TEST(Io, DepthImagesRoundTrip) {
  const fs::path dir = scratch("depth");
  CameraIntrinsics k;
  k.width = 37;
  k.height = 23;
  Rng rng(2);
  DepthFrame f = DepthFrame::blank(k);
  for (float& d : f.depth) d = rng.uniform(0, 1) < 0.3 ? 0.0f : static_cast<float>(rng.integer(1, 65535));
  write_depth_pgm(dir / "d.pgm", f);
  write_depth_raw(dir / "d.raw", f);
  EXPECT_EQ(read_depth_pgm(dir / "d.pgm", k).depth, f.depth);
  EXPECT_EQ(read_depth_raw(dir / "d.raw", k).depth, f.depth);
  CameraIntrinsics other = k;
  other.width = 36;
  EXPECT_THROW(read_depth_pgm(dir / "d.pgm", other), DimensionMismatch);
  EXPECT_THROW(read_depth_raw(dir / "d.raw", other), DimensionMismatch);

  std::vector<std::uint8_t> mask(k.pixel_count());
  for (auto& m : mask) m = rng.integer(0, 1);
  write_mask_pgm(dir / "m.pgm", mask, k.width, k.height);
  EXPECT_EQ(read_mask_pgm(dir / "m.pgm", k), mask);
  EXPECT_THROW(read_mask_pgm(dir / "d.pgm", k), ParseError);
}

TEST(Io, DetectionsRoundTrip) {
  Rng rng(3);
  std::vector<DetectionRecord> dets;
  for (int i = 0; i < 30; ++i)
    dets.push_back({rng.integer(0, 9), {rng.uniform(0, 640), rng.uniform(0, 480), rng.uniform(1, 40), rng.uniform(1, 40)},
                    rng.uniform(0, 10)});
  const std::vector<DetectionRecord> back = parse_detections(format_detections(dets));
  ASSERT_EQ(back.size(), dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(back[i].frame, dets[i].frame);
    EXPECT_EQ(back[i].bbox.x, dets[i].bbox.x);
    EXPECT_EQ(back[i].bbox.h, dets[i].bbox.h);
    EXPECT_EQ(back[i].confidence, dets[i].confidence);
  }
  EXPECT_EQ(parse_error_line([] { parse_detections("# c\n0 1 2 3 4 5\n\n1 2 3 4\n"); }), 4u);
  EXPECT_EQ(parse_error_line([] { parse_detections("0 1 2 -3 4 5\n"); }), 1u);
}

TEST(Io, PoseAndJointTablesRoundTripExactly) {
  Rng rng(4);
  std::vector<Pose> poses;
  for (int f = 0; f < 7; ++f) {
    Pose p{Eigen::VectorXd(37)};
    for (int i = 0; i < 37; ++i) p.theta[i] = rng.normal(100.0) * std::pow(10.0, rng.integer(-8, 3));
    poses.push_back(p);
  }
  const std::vector<Pose> back = parse_poses(format_poses(poses));
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t f = 0; f < poses.size(); ++f) EXPECT_EQ(back[f].theta, poses[f].theta);

  std::vector<std::vector<Vec3>> joints(4);
  for (auto& f : joints)
    for (int j = 0; j < 5; ++j) f.push_back(rng.vec(-300, 300));
  EXPECT_EQ(parse_joints(format_joints(joints)), joints);
}

// ---------------------------------------------------------------------------
// Preprocessing

TEST(Preprocess, ThresholdAndMask) {
  CameraIntrinsics k;
  k.width = 4;
  k.height = 2;
  DepthFrame f = DepthFrame::blank(k);
  f.depth = {100, 799, 800, 801, 0, 2000, 500, 900};
  const DepthFrame t = preprocess(f, 800.0);
  EXPECT_EQ(t.depth, (std::vector<float>{100, 799, 800, 0, 0, 0, 500, 0}));
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 1, 0, 1};
  const DepthFrame m = preprocess(f, 800.0, mask);
  EXPECT_EQ(m.depth, (std::vector<float>{100, 0, 800, 0, 0, 0, 0, 0}));
  const std::vector<std::uint8_t> short_mask(3, 1);
  EXPECT_THROW(preprocess(f, 800.0, short_mask), DimensionMismatch);
}

TEST(Preprocess, ZeroMaskEmptiesFrameAndTrackerKeepsPreviousPose) {
  const SkinnedModel hand = procedural_hand();
  const Pose home = hand_home_pose(hand);
  FrameObservation obs = observe(hand, home);
  const std::vector<std::uint8_t> none(obs.depth.depth.size(), 0);
  obs.depth = preprocess(obs.depth, 1500.0, none);
  EXPECT_EQ(obs.depth.valid_count(), 0u);
  const std::vector<FrameObservation> frames{obs};
  const SequenceResult r = track_sequence(hand, frames, home, TrackerConfig{});
  ASSERT_EQ(r.poses.size(), 1u);
  EXPECT_EQ(r.poses[0].theta, home.theta);
  EXPECT_FALSE(r.errors[0].empty());
}

// ---------------------------------------------------------------------------
// Synthetic sequences

TEST(Synth, EmitsOneFramePerPose) {
  const SkinnedModel hand = procedural_hand();
  for (int n : {1, 3, 8}) {
    const std::vector<Pose> poses = hand_motion(hand, n, 2);
    ASSERT_EQ(static_cast<int>(poses.size()), n);
    const SyntheticSequence seq = generate_synthetic(hand, poses, CameraIntrinsics{});
    EXPECT_EQ(static_cast<int>(seq.frames.size()), n);
    EXPECT_EQ(static_cast<int>(seq.joints.size()), n);
    for (const auto& j : seq.joints) EXPECT_EQ(static_cast<int>(j.size()), hand.skeleton.size());
  }
}

TEST(Synth, NoiseHasRequestedStd) {
  const SkinnedModel hand = procedural_hand();
  const std::vector<Pose> poses = hand_motion(hand, 2, 1);
  const SyntheticSequence clean = generate_synthetic(hand, poses, CameraIntrinsics{});
  SynthOptions so;
  so.noise = 2.0;
  so.seed = 9;
  const SyntheticSequence noisy = generate_synthetic(hand, poses, CameraIntrinsics{}, so);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < poses.size(); ++f)
    for (std::size_t i = 0; i < clean.frames[f].depth.size(); ++i) {
      const float c = clean.frames[f].depth[i];
      if (c <= 0.0f) {
        EXPECT_EQ(noisy.frames[f].depth[i], 0.0f);
        continue;
      }
      const double d = noisy.frames[f].depth[i] - c;
      sum += d, sq += d * d, ++n;
    }
  ASSERT_GT(n, 5000u);
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 2.0, 0.2);
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_EQ(clean.joints, noisy.joints);
}

TEST(Synth, DeterministicForFixedSeed) {
  const SkinnedModel hand = procedural_hand();
  const std::vector<Pose> poses = hand_motion(hand, 2, 3);
  SynthOptions so;
  so.noise = 1.0;
  so.seed = 4;
  const SyntheticSequence a = generate_synthetic(hand, poses, CameraIntrinsics{}, so);
  const SyntheticSequence b = generate_synthetic(hand, poses, CameraIntrinsics{}, so);
  so.seed = 5;
  const SyntheticSequence c = generate_synthetic(hand, poses, CameraIntrinsics{}, so);
  EXPECT_EQ(a.frames[1].depth, b.frames[1].depth);
  EXPECT_NE(a.frames[1].depth, c.frames[1].depth);
}

TEST(Synth, DetectionsSitOnVisibleFingertips) {
  const SkinnedModel hand = procedural_hand();
  const Pose home = hand_home_pose(hand);
  const std::vector<Pose> one{home};
  const SyntheticSequence seq = generate_synthetic(hand, one, CameraIntrinsics{});
  ASSERT_GE(seq.detections.size(), 4u);
  const CameraIntrinsics k;
  const PosedModel posed = pose_model(hand, home);
  for (const DetectionRecord& d : seq.detections) {
    const Vec2 c(d.bbox.x + d.bbox.w / 2, d.bbox.y + d.bbox.h / 2);
    double best = 1e9;
    for (const FingertipSet& t : hand.fingertips) {
      Vec3 mean = Vec3::Zero();
      for (int v : t.vertices) mean += posed.vertices[v];
      best = std::min(best, (k.project(mean / t.vertices.size()) - c).norm());
    }
    EXPECT_LT(best, 5.0);
  }
}

TEST(Synth, MotionRespectsStepBounds) {
  const SkinnedModel hand = procedural_hand();
  const std::vector<Pose> poses = hand_motion(hand, 50, 7);
  const Skeleton& s = hand.skeleton;
  for (std::size_t f = 1; f < poses.size(); ++f)
    for (int j = 0; j < s.size(); ++j) {
      const int o = s.dof_offset(j);
      if (s.joint(j).type == JointType::revolute) {
        EXPECT_LE(std::abs(poses[f].theta[o] - poses[f - 1].theta[o]), 2.0 * kDeg + 1e-12);
        EXPECT_GE(poses[f].theta[o], s.joint(j).lower);
        EXPECT_LE(poses[f].theta[o], s.joint(j).upper);
      } else {
        const Vec3 a = root_transform(s, poses[f], j).translation, b = root_transform(s, poses[f - 1], j).translation;
        EXPECT_LE((a - b).norm(), 5.0);
      }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, IdenticalTrajectoriesHaveZeroError) {
  const SkinnedModel hand = procedural_hand();
  const auto joints = trajectory_joints(hand, hand_motion(hand, 4, 1));
  const EvaluationRecord r = evaluate(joints, joints, CameraIntrinsics{});
  EXPECT_EQ(r.stats_2d.mean, 0.0);
  EXPECT_EQ(r.stats_3d.max, 0.0);
  EXPECT_EQ(r.stats_3d.count, 4u * hand.skeleton.size());
}

TEST(Evaluate, LateralOffsetProjectsToPinholeShift) {
  // 3 mm at z = 525 * 3 / 4 mm moves the projection by 4 px.
  const double z = 525.0 * 3.0 / 4.0;
  const std::vector<std::vector<Vec3>> ref{{Vec3(10, -5, z), Vec3(0, 0, 500)}};
  std::vector<std::vector<Vec3>> est = ref;
  est[0][0].x() += 3.0;
  const EvaluationRecord r = evaluate(est, ref, CameraIntrinsics{});
  EXPECT_NEAR(r.error_2d[0][0], 4.0, 1e-12);
  EXPECT_NEAR(r.error_3d[0][0], 3.0, 1e-12);
  EXPECT_EQ(r.error_2d[0][1], 0.0);
  const std::vector<int> subset{0};
  EXPECT_NEAR(evaluate(est, ref, CameraIntrinsics{}, subset).stats_2d.mean, 4.0, 1e-12);
}

TEST(Evaluate, AggregatesMatchPerFrameRecords) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int frames = rng.integer(1, 6), joints = rng.integer(1, 9);
    std::vector<std::vector<Vec3>> a(frames), b(frames);
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < joints; ++j) {
        a[f].push_back(rng.vec(-100, 100) + Vec3(0, 0, 500));
        b[f].push_back(a[f].back() + rng.vec(-10, 10));
      }
    const EvaluationRecord r = evaluate(a, b, CameraIntrinsics{});
    std::vector<double> all2, all3;
    for (int f = 0; f < frames; ++f) {
      all2.insert(all2.end(), r.error_2d[f].begin(), r.error_2d[f].end());
      all3.insert(all3.end(), r.error_3d[f].begin(), r.error_3d[f].end());
    }
    const ErrorStats s2 = error_stats(all2), s3 = error_stats(all3);
    EXPECT_EQ(s2.mean, r.stats_2d.mean);
    EXPECT_EQ(s3.std, r.stats_3d.std);
    EXPECT_EQ(s3.max, *std::max_element(all3.begin(), all3.end()));

    // Joint order does not change the mean.
    std::vector<int> perm(joints);
    for (int j = 0; j < joints; ++j) perm[j] = j;
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    auto pa = a, pb = b;
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < joints; ++j) pa[f][j] = a[f][perm[j]], pb[f][j] = b[f][perm[j]];
    const EvaluationRecord q = evaluate(pa, pb, CameraIntrinsics{});
    EXPECT_NEAR(q.stats_3d.mean, r.stats_3d.mean, 1e-12);
    EXPECT_NEAR(q.stats_2d.mean, r.stats_2d.mean, 1e-12);
  }
}

TEST(Evaluate, LengthMismatchRejected) {
  const std::vector<std::vector<Vec3>> a(3, std::vector<Vec3>(2, Vec3(0, 0, 400))), b(2, a[0]);
  EXPECT_THROW(evaluate(a, b, CameraIntrinsics{}), DimensionMismatch);
  const std::vector<int> subset{5};
  EXPECT_THROW(evaluate(a, a, CameraIntrinsics{}, subset), ValidationError);
}

// ---------------------------------------------------------------------------
// Config and end to end

TEST(Config, DefaultsMatchHighlightedSettings) {
  const TrackerConfig t;
  EXPECT_EQ(t.policy.iterations, 10);
  EXPECT_EQ(t.metric, Metric::point_to_plane);
  EXPECT_EQ(t.weights.gamma_c, 10.0);
  EXPECT_EQ(t.weights.gamma_ph, 10.0);
  EXPECT_EQ(t.weights.lambda, 1.2);
  EXPECT_EQ(t.weight_mode, WeightMode::confidence);
}

TEST(Config, ParsesAndResolvesRelativePaths) {
  const fs::path dir = scratch("config");
  save_model(procedural_ball(), dir / "ball.obj");
  fs::create_directories(dir / "frames");
  detail::write_text(dir / "dets.txt", "0 1 2 3 4 5\n");
  const json j = {{"model", "ball.obj"},
                  {"frames", "frames"},
                  {"frame_format", "raw"},
                  {"intrinsics", {{"fx", 500.0}, {"width", 320}, {"height", 240}}},
                  {"depth_threshold", 800.0},
                  {"detections", "dets.txt"},
                  {"metric", "p2p"},
                  {"stop_eps", 0.1},
                  {"weights", {{"gamma_c", 3.0}, {"gamma_r", 2.5}, {"lambda", 2.0}}},
                  {"salient_weight_mode", "unit"},
                  {"static_scene", {{{"center", {0, -100, 400}}, {"size", {500, 10, 500}}}}},
                  {"output", "out"}};
  const SequenceConfig c = config_from_json(j, dir);
  EXPECT_EQ(c.model, dir / "ball.obj");
  EXPECT_EQ(c.frame_format, "raw");
  EXPECT_EQ(c.intrinsics.fx, 500.0);
  EXPECT_EQ(c.intrinsics.fy, 525.0);
  EXPECT_EQ(c.intrinsics.width, 320);
  EXPECT_EQ(c.depth_threshold, 800.0);
  ASSERT_TRUE(c.detections);
  EXPECT_EQ(*c.detections, dir / "dets.txt");
  EXPECT_EQ(c.tracker.metric, Metric::point_to_point);
  ASSERT_TRUE(c.tracker.policy.stop_eps);
  EXPECT_EQ(*c.tracker.policy.stop_eps, 0.1);
  EXPECT_EQ(c.tracker.weights.gamma_c, 3.0);
  EXPECT_EQ(c.tracker.weights.regularization(100), 2.5);
  EXPECT_EQ(c.tracker.weights.lambda, 2.0);
  EXPECT_EQ(c.tracker.weight_mode, WeightMode::unit);
  ASSERT_EQ(c.tracker.static_scene.size(), 1u);
  EXPECT_NEAR(c.tracker.static_scene[0].hull.volume(), 500.0 * 10 * 500, 1e-6);
  EXPECT_EQ(c.output, dir / "out");
}

TEST(Config, RejectsMissingPathsAndBadValues) {
  const fs::path dir = scratch("badconfig");
  save_model(procedural_ball(), dir / "ball.obj");
  fs::create_directories(dir / "frames");
  const json ok = {{"model", "ball.obj"}, {"frames", "frames"}};
  EXPECT_NO_THROW(config_from_json(ok, dir));
  for (const auto& [key, value] : std::vector<std::pair<std::string, json>>{{"model", "nope.obj"},
                                                                            {"frames", "missing"},
                                                                            {"detections", "none.txt"},
                                                                            {"metric", "l1"},
                                                                            {"frame_format", "png"},
                                                                            {"iterations", 0},
                                                                            {"sigma", 1.5},
                                                                            {"salient_weight_mode", "odd"},
                                                                            {"intrinsics", {{"fx", -1.0}}}}) {
    json j = ok;
    j[key] = value;
    EXPECT_THROW(config_from_json(j, dir), ValidationError) << key;
  }
  json j = ok;
  j.erase("model");
  EXPECT_THROW(config_from_json(j, dir), ValidationError);
  detail::write_text(dir / "c.json", "{\n\"model\": \"ball.obj\",\n\"frames\": frames\n}\n");
  EXPECT_EQ(parse_error_line([&] { load_config(dir / "c.json"); }), 3u);
}

TEST(Config, LoadFramesAppliesThresholdMaskAndDetections) {
  const fs::path dir = scratch("frames");
  const SkinnedModel hand = procedural_hand();
  save_model(hand, dir / "hand.obj");
  const std::vector<Pose> poses = hand_motion(hand, 2, 1);
  const SyntheticSequence seq = generate_synthetic(hand, poses, CameraIntrinsics{});
  for (int f = 0; f < 2; ++f) write_depth_pgm(dir / "frames" / frame_name("depth", f, "pgm"), seq.frames[f]);
  std::vector<std::uint8_t> left(CameraIntrinsics{}.pixel_count(), 0);
  for (int y = 0; y < 480; ++y)
    for (int x = 0; x < 320; ++x) left[y * 640 + x] = 1;
  for (int f = 0; f < 2; ++f) write_mask_pgm(dir / "masks" / frame_name("mask", f, "pgm"), left, 640, 480);
  detail::write_text(dir / "dets.txt", format_detections(seq.detections));

  json j = {{"model", "hand.obj"}, {"frames", "frames"}, {"detections", "dets.txt"}};
  const std::vector<FrameObservation> plain = load_frames(config_from_json(j, dir));
  ASSERT_EQ(plain.size(), 2u);
  for (std::size_t i = 0; i < seq.frames[1].depth.size(); ++i)
    EXPECT_EQ(plain[1].depth.depth[i], std::round(seq.frames[1].depth[i]));
  std::size_t dets0 = 0;
  for (const DetectionRecord& d : seq.detections) dets0 += d.frame == 0;
  EXPECT_EQ(plain[0].detections.size(), dets0);

  j["masks"] = "masks";
  j["depth_threshold"] = 440.0;
  const std::vector<FrameObservation> masked = load_frames(config_from_json(j, dir));
  int kept = 0;
  for (int i = 0; i < masked[0].depth.width() * masked[0].depth.height(); ++i) {
    const float d = masked[0].depth.depth[i];
    if (d <= 0.0f) continue;
    ++kept;
    EXPECT_LT(i % 640, 320);
    EXPECT_LE(d, 440.0f);
  }
  EXPECT_GT(kept, 0);
  EXPECT_LT(static_cast<std::size_t>(kept), plain[0].depth.valid_count());
}

TEST(Pipeline, SynthTrackEvalIsDeterministic) {
  const SkinnedModel hand = procedural_hand();
  const std::vector<Pose> poses = hand_motion(hand, 3, 4);
  const std::vector<FrameObservation> frames = observe_all(hand, poses, 1.0, 11, true);
  TrackerConfig cfg;
  cfg.policy.first_frame_iterations = 5;
  cfg.policy.iterations = 5;
  const SequenceResult a = track_sequence(hand, frames, poses.front(), cfg);
  const SequenceResult b = track_sequence(hand, frames, poses.front(), cfg);
  ASSERT_EQ(a.poses.size(), 3u);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(a.poses[f].theta, b.poses[f].theta);
  const EvaluationRecord r = evaluate(trajectory_joints(hand, a.poses), trajectory_joints(hand, poses), CameraIntrinsics{});
  EXPECT_LT(r.stats_3d.mean, 3.0);
}
