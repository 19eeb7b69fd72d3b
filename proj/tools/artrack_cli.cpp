// artrack: track / synth / eval / assign / simulate

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <numbers>

#include "artrack/artrack.hpp"

namespace {

using namespace artrack;

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

json stats_json(const ErrorStats& s) { return {{"mean", s.mean}, {"std", s.std}, {"max", s.max}, {"count", s.count}}; }

json evaluation_json(const EvaluationRecord& rec) {
  json per_frame = json::array();
  for (std::size_t f = 0; f < rec.error_3d.size(); ++f) {
    std::vector<double> e2 = rec.error_2d[f], e3 = rec.error_3d[f];
    per_frame.push_back({{"frame", f}, {"error_2d", stats_json(error_stats(e2))}, {"error_3d", stats_json(error_stats(e3))}});
  }
  return {{"error_2d_px", stats_json(rec.stats_2d)}, {"error_3d_mm", stats_json(rec.stats_3d)}, {"frames", per_frame}};
}

struct TrackOverrides {
  std::string config;
  std::string metric;
  int iterations = 0;
  double stop_eps = 0.0;
  double gamma_c = -1.0;
  double gamma_ph = -1.0;
  double lambda = -1.0;
  std::string output;
};

int run_track(const TrackOverrides& o) {
  SequenceConfig cfg = load_config(o.config);
  TrackerConfig& t = cfg.tracker;
  if (!o.metric.empty()) t.metric = parse_metric(o.metric);
  if (o.iterations > 0) {
    t.policy.iterations = o.iterations;
    t.policy.stop_eps.reset();
  }
  if (o.stop_eps > 0.0) t.policy.stop_eps = o.stop_eps;
  if (o.gamma_c >= 0.0) t.weights.gamma_c = o.gamma_c;
  if (o.gamma_ph >= 0.0) t.weights.gamma_ph = o.gamma_ph;
  if (o.lambda >= 0.0) t.weights.lambda = o.lambda;
  if (!o.output.empty()) cfg.output = o.output;
  t.validate();

  const SkinnedModel model = load_model(cfg.model);
  const std::vector<FrameObservation> frames = load_frames(cfg);
  if (frames.empty()) throw ValidationError("no frames found in " + cfg.frames.string());
  Pose init = Pose::zero(model.skeleton);
  if (cfg.initial_pose) {
    const std::vector<Pose> p = load_poses(*cfg.initial_pose);
    if (p.empty()) throw ValidationError("initial pose file is empty");
    init = p.front();
  }
  check_pose(model.skeleton, init);

  const SequenceResult res = track_sequence(model, frames, init, t);
  fs::create_directories(cfg.output);
  save_poses(cfg.output / "poses.csv", res.poses);

  json report;
  report["metric"] = metric_name(t.metric);
  report["frames"] = json::array();
  for (std::size_t f = 0; f < res.reports.size(); ++f) {
    const SolveReport& r = res.reports[f];
    report["frames"].push_back({{"frame", f},
                                {"iterations", r.iterations},
                                {"final_energy", r.final_energy},
                                {"energy_trace", r.energy_trace},
                                {"last_displacement_mm", r.last_displacement},
                                {"converged", r.converged},
                                {"error", res.errors[f]}});
  }
  if (cfg.ground_truth_joints) {
    const auto gt = parse_joints(detail::read_text(*cfg.ground_truth_joints));
    const auto est = trajectory_joints(model, res.poses);
    if (gt.size() == est.size()) report["evaluation"] = evaluation_json(evaluate(est, gt, cfg.intrinsics, cfg.joint_subset));
  }
  detail::write_text(cfg.output / "report.json", report.dump(2) + "\n");
  std::cout << "tracked " << res.poses.size() << " frames -> " << (cfg.output / "poses.csv").string() << "\n";
  if (report.contains("evaluation"))
    std::printf("mean 3D error %.3f mm, mean 2D error %.3f px\n", report["evaluation"]["error_3d_mm"]["mean"].get<double>(),
                report["evaluation"]["error_2d_px"]["mean"].get<double>());
  return 0;
}

struct SynthOptionsCli {
  std::string output;
  int frames = 20;
  double noise = 1.0;
  std::uint64_t seed = 1;
  int fingers = 5;
  std::string format = "pgm";
};

int run_synth(const SynthOptionsCli& o) {
  if (o.output.empty()) throw ValidationError("--output is required");
  const fs::path out = o.output;
  HandOptions ho;
  ho.fingers = o.fingers;
  const SkinnedModel hand = procedural_hand(ho);
  const CameraIntrinsics k;
  MotionOptions mo;
  mo.frames = o.frames;
  mo.seed = o.seed + 1000;
  mo.dof_scale = lateral_dof_scale(hand, 0.3);
  const std::vector<Pose> poses = synthetic_motion(hand, hand_home_pose(hand), mo);
  SynthOptions so;
  so.noise = o.noise;
  so.seed = o.seed;
  const SyntheticSequence seq = generate_synthetic(hand, poses, k, so);

  save_model(hand, out / "hand.obj");
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const fs::path p = out / "frames" / frame_name("depth", static_cast<int>(f), o.format);
    if (o.format == "pgm") write_depth_pgm(p, seq.frames[f]);
    else write_depth_raw(p, seq.frames[f]);
  }
  save_poses(out / "gt_poses.csv", poses);
  detail::write_text(out / "gt_joints.csv", format_joints(seq.joints));
  detail::write_text(out / "detections.txt", format_detections(seq.detections));
  const std::vector<Pose> first{poses.front()};
  save_poses(out / "initial_pose.csv", first);
  json cfg = {{"model", "hand.obj"},
              {"frames", "frames"},
              {"frame_format", o.format},
              {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
              {"depth_threshold", 1500.0},
              {"detections", "detections.txt"},
              {"initial_pose", "initial_pose.csv"},
              {"ground_truth_joints", "gt_joints.csv"},
              {"metric", "p2plane"},
              {"iterations", 10},
              {"first_frame_iterations", 50},
              {"weights", {{"gamma_c", 10.0}, {"gamma_ph", 10.0}, {"lambda", 1.2}}},
              {"salient_weight_mode", "confidence"},
              {"output", "out"}};
  detail::write_text(out / "config.json", cfg.dump(2) + "\n");
  std::cout << "wrote " << seq.frames.size() << " frames to " << out.string() << "\n";
  return 0;
}

int run_eval(const std::string& config, const std::string& model_path, const std::string& estimate,
             const std::string& reference, const std::string& output) {
  CameraIntrinsics k;
  std::vector<int> subset;
  std::vector<std::vector<Vec3>> gt;
  fs::path mp = model_path;
  if (!config.empty()) {
    const SequenceConfig c = load_config(config);
    k = c.intrinsics;
    subset = c.joint_subset;
    mp = c.model;
    if (c.ground_truth_joints) gt = parse_joints(detail::read_text(*c.ground_truth_joints));
  }
  if (mp.empty()) throw ValidationError("eval needs --model or --config");
  if (estimate.empty()) throw ValidationError("eval needs --estimate");
  const SkinnedModel m = load_model(mp);
  const auto est = trajectory_joints(m, load_poses(estimate));
  if (!reference.empty()) gt = trajectory_joints(m, load_poses(reference));
  if (gt.empty()) throw ValidationError("eval needs --reference or ground truth joints in the config");
  const json j = evaluation_json(evaluate(est, gt, k, subset));
  if (!output.empty()) detail::write_text(fs::path(output) / "eval.json", j.dump(2) + "\n");
  print({{"error_2d_px", j["error_2d_px"]}, {"error_3d_mm", j["error_3d_mm"]}});
  return 0;
}

Eigen::MatrixXd parse_matrix(const std::string& s, int& cols) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(s);
  std::string row;
  while (std::getline(in, row, ';')) {
    std::istringstream rs(row);
    std::vector<double> r;
    double v;
    while (rs >> v) {
      r.push_back(v);
      if (rs.peek() == ',') rs.ignore();
    }
    if (!r.empty()) rows.push_back(r);
  }
  cols = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  Eigen::MatrixXd m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != cols) throw ValidationError("cost rows differ in length");
    for (int j = 0; j < cols; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

int run_assign(const std::string& costs, const std::string& w_st_text, const std::string& w_s_text, double lambda) {
  Eigen::MatrixXd w_st;
  Eigen::VectorXd w_s;
  if (!costs.empty()) {
    const json j = detail::parse_json(detail::read_text(costs), costs);
    const auto rows = j.at("w_st").get<std::vector<std::vector<double>>>();
    const auto ws = j.at("w_s").get<std::vector<double>>();
    const int T = rows.empty() ? j.value("fingertips", 0) : static_cast<int>(rows[0].size());
    w_st.resize(rows.size(), T);
    for (std::size_t s = 0; s < rows.size(); ++s)
      for (int t = 0; t < T; ++t) w_st(s, t) = rows[s].at(t);
    w_s = Eigen::Map<const Eigen::VectorXd>(ws.data(), ws.size());
    if (lambda < 0.0) lambda = j.value("lambda", 1.2);
  } else {
    int cols = 0;
    w_st = parse_matrix(w_st_text, cols);
    int one = 0;
    const Eigen::MatrixXd ws = parse_matrix(w_s_text, one);
    w_s = ws.size() ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(ws.data(), ws.size()))
                    : Eigen::VectorXd::Ones(w_st.rows());
  }
  if (lambda < 0.0) lambda = 1.2;
  const AssignmentSolution sol = solve_assignment(w_st, w_s, lambda);
  json e = json::array();
  for (int s = 0; s < sol.e.rows(); ++s) {
    std::vector<int> row(sol.e.cols());
    for (int t = 0; t < sol.e.cols(); ++t) row[t] = sol.e(s, t);
    e.push_back(row);
  }
  print({{"e", e},
         {"alpha", std::vector<int>(sol.alpha.data(), sol.alpha.data() + sol.alpha.size())},
         {"beta", std::vector<int>(sol.beta.data(), sol.beta.data() + sol.beta.size())},
         {"objective", sol.objective}});
  return 0;
}

ConvexHull hull_from(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere")
    return convex_hull(sphere_mesh(detail::vec3(j.at("center")), j.at("radius").get<double>(), Vec3::UnitY(),
                                   j.value("around", 16), j.value("rings", 8))
                           .vertices);
  if (type == "box") return convex_hull(box_mesh(detail::vec3(j.at("center")), detail::vec3(j.at("size"))).vertices);
  if (type == "points") {
    std::vector<Vec3> pts;
    for (const json& p : j.at("points")) pts.push_back(detail::vec3(p));
    return convex_hull(pts);
  }
  throw ValidationError("unknown hull type '" + type + "'");
}

int run_simulate(const std::string& scene_path) {
  const json j = detail::parse_json(detail::read_text(scene_path), scene_path);
  RigidBodyScene scene;
  SimulationParams sim;
  try {
    const json& o = j.at("object");
    scene.object = {hull_from(o), o.value("mass", 1.0), o.value("restitution", 0.5)};
    if (j.contains("statics"))
      for (const json& s : j["statics"])
        scene.statics.push_back({hull_from(s), s.value("friction", 3.0), s.value("restitution", 0.0)});
    sim.steps = j.value("steps", sim.steps);
    sim.dt = j.value("dt", sim.dt);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene: ") + e.what());
  }
  const StabilityReport r = simulate_drop(scene, sim);
  print({{"displacement_mm", r.displacement}, {"stable", r.stable}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Articulated hand/object tracking from depth frames"};
  app.require_subcommand(1);

  TrackOverrides track;
  auto* t = app.add_subcommand("track", "Track a depth sequence described by a config file");
  t->add_option("--config", track.config, "Sequence config (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("--metric", track.metric, "Data term metric")->check(CLI::IsMember({"p2p", "p2plane"}));
  auto* it_opt = t->add_option("--iterations", track.iterations, "Fixed iterations per frame")->check(CLI::PositiveNumber);
  auto* eps_opt = t->add_option("--stop-eps", track.stop_eps, "Stop when mean joint motion < MM (max 50 iterations)")
                      ->check(CLI::PositiveNumber);
  it_opt->excludes(eps_opt);
  t->add_option("--gamma-c", track.gamma_c, "Collision weight")->check(CLI::NonNegativeNumber);
  t->add_option("--gamma-ph", track.gamma_ph, "Physics weight")->check(CLI::NonNegativeNumber);
  t->add_option("--lambda", track.lambda, "Assignment outlier cost")->check(CLI::NonNegativeNumber);
  t->add_option("--output", track.output, "Output directory");

  SynthOptionsCli synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic hand sequence with ground truth");
  s->add_option("--output", synth.output, "Output directory")->required();
  s->add_option("--frames", synth.frames, "Number of frames")->check(CLI::PositiveNumber);
  s->add_option("--noise", synth.noise, "Depth noise std (mm)")->check(CLI::NonNegativeNumber);
  s->add_option("--seed", synth.seed, "Noise seed");
  s->add_option("--fingers", synth.fingers, "Fingers (2-5)")->check(CLI::Range(2, 5));
  s->add_option("--format", synth.format, "Depth file format")->check(CLI::IsMember({"pgm", "raw"}));

  std::string e_config, e_model, e_est, e_ref, e_out;
  auto* e = app.add_subcommand("eval", "Joint errors of a trajectory against ground truth");
  e->add_option("--config", e_config, "Sequence config with ground truth joints")->check(CLI::ExistingFile);
  e->add_option("--model", e_model, "Model OBJ (with .json rig)")->check(CLI::ExistingFile);
  e->add_option("--estimate", e_est, "Estimated poses CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--reference", e_ref, "Reference poses CSV")->check(CLI::ExistingFile);
  e->add_option("--output", e_out, "Directory for eval.json");

  std::string a_costs, a_wst, a_ws;
  double a_lambda = -1.0;
  auto* a = app.add_subcommand("assign", "Solve one detection/fingertip assignment");
  auto* costs_opt = a->add_option("--costs", a_costs, "JSON with w_st, w_s, lambda")->check(CLI::ExistingFile);
  auto* wst_opt = a->add_option("--w-st", a_wst, "Cost matrix, rows separated by ';'");
  a->add_option("--w-s", a_ws, "Detection weights");
  a->add_option("--lambda", a_lambda, "Outlier cost factor")->check(CLI::NonNegativeNumber);
  costs_opt->excludes(wst_opt);

  std::string scene;
  auto* m = app.add_subcommand("simulate", "Run the stability oracle on a scene file");
  m->add_option("--scene", scene, "Scene JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*t) return run_track(track);
    if (*s) return run_synth(synth);
    if (*e) return run_eval(e_config, e_model, e_est, e_ref, e_out);
    if (*a) {
      if (a_costs.empty() && a_wst.empty()) throw ValidationError("assign needs --costs or --w-st");
      return run_assign(a_costs, a_wst, a_ws, a_lambda);
    }
    if (*m) return run_simulate(scene);
  } catch (const ParseError& err) {
    std::cerr << "error: " << err.what() << " (line " << err.line() << ")\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
