#pragma once

// Procedural capsule-segment hand and simple rigid/articulated objects.
// Units: mm, radians. The hand lies in the x-y plane with fingers along +y
// and the palm facing -z.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "artrack/model.hpp"

namespace artrack {

/// Vertices and triangles of a primitive, before skinning.
struct MeshPart {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<double> axial;  // per vertex: position along the primitive axis, 0 at p0
};

namespace detail {

inline Mat3 frame_along(const Vec3& axis) {
  const Vec3 z = axis.normalized();
  const Vec3 helper = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 x = helper.cross(z).normalized();
  Mat3 f;
  f.col(0) = x;
  f.col(1) = z.cross(x);
  f.col(2) = z;
  return f;
}

}  // namespace detail

/// Capsule from p0 to p1 (surface poles on the axis beyond both ends).
inline MeshPart capsule_mesh(const Vec3& p0, const Vec3& p1, double radius, int around = 12, int cap_rings = 4,
                             int body_rings = 3) {
  MeshPart m;
  const double len = (p1 - p0).norm();
  const Mat3 f = detail::frame_along(p1 - p0);
  auto add = [&](double z, double r) {
    for (int i = 0; i < around; ++i) {
      const double a = 2.0 * std::numbers::pi * i / around;
      m.vertices.push_back(p0 + f * Vec3(r * std::cos(a), r * std::sin(a), z));
      m.axial.push_back(z);
    }
  };
  m.vertices.push_back(p0 - radius * f.col(2));
  m.axial.push_back(-radius);
  std::vector<int> ring_start;
  for (int k = 1; k <= cap_rings; ++k) {
    const double a = std::numbers::pi / 2.0 * k / cap_rings;
    ring_start.push_back(static_cast<int>(m.vertices.size()));
    add(-radius * std::cos(a), radius * std::sin(a));
  }
  for (int k = 1; k <= body_rings; ++k) {
    ring_start.push_back(static_cast<int>(m.vertices.size()));
    add(len * k / (body_rings + 1), radius);
  }
  for (int k = cap_rings; k >= 1; --k) {
    const double a = std::numbers::pi / 2.0 * k / cap_rings;
    ring_start.push_back(static_cast<int>(m.vertices.size()));
    add(len + radius * std::cos(a), radius * std::sin(a));
  }
  const int top = static_cast<int>(m.vertices.size());
  m.vertices.push_back(p1 + radius * f.col(2));
  m.axial.push_back(len + radius);

  // Outward orientation: rings advance along +axis, angles counter-clockwise about it.
  for (int i = 0; i < around; ++i) m.triangles.push_back({0, ring_start[0] + (i + 1) % around, ring_start[0] + i});
  for (std::size_t r = 0; r + 1 < ring_start.size(); ++r) {
    const int a = ring_start[r], b = ring_start[r + 1];
    for (int i = 0; i < around; ++i) {
      const int i1 = (i + 1) % around;
      m.triangles.push_back({a + i, a + i1, b + i1});
      m.triangles.push_back({a + i, b + i1, b + i});
    }
  }
  const int last = ring_start.back();
  for (int i = 0; i < around; ++i) m.triangles.push_back({top, last + i, last + (i + 1) % around});
  return m;
}

/// UV sphere with poles on `axis`.
inline MeshPart sphere_mesh(const Vec3& center, double radius, const Vec3& axis = Vec3::UnitY(), int around = 16,
                            int rings = 8) {
  MeshPart m;
  const Mat3 f = detail::frame_along(axis);
  m.vertices.push_back(center - radius * f.col(2));
  m.axial.push_back(-radius);
  for (int k = 1; k < rings; ++k) {
    const double polar = std::numbers::pi * k / rings;
    for (int i = 0; i < around; ++i) {
      const double a = 2.0 * std::numbers::pi * i / around;
      const Vec3 local(radius * std::sin(polar) * std::cos(a), radius * std::sin(polar) * std::sin(a),
                       -radius * std::cos(polar));
      m.vertices.push_back(center + f * local);
      m.axial.push_back(local.z());
    }
  }
  const int top = static_cast<int>(m.vertices.size());
  m.vertices.push_back(center + radius * f.col(2));
  m.axial.push_back(radius);
  for (int i = 0; i < around; ++i) m.triangles.push_back({0, 1 + (i + 1) % around, 1 + i});
  for (int k = 0; k + 1 < rings - 1; ++k) {
    const int a = 1 + k * around, b = a + around;
    for (int i = 0; i < around; ++i) {
      const int i1 = (i + 1) % around;
      m.triangles.push_back({a + i, a + i1, b + i1});
      m.triangles.push_back({a + i, b + i1, b + i});
    }
  }
  const int last = 1 + (rings - 2) * around;
  for (int i = 0; i < around; ++i) m.triangles.push_back({top, last + i, last + (i + 1) % around});
  return m;
}

/// Axis-aligned box as 12 outward triangles.
inline MeshPart box_mesh(const Vec3& center, const Vec3& size) {
  MeshPart m;
  const Vec3 h = size / 2.0;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(center + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z()));
  m.axial.assign(8, 0.0);
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

/// Incremental builder for procedural skinned models.
class ModelBuilder {
 public:
  explicit ModelBuilder(std::string name) { model_.name = std::move(name); }

  int add_root(const std::string& name) {
    joints_.push_back({name, std::nullopt, JointType::root, Vec3::UnitZ(), Vec3::Zero(), -std::numbers::pi,
                       std::numbers::pi});
    parts_.push_back(0);
    return static_cast<int>(joints_.size()) - 1;
  }

  int add_revolute(const std::string& name, int parent, const Vec3& axis, const Vec3& point, double lower,
                   double upper, bool physics_part = false) {
    joints_.push_back({name, parent, JointType::revolute, axis.normalized(), point, lower, upper});
    parts_.push_back(physics_part ? 1 : 0);
    return static_cast<int>(joints_.size()) - 1;
  }

  void set_physics_part(int joint, bool on) { parts_[joint] = on ? 1 : 0; }

  /// Attaches a primitive to `bone`. Vertices with axial coordinate below
  /// `blend_below` are shared with `blend_bone` (weight `blend_weight`).
  /// Returns the index of the first added vertex.
  int attach(const MeshPart& part, int bone, int blend_bone = -1, double blend_below = 0.0,
             double blend_weight = 0.0) {
    const int off = static_cast<int>(model_.mesh.vertices.size());
    for (std::size_t i = 0; i < part.vertices.size(); ++i) {
      model_.mesh.vertices.push_back(part.vertices[i]);
      if (blend_bone >= 0 && part.axial[i] < blend_below)
        model_.weights.push_back({{bone, 1.0 - blend_weight}, {blend_bone, blend_weight}});
      else
        model_.weights.push_back({{bone, 1.0}});
    }
    for (Triangle t : part.triangles) {
      for (int& i : t) i += off;
      model_.mesh.triangles.push_back(t);
    }
    return off;
  }

  void add_fingertip(const std::string& name, std::vector<int> vertices) {
    model_.fingertips.push_back({name, std::move(vertices)});
  }

  SkinnedModel finish(bool is_object) {
    model_.skeleton = Skeleton(joints_);
    model_.physics_part = parts_;
    model_.joint_group.assign(joints_.size(), 0);
    model_.groups = {model_.name};
    model_.object_group = is_object ? 0 : -1;
    model_.mesh.vertex_normals = compute_vertex_normals(model_.mesh.vertices, model_.mesh.triangles);
    model_.finalize();
    return model_;
  }

 private:
  SkinnedModel model_;
  std::vector<Joint> joints_;
  std::vector<std::uint8_t> parts_;
};

struct HandOptions {
  int fingers = 5;  // 2..5: index, middle, ring, pinky, thumb in that order
  int around = 12;
  double scale = 1.0;
  double finger_radius = 1.0;  // factor on the long fingers' capsule radii
};

/// Capsule-segment hand. With five fingers it has 31 revolute joints
/// (37 DoF): wrist (2), four fingers with 3-DoF MCP + PIP + DIP (20), ring
/// and pinky CMC flexion (2), thumb 3-DoF CMC + 3-DoF MCP + IP (7).
inline SkinnedModel procedural_hand(const HandOptions& opt = {}) {
  if (opt.fingers < 2 || opt.fingers > 5) throw ValidationError("hand needs 2 to 5 fingers");
  const double s = opt.scale;
  const double deg = std::numbers::pi / 180.0;
  ModelBuilder b("hand");
  const int root = b.add_root("forearm");
  b.attach(capsule_mesh(s * Vec3(0, -95, 0), s * Vec3(0, -62, 0), s * 20, opt.around), root);

  const Vec3 wrist = s * Vec3(0, -45, 0);
  const int wflex = b.add_revolute("wrist_flex", root, -Vec3::UnitX(), wrist, -70 * deg, 70 * deg);
  const int wdev = b.add_revolute("wrist_dev", wflex, Vec3::UnitZ(), wrist, -25 * deg, 25 * deg);
  {
    MeshPart palm = capsule_mesh(s * Vec3(0, -8, 0), s * Vec3(0, 12, 0), s * 34, opt.around + 4);
    for (Vec3& v : palm.vertices) v.z() *= 0.33;
    for (double& a : palm.axial) a += 34 * s;  // everything counts as above the wrist blend zone
    b.attach(palm, wdev);
  }

  struct FingerSpec {
    const char* name;
    double x;
    std::array<double, 3> len;
    double radius;
  };
  const std::array<FingerSpec, 4> specs{{{"index", -27, {40, 25, 20}, 7.5},
                                         {"middle", -9, {44, 28, 22}, 8.0},
                                         {"ring", 9, {41, 26, 21}, 7.5},
                                         {"pinky", 26, {33, 20, 18}, 6.5}}};
  const int long_fingers = std::min(opt.fingers, 4);
  const bool thumb = opt.fingers == 5;
  for (int fi = 0; fi < long_fingers; ++fi) {
    const FingerSpec& f = specs[fi];
    int parent = wdev;
    const Vec3 base = s * Vec3(f.x, 46, 0);
    if (fi >= 2) {
      parent = b.add_revolute(std::string(f.name) + "_cmc", parent, -Vec3::UnitX(), s * Vec3(f.x, -25, 0), -5 * deg,
                              20 * deg);
    }
    const std::string n = f.name;
    int j = b.add_revolute(n + "_mcp_flex", parent, -Vec3::UnitX(), base, -20 * deg, 90 * deg);
    j = b.add_revolute(n + "_mcp_abd", j, Vec3::UnitZ(), base, -25 * deg, 25 * deg);
    j = b.add_revolute(n + "_mcp_twist", j, Vec3::UnitY(), base, -15 * deg, 15 * deg, true);
    Vec3 p = base;
    const double r = s * f.radius * opt.finger_radius;
    int prev_geom = wdev;
    for (int seg = 0; seg < 3; ++seg) {
      const Vec3 q = p + s * Vec3(0, f.len[seg], 0);
      if (seg > 0)
        j = b.add_revolute(n + (seg == 1 ? "_pip" : "_dip"), j, -Vec3::UnitX(), p, 0.0,
                           (seg == 1 ? 110 : 80) * deg, true);
      const int off = b.attach(capsule_mesh(p, q, r * (1.0 - 0.06 * seg), opt.around), j, prev_geom, 0.0, 0.3);
      if (seg == 2) {
        const MeshPart probe = capsule_mesh(p, q, r * (1.0 - 0.06 * seg), opt.around);
        std::vector<int> tip;
        for (std::size_t i = 0; i < probe.vertices.size(); ++i)
          if (probe.axial[i] >= (q - p).norm() * 0.5) tip.push_back(off + static_cast<int>(i));
        b.add_fingertip(n, tip);
      }
      prev_geom = j;
      p = q;
    }
  }
  if (thumb) {
    const Vec3 cmc = s * Vec3(-30, -22, -6);
    const Vec3 dir = Vec3(-0.62, 0.78, -0.1).normalized();
    int j = b.add_revolute("thumb_cmc_flex", wdev, Vec3(0.2, 0.15, 1.0).normalized(), cmc, -15 * deg, 45 * deg);
    j = b.add_revolute("thumb_cmc_abd", j, Vec3(0.78, 0.62, 0.0).normalized(), cmc, -10 * deg, 60 * deg);
    j = b.add_revolute("thumb_cmc_twist", j, dir, cmc, -20 * deg, 20 * deg);
    const std::array<double, 3> len{38, 30, 24};
    const std::array<double, 3> rad{11, 9, 8.5};
    Vec3 p = cmc;
    int prev_geom = wdev;
    for (int seg = 0; seg < 3; ++seg) {
      const Vec3 q = p + s * len[seg] * dir;
      if (seg == 1) {
        j = b.add_revolute("thumb_mcp_flex", j, Vec3(0.78, 0.62, 0.0).normalized(), p, -10 * deg, 60 * deg, true);
        j = b.add_revolute("thumb_mcp_abd", j, Vec3(0.0, 0.0, 1.0), p, -15 * deg, 15 * deg, true);
        j = b.add_revolute("thumb_mcp_twist", j, dir, p, -15 * deg, 15 * deg, true);
      } else if (seg == 2) {
        j = b.add_revolute("thumb_ip", j, Vec3(0.78, 0.62, 0.0).normalized(), p, -10 * deg, 80 * deg, true);
      }
      if (seg == 0) b.set_physics_part(j, true);
      const int off = b.attach(capsule_mesh(p, q, s * rad[seg], opt.around), j, seg == 0 ? -1 : prev_geom, 0.0, 0.3);
      if (seg == 2) {
        const MeshPart probe = capsule_mesh(p, q, s * rad[seg], opt.around);
        std::vector<int> tip;
        for (std::size_t i = 0; i < probe.vertices.size(); ++i)
          if (probe.axial[i] >= (q - p).norm() * 0.5) tip.push_back(off + static_cast<int>(i));
        b.add_fingertip("thumb", tip);
      }
      prev_geom = j;
      p = q;
    }
  }
  return b.finish(false);
}

/// Rigid ball (6 DoF).
inline SkinnedModel procedural_ball(double radius = 35.0, int around = 16, int rings = 8) {
  ModelBuilder b("ball");
  const int root = b.add_root("ball");
  b.attach(sphere_mesh(Vec3::Zero(), radius, Vec3::UnitY(), around, rings), root);
  return b.finish(true);
}

/// Rigid box (6 DoF).
inline SkinnedModel procedural_box(const Vec3& size = Vec3(60, 40, 30)) {
  ModelBuilder b("box");
  const int root = b.add_root("box");
  b.attach(box_mesh(Vec3::Zero(), size), root);
  return b.finish(true);
}

/// Three collinear capsule segments along x; the last one hinges about z
/// (7 DoF).
inline SkinnedModel procedural_pipe(double segment = 50.0, double radius = 10.0) {
  ModelBuilder b("pipe");
  const int root = b.add_root("pipe");
  b.attach(capsule_mesh(Vec3(-1.5 * segment, 0, 0), Vec3(-0.5 * segment, 0, 0), radius), root);
  b.attach(capsule_mesh(Vec3(-0.5 * segment + radius * 2.2, 0, 0), Vec3(0.5 * segment - radius * 1.2, 0, 0), radius),
           root);
  const int hinge = b.add_revolute("hinge", root, Vec3::UnitZ(), Vec3(0.5 * segment, 0, 0), -std::numbers::pi / 2,
                                   std::numbers::pi / 2);
  b.attach(capsule_mesh(Vec3(0.5 * segment + radius * 1.2, 0, 0), Vec3(1.5 * segment, 0, 0), radius), hinge);
  return b.finish(true);
}

/// Pose of a single-root model placed with rotation R and translation t.
inline Pose placed_pose(const SkinnedModel& m, const RigidTransform& root) {
  Pose p = Pose::zero(m.skeleton);
  for (int r : m.skeleton.roots()) set_root_transform(m.skeleton, p, r, root);
  return p;
}

/// Procedural hand facing the camera at `at` with fingers slightly curled
/// and spread by `spread` radians between neighbours.
inline Pose hand_home_pose(const SkinnedModel& hand, const Vec3& at = Vec3(0, -20, 450),
                           double spread = 8.0 * std::numbers::pi / 180.0) {
  Pose p = placed_pose(hand, {Mat3::Identity(), at});
  const Skeleton& s = hand.skeleton;
  for (int j = 0; j < s.size(); ++j) {
    const std::string& n = s.joint(j).name;
    const int o = s.dof_offset(j);
    if (n.ends_with("_mcp_flex") || n.ends_with("_pip")) p.theta[o] = 0.25;
    if (n.ends_with("_dip")) p.theta[o] = 0.15;
    if (n.ends_with("index_mcp_abd")) p.theta[o] = spread;
    if (n.ends_with("ring_mcp_abd")) p.theta[o] = -spread;
    if (n.ends_with("pinky_mcp_abd")) p.theta[o] = -2.0 * spread;
  }
  return p;
}

/// Per-coordinate factors that damp the sideways joints (abduction, twist,
/// carpometacarpal) of the procedural hand; 1 elsewhere.
inline std::vector<double> lateral_dof_scale(const SkinnedModel& hand, double factor) {
  std::vector<double> out(hand.dof_count(), 1.0);
  for (int j = 0; j < hand.skeleton.size(); ++j) {
    const std::string& n = hand.skeleton.joint(j).name;
    if (n.ends_with("_abd") || n.ends_with("_twist") || n.ends_with("_cmc"))
      out[hand.skeleton.dof_offset(j)] = factor;
  }
  return out;
}

}  // namespace artrack
