#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "artrack/geometry.hpp"
#include "artrack/kinematics.hpp"

namespace artrack {

struct FingertipSet {
  std::string name;
  std::vector<int> vertices;
};

/// Triangle mesh + skeleton + skinning weights + annotations. Several
/// tracked bodies (e.g. a hand and an object) can share one model: each
/// joint carries a group id, and every group has its own root.
struct SkinnedModel {
  std::string name;
  TriangleMesh mesh;  // rigging pose
  Skeleton skeleton;
  SkinningWeights weights;
  std::vector<RigidTransform> rest_transforms;
  std::vector<FingertipSet> fingertips;
  std::vector<std::uint8_t> physics_part;  // per joint: finger part usable as support
  std::vector<int> joint_group;            // per joint
  std::vector<std::string> groups;
  int object_group = -1;  // group simulated by the stability oracle, -1 if none

  // Derived by finalize().
  std::vector<int> vertex_bone;       // largest skinning weight
  std::vector<int> triangle_bone;     // bone of the triangle's first vertex majority
  std::vector<int> geometric_parent;  // nearest ancestor owning vertices, -1 if none

  int dof_count() const { return skeleton.dof_count(); }

  /// Validates invariants and fills the derived tables.
  void finalize() {
    const int nj = skeleton.size();
    const int nv = static_cast<int>(mesh.vertices.size());
    if (mesh.vertex_normals.empty()) mesh.vertex_normals = compute_vertex_normals(mesh.vertices, mesh.triangles);
    validate_mesh(mesh);
    if (static_cast<int>(weights.size()) != nv) throw ValidationError("weight rows differ from vertex count");
    validate_weights(weights, nj);
    if (rest_transforms.empty()) rest_transforms = forward_kinematics(skeleton, Pose::zero(skeleton));
    if (static_cast<int>(rest_transforms.size()) != nj) throw ValidationError("rest transform count differs from joints");
    if (physics_part.empty()) physics_part.assign(nj, 0);
    if (static_cast<int>(physics_part.size()) != nj) throw ValidationError("physics part flags differ from joints");
    if (joint_group.empty()) joint_group.assign(nj, 0);
    if (static_cast<int>(joint_group.size()) != nj) throw ValidationError("joint groups differ from joints");
    if (groups.empty()) groups.push_back(name);
    for (int g : joint_group)
      if (g < 0 || g >= static_cast<int>(groups.size())) throw ValidationError("joint group out of range");
    if (object_group >= static_cast<int>(groups.size())) throw ValidationError("object group out of range");
    for (const FingertipSet& f : fingertips) {
      if (f.vertices.empty()) throw ValidationError("fingertip '" + f.name + "' has no vertices");
      for (int v : f.vertices)
        if (v < 0 || v >= nv) throw ValidationError("fingertip '" + f.name + "' vertex out of range");
    }

    vertex_bone.assign(nv, 0);
    std::vector<int> owned(nj, 0);
    for (int v = 0; v < nv; ++v) {
      const Influence* best = nullptr;
      for (const Influence& in : weights[v])
        if (!best || in.weight > best->weight) best = &in;
      vertex_bone[v] = best->bone;
      ++owned[best->bone];
    }
    triangle_bone.resize(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const Triangle& tri = mesh.triangles[t];
      const int a = vertex_bone[tri[0]], b = vertex_bone[tri[1]], c = vertex_bone[tri[2]];
      triangle_bone[t] = (b == c) ? b : a;
    }
    geometric_parent.assign(nj, -1);
    for (int j = 0; j < nj; ++j) {
      for (std::optional<int> p = skeleton.joint(j).parent; p; p = skeleton.joint(*p).parent) {
        if (owned[*p] > 0) {
          geometric_parent[j] = *p;
          break;
        }
      }
    }
  }

  /// Same bone, or one is the other's geometric parent.
  bool bones_adjacent(int a, int b) const {
    return a == b || geometric_parent[a] == b || geometric_parent[b] == a;
  }

  std::vector<int> group_vertices(int group) const {
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(vertex_bone.size()); ++v)
      if (joint_group[vertex_bone[v]] == group) out.push_back(v);
    return out;
  }
};

struct PosedModel {
  std::vector<RigidTransform> transforms;
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
};

inline PosedModel pose_model(const SkinnedModel& m, const Pose& p) {
  PosedModel out;
  out.transforms = forward_kinematics(m.skeleton, p);
  LbsResult lbs = lbs_deform(m.mesh.vertices, m.mesh.vertex_normals, m.weights, m.rest_transforms, out.transforms);
  out.vertices = std::move(lbs.vertices);
  out.normals = std::move(lbs.normals);
  return out;
}

/// World position of every joint: the posed image of its rest point.
inline std::vector<Vec3> joint_positions(const SkinnedModel& m, const std::vector<RigidTransform>& transforms) {
  std::vector<Vec3> out(m.skeleton.size());
  for (int j = 0; j < m.skeleton.size(); ++j)
    out[j] = transforms[j] * (m.rest_transforms[j].inverse() * m.skeleton.joint(j).point);
  return out;
}

inline std::vector<Vec3> joint_positions(const SkinnedModel& m, const Pose& p) {
  return joint_positions(m, forward_kinematics(m.skeleton, p));
}

/// Concatenates models into one forest; the pose vector is the
/// concatenation of the parts' pose vectors in order.
inline SkinnedModel merge_models(const std::vector<SkinnedModel>& parts, const std::string& name = "scene") {
  SkinnedModel out;
  out.name = name;
  std::vector<Joint> joints;
  for (const SkinnedModel& m : parts) {
    const int joff = static_cast<int>(joints.size());
    const int voff = static_cast<int>(out.mesh.vertices.size());
    const int goff = static_cast<int>(out.groups.size());
    for (Joint j : m.skeleton.joints()) {
      if (j.parent) j.parent = *j.parent + joff;
      j.name = m.name + "/" + j.name;
      joints.push_back(j);
    }
    out.mesh.vertices.insert(out.mesh.vertices.end(), m.mesh.vertices.begin(), m.mesh.vertices.end());
    out.mesh.vertex_normals.insert(out.mesh.vertex_normals.end(), m.mesh.vertex_normals.begin(),
                                   m.mesh.vertex_normals.end());
    for (Triangle t : m.mesh.triangles) {
      for (int& i : t) i += voff;
      out.mesh.triangles.push_back(t);
    }
    for (auto row : m.weights) {
      for (Influence& in : row) in.bone += joff;
      out.weights.push_back(std::move(row));
    }
    out.rest_transforms.insert(out.rest_transforms.end(), m.rest_transforms.begin(), m.rest_transforms.end());
    for (FingertipSet f : m.fingertips) {
      for (int& v : f.vertices) v += voff;
      f.name = m.name + "/" + f.name;
      out.fingertips.push_back(std::move(f));
    }
    out.physics_part.insert(out.physics_part.end(), m.physics_part.begin(), m.physics_part.end());
    for (int g : m.joint_group) out.joint_group.push_back(g + goff);
    for (const std::string& g : m.groups) out.groups.push_back(m.name == g ? g : m.name + "/" + g);
    if (m.object_group >= 0) out.object_group = m.object_group + goff;
  }
  out.skeleton = Skeleton(std::move(joints));
  out.finalize();
  return out;
}

}  // namespace artrack
