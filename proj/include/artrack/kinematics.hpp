#pragma once

// Twist parameterization, exponential maps, forward kinematics over a joint
// forest, linear blend skinning and analytic pose Jacobians.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "artrack/error.hpp"

namespace artrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// theta * (u, omega). omega is unit length, or exactly zero for a pure
/// translation (then theta is a length in mm).
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  double theta = 0.0;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

namespace detail {

inline Mat3 rodrigues(const Vec3& unit_axis, double angle) {
  const Mat3 k = skew(unit_axis);
  return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

}  // namespace detail

/// exp(theta * xi^) in closed form.
inline RigidTransform exp_twist(const Twist& t) {
  const double wn = t.omega.norm();
  if (wn == 0.0) return {Mat3::Identity(), t.theta * t.u};
  if (std::abs(wn - 1.0) > 1e-9) throw InvalidTwist("twist rotation axis is not unit length");
  const Mat3 r = detail::rodrigues(t.omega, t.theta);
  const Vec3 tr =
      (Mat3::Identity() - r) * t.omega.cross(t.u) + t.omega * t.omega.dot(t.u) * t.theta;
  return {r, tr};
}

/// Exponential of unnormalized se(3) coordinates c = (rho, phi), translation
/// first. Equal to exp_twist({phi/|phi|, rho/|phi|, |phi|}) away from zero.
inline RigidTransform exp_coordinates(const Vec6& c) {
  const Vec3 rho = c.head<3>();
  const Vec3 phi = c.tail<3>();
  const double th = phi.norm();
  const Mat3 k = skew(phi);
  double a, b, v1, v2;
  if (th < 1e-6) {
    const double t2 = th * th;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
    v1 = 0.5 - t2 / 24.0;
    v2 = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / (th * th);
    v1 = b;
    v2 = (th - std::sin(th)) / (th * th * th);
  }
  const Mat3 r = Mat3::Identity() + a * k + b * k * k;
  const Mat3 v = Mat3::Identity() + v1 * k + v2 * k * k;
  return {r, v * rho};
}

/// Inverse of exp_coordinates; rotation angle in [0, pi].
inline Vec6 log_coordinates(const RigidTransform& t) {
  const Eigen::AngleAxisd aa(t.rotation);
  const double th = aa.angle();
  const Vec3 phi = aa.axis() * th;
  const Mat3 k = skew(phi);
  double c;
  if (th < 1e-6) {
    c = 1.0 / 12.0 + th * th / 720.0;
  } else {
    c = (1.0 - th * std::sin(th) / (2.0 * (1.0 - std::cos(th)))) / (th * th);
  }
  const Mat3 vinv = Mat3::Identity() - 0.5 * k + c * k * k;
  Vec6 out;
  out.head<3>() = vinv * t.translation;
  out.tail<3>() = phi;
  return out;
}

enum class JointType { root, revolute };

/// A node of the kinematic forest. Roots carry a free 6-DoF transform;
/// revolute joints rotate about `axis` through `point`, both given in the
/// rigging (rest) frame.
struct Joint {
  std::string name;
  std::optional<int> parent;
  JointType type = JointType::revolute;
  Vec3 axis = Vec3::UnitZ();
  Vec3 point = Vec3::Zero();
  double lower = -std::numbers::pi;
  double upper = std::numbers::pi;

  /// xi_j with theta unset: (u, omega) = (q x omega, omega).
  Twist rest_twist() const { return {axis, point.cross(axis), 0.0}; }
};

class Skeleton {
 public:
  Skeleton() = default;

  explicit Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
    const int n = static_cast<int>(joints_.size());
    for (int j = 0; j < n; ++j) {
      // Walk the parent chain; more than n hops means a cycle.
      int hops = 0;
      for (std::optional<int> p = joints_[j].parent; p; p = joints_[*p].parent) {
        if (*p < 0 || *p >= n)
          throw ValidationError("joint '" + joints_[j].name + "' has an out-of-range parent");
        if (++hops > n) throw ValidationError("joint graph has a cycle through '" + joints_[j].name + "'");
      }
    }
    offsets_.resize(n);
    for (int j = 0; j < n; ++j) {
      Joint& jt = joints_[j];
      if (jt.parent && *jt.parent >= j)
        throw ValidationError("parent of joint '" + jt.name + "' must precede it");
      if (jt.type == JointType::root && jt.parent)
        throw ValidationError("root joint '" + jt.name + "' has a parent");
      if (jt.type == JointType::revolute && !jt.parent)
        throw ValidationError("revolute joint '" + jt.name + "' has no parent");
      if (jt.lower > jt.upper) throw ValidationError("joint '" + jt.name + "' has lower > upper");
      if (jt.type == JointType::revolute) {
        const double an = jt.axis.norm();
        if (std::abs(an - 1.0) > 1e-6)
          throw ValidationError("axis of joint '" + jt.name + "' is not unit length");
        jt.axis /= an;
      }
      offsets_[j] = dof_;
      if (jt.type == JointType::root) {
        roots_.push_back(j);
        dof_ += 6;
      } else {
        dof_ += 1;
      }
    }
  }

  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(int j) const { return joints_[j]; }
  int size() const { return static_cast<int>(joints_.size()); }
  int dof_count() const { return dof_; }
  const std::vector<int>& roots() const { return roots_; }

  /// First pose coordinate owned by joint j (6 for roots, 1 for revolutes).
  int dof_offset(int j) const { return offsets_[j]; }

  int index_of(const std::string& name) const {
    for (int j = 0; j < size(); ++j)
      if (joints_[j].name == name) return j;
    return -1;
  }

  bool is_angle_coordinate(int k) const {
    for (int r : roots_)
      if (k >= offsets_[r] && k < offsets_[r] + 6) return false;
    return true;
  }

 private:
  std::vector<Joint> joints_;
  std::vector<int> offsets_;
  std::vector<int> roots_;
  int dof_ = 0;
};

/// Full parameter vector. Root coordinates are se(3) log coordinates
/// (rho, phi) of the root transform; revolute coordinates are unwrapped angles.
struct Pose {
  Eigen::VectorXd theta;

  static Pose zero(const Skeleton& s) { return {Eigen::VectorXd::Zero(s.dof_count())}; }
};

inline void check_pose(const Skeleton& s, const Pose& p) {
  if (p.theta.size() != s.dof_count())
    throw DimensionMismatch("pose has " + std::to_string(p.theta.size()) +
                            " coordinates, skeleton expects " + std::to_string(s.dof_count()));
}

inline RigidTransform root_transform(const Skeleton& s, const Pose& p, int root) {
  return exp_coordinates(p.theta.segment<6>(s.dof_offset(root)));
}

inline void set_root_transform(const Skeleton& s, Pose& p, int root, const RigidTransform& t) {
  p.theta.segment<6>(s.dof_offset(root)) = log_coordinates(t);
}

/// T_j = T_parent(j) * exp(theta_j xi_j); roots use their own transform.
inline std::vector<RigidTransform> forward_kinematics(const Skeleton& s, const Pose& p) {
  check_pose(s, p);
  std::vector<RigidTransform> out(s.size());
  for (int j = 0; j < s.size(); ++j) {
    const Joint& jt = s.joint(j);
    if (jt.type == JointType::root) {
      out[j] = root_transform(s, p, j);
    } else {
      Twist tw = jt.rest_twist();
      tw.theta = p.theta[s.dof_offset(j)];
      out[j] = out[*jt.parent] * exp_twist(tw);
    }
  }
  return out;
}

/// Apply a tangent increment: roots compose exp(delta) on the left, angles add.
inline Pose retract(const Skeleton& s, const Pose& p, const Eigen::VectorXd& delta) {
  check_pose(s, p);
  if (delta.size() != p.theta.size()) throw DimensionMismatch("increment size differs from pose size");
  Pose out = p;
  for (int j = 0; j < s.size(); ++j) {
    const int o = s.dof_offset(j);
    if (s.joint(j).type == JointType::root) {
      if (delta.segment<6>(o).isZero(0.0)) continue;  // keep the coordinates bit-exact
      const RigidTransform t = exp_coordinates(delta.segment<6>(o)) * root_transform(s, p, j);
      out.theta.segment<6>(o) = log_coordinates(t);
    } else {
      out.theta[o] += delta[o];
    }
  }
  return out;
}

struct Influence {
  int bone = 0;
  double weight = 0.0;
};

/// Per-vertex sparse skinning weights kappa_{v,j}.
using SkinningWeights = std::vector<std::vector<Influence>>;

inline void validate_weights(const SkinningWeights& w, int bone_count) {
  for (std::size_t v = 0; v < w.size(); ++v) {
    double sum = 0.0;
    for (const Influence& in : w[v]) {
      if (in.bone < 0 || in.bone >= bone_count)
        throw ValidationError("vertex " + std::to_string(v) + " references bone " + std::to_string(in.bone));
      if (in.weight < 0.0) throw ValidationError("vertex " + std::to_string(v) + " has a negative weight");
      sum += in.weight;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ValidationError("weights of vertex " + std::to_string(v) + " sum to " + std::to_string(sum));
  }
}

struct LbsResult {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
};

/// v(theta) = sum_j kappa_{v,j} T_j(theta) T_j(0)^-1 v(0). Normals (when
/// given) go through the blended rotation and are renormalized.
inline LbsResult lbs_deform(std::span<const Vec3> rest_vertices, std::span<const Vec3> rest_normals,
                            const SkinningWeights& weights,
                            std::span<const RigidTransform> rest_transforms,
                            std::span<const RigidTransform> transforms) {
  if (weights.size() != rest_vertices.size())
    throw DimensionMismatch("weight rows differ from vertex count");
  if (rest_transforms.size() != transforms.size())
    throw DimensionMismatch("rest and posed transform counts differ");
  validate_weights(weights, static_cast<int>(transforms.size()));
  std::vector<RigidTransform> rel(transforms.size());
  for (std::size_t j = 0; j < transforms.size(); ++j) rel[j] = transforms[j] * rest_transforms[j].inverse();

  LbsResult out;
  out.vertices.resize(rest_vertices.size());
  const bool with_normals = !rest_normals.empty();
  if (with_normals) out.normals.resize(rest_vertices.size());
  for (std::size_t v = 0; v < rest_vertices.size(); ++v) {
    Vec3 p = Vec3::Zero();
    Mat3 r = Mat3::Zero();
    for (const Influence& in : weights[v]) {
      p += in.weight * (rel[in.bone] * rest_vertices[v]);
      r += in.weight * rel[in.bone].rotation;
    }
    out.vertices[v] = p;
    if (with_normals) {
      const Vec3 n = r * rest_normals[v];
      const double nn = n.norm();
      out.normals[v] = nn > 0.0 ? Vec3(n / nn) : rest_normals[v];
    }
  }
  return out;
}

/// Posed revolute axis: omega' = R_parent omega, q' = T_parent q.
struct WorldAxis {
  Vec3 omega = Vec3::Zero();
  Vec3 point = Vec3::Zero();
};

/// Everything needed to differentiate skinned points at one pose. Root
/// columns are derivatives w.r.t. a left-multiplied twist increment (rho,
/// phi); revolute columns are plain angle derivatives.
class PoseLinearization {
 public:
  PoseLinearization(const Skeleton& s, std::span<const RigidTransform> rest_transforms,
                    std::vector<RigidTransform> transforms)
      : skeleton_(&s), transforms_(std::move(transforms)) {
    const int n = s.size();
    if (static_cast<int>(transforms_.size()) != n || static_cast<int>(rest_transforms.size()) != n)
      throw DimensionMismatch("transform count differs from joint count");
    relative_.resize(n);
    axes_.resize(n);
    for (int j = 0; j < n; ++j) {
      relative_[j] = transforms_[j] * rest_transforms[j].inverse();
      const Joint& jt = s.joint(j);
      if (jt.type == JointType::revolute) {
        const RigidTransform& a = transforms_[*jt.parent];
        axes_[j] = {a.rotation * jt.axis, a * jt.point};
      }
    }
  }

  const Skeleton& skeleton() const { return *skeleton_; }
  const std::vector<RigidTransform>& transforms() const { return transforms_; }
  const WorldAxis& axis(int j) const { return axes_[j]; }
  int dof() const { return skeleton_->dof_count(); }

  /// d v / d theta for a skinned rest point.
  Mat3X vertex_jacobian(const Vec3& rest_vertex, std::span<const Influence> influences) const {
    Mat3X jac = Mat3X::Zero(3, dof());
    for (const Influence& in : influences) {
      const Vec3 p = relative_[in.bone] * rest_vertex;
      accumulate_point(jac, in.bone, p, in.weight);
    }
    return jac;
  }

  /// d n / d theta for the renormalized blended-rotation normal.
  Mat3X normal_jacobian(const Vec3& rest_normal, std::span<const Influence> influences) const {
    Mat3X dm = Mat3X::Zero(3, dof());
    Vec3 m = Vec3::Zero();
    for (const Influence& in : influences) {
      const Vec3 d = relative_[in.bone].rotation * rest_normal;
      m += in.weight * d;
      accumulate_direction(dm, in.bone, d, in.weight);
    }
    const double mn = m.norm();
    if (mn == 0.0) return Mat3X::Zero(3, dof());
    const Vec3 n = m / mn;
    return (Mat3::Identity() - n * n.transpose()) * dm / mn;
  }

  /// d p / d theta for a point rigidly attached to bone `bone` (p given in
  /// posed coordinates).
  Mat3X rigid_point_jacobian(int bone, const Vec3& posed_point) const {
    Mat3X jac = Mat3X::Zero(3, dof());
    accumulate_point(jac, bone, posed_point, 1.0);
    return jac;
  }

 private:
  void accumulate_point(Mat3X& jac, int bone, const Vec3& p, double w) const {
    for (std::optional<int> k = bone; k; k = skeleton_->joint(*k).parent) {
      const Joint& jt = skeleton_->joint(*k);
      const int o = skeleton_->dof_offset(*k);
      if (jt.type == JointType::root) {
        jac.block<3, 3>(0, o) += w * Mat3::Identity();
        jac.block<3, 3>(0, o + 3) -= w * skew(p);
      } else {
        jac.col(o) += w * axes_[*k].omega.cross(p - axes_[*k].point);
      }
    }
  }

  void accumulate_direction(Mat3X& jac, int bone, const Vec3& d, double w) const {
    for (std::optional<int> k = bone; k; k = skeleton_->joint(*k).parent) {
      const Joint& jt = skeleton_->joint(*k);
      const int o = skeleton_->dof_offset(*k);
      if (jt.type == JointType::root) {
        jac.block<3, 3>(0, o + 3) -= w * skew(d);
      } else {
        jac.col(o) += w * axes_[*k].omega.cross(d);
      }
    }
  }

  const Skeleton* skeleton_;
  std::vector<RigidTransform> transforms_;
  std::vector<RigidTransform> relative_;
  std::vector<WorldAxis> axes_;
};

/// Per-vertex 3 x dof Jacobians of LBS-deformed vertices.
inline std::vector<Mat3X> pose_jacobian(const Skeleton& s, const Pose& p,
                                        std::span<const Vec3> rest_vertices,
                                        const SkinningWeights& weights,
                                        std::span<const RigidTransform> rest_transforms,
                                        std::span<const int> vertex_ids) {
  const PoseLinearization lin(s, rest_transforms, forward_kinematics(s, p));
  std::vector<Mat3X> out;
  out.reserve(vertex_ids.size());
  for (int v : vertex_ids) out.push_back(lin.vertex_jacobian(rest_vertices[v], weights[v]));
  return out;
}

}  // namespace artrack
