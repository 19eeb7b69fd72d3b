#pragma once

// BVH-accelerated triangle collision detection and the conic local
// distance-field repulsion term.

#include <ceres/jet.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "artrack/geometry.hpp"

namespace artrack {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool overlaps(const Aabb& b) const { return (lo.array() <= b.hi.array()).all() && (b.lo.array() <= hi.array()).all(); }
  double extent() const { return (hi - lo).norm(); }
  bool contains(const Aabb& b) const { return (lo.array() <= b.lo.array()).all() && (b.hi.array() <= hi.array()).all(); }
};

/// Binary AABB tree over triangles: median split of centroids along the
/// widest axis, leaves of at most four triangles.
class Bvh {
 public:
  struct Node {
    Aabb box;
    int begin = 0, end = 0;
    int left = -1, right = -1;
    bool leaf() const { return left < 0; }
  };

  static constexpr int kLeafSize = 4;

  Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
    boxes_.resize(triangles.size());
    centroids_.resize(triangles.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int i : triangles[t]) boxes_[t].expand(vertices[i]);
      centroids_[t] = (vertices[triangles[t][0]] + vertices[triangles[t][1]] + vertices[triangles[t][2]]) / 3.0;
    }
    order_.resize(triangles.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& order() const { return order_; }
  const Aabb& triangle_box(int t) const { return boxes_[t]; }

 private:
  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Aabb box, cbox;
    for (int i = begin; i < end; ++i) {
      box.expand(boxes_[order_[i]]);
      cbox.expand(centroids_[order_[i]]);
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize) return id;
    int axis = 0;
    (cbox.hi - cbox.lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
      const double ca = centroids_[a][axis], cb = centroids_[b][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Segment pq against triangle abc (non-parallel crossing, endpoints and
/// edges inclusive).
inline bool segment_hits_triangle(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 dir = q - p;
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 h = dir.cross(e2);
  const double det = e1.dot(h);
  const double scale = e1.norm() * e2.norm() * dir.norm();
  if (std::abs(det) <= 1e-12 * scale) return false;
  const double inv = 1.0 / det;
  const Vec3 s = p - a;
  const double u = inv * s.dot(h);
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qv = s.cross(e1);
  const double v = inv * dir.dot(qv);
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = inv * e2.dot(qv);
  return t >= 0.0 && t <= 1.0;
}

/// Two triangles intersect when an edge of one crosses the other.
inline bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0, const Vec3& b1,
                                const Vec3& b2) {
  return segment_hits_triangle(a0, a1, b0, b1, b2) || segment_hits_triangle(a1, a2, b0, b1, b2) ||
         segment_hits_triangle(a2, a0, b0, b1, b2) || segment_hits_triangle(b0, b1, a0, a1, a2) ||
         segment_hits_triangle(b1, b2, a0, a1, a2) || segment_hits_triangle(b2, b0, a0, a1, a2);
}

struct CollisionPair {
  int face_s = 0;
  int face_t = 0;  // face_s < face_t

  auto operator<=>(const CollisionPair&) const = default;
};

/// Returns true for face pairs that must not be reported (e.g. parts of the
/// same rigid bone).
using PairFilter = std::function<bool(int, int)>;

inline bool triangles_share_vertex(const Triangle& a, const Triangle& b) {
  for (int i : a)
    for (int j : b)
      if (i == j) return true;
  return false;
}

/// All intersecting triangle pairs, sorted. Pairs that share a vertex and
/// pairs rejected by `skip` are excluded.
inline std::vector<CollisionPair> find_collisions(std::span<const Vec3> vertices, std::span<const Triangle> triangles,
                                                  const PairFilter& skip = {}) {
  std::vector<CollisionPair> out;
  if (triangles.size() < 2) return out;
  const Bvh bvh(vertices, triangles);
  const auto& nodes = bvh.nodes();
  const auto& order = bvh.order();
  auto test = [&](int s, int t) {
    if (s == t) return;
    if (s > t) std::swap(s, t);
    if (triangles_share_vertex(triangles[s], triangles[t])) return;
    if (skip && skip(s, t)) return;
    if (!bvh.triangle_box(s).overlaps(bvh.triangle_box(t))) return;
    const Triangle& a = triangles[s];
    const Triangle& b = triangles[t];
    if (triangles_intersect(vertices[a[0]], vertices[a[1]], vertices[a[2]], vertices[b[0]], vertices[b[1]],
                            vertices[b[2]]))
      out.push_back({s, t});
  };
  std::function<void(int, int)> visit = [&](int i, int j) {
    const Bvh::Node& a = nodes[i];
    const Bvh::Node& b = nodes[j];
    if (!a.box.overlaps(b.box)) return;
    if (i == j) {
      if (a.leaf()) {
        for (int x = a.begin; x < a.end; ++x)
          for (int y = x + 1; y < a.end; ++y) test(order[x], order[y]);
        return;
      }
      visit(a.left, a.left);
      visit(a.left, a.right);
      visit(a.right, a.right);
      return;
    }
    if (a.leaf() && b.leaf()) {
      for (int x = a.begin; x < a.end; ++x)
        for (int y = b.begin; y < b.end; ++y) test(order[x], order[y]);
      return;
    }
    if (b.leaf() || (!a.leaf() && a.end - a.begin >= b.end - b.begin)) {
      visit(a.left, j);
      visit(a.right, j);
    } else {
      visit(i, b.left);
      visit(i, b.right);
    }
  };
  visit(0, 0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Cone of a receiving triangle: circumcenter o, unit normal n, circumradius r.
struct TriangleCone {
  Vec3 o = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  double r = 1.0;
  double sigma = 0.5;
};

namespace detail {

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;

template <typename T>
void circum(const V3<T>& a, const V3<T>& b, const V3<T>& c, V3<T>& o, V3<T>& n, T& r) {
  using std::sqrt;
  const V3<T> ab = b - a, ac = c - a;
  const V3<T> w = ab.cross(ac);
  const T w2 = w.squaredNorm();
  const V3<T> off = (ac.squaredNorm() * w.cross(ab) + ab.squaredNorm() * ac.cross(w)) / (T(2.0) * w2);
  o = a + off;
  r = sqrt(off.squaredNorm());
  n = w / sqrt(w2);
}

inline double value_of(double x) { return x; }
template <typename T, int N>
double value_of(const ceres::Jet<T, N>& x) {
  return x.a;
}

template <typename T>
T upsilon(const T& x, double sigma) {
  if (value_of(x) <= -sigma) return -x + 1.0 - sigma;
  if (value_of(x) >= sigma) return T(0.0);
  return -(1.0 - 2.0 * sigma) / (4.0 * sigma * sigma) * x * x - x / (2.0 * sigma) + 0.25 * (3.0 - 2.0 * sigma);
}

/// Phi; returns false (outside the field) when the denominator is not positive.
template <typename T>
bool phi(const V3<T>& v, const V3<T>& o, const V3<T>& n, const T& r, double sigma, T& out, T& axial) {
  using std::sqrt;
  const V3<T> d = v - o;
  axial = n.dot(d);
  const V3<T> lateral = d - axial * n;
  const T denom = -(r / sigma) * axial + r;
  if (value_of(denom) <= 0.0) return false;
  const T l2 = lateral.squaredNorm();
  const T len = value_of(l2) > 1e-24 ? T(sqrt(l2)) : T(0.0);
  out = len / denom;
  return true;
}

template <typename T>
T psi(const V3<T>& v, const V3<T>& o, const V3<T>& n, const T& r, double sigma) {
  T ph, axial;
  if (!phi(v, o, n, r, sigma, ph, axial) || value_of(ph) >= 1.0) return T(0.0);
  const T s = (T(1.0) - ph) * upsilon(axial, sigma);
  return s * s;
}

}  // namespace detail

inline TriangleCone make_cone(const Vec3& a, const Vec3& b, const Vec3& c, double sigma = 0.5) {
  TriangleCone cone;
  detail::circum<double>(a, b, c, cone.o, cone.n, cone.r);
  cone.sigma = sigma;
  return cone;
}

/// Lateral distance to the cone axis scaled by the cone radius at the
/// projected height; +inf outside the cone's half-space.
inline double phi(const Vec3& v, const TriangleCone& c) {
  double out, axial;
  if (!detail::phi<double>(v, c.o, c.n, c.r, c.sigma, out, axial)) return std::numeric_limits<double>::infinity();
  return out;
}

/// Repulsion intensity: linear behind -sigma, quadratic in between, zero past +sigma.
inline double upsilon(double x, double sigma = 0.5) { return detail::upsilon<double>(x, sigma); }

inline double psi(const Vec3& v, const TriangleCone& c) { return detail::psi<double>(v, c.o, c.n, c.r, c.sigma); }

/// Psi of vertex v in the field of triangle abc, with its gradient w.r.t.
/// (v, a, b, c) stacked as a 12-vector.
struct PsiGradient {
  double value = 0.0;
  Eigen::Matrix<double, 1, 12> grad = Eigen::Matrix<double, 1, 12>::Zero();
};

inline PsiGradient psi_with_gradient(const Vec3& v, const Vec3& a, const Vec3& b, const Vec3& c, double sigma) {
  using J = ceres::Jet<double, 12>;
  detail::V3<J> jv, ja, jb, jc;
  for (int i = 0; i < 3; ++i) {
    jv[i] = J(v[i], i);
    ja[i] = J(a[i], 3 + i);
    jb[i] = J(b[i], 6 + i);
    jc[i] = J(c[i], 9 + i);
  }
  detail::V3<J> o, n;
  J r;
  detail::circum<J>(ja, jb, jc, o, n, r);
  const J p = detail::psi<J>(jv, o, n, r, sigma);
  return {p.a, p.v.transpose()};
}

/// One repulsion residual: an intruding vertex inside the field of a
/// receiving face.
struct CollisionCorrespondence {
  int receiver_face = 0;
  int intruder_vertex = 0;
};

/// For every colliding pair, each vertex of one face against the other
/// face's field and vice versa; only entries with Psi > 0 are kept.
inline std::vector<CollisionCorrespondence> collision_correspondences(std::span<const CollisionPair> pairs,
                                                                      std::span<const Vec3> vertices,
                                                                      std::span<const Triangle> triangles,
                                                                      double sigma = 0.5) {
  std::vector<CollisionCorrespondence> out;
  auto add = [&](int receiver, int intruder_face) {
    const Triangle& f = triangles[receiver];
    const TriangleCone cone = make_cone(vertices[f[0]], vertices[f[1]], vertices[f[2]], sigma);
    for (int v : triangles[intruder_face])
      if (psi(vertices[v], cone) > 0.0) out.push_back({receiver, v});
  };
  for (const CollisionPair& p : pairs) {
    add(p.face_s, p.face_t);
    add(p.face_t, p.face_s);
  }
  return out;
}

/// Largest Psi over the vertices of all colliding pairs.
inline double max_penetration(std::span<const CollisionPair> pairs, std::span<const Vec3> vertices,
                              std::span<const Triangle> triangles, double sigma = 0.5) {
  double worst = 0.0;
  auto scan = [&](int receiver, int intruder_face) {
    const Triangle& f = triangles[receiver];
    const TriangleCone cone = make_cone(vertices[f[0]], vertices[f[1]], vertices[f[2]], sigma);
    for (int v : triangles[intruder_face]) worst = std::max(worst, psi(vertices[v], cone));
  };
  for (const CollisionPair& p : pairs) {
    scan(p.face_s, p.face_t);
    scan(p.face_t, p.face_s);
  }
  return worst;
}

}  // namespace artrack
