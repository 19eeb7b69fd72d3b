#pragma once

// Convex hulls, a small single-body rigid simulator used as a stability
// oracle, support-combination search over finger parts, and the contact
// correspondences that pull chosen parts onto the object.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "artrack/collision.hpp"
#include "artrack/data_terms.hpp"
#include "artrack/model.hpp"

namespace artrack {

/// Closed convex polytope with outward-oriented triangle faces.
class ConvexHull {
 public:
  ConvexHull() = default;

  /// `source` maps every hull vertex back to the index of the input point.
  ConvexHull(std::vector<Vec3> vertices, std::vector<Triangle> faces, std::vector<int> source)
      : vertices_(std::move(vertices)), faces_(std::move(faces)), source_(std::move(source)) {
    refresh();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& faces() const { return faces_; }
  const std::vector<int>& source() const { return source_; }
  const Vec3& normal(int f) const { return normals_[f]; }
  double offset(int f) const { return offsets_[f]; }
  const Aabb& box() const { return box_; }
  /// Sphere about the box center enclosing every vertex.
  Vec3 center() const { return (box_.lo + box_.hi) / 2.0; }
  double radius() const { return radius_; }

  /// max over faces of n.x - d: negative inside, positive outside (a lower
  /// bound of the Euclidean distance outside).
  /// Stops early once a face puts x at or beyond `stop`.
  double signed_distance(const Vec3& x, int* face = nullptr,
                         double stop = std::numeric_limits<double>::infinity()) const {
    double best = -std::numeric_limits<double>::infinity();
    for (int f = 0; f < static_cast<int>(faces_.size()); ++f) {
      const double d = normals_[f].dot(x) - offsets_[f];
      if (d > best) {
        best = d;
        if (face) *face = f;
        if (best >= stop) break;
      }
    }
    return best;
  }

  double volume() const {
    double v = 0.0;
    for (const Triangle& t : faces_) v += vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]])) / 6.0;
    return v;
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    double vol = 0.0;
    for (const Triangle& t : faces_) {
      const double v = vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]])) / 6.0;
      c += v * (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 4.0;
      vol += v;
    }
    return c / vol;
  }

  /// Inertia tensor about the centroid for a uniform body of mass `mass`.
  Mat3 inertia(double mass) const {
    const Vec3 c = centroid();
    Mat3 cov = Mat3::Zero();
    double vol = 0.0;
    for (const Triangle& t : faces_) {
      const Vec3 a = vertices_[t[0]] - c, b = vertices_[t[1]] - c, d = vertices_[t[2]] - c;
      const double det = a.dot(b.cross(d));
      const Vec3 s = a + b + d;
      cov += det / 120.0 * (a * a.transpose() + b * b.transpose() + d * d.transpose() + s * s.transpose());
      vol += det / 6.0;
    }
    cov *= mass / vol;
    return cov.trace() * Mat3::Identity() - cov;
  }

  ConvexHull transformed(const RigidTransform& t) const {
    std::vector<Vec3> v(vertices_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t * vertices_[i];
    return {std::move(v), faces_, source_};
  }

  ConvexHull translated(const Vec3& d) const { return transformed({Mat3::Identity(), d}); }

 private:
  void refresh() {
    normals_.resize(faces_.size());
    offsets_.resize(faces_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Triangle& t = faces_[f];
      normals_[f] = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).normalized();
      offsets_[f] = normals_[f].dot(vertices_[t[0]]);
    }
    box_ = {};
    for (const Vec3& v : vertices_) box_.expand(v);
    radius_ = 0.0;
    for (const Vec3& v : vertices_) radius_ = std::max(radius_, (v - center()).norm());
  }

  std::vector<Vec3> vertices_;
  std::vector<Triangle> faces_;
  std::vector<int> source_;
  std::vector<Vec3> normals_;
  std::vector<double> offsets_;
  Aabb box_;
  double radius_ = 0.0;
};

/// Exact 3D hull by incremental insertion. Hull vertices keep the order in
/// which they appear in the input. Throws ValidationError for fewer than
/// four non-coplanar points.
inline ConvexHull convex_hull(std::span<const Vec3> points) {
  const int n = static_cast<int>(points.size());
  if (n < 4) throw ValidationError("convex hull needs at least 4 points");
  Aabb bb;
  for (const Vec3& p : points) bb.expand(p);
  const double scale = std::max((bb.hi - bb.lo).norm(), 1e-300);
  const double eps = 1e-10 * scale;

  // Initial tetrahedron from extreme points.
  int i0 = 0, i1 = -1, i2 = -1, i3 = -1;
  double best = eps;
  for (int i = 0; i < n; ++i)
    if (double d = (points[i] - points[i0]).norm(); d > best) best = d, i1 = i;
  if (i1 < 0) throw ValidationError("convex hull input is degenerate (coincident points)");
  best = eps * scale;
  const Vec3 e01 = points[i1] - points[i0];
  for (int i = 0; i < n; ++i)
    if (double d = e01.cross(points[i] - points[i0]).norm(); d > best) best = d, i2 = i;
  if (i2 < 0) throw ValidationError("convex hull input is degenerate (collinear points)");
  const Vec3 nrm = e01.cross(points[i2] - points[i0]);
  best = eps * nrm.norm();
  for (int i = 0; i < n; ++i)
    if (double d = std::abs(nrm.dot(points[i] - points[i0])); d > best) best = d, i3 = i;
  if (i3 < 0) throw ValidationError("convex hull input is degenerate (coplanar points)");

  struct Face {
    Triangle v;
    Vec3 n;
    double d;
    bool alive = true;
  };
  std::vector<Face> faces;
  auto add_face = [&](int a, int b, int c) {
    Vec3 fn = (points[b] - points[a]).cross(points[c] - points[a]);
    fn.normalize();
    faces.push_back({{a, b, c}, fn, fn.dot(points[a]), true});
  };
  if (nrm.dot(points[i3] - points[i0]) > 0.0) std::swap(i1, i2);
  add_face(i0, i1, i2);
  add_face(i0, i3, i1);
  add_face(i1, i3, i2);
  add_face(i2, i3, i0);

  for (int p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    std::map<std::pair<int, int>, int> edges;  // directed edges of visible faces
    bool any = false;
    for (Face& f : faces) {
      if (!f.alive || f.n.dot(points[p]) - f.d <= eps) continue;
      any = true;
      f.alive = false;
      for (int k = 0; k < 3; ++k) edges[{f.v[k], f.v[(k + 1) % 3]}] = 1;
    }
    if (!any) continue;
    for (const auto& [e, unused] : edges)
      if (!edges.contains({e.second, e.first})) add_face(e.first, e.second, p);
    std::erase_if(faces, [](const Face& f) { return !f.alive; });
  }

  std::vector<int> used;
  for (const Face& f : faces) used.insert(used.end(), f.v.begin(), f.v.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::vector<int> remap(n, -1);
  std::vector<Vec3> verts;
  for (int i : used) {
    remap[i] = static_cast<int>(verts.size());
    verts.push_back(points[i]);
  }
  std::vector<Triangle> tris;
  for (const Face& f : faces) tris.push_back({remap[f.v[0]], remap[f.v[1]], remap[f.v[2]]});
  std::sort(tris.begin(), tris.end());
  return {std::move(verts), std::move(tris), std::move(used)};
}

// ---------------------------------------------------------------------------
// Exact distance between convex hulls.

inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Closest points between segments p1q1 and p2q2.
inline std::pair<Vec3, Vec3> closest_points_segments(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-300 && e <= 1e-300) return {p1, p2};
  if (a <= 1e-300) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-300) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2), den = a * e - b * b;
      s = den > 0.0 ? std::clamp((b * f - c * e) / den, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return {p1 + d1 * s, p2 + d2 * t};
}

struct HullDistance {
  double distance = 0.0;
  Vec3 point_a = Vec3::Zero();  // on the first hull
  Vec3 point_b = Vec3::Zero();  // on the second hull
  Vec3 normal_b = Vec3::UnitZ();  // outward normal of the second hull's closest face
};

namespace detail {

inline std::vector<std::pair<int, int>> hull_edges(const ConvexHull& h) {
  std::vector<std::pair<int, int>> e;
  for (const Triangle& t : h.faces())
    for (int k = 0; k < 3; ++k)
      if (t[k] < t[(k + 1) % 3]) e.push_back({t[k], t[(k + 1) % 3]});
  return e;
}

inline bool hulls_intersect(const ConvexHull& a, const ConvexHull& b, Vec3& witness) {
  for (const Vec3& v : a.vertices())
    if (b.signed_distance(v) <= 0.0) return witness = v, true;
  for (const Vec3& v : b.vertices())
    if (a.signed_distance(v) <= 0.0) return witness = v, true;
  auto edge_cross = [&](const ConvexHull& x, const ConvexHull& y) {
    for (auto [i, j] : hull_edges(x))
      for (const Triangle& t : y.faces())
        if (segment_hits_triangle(x.vertices()[i], x.vertices()[j], y.vertices()[t[0]], y.vertices()[t[1]],
                                  y.vertices()[t[2]])) {
          witness = 0.5 * (x.vertices()[i] + x.vertices()[j]);
          return true;
        }
    return false;
  };
  return edge_cross(a, b) || edge_cross(b, a);
}

}  // namespace detail

/// Euclidean distance between two convex hulls (0 when they overlap), with
/// the closest points. Brute force over vertex/face and edge/edge pairs.
inline HullDistance hull_distance(const ConvexHull& a, const ConvexHull& b) {
  HullDistance out;
  Vec3 w;
  if (detail::hulls_intersect(a, b, w)) {
    int f = 0;
    b.signed_distance(w, &f);
    return {0.0, w, w, b.normal(f)};
  }
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec3& pa, const Vec3& pb) {
    const double d = (pa - pb).norm();
    if (d < best) {
      best = d;
      out.point_a = pa;
      out.point_b = pb;
    }
  };
  for (const Vec3& v : a.vertices())
    for (const Triangle& t : b.faces())
      consider(v, closest_point_on_triangle(v, b.vertices()[t[0]], b.vertices()[t[1]], b.vertices()[t[2]]));
  for (const Vec3& v : b.vertices())
    for (const Triangle& t : a.faces())
      consider(closest_point_on_triangle(v, a.vertices()[t[0]], a.vertices()[t[1]], a.vertices()[t[2]]), v);
  const auto ea = detail::hull_edges(a), eb = detail::hull_edges(b);
  for (auto [i, j] : ea)
    for (auto [k, l] : eb) {
      const auto [pa, pb] = closest_points_segments(a.vertices()[i], a.vertices()[j], b.vertices()[k], b.vertices()[l]);
      consider(pa, pb);
    }
  out.distance = best;
  // Normal of b at its closest point: the face whose plane is nearest to it.
  double fb = std::numeric_limits<double>::infinity();
  for (int f = 0; f < static_cast<int>(b.faces().size()); ++f) {
    const Triangle& t = b.faces()[f];
    const double d = (closest_point_on_triangle(out.point_b, b.vertices()[t[0]], b.vertices()[t[1]],
                                                b.vertices()[t[2]]) - out.point_b).norm();
    if (d < fb - 1e-12) {
      fb = d;
      out.normal_b = b.normal(f);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation.

struct StaticBody {
  ConvexHull hull;
  double friction = 3.0;     // pair coefficient against the object
  double restitution = 0.0;
};

struct DynamicBody {
  ConvexHull hull;  // world coordinates at the start
  double mass = 1.0;  // kg
  double restitution = 0.5;
};

struct SimulationParams {
  int steps = 35;
  double dt = 0.1;  // s
  Vec3 gravity{0.0, -9810.0, 0.0};  // mm/s^2
  double contact_epsilon = 0.5;     // mm
  int max_contacts_per_body = 4;
  int solver_iterations = 20;
  double grip_stiffness = 2.0e4;    // kg/s^2, friction preload per mm of penetration
  double projection_slop = 2.0;     // mm of penetration left unresolved
  double stable_threshold = 3.0;    // mm

  void validate() const {
    if (steps < 0 || !(dt > 0) || !(contact_epsilon >= 0) || max_contacts_per_body < 1 || solver_iterations < 1 ||
        !(grip_stiffness >= 0) || !(projection_slop >= 0) || !(stable_threshold > 0))
      throw ValidationError("invalid simulation parameters");
  }
};

struct RigidBodyScene {
  DynamicBody object;
  std::vector<StaticBody> statics;
};

struct StabilityReport {
  double displacement = 0.0;  // mm, centroid
  bool stable = false;
};

namespace detail {

struct Contact {
  Vec3 point;
  Vec3 normal;  // pushes the object out
  double depth;
  int body;
};

/// Up to `limit` deepest contacts between the object and one static body:
/// object vertices near or inside the static hull and static vertices near
/// or inside the object.
/// `sweep` is the object's translation over the step; vertices that cannot
/// meet along it (padded by `pad`) are skipped before the distance tests.
inline void collect_contacts(const ConvexHull& object, const StaticBody& body, int id, double eps, int limit,
                             std::vector<Contact>& out, const Vec3& sweep = Vec3::Zero(), double pad = -1.0) {
  std::vector<Contact> found;
  if (pad < 0.0) pad = eps;
  auto swept = [pad](Aabb b, const Vec3& d) {
    b.lo = b.lo.cwiseMin(b.lo + d).array() - pad;
    b.hi = b.hi.cwiseMax(b.hi + d).array() + pad;
    return b;
  };
  auto near_box = [](const Aabb& b, const Vec3& v) {
    return (v.array() >= b.lo.array()).all() && (v.array() <= b.hi.array()).all();
  };
  const Aabb body_box = swept(body.hull.box(), -sweep), object_box = swept(object.box(), sweep);
  // Plane distances are 1-Lipschitz, so a far center rules out the whole hull.
  const bool object_near = body.hull.signed_distance(object.center(), nullptr, object.radius() + eps) <
                           object.radius() + eps;
  const bool body_near = object.signed_distance(body.hull.center(), nullptr, body.hull.radius() + eps) <
                         body.hull.radius() + eps;
  if (object_near) for (const Vec3& v : object.vertices()) {
    if (!near_box(body_box, v)) continue;
    int f = 0;
    const double sd = body.hull.signed_distance(v, &f, eps);
    if (sd < eps) found.push_back({v, body.hull.normal(f), -sd, id});
  }
  if (body_near) for (const Vec3& v : body.hull.vertices()) {
    if (!near_box(object_box, v)) continue;
    int f = 0;
    const double sd = object.signed_distance(v, &f, eps);
    if (sd < eps) found.push_back({v, -object.normal(f), -sd, id});
  }
  std::stable_sort(found.begin(), found.end(), [](const Contact& a, const Contact& b) { return a.depth > b.depth; });
  if (static_cast<int>(found.size()) > limit) found.resize(limit);
  out.insert(out.end(), found.begin(), found.end());
}

inline Mat3 rotation_exp(const Vec3& w) {
  const double th = w.norm();
  if (th < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(th, w / th).toRotationMatrix();
}

}  // namespace detail

/// Drops the object for `steps` semi-implicit Euler steps against static
/// bodies. Contacts: velocity impulses with restitution and a Coulomb
/// friction clamp, followed by positional projection of deep penetrations.
inline StabilityReport simulate_drop(const RigidBodyScene& scene, const SimulationParams& params = {}) {
  params.validate();
  if (!(scene.object.mass > 0)) throw ValidationError("object mass must be positive");
  const ConvexHull& h0 = scene.object.hull;
  const Vec3 c0 = h0.centroid();
  const double m = scene.object.mass;
  const Mat3 inertia_local = h0.inertia(m);
  const Mat3 inv_local = inertia_local.inverse();

  Vec3 x = c0, v = Vec3::Zero(), w = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  auto world_hull = [&] { return h0.transformed({R, x - R * c0}); };

  for (int step = 0; step < params.steps; ++step) {
    v += params.gravity * params.dt;
    const ConvexHull hull = world_hull();
    // Speculative margin: anything the body can reach during this step.
    const Vec3 sweep = v * params.dt;
    const double pad = params.contact_epsilon + w.norm() * hull.box().extent() * params.dt;
    const double margin = pad + sweep.norm();
    Aabb grown = hull.box();
    grown.lo = grown.lo.cwiseMin(grown.lo + sweep).array() - pad;
    grown.hi = grown.hi.cwiseMax(grown.hi + sweep).array() + pad;
    std::vector<detail::Contact> contacts;
    for (int b = 0; b < static_cast<int>(scene.statics.size()); ++b)
      if (grown.overlaps(scene.statics[b].hull.box()))
        detail::collect_contacts(hull, scene.statics[b], b, margin, params.max_contacts_per_body, contacts, sweep,
                                 pad);

    if (!contacts.empty()) {
      const Mat3 inv_world = R * inv_local * R.transpose();
      const std::size_t nc = contacts.size();
      std::vector<double> jn(nc, 0.0), bias(nc, 0.0);
      std::vector<Vec2> jt(nc, Vec2::Zero());
      std::vector<std::array<Vec3, 2>> tangents(nc);
      auto point_velocity = [&](const Vec3& r) -> Vec3 { return v + w.cross(r); };
      auto apply = [&](const Vec3& r, const Vec3& impulse) {
        v += impulse / m;
        w += inv_world * r.cross(impulse);
      };
      auto eff_mass = [&](const Vec3& r, const Vec3& d) {
        const Vec3 rd = r.cross(d);
        return 1.0 / (1.0 / m + rd.dot(inv_world * rd));
      };
      for (std::size_t i = 0; i < nc; ++i) {
        const Vec3 r = contacts[i].point - x;
        const Vec3& n = contacts[i].normal;
        const double vn = point_velocity(r).dot(n);
        const double e = scene.object.restitution * scene.statics[contacts[i].body].restitution;
        const double gap = -contacts[i].depth;
        // Separated contacts may close their gap within the step but no more.
        if (gap > params.contact_epsilon) bias[i] = -gap / params.dt;
        else bias[i] = vn < 0.0 ? -e * vn : 0.0;
        Vec3 t0 = std::abs(n.x()) < 0.9 ? Vec3(n.cross(Vec3::UnitX())) : Vec3(n.cross(Vec3::UnitY()));
        t0.normalize();
        tangents[i] = {t0, n.cross(t0)};
      }
      for (int it = 0; it < params.solver_iterations; ++it) {
        for (std::size_t i = 0; i < nc; ++i) {
          const detail::Contact& c = contacts[i];
          const Vec3 r = c.point - x;
          const double vn = point_velocity(r).dot(c.normal);
          const double old = jn[i];
          jn[i] = std::max(0.0, old + eff_mass(r, c.normal) * (bias[i] - vn));
          apply(r, (jn[i] - old) * c.normal);

          const double mu = scene.statics[c.body].friction;
          const double preload = params.grip_stiffness * std::max(0.0, c.depth) * params.dt;
          const double limit = mu * (jn[i] + preload);
          const Vec3 vel = point_velocity(r);
          Vec2 want = jt[i];
          for (int k = 0; k < 2; ++k) want[k] -= eff_mass(r, tangents[i][k]) * vel.dot(tangents[i][k]);
          if (want.norm() > limit) want *= limit / want.norm();
          const Vec2 delta = want - jt[i];
          jt[i] = want;
          apply(r, delta[0] * tangents[i][0] + delta[1] * tangents[i][1]);
        }
      }
    }

    x += v * params.dt;
    R = detail::rotation_exp(w * params.dt) * R;

    // Push out penetration beyond the slop along the deepest contact normal.
    for (int pass = 0; pass < 4; ++pass) {
      const ConvexHull hull = world_hull();
      std::vector<detail::Contact> contacts;
      for (int b = 0; b < static_cast<int>(scene.statics.size()); ++b)
        if (hull.box().overlaps(scene.statics[b].hull.box()))
          detail::collect_contacts(hull, scene.statics[b], b, 0.0, 1, contacts);
      Vec3 push = Vec3::Zero();
      for (const detail::Contact& c : contacts)
        if (c.depth > params.projection_slop) push += (c.depth - params.projection_slop) * c.normal;
      if (push.squaredNorm() == 0.0) break;
      x += push / static_cast<double>(contacts.size());
    }
  }

  StabilityReport rep;
  rep.displacement = (x - c0).norm();
  rep.stable = rep.displacement < params.stable_threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// Support search over finger parts.

/// A posed hand part: the hull of one bone's vertices.
struct PartHull {
  int bone = -1;
  ConvexHull hull;                 // hull.source() indexes `vertex_ids`
  std::vector<int> vertex_ids;     // model vertices of the bone
};

struct SupportCandidate {
  int part = 0;  // index into the part list
  double distance = 0.0;
  Vec3 closest_on_part = Vec3::Zero();
  Vec3 closest_on_object = Vec3::Zero();
  Vec3 object_normal = Vec3::UnitZ();
};

struct PhysicsParams {
  SimulationParams sim;
  double object_mass = 1.0;
  double object_restitution = 0.5;
  double hand_friction = 1.2;
  double hand_restitution = 0.0;
  double candidate_distance = 10.0;  // mm
  double grip_depth = 1.0;           // mm pushed into the object when a part is moved to touch it
  int min_parts = 2;
  int max_parts = 4;
};

/// Hulls of the posed bones of `group` (all bones with enough vertices).
/// `eligible_only` restricts to bones flagged as physics parts.
inline std::vector<PartHull> part_hulls(const SkinnedModel& m, const PosedModel& posed, int group, bool eligible_only) {
  std::vector<std::vector<int>> by_bone(m.skeleton.size());
  for (int v = 0; v < static_cast<int>(m.vertex_bone.size()); ++v) by_bone[m.vertex_bone[v]].push_back(v);
  std::vector<PartHull> out;
  for (int j = 0; j < m.skeleton.size(); ++j) {
    if (m.joint_group[j] != group || by_bone[j].size() < 4) continue;
    if (eligible_only && !m.physics_part[j]) continue;
    std::vector<Vec3> pts;
    for (int v : by_bone[j]) pts.push_back(posed.vertices[v]);
    try {
      out.push_back({j, convex_hull(pts), by_bone[j]});
    } catch (const ValidationError&) {
      // flat parts cannot act as solid supports
    }
  }
  return out;
}

inline ConvexHull object_hull(const SkinnedModel& m, const PosedModel& posed) {
  std::vector<Vec3> pts;
  for (int v : m.group_vertices(m.object_group)) pts.push_back(posed.vertices[v]);
  return convex_hull(pts);
}

/// Parts whose hull lies within `max_distance` of the object hull.
inline std::vector<SupportCandidate> support_candidates(std::span<const PartHull> parts, const ConvexHull& object,
                                                        double max_distance = 10.0) {
  std::vector<SupportCandidate> out;
  for (int i = 0; i < static_cast<int>(parts.size()); ++i) {
    Aabb grown = parts[i].hull.box();
    grown.lo.array() -= max_distance;
    grown.hi.array() += max_distance;
    if (!grown.overlaps(object.box())) continue;
    const HullDistance d = hull_distance(parts[i].hull, object);
    if (d.distance < max_distance) out.push_back({i, d.distance, d.point_a, d.point_b, d.normal_b});
  }
  return out;
}

/// Translation that brings a candidate part onto the object, `grip_depth`
/// past first contact.
inline Vec3 support_translation(const SupportCandidate& c, double grip_depth) {
  Vec3 dir = c.closest_on_object - c.closest_on_part;
  const double len = dir.norm();
  dir = len > 1e-9 ? Vec3(dir / len) : Vec3(-c.object_normal);
  return dir * (len + grip_depth);
}

struct CombinationResult {
  std::vector<int> candidates;  // indices into the candidate list, ascending; empty if none
  double displacement = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::vector<int>, double>> evaluated;  // every hypothesis and its displacement
};

/// Scene with the object, the fixed static bodies, and every part as a
/// static body (the ones listed in `moved` translated onto the object).
inline RigidBodyScene support_scene(const ConvexHull& object, std::span<const StaticBody> fixed,
                                    std::span<const PartHull> parts, std::span<const SupportCandidate> candidates,
                                    std::span<const int> moved, const PhysicsParams& params) {
  RigidBodyScene scene;
  scene.object = {object, params.object_mass, params.object_restitution};
  scene.statics.assign(fixed.begin(), fixed.end());
  std::vector<Vec3> shift(parts.size(), Vec3::Zero());
  for (int c : moved) shift[candidates[c].part] = support_translation(candidates[c], params.grip_depth);
  for (std::size_t p = 0; p < parts.size(); ++p)
    scene.statics.push_back({parts[p].hull.translated(shift[p]), params.hand_friction, params.hand_restitution});
  return scene;
}

/// Enumerates candidate subsets of size min_parts..max_parts (by size, then
/// lexicographically), simulates each, and keeps the lowest displacement
/// (first found wins ties, i.e. smaller then lexicographically smaller).
inline CombinationResult select_support_combination(const ConvexHull& object, std::span<const StaticBody> fixed,
                                                    std::span<const PartHull> parts,
                                                    std::span<const SupportCandidate> candidates,
                                                    const PhysicsParams& params = {}) {
  CombinationResult best;
  const int n = static_cast<int>(candidates.size());
  for (int k = params.min_parts; k <= std::min(params.max_parts, n); ++k) {
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      const StabilityReport rep =
          simulate_drop(support_scene(object, fixed, parts, candidates, idx, params), params.sim);
      best.evaluated.push_back({idx, rep.displacement});
      if (rep.displacement < best.displacement) {
        best.displacement = rep.displacement;
        best.candidates = idx;
      }
      int i = k - 1;
      while (i >= 0 && idx[i] == n - k + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return best;
}

/// One correspondence per selected part: the part vertex closest to the
/// object's closest point, pulled onto that point.
inline std::vector<PointCorrespondence> physics_correspondences(const CombinationResult& combo,
                                                                std::span<const SupportCandidate> candidates,
                                                                std::span<const PartHull> parts,
                                                                const PosedModel& posed, Metric metric) {
  std::vector<PointCorrespondence> out;
  for (int c : combo.candidates) {
    const SupportCandidate& cand = candidates[c];
    const PartHull& part = parts[cand.part];
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int v : part.vertex_ids) {
      const double d = (posed.vertices[v] - cand.closest_on_object).squaredNorm();
      if (d < bd) bd = d, best = v;
    }
    out.push_back({best, cand.closest_on_object, cand.object_normal, metric});
  }
  return out;
}

/// Result of the full stability check at one pose.
struct PhysicsAnalysis {
  StabilityReport current;
  std::vector<SupportCandidate> candidates;
  CombinationResult combination;
  std::vector<PointCorrespondence> correspondences;
};

/// Simulates the object against the posed hand parts and the fixed scene;
/// when unstable, searches support combinations and returns their contact
/// correspondences.
inline PhysicsAnalysis analyze_stability(const SkinnedModel& m, const PosedModel& posed,
                                         std::span<const StaticBody> fixed, Metric metric,
                                         const PhysicsParams& params = {}) {
  PhysicsAnalysis out;
  if (m.object_group < 0) return out;
  const ConvexHull object = object_hull(m, posed);
  std::vector<PartHull> all, eligible;
  std::vector<int> eligible_index;
  for (int g = 0; g < static_cast<int>(m.groups.size()); ++g) {
    if (g == m.object_group) continue;
    for (PartHull& p : part_hulls(m, posed, g, false)) all.push_back(std::move(p));
  }
  const std::vector<SupportCandidate> none;
  out.current = simulate_drop(support_scene(object, fixed, all, none, {}, params), params.sim);
  if (out.current.stable) return out;

  std::vector<PartHull> parts;
  for (const PartHull& p : all)
    if (m.physics_part[p.bone]) parts.push_back(p);
  out.candidates = support_candidates(parts, object, params.candidate_distance);
  // Hypotheses keep every other part static as posed.
  std::vector<PartHull> ordered = parts;
  for (const PartHull& p : all)
    if (!m.physics_part[p.bone]) ordered.push_back(p);
  out.combination = select_support_combination(object, fixed, ordered, out.candidates, params);
  out.correspondences = physics_correspondences(out.combination, out.candidates, ordered, posed, metric);
  return out;
}

}  // namespace artrack
