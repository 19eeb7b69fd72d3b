#pragma once

// Model-to-data closest-point correspondences and data-to-model
// depth-discontinuity line correspondences, with their residuals.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "artrack/geometry.hpp"
#include "artrack/model.hpp"
#include "artrack/nearest_neighbor.hpp"
#include "artrack/raster.hpp"

namespace artrack {

enum class Metric { point_to_point, point_to_plane };

struct GatingParams {
  double max_normal_angle_deg = 45.0;
  double max_dist_m2d = 10.0;  // mm
  double max_dist_d2m = 30.0;  // mm
  int edge_depth_window = 3;   // px, odd
  double jump_threshold = 20.0;       // mm, depth-discontinuity detector
  double vertex_pixel_radius = 2.0;   // px, model edge pixel -> projected vertex

  void validate() const {
    if (!(max_normal_angle_deg > 0 && max_dist_m2d > 0 && max_dist_d2m > 0 && edge_depth_window > 0 &&
          jump_threshold > 0 && vertex_pixel_radius > 0))
      throw ValidationError("gating parameters must be positive");
  }
};

struct PointCorrespondence {
  int vertex = 0;
  Vec3 target = Vec3::Zero();
  Vec3 target_normal = Vec3::UnitZ();
  Metric metric = Metric::point_to_point;
};

struct LineCorrespondence {
  int vertex = 0;
  PluckerLine line;
  int pixel = 0;  // observed edge pixel the ray passes through
};

/// For each visible vertex, the nearest cloud point within the distance gate;
/// dropped when the vertex and cloud normals differ by more than the angle gate.
inline std::vector<PointCorrespondence> model_to_data(const PosedModel& posed, std::span<const std::uint8_t> visible,
                                                      const PointCloud& cloud, const NearestNeighborIndex& index,
                                                      const GatingParams& gating, Metric metric) {
  std::vector<PointCorrespondence> out;
  if (cloud.size() == 0) return out;
  const double cos_gate = std::cos(gating.max_normal_angle_deg * std::numbers::pi / 180.0);
  for (int v = 0; v < static_cast<int>(posed.vertices.size()); ++v) {
    if (!visible[v]) continue;
    const auto hit = index.query(posed.vertices[v], gating.max_dist_m2d);
    if (!hit) continue;
    const Vec3& n = cloud.normals[*hit];
    if (posed.normals[v].dot(n) < cos_gate) continue;
    out.push_back({v, cloud.points[*hit], n, metric});
  }
  return out;
}

namespace detail {

/// Visible vertices bucketed by their rounded projected pixel.
class VertexPixelMap {
 public:
  VertexPixelMap(const RenderResult& r, const CameraIntrinsics& k) : k_(k), head_(k.pixel_count(), -1) {
    next_.assign(r.projected.size(), -1);
    for (int v = static_cast<int>(r.projected.size()) - 1; v >= 0; --v) {
      if (!r.visible[v]) continue;
      const int x = static_cast<int>(std::lround(r.projected[v].x()));
      const int y = static_cast<int>(std::lround(r.projected[v].y()));
      if (!k.contains(x, y)) continue;
      const int i = y * k.width + x;
      next_[v] = head_[i];
      head_[i] = v;
    }
    projected_ = &r.projected;
  }

  /// Nearest projected visible vertex within `radius` px of pixel centre,
  /// ties to the lowest vertex id; -1 if none.
  int nearest(int pixel, double radius) const {
    const int px = pixel % k_.width, py = pixel / k_.width;
    const int r = static_cast<int>(std::ceil(radius)) + 1;
    int best = -1;
    double best_d2 = radius * radius;
    for (int y = py - r; y <= py + r; ++y) {
      for (int x = px - r; x <= px + r; ++x) {
        if (!k_.contains(x, y)) continue;
        for (int v = head_[y * k_.width + x]; v >= 0; v = next_[v]) {
          const double d2 = ((*projected_)[v] - Vec2(px, py)).squaredNorm();
          if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || v < best))) {
            best_d2 = d2;
            best = v;
          }
        }
      }
    }
    return best;
  }

 private:
  CameraIntrinsics k_;
  std::vector<int> head_;
  std::vector<int> next_;
  const std::vector<Vec2>* projected_ = nullptr;
};

}  // namespace detail

/// Observed depth-edge pixels matched through a distance transform of the
/// rendered model's depth edges. Each match becomes a line constraint
/// between the model vertex behind the model edge pixel and the observed
/// pixel's camera ray. Output is ordered by observed pixel id.
inline std::vector<LineCorrespondence> data_to_model(const DepthFrame& observed, const RenderResult& rendered,
                                                     const PosedModel& posed, const GatingParams& gating) {
  std::vector<LineCorrespondence> out;
  const CameraIntrinsics& k = observed.intrinsics;
  const std::vector<std::uint8_t> obs_edges = depth_discontinuities(observed, gating.jump_threshold);
  const std::vector<std::uint8_t> model_edges = depth_discontinuities(rendered.depth, gating.jump_threshold);
  bool any_obs = false, any_model = false;
  for (std::size_t i = 0; i < obs_edges.size(); ++i) {
    any_obs = any_obs || obs_edges[i];
    any_model = any_model || model_edges[i];
  }
  if (!any_obs || !any_model) return out;

  const DistanceTransform dt = distance_transform(model_edges, k.width, k.height);
  const detail::VertexPixelMap vmap(rendered, k);
  std::vector<int> assoc(obs_edges.size(), -2);
  const int half = gating.edge_depth_window / 2;
  for (int p = 0; p < static_cast<int>(obs_edges.size()); ++p) {
    if (!obs_edges[p]) continue;
    const int me = dt.nearest[p];
    if (assoc[me] == -2) assoc[me] = vmap.nearest(me, gating.vertex_pixel_radius);
    const int v = assoc[me];
    if (v < 0) continue;
    const int px = p % k.width, py = p / k.width;
    double zsum = 0.0;
    int zn = 0;
    for (int y = py - half; y <= py + half; ++y)
      for (int x = px - half; x <= px + half; ++x)
        if (observed.valid(x, y)) {
          zsum += observed.depth[observed.index(x, y)];
          ++zn;
        }
    const Vec3 x_obs = k.backproject(px, py, zsum / zn);
    if ((posed.vertices[v] - x_obs).norm() > gating.max_dist_d2m) continue;
    out.push_back({v, pixel_ray(px, py, k), p});
  }
  return out;
}

/// v - X
inline Vec3 residual_point(const PointCorrespondence& c, const Vec3& v) { return v - c.target; }

/// n(theta)^T (v - X) with the posed model normal.
inline double residual_plane(const PointCorrespondence& c, const Vec3& v, const Vec3& n) {
  return n.dot(v - c.target);
}

/// v x d - m
inline Vec3 residual_line(const LineCorrespondence& c, const Vec3& v) { return c.line.residual(v); }

// Jacobian rows by the chain rule, given dv/dtheta and dn/dtheta.

inline Mat3X jacobian_point(const Mat3X& dv) { return dv; }

inline Eigen::RowVectorXd jacobian_plane(const PointCorrespondence& c, const Vec3& v, const Vec3& n,
                                         const Mat3X& dv, const Mat3X& dn) {
  return n.transpose() * dv + (v - c.target).transpose() * dn;
}

inline Mat3X jacobian_line(const LineCorrespondence& c, const Mat3X& dv) { return -skew(c.line.d) * dv; }

}  // namespace artrack
