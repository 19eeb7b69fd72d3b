#pragma once

// Fingertip detections associated with model fingertips by an exact
// assignment with false-positive and miss options, and the resulting
// salient-point correspondences.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "artrack/data_terms.hpp"
#include "artrack/geometry.hpp"
#include "artrack/model.hpp"

namespace artrack {

struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;  // px

  bool contains(const Vec2& p) const { return p.x() >= x && p.y() >= y && p.x() < x + w && p.y() < y + h; }
};

struct Detection {
  int frame_id = 0;
  BoundingBox bbox;
  double confidence = 0.0;
  std::vector<Vec3> cloud;  // back-projected valid pixels inside the box
  Vec3 centroid = Vec3::Zero();
};

/// Lifts the valid (masked-in) pixels inside the box. Returns a detection
/// with an empty cloud when nothing valid is inside.
inline Detection make_detection(int frame_id, const BoundingBox& box, double confidence, const DepthFrame& f) {
  Detection d{frame_id, box, confidence, {}, Vec3::Zero()};
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y)));
  for (int y = y0; y < f.height() && y < box.y + box.h; ++y)
    for (int x = x0; x < f.width() && x < box.x + box.w; ++x)
      if (f.valid(x, y)) d.cloud.push_back(f.intrinsics.backproject(x, y, f.depth[f.index(x, y)]));
  for (const Vec3& p : d.cloud) d.centroid += p;
  if (!d.cloud.empty()) d.centroid /= static_cast<double>(d.cloud.size());
  return d;
}

/// Keeps confident detections that carry at least one 3D point.
inline std::vector<Detection> filter_detections(std::vector<Detection> dets, double c_thr = 3.0) {
  std::erase_if(dets, [&](const Detection& d) { return d.confidence < c_thr || d.cloud.empty(); });
  return dets;
}

struct FingertipRegion {
  int id = 0;
  std::vector<int> vertices;
  std::vector<int> visible_vertices;  // all vertices when none is visible
  Vec3 centroid = Vec3::Zero();       // over visible_vertices
};

inline std::vector<FingertipRegion> fingertip_regions(const SkinnedModel& m, const PosedModel& posed,
                                                      std::span<const std::uint8_t> visible) {
  std::vector<FingertipRegion> out;
  for (int t = 0; t < static_cast<int>(m.fingertips.size()); ++t) {
    FingertipRegion r{t, m.fingertips[t].vertices, {}, Vec3::Zero()};
    for (int v : r.vertices)
      if (visible[v]) r.visible_vertices.push_back(v);
    if (r.visible_vertices.empty()) r.visible_vertices = r.vertices;
    for (int v : r.visible_vertices) r.centroid += posed.vertices[v];
    r.centroid /= static_cast<double>(r.visible_vertices.size());
    out.push_back(std::move(r));
  }
  return out;
}

enum class WeightMode { unit, confidence };

struct AssignmentCosts {
  Eigen::MatrixXd w_st;  // S x T, mm
  Eigen::VectorXd w_s;   // S
};

inline AssignmentCosts assignment_costs(std::span<const Detection> dets, std::span<const FingertipRegion> tips,
                                        WeightMode mode, double c_thr = 3.0) {
  AssignmentCosts c{Eigen::MatrixXd(dets.size(), tips.size()), Eigen::VectorXd(dets.size())};
  for (std::size_t s = 0; s < dets.size(); ++s) {
    for (std::size_t t = 0; t < tips.size(); ++t) c.w_st(s, t) = (dets[s].centroid - tips[t].centroid).norm();
    c.w_s[s] = mode == WeightMode::unit ? 1.0 : dets[s].confidence / c_thr;
  }
  return c;
}

struct AssignmentSolution {
  Eigen::MatrixXi e;      // S x T
  Eigen::VectorXi alpha;  // false positive per detection
  Eigen::VectorXi beta;   // miss per fingertip
  double objective = 0.0;
};

/// sum e_st w_st + lambda sum alpha_s w_s + lambda sum beta_t, summed in
/// that order (row-major over e).
inline double assignment_objective(const Eigen::MatrixXi& e, const Eigen::VectorXi& alpha,
                                   const Eigen::VectorXi& beta, const Eigen::MatrixXd& w_st,
                                   const Eigen::VectorXd& w_s, double lambda) {
  double obj = 0.0;
  for (int s = 0; s < e.rows(); ++s)
    for (int t = 0; t < e.cols(); ++t)
      if (e(s, t)) obj += w_st(s, t);
  for (int s = 0; s < alpha.size(); ++s)
    if (alpha[s]) obj += lambda * w_s[s];
  for (int t = 0; t < beta.size(); ++t)
    if (beta[t]) obj += lambda;
  return obj;
}

namespace detail {

/// Cost ordered by value first, then by number of real assignments.
struct LexCost {
  double value = 0.0;
  int count = 0;

  static LexCost inf() { return {std::numeric_limits<double>::infinity(), 0}; }
  LexCost operator+(const LexCost& o) const { return {value + o.value, count + o.count}; }
  LexCost operator-(const LexCost& o) const { return {value - o.value, count - o.count}; }
  LexCost& operator+=(const LexCost& o) { return *this = *this + o; }
  LexCost& operator-=(const LexCost& o) { return *this = *this - o; }
  bool operator<(const LexCost& o) const { return value < o.value || (value == o.value && count < o.count); }
};

/// Square min-cost assignment (shortest augmenting paths with potentials).
/// Returns the column of each row.
inline std::vector<int> hungarian(const std::vector<std::vector<LexCost>>& a) {
  const int n = static_cast<int>(a.size());
  std::vector<LexCost> u(n + 1), v(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<LexCost> minv(n + 1, LexCost::inf());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      LexCost delta = LexCost::inf();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const LexCost cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) col[p[j] - 1] = j - 1;
  return col;
}

inline LexCost total(const std::vector<std::vector<LexCost>>& a, const std::vector<int>& col) {
  LexCost sum;
  for (std::size_t i = 0; i < col.size(); ++i) sum += a[i][col[i]];
  return sum;
}

}  // namespace detail

/// Exact minimizer of the detection/fingertip integer program, by
/// augmentation to a square assignment: detection rows get a private
/// false-positive column (lambda w_s), fingertip columns get a private miss
/// row (lambda), dummy-dummy cells cost 0. Ties prefer fewer assignments,
/// then the lexicographically smallest list of (s, t) pairs.
inline AssignmentSolution solve_assignment(const Eigen::MatrixXd& w_st, const Eigen::VectorXd& w_s, double lambda) {
  const int S = static_cast<int>(w_st.rows());
  const int T = static_cast<int>(w_st.cols());
  if (w_s.size() != S) throw DimensionMismatch("w_s length differs from detection count");
  AssignmentSolution sol{Eigen::MatrixXi::Zero(S, T), Eigen::VectorXi::Zero(S), Eigen::VectorXi::Zero(T), 0.0};
  const int n = S + T;
  if (n == 0) return sol;

  using detail::LexCost;
  std::vector<std::vector<LexCost>> base(n, std::vector<LexCost>(n, LexCost::inf()));
  for (int s = 0; s < S; ++s) {
    for (int t = 0; t < T; ++t) base[s][t] = {w_st(s, t), 1};
    base[s][T + s] = {lambda * w_s[s], 0};
  }
  for (int t = 0; t < T; ++t) {
    base[S + t][t] = {lambda, 0};
    for (int s = 0; s < S; ++s) base[S + t][T + s] = {0.0, 0};
  }

  const LexCost best = detail::total(base, detail::hungarian(base));
  const double tol = 1e-9 * std::max(1.0, std::abs(best.value));
  auto same = [&](const LexCost& c) { return c.count == best.count && std::abs(c.value - best.value) <= tol; };

  // Fix pairs greedily in lexicographic order while optimality is kept.
  std::vector<std::vector<LexCost>> fixed = base;
  for (int s = 0; s < S; ++s) {
    for (int t = 0; t < T; ++t) {
      if (fixed[s][t].value == std::numeric_limits<double>::infinity()) continue;
      std::vector<std::vector<LexCost>> trial = fixed;
      for (int j = 0; j < n; ++j)
        if (j != t) trial[s][j] = LexCost::inf();
      for (int i = 0; i < n; ++i)
        if (i != s) trial[i][t] = LexCost::inf();
      const std::vector<int> col = detail::hungarian(trial);
      if (same(detail::total(trial, col))) {
        fixed = std::move(trial);
        break;
      }
    }
  }

  const std::vector<int> col = detail::hungarian(fixed);
  for (int s = 0; s < S; ++s) {
    if (col[s] < T) sol.e(s, col[s]) = 1;
    else sol.alpha[s] = 1;
  }
  for (int t = 0; t < T; ++t) sol.beta[t] = sol.e.col(t).sum() == 0 ? 1 : 0;
  sol.objective = assignment_objective(sol.e, sol.alpha, sol.beta, w_st, w_s, lambda);
  return sol;
}

struct SalientParams {
  double skip_distance = 10.0;    // mm: assigned fingertips closer than this get no pairs
  double inside_fraction = 0.5;   // share of fingertip vertices projecting into the box
};

/// Correspondences for every assignment e_st = 1: none when the fingertip is
/// already within `skip_distance`; closest detection points when enough of
/// the fingertip projects into the box; the detection centroid otherwise.
inline std::vector<PointCorrespondence> salient_correspondences(const AssignmentSolution& sol,
                                                                const AssignmentCosts& costs,
                                                                std::span<const Detection> dets,
                                                                std::span<const FingertipRegion> tips,
                                                                const PosedModel& posed,
                                                                const CameraIntrinsics& k, Metric metric,
                                                                const SalientParams& params = {}) {
  std::vector<PointCorrespondence> out;
  for (int s = 0; s < sol.e.rows(); ++s) {
    for (int t = 0; t < sol.e.cols(); ++t) {
      if (!sol.e(s, t) || costs.w_st(s, t) < params.skip_distance) continue;
      const Detection& det = dets[s];
      const FingertipRegion& tip = tips[t];
      int inside = 0;
      for (int v : tip.vertices) {
        const Vec3& p = posed.vertices[v];
        if (p.z() > 0.0 && det.bbox.contains(k.project(p))) ++inside;
      }
      const bool closest =
          static_cast<double>(inside) >= params.inside_fraction * static_cast<double>(tip.vertices.size());
      for (int v : tip.visible_vertices) {
        Vec3 target = det.centroid;
        if (closest) {
          double best = std::numeric_limits<double>::infinity();
          for (const Vec3& x : det.cloud) {
            const double d2 = (x - posed.vertices[v]).squaredNorm();
            if (d2 < best) {
              best = d2;
              target = x;
            }
          }
        }
        out.push_back({v, target, posed.normals[v], metric});
      }
    }
  }
  return out;
}

}  // namespace artrack
