#pragma once

// Meshes, calibrated depth frames, point-cloud lifting, normals, depth
// discontinuities, 2D distance transforms and Plücker rays.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "artrack/error.hpp"
#include "artrack/kinematics.hpp"

namespace artrack {

using Triangle = std::array<int, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> vertex_normals;
};

/// Area-weighted vertex normals from counter-clockwise (outward) faces.
inline std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices,
                                                std::span<const Triangle> triangles) {
  std::vector<Vec3> n(vertices.size(), Vec3::Zero());
  for (const Triangle& t : triangles) {
    const Vec3 fn = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    for (int i : t) n[i] += fn;
  }
  for (Vec3& v : n) {
    const double len = v.norm();
    v = len > 0.0 ? Vec3(v / len) : Vec3::UnitZ();
  }
  return n;
}

inline void validate_mesh(const TriangleMesh& m) {
  const int nv = static_cast<int>(m.vertices.size());
  for (const Triangle& t : m.triangles)
    for (int i : t)
      if (i < 0 || i >= nv) throw ValidationError("triangle index out of range");
  if (m.vertex_normals.size() != m.vertices.size())
    throw ValidationError("vertex normal count differs from vertex count");
  for (const Vec3& n : m.vertex_normals)
    if (std::abs(n.norm() - 1.0) > 1e-6) throw ValidationError("vertex normal is not unit length");
}

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ValidationError("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
  }

  Vec2 project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }

  Vec3 backproject(double px, double py, double z) const {
    return {z * (px - cx) / fx, z * (py - cy) / fy, z};
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  int pixel_count() const { return width * height; }
};

/// Row-major depth in mm; 0 marks an invalid pixel. An optional foreground
/// mask (non-zero = keep) further invalidates pixels.
struct DepthFrame {
  CameraIntrinsics intrinsics;
  std::vector<float> depth;
  std::vector<std::uint8_t> mask;

  static DepthFrame blank(const CameraIntrinsics& k) {
    return {k, std::vector<float>(static_cast<std::size_t>(k.pixel_count()), 0.0f), {}};
  }

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  int index(int x, int y) const { return y * intrinsics.width + x; }

  bool valid(int i) const { return depth[i] > 0.0f && (mask.empty() || mask[i] != 0); }
  bool valid(int x, int y) const { return intrinsics.contains(x, y) && valid(index(x, y)); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (int i = 0; i < static_cast<int>(depth.size()); ++i) n += valid(i) ? 1 : 0;
    return n;
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> pixel_of_point;

  std::size_t size() const { return points.size(); }
};

/// X = z ((px - cx)/fx, (py - cy)/fy, 1) for every valid pixel. Normals are
/// left as the viewing direction towards the camera.
inline PointCloud depth_to_cloud(const DepthFrame& f) {
  f.intrinsics.validate();
  PointCloud c;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const int i = f.index(x, y);
      if (!f.valid(i)) continue;
      const Vec3 p = f.intrinsics.backproject(x, y, f.depth[i]);
      c.points.push_back(p);
      c.normals.push_back(-p.normalized());
      c.pixel_of_point.push_back(i);
    }
  }
  return c;
}

/// Windowed bilateral filter on valid pixels; window 2*ceil(2 sigma)+1.
/// Masked-out pixels are zeroed in the result.
inline DepthFrame bilateral_smooth(const DepthFrame& f, double spatial_sigma, double range_sigma) {
  DepthFrame out = DepthFrame::blank(f.intrinsics);
  const int r = static_cast<int>(std::ceil(2.0 * spatial_sigma));
  std::vector<double> spatial(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      spatial[(dy + r) * (2 * r + 1) + dx + r] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma * spatial_sigma));
  const double inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const int i = f.index(x, y);
      if (!f.valid(i)) continue;
      const double z0 = f.depth[i];
      double acc = 0.0, wsum = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (!f.valid(x + dx, y + dy)) continue;
          const double z = f.depth[f.index(x + dx, y + dy)];
          const double w = spatial[(dy + r) * (2 * r + 1) + dx + r] * std::exp(-(z - z0) * (z - z0) * inv_range);
          acc += w * z;
          wsum += w;
        }
      }
      out.depth[i] = static_cast<float>(acc / wsum);
    }
  }
  return out;
}

/// Back-projects valid pixels and estimates normals from central-difference
/// tangents (one-sided next to invalid pixels or jumps larger than
/// `max_step` mm), oriented towards the camera. Pixels with no usable
/// tangent in either image direction are dropped.
inline PointCloud cloud_with_normals(const DepthFrame& f, double max_step = 20.0) {
  const CameraIntrinsics& k = f.intrinsics;
  PointCloud c;
  auto point = [&](int x, int y) { return k.backproject(x, y, f.depth[f.index(x, y)]); };
  auto usable = [&](int x, int y, double z0) {
    return f.valid(x, y) && std::abs(f.depth[f.index(x, y)] - z0) <= max_step;
  };
  auto tangent = [&](int x, int y, int dx, int dy, double z0, Vec3& t) {
    const bool fwd = usable(x + dx, y + dy, z0);
    const bool bwd = usable(x - dx, y - dy, z0);
    if (fwd && bwd) t = point(x + dx, y + dy) - point(x - dx, y - dy);
    else if (fwd) t = point(x + dx, y + dy) - point(x, y);
    else if (bwd) t = point(x, y) - point(x - dx, y - dy);
    else return false;
    return true;
  };
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const int i = f.index(x, y);
      if (!f.valid(i)) continue;
      const double z0 = f.depth[i];
      Vec3 tx, ty;
      if (!tangent(x, y, 1, 0, z0, tx) || !tangent(x, y, 0, 1, z0, ty)) continue;
      Vec3 n = tx.cross(ty);
      const double nn = n.norm();
      if (nn == 0.0) continue;
      n /= nn;
      const Vec3 p = point(x, y);
      if (n.dot(p) > 0.0) n = -n;
      c.points.push_back(p);
      c.normals.push_back(n);
      c.pixel_of_point.push_back(i);
    }
  }
  return c;
}

inline PointCloud bilateral_smooth_and_normals(const DepthFrame& f, double spatial_sigma = 3.0,
                                               double range_sigma = 30.0) {
  return cloud_with_normals(bilateral_smooth(f, spatial_sigma, range_sigma));
}

/// Valid pixels whose 4-neighbourhood holds a depth jump above
/// `jump_threshold` mm or an invalid (masked) pixel inside the image.
inline std::vector<std::uint8_t> depth_discontinuities(const DepthFrame& f, double jump_threshold = 20.0) {
  std::vector<std::uint8_t> edges(f.depth.size(), 0);
  static constexpr int kDx[4] = {1, -1, 0, 0};
  static constexpr int kDy[4] = {0, 0, 1, -1};
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const int i = f.index(x, y);
      if (!f.valid(i)) continue;
      for (int n = 0; n < 4; ++n) {
        const int nx = x + kDx[n], ny = y + kDy[n];
        if (!f.intrinsics.contains(nx, ny)) continue;
        const int j = f.index(nx, ny);
        if (!f.valid(j) || std::abs(f.depth[j] - f.depth[i]) > jump_threshold) {
          edges[i] = 1;
          break;
        }
      }
    }
  }
  return edges;
}

struct DistanceTransform {
  int width = 0;
  int height = 0;
  std::vector<double> distance;  // px
  std::vector<int> nearest;      // pixel id of the closest marked pixel
};

/// Exact Euclidean distance transform (separable lower-envelope method) in
/// integer arithmetic. Ties resolve to the lowest pixel id.
inline DistanceTransform distance_transform(std::span<const std::uint8_t> mask, int width, int height) {
  if (static_cast<int>(mask.size()) != width * height) throw DimensionMismatch("mask size differs from image size");
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  const std::size_t n = mask.size();
  std::vector<std::int64_t> g2(n, kInf);  // squared row distance
  std::vector<int> gcol(n, -1);
  bool any = false;
  for (int y = 0; y < height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    int last = -1;
    std::vector<int> left(width, -1), right(width, -1);
    for (int x = 0; x < width; ++x) {
      if (mask[row + x]) last = x;
      left[x] = last;
    }
    last = -1;
    for (int x = width - 1; x >= 0; --x) {
      if (mask[row + x]) last = x;
      right[x] = last;
    }
    for (int x = 0; x < width; ++x) {
      int best = -1;
      if (left[x] >= 0) best = left[x];
      if (right[x] >= 0 && (best < 0 || right[x] - x < x - best)) best = right[x];
      if (best >= 0) {
        any = true;
        const std::int64_t d = x - best;
        g2[row + x] = d * d;
        gcol[row + x] = best;
      }
    }
  }
  if (!any) throw Error("distance transform of an empty mask");

  DistanceTransform out{width, height, std::vector<double>(n), std::vector<int>(n)};
  std::vector<int> v(height);
  std::vector<std::int64_t> z(height);
  auto floor_div = [](std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
  };
  for (int x = 0; x < width; ++x) {
    auto f = [&](int y) { return g2[static_cast<std::size_t>(y) * width + x]; };
    int k = -1;
    for (int q = 0; q < height; ++q) {
      if (f(q) >= kInf) continue;
      while (true) {
        if (k < 0) {
          v[0] = q;
          z[0] = std::numeric_limits<std::int64_t>::min();
          k = 0;
          break;
        }
        const int p = v[k];
        const std::int64_t num = (f(q) + std::int64_t(q) * q) - (f(p) + std::int64_t(p) * p);
        const std::int64_t s = floor_div(num, 2 * std::int64_t(q - p)) + 1;  // first row where q wins strictly
        if (s <= z[k]) {
          --k;
          continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        break;
      }
    }
    int c = 0;
    for (int y = 0; y < height; ++y) {
      while (c < k && z[c + 1] <= y) ++c;
      const int src = v[c];
      const std::int64_t dy = y - src;
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      out.distance[i] = std::sqrt(static_cast<double>(dy * dy + f(src)));
      out.nearest[i] = src * width + gcol[static_cast<std::size_t>(src) * width + x];
    }
  }
  return out;
}

/// Line {X : X x d = m} with unit direction d and moment m.
struct PluckerLine {
  Vec3 d = Vec3::UnitZ();
  Vec3 m = Vec3::Zero();

  static PluckerLine through(const Vec3& point, const Vec3& direction) {
    const Vec3 d = direction.normalized();
    return {d, point.cross(d)};
  }

  Vec3 residual(const Vec3& x) const { return x.cross(d) - m; }
};

/// Camera ray through a pixel; camera-centred so the moment is zero.
inline PluckerLine pixel_ray(double px, double py, const CameraIntrinsics& k) {
  return {Vec3((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0).normalized(), Vec3::Zero()};
}

}  // namespace artrack
