#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "artrack/geometry.hpp"

namespace artrack {

struct RenderResult {
  DepthFrame depth;                   // 0 where no triangle covers the pixel
  std::vector<int> triangle;          // covering triangle per pixel, -1 if none
  std::vector<std::uint8_t> visible;  // per vertex
  std::vector<Vec2> projected;        // per vertex pixel coordinates
};

/// Z-buffer rasterization of camera-space triangles sampled at integer pixel
/// centres, with perspective-correct depth. A vertex is visible when it
/// projects inside the image and its depth is within `visibility_tolerance`
/// mm of the z-buffer at its nearest pixel (uncovered pixels never occlude).
inline RenderResult render_depth(std::span<const Vec3> vertices, std::span<const Triangle> triangles,
                                 const CameraIntrinsics& k, double visibility_tolerance = 2.0) {
  k.validate();
  constexpr double kNear = 1.0;
  const int w = k.width, h = k.height;
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  RenderResult out;
  out.triangle.assign(zbuf.size(), -1);
  out.projected.resize(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i)
    out.projected[i] = vertices[i].z() > kNear ? k.project(vertices[i]) : Vec2(-1e9, -1e9);

  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
    const Triangle& tri = triangles[t];
    const Vec3& a = vertices[tri[0]];
    const Vec3& b = vertices[tri[1]];
    const Vec3& c = vertices[tri[2]];
    if (a.z() <= kNear || b.z() <= kNear || c.z() <= kNear) continue;
    const Vec2& pa = out.projected[tri[0]];
    const Vec2& pb = out.projected[tri[1]];
    const Vec2& pc = out.projected[tri[2]];
    const double area = (pb - pa).x() * (pc - pa).y() - (pb - pa).y() * (pc - pa).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}))));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}))));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}))));
    const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x, y);
        auto edge = [](const Vec2& u, const Vec2& v, const Vec2& q) {
          return (v - u).x() * (q - u).y() - (v - u).y() * (q - u).x();
        };
        const double l0 = edge(pb, pc, p) / area;
        const double l1 = edge(pc, pa, p) / area;
        const double l2 = edge(pa, pb, p) / area;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        const double z = 1.0 / (l0 * iza + l1 * izb + l2 * izc);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (z < zbuf[i]) {
          zbuf[i] = z;
          out.triangle[i] = t;
        }
      }
    }
  }

  out.depth = DepthFrame::blank(k);
  for (std::size_t i = 0; i < zbuf.size(); ++i)
    if (std::isfinite(zbuf[i])) out.depth.depth[i] = static_cast<float>(zbuf[i]);

  out.visible.assign(vertices.size(), 0);
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (vertices[v].z() <= kNear) continue;
    const int x = static_cast<int>(std::lround(out.projected[v].x()));
    const int y = static_cast<int>(std::lround(out.projected[v].y()));
    if (!k.contains(x, y)) continue;
    out.visible[v] = vertices[v].z() <= zbuf[static_cast<std::size_t>(y) * w + x] + visibility_tolerance;
  }
  return out;
}

}  // namespace artrack
