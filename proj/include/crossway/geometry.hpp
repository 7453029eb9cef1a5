#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace crossway {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct OrientedBox {
  Vec2 center;
  double heading = 0.0;  // rad
  double length = 0.0;   // along heading
  double width = 0.0;
};

inline std::array<Vec2, 4> box_corners(const OrientedBox& b) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const double hl = 0.5 * b.length, hw = 0.5 * b.width;
  auto corner = [&](double lx, double ly) {
    return Vec2{b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly};
  };
  return {corner(hl, hw), corner(hl, -hw), corner(-hl, -hw), corner(-hl, hw)};
}

// Separating-axis overlap test for two oriented rectangles.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& p : ca) {
      double t = p.dot(axis);
      amin = std::min(amin, t);
      amax = std::max(amax, t);
    }
    for (const Vec2& p : cb) {
      double t = p.dot(axis);
      bmin = std::min(bmin, t);
      bmax = std::max(bmax, t);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

// Proper + touching segment intersection (p1-p2 vs p3-p4).
inline std::optional<Vec2> segment_intersection(const Vec2& p1, const Vec2& p2,
                                                const Vec2& p3,
                                                const Vec2& p4) {
  const Vec2 r = p2 - p1, s = p4 - p3;
  const double denom = r.cross(s);
  if (std::abs(denom) < 1e-12) return std::nullopt;  // parallel
  const double t = (p3 - p1).cross(s) / denom;
  const double u = (p3 - p1).cross(r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return p1 + r * t;
}

inline bool point_in_convex_polygon(const Vec2& p,
                                    const std::vector<Vec2>& poly) {
  bool any_neg = false, any_pos = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    double c = (b - a).cross(p - a);
    if (c < -1e-12) any_neg = true;
    if (c > 1e-12) any_pos = true;
  }
  return !(any_neg && any_pos);
}

// Cumulative arc length of a polyline; entry i is the length up to point i.
inline std::vector<double> cumulative_lengths(const std::vector<Vec2>& pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  return s;
}

struct PolylineProjection {
  std::size_t segment = 0;   // index of the segment start point
  double s = 0.0;            // arc length of the projection
  double lateral = 0.0;      // unsigned distance to the polyline
  Vec2 point;                // closest point
};

inline PolylineProjection project_onto_polyline(
    const Vec2& p, const std::vector<Vec2>& pts,
    const std::vector<double>& cumlen) {
  PolylineProjection best;
  best.lateral = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i], b = pts[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + ab * t;
    const double d = (p - q).norm();
    if (d < best.lateral) {
      best.lateral = d;
      best.segment = i;
      best.point = q;
      best.s = cumlen[i] + std::sqrt(len2) * t;
    }
  }
  return best;
}

// Local curvature of a polyline near arc length s (Menger curvature of
// three nearby samples). Returns 0 for degenerate spacing.
inline double route_curvature(const std::vector<Vec2>& pts,
                              const std::vector<double>& cumlen, double s);

// Point on a polyline at a given arc length (clamped to the ends).
inline Vec2 point_at_arclength(const std::vector<Vec2>& pts,
                               const std::vector<double>& cumlen, double s) {
  if (pts.empty()) return {};
  if (s <= 0.0) return pts.front();
  if (s >= cumlen.back()) return pts.back();
  auto it = std::upper_bound(cumlen.begin(), cumlen.end(), s);
  std::size_t i = static_cast<std::size_t>(it - cumlen.begin());
  const double seg = cumlen[i] - cumlen[i - 1];
  const double t = seg > 0.0 ? (s - cumlen[i - 1]) / seg : 0.0;
  return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
}

inline double route_curvature(const std::vector<Vec2>& pts,
                              const std::vector<double>& cumlen, double s) {
  if (pts.size() < 3 || cumlen.back() < 2.0) return 0.0;
  const double h = 1.5;
  const double sm = std::clamp(s, h, cumlen.back() - h);
  const Vec2 a = point_at_arclength(pts, cumlen, sm - h);
  const Vec2 b = point_at_arclength(pts, cumlen, sm);
  const Vec2 c = point_at_arclength(pts, cumlen, sm + h);
  const double area2 = std::abs((b - a).cross(c - a));
  const double la = (b - a).norm(), lb = (c - b).norm(), lc = (c - a).norm();
  if (la < 1e-9 || lb < 1e-9 || lc < 1e-9) return 0.0;
  return 2.0 * area2 / (la * lb * lc);
}

}  // namespace crossway
