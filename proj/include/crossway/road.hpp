#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "crossway/geometry.hpp"
#include "crossway/vehicle.hpp"

namespace crossway {

enum class Region { lower = 0, upper = 1, left = 2, right = 3 };
enum class Task { left_turn = 0, go_straight = 1, right_turn = 2 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::lower: return "lower";
    case Region::upper: return "upper";
    case Region::left: return "left";
    case Region::right: return "right";
  }
  return "?";
}

inline const char* task_name(Task t) {
  switch (t) {
    case Task::left_turn: return "left_turn";
    case Task::go_straight: return "go_straight";
    case Task::right_turn: return "right_turn";
  }
  return "?";
}

struct MapConfig {
  int lanes_per_direction = 2;
  double lane_width = 3.5;
  double arm_length = 40.0;
  double waypoint_spacing = 2.0;

  void validate() const {
    if (lanes_per_direction < 1 || lanes_per_direction > 2)
      throw std::invalid_argument("lanes_per_direction must be 1 or 2");
    if (lane_width <= 0.0 || arm_length <= 0.0 || waypoint_spacing <= 0.0)
      throw std::invalid_argument("map lengths must be positive");
  }
};

enum class WaypointKind { approach = 0, core = 1, exit = 2 };

struct Waypoint {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  WaypointKind kind = WaypointKind::approach;
  int lane = 0;  // lane index within its travel direction; -1 inside the core
};

// Number of potential route crossings between the ego task and one
// surrounding vehicle by origin region, for a single-lane intersection.
// Rows: task (left, straight, right); columns: origin (upper, left, right).
inline int collision_point_count(Task ev_task, Region sv_origin) {
  static constexpr int table[3][3] = {
      {2, 2, 2},  // ego left turn
      {1, 2, 3},  // ego go straight
      {1, 1, 0},  // ego right turn
  };
  int col;
  switch (sv_origin) {
    case Region::upper: col = 0; break;
    case Region::left: col = 1; break;
    case Region::right: col = 2; break;
    default:
      throw std::invalid_argument("collision points: SV origin must be one of "
                                  "upper/left/right");
  }
  return table[static_cast<int>(ev_task)][col];
}

template <typename OriginRange>
int n_pcp(Task ev_task, const OriginRange& sv_origins) {
  int total = 0;
  for (Region r : sv_origins) total += collision_point_count(ev_task, r);
  return total;
}

// Four-arm unsignalized intersection with right-hand traffic. X east,
// Y north; the core is the square [-half, half]^2 with
// half = lanes_per_direction * lane_width. Lane index 0 is the innermost
// lane of a travel direction (leftmost from the driver's seat), increasing
// outward to the right.
class RoadMap {
 public:
  explicit RoadMap(const MapConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const double h = half();
    core_polygon_ = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
  }

  const MapConfig& config() const { return cfg_; }
  double half() const { return cfg_.lanes_per_direction * cfg_.lane_width; }

  static double inbound_heading(Region r) {
    switch (r) {
      case Region::lower: return M_PI_2;
      case Region::upper: return -M_PI_2;
      case Region::left: return 0.0;
      case Region::right: return M_PI;
    }
    return 0.0;
  }
  static double outbound_heading(Region r) {
    return wrap_angle(inbound_heading(r) + M_PI);
  }

  static Region destination(Region origin, Task task) {
    static constexpr Region table[4][3] = {
        // left turn        go straight     right turn
        {Region::left, Region::upper, Region::right},   // from lower
        {Region::right, Region::lower, Region::left},   // from upper
        {Region::upper, Region::right, Region::lower},  // from left
        {Region::lower, Region::left, Region::upper},   // from right
    };
    return table[static_cast<int>(origin)][static_cast<int>(task)];
  }

  // Lane the route terminates in: inner lane after a left turn, outer lane
  // after a right turn, unchanged when going straight.
  int goal_lane(Task task, int start_lane) const {
    switch (task) {
      case Task::left_turn: return 0;
      case Task::right_turn: return cfg_.lanes_per_direction - 1;
      case Task::go_straight: return start_lane;
    }
    return 0;
  }

  // Point on an inbound lane centerline at `dist` before the core boundary.
  Vec2 inbound_point(Region r, int lane, double dist) const {
    check_lane(lane);
    const double th = inbound_heading(r);
    const Vec2 entry = lane_entry(r, lane);
    return entry - Vec2{std::cos(th), std::sin(th)} * dist;
  }

  // Point on an outbound lane centerline at `dist` past the core boundary.
  Vec2 outbound_point(Region r, int lane, double dist) const {
    check_lane(lane);
    const double th = outbound_heading(r);
    const Vec2 exit = lane_exit(r, lane);
    return exit + Vec2{std::cos(th), std::sin(th)} * dist;
  }

  // Where an inbound lane centerline meets the core boundary.
  Vec2 lane_entry(Region r, int lane) const {
    const double th = inbound_heading(r);
    const double o = lane_offset(lane);
    const Vec2 right{std::sin(th), -std::cos(th)};
    const Vec2 axis_entry = core_boundary_point(r);
    return axis_entry + right * o;
  }

  // Where an outbound lane centerline leaves the core boundary.
  Vec2 lane_exit(Region r, int lane) const {
    const double th = outbound_heading(r);
    const double o = lane_offset(lane);
    const Vec2 right{std::sin(th), -std::cos(th)};
    const Vec2 axis_exit = core_boundary_point(r);
    return axis_exit + right * o;
  }

  bool drivable(const Vec2& p) const {
    const double h = half();
    const double reach = h + cfg_.arm_length;
    const bool vertical = std::abs(p.x) <= h && std::abs(p.y) <= reach;
    const bool horizontal = std::abs(p.y) <= h && std::abs(p.x) <= reach;
    return vertical || horizontal;
  }

  const std::vector<Vec2>& core_polygon() const { return core_polygon_; }

  bool inside_core(const Vec2& p) const {
    const double h = half() + 0.25;  // small tolerance at the boundary
    return std::abs(p.x) <= h && std::abs(p.y) <= h;
  }

  // Route from a start pose on an inbound lane to the end of the goal lane
  // in the destination region: approach segment, a tangent-continuous cubic
  // Bezier connector through the core, then the exit segment. The route is
  // resampled at waypoint spacing with tangent headings. `start_dist` is the
  // distance before the core boundary; `exit_dist` how far the route follows
  // the outbound lane. A route requested from its own end point is empty.
  std::vector<Waypoint> route(Region origin, int start_lane, Task task,
                              double start_dist, double exit_dist) const {
    check_lane(start_lane);
    if (start_dist <= 1e-9 && exit_dist <= 1e-9) return {};
    const Region dest = destination(origin, task);
    const int end_lane = goal_lane(task, start_lane);

    std::vector<Vec2> pts;
    std::vector<int> kind;  // parallel to pts
    std::vector<int> lane;

    // Approach: straight inbound run ending at the core boundary.
    const Vec2 a0 = inbound_point(origin, start_lane, start_dist);
    const Vec2 a1 = lane_entry(origin, start_lane);
    append_segment(pts, kind, lane, a0, a1,
                   static_cast<int>(WaypointKind::approach), start_lane);

    // Core connector.
    const Vec2 b0 = a1;
    const Vec2 b3 = lane_exit(dest, end_lane);
    const double th_in = inbound_heading(origin);
    const double th_out = outbound_heading(dest);
    const double chord = (b3 - b0).norm();
    const double d = 0.45 * chord;
    const Vec2 b1 = b0 + Vec2{std::cos(th_in), std::sin(th_in)} * d;
    const Vec2 b2 = b3 - Vec2{std::cos(th_out), std::sin(th_out)} * d;
    constexpr int kCurveSamples = 48;
    for (int i = 1; i <= kCurveSamples; ++i) {
      double t = static_cast<double>(i) / kCurveSamples;
      double w = 1.0 - t;
      Vec2 p = b0 * (w * w * w) + b1 * (3.0 * w * w * t) +
               b2 * (3.0 * w * t * t) + b3 * (t * t * t);
      pts.push_back(p);
      kind.push_back(static_cast<int>(WaypointKind::core));
      lane.push_back(-1);
    }

    // Exit: straight outbound run.
    const Vec2 c1 = outbound_point(dest, end_lane, exit_dist);
    append_segment(pts, kind, lane, b3, c1, static_cast<int>(WaypointKind::exit),
                   end_lane);

    return resample(pts, kind, lane);
  }

  // Polyline intersections of two routes inside the core, reported as arc
  // lengths along each route.
  struct Conflict {
    double s_a = 0.0;
    double s_b = 0.0;
    Vec2 point;
  };

  std::vector<Conflict> route_conflicts(const std::vector<Vec2>& a,
                                        const std::vector<double>& sa,
                                        const std::vector<Vec2>& b,
                                        const std::vector<double>& sb) const {
    std::vector<Conflict> out;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      for (std::size_t j = 0; j + 1 < b.size(); ++j) {
        auto hit = segment_intersection(a[i], a[i + 1], b[j], b[j + 1]);
        if (!hit || !inside_core(*hit)) continue;
        Conflict c;
        c.point = *hit;
        c.s_a = sa[i] + (*hit - a[i]).norm();
        c.s_b = sb[j] + (*hit - b[j]).norm();
        out.push_back(c);
      }
    }
    return out;
  }

  int lanes() const { return cfg_.lanes_per_direction; }
  double lane_width() const { return cfg_.lane_width; }
  double arm_length() const { return cfg_.arm_length; }

 private:
  void check_lane(int lane) const {
    if (lane < 0 || lane >= cfg_.lanes_per_direction)
      throw std::out_of_range("lane index out of range");
  }

  double lane_offset(int lane) const {
    return cfg_.lane_width * (lane + 0.5);
  }

  // Center of the core edge an arm attaches to.
  Vec2 core_boundary_point(Region r) const {
    const double h = half();
    switch (r) {
      case Region::lower: return {0.0, -h};
      case Region::upper: return {0.0, h};
      case Region::left: return {-h, 0.0};
      case Region::right: return {h, 0.0};
    }
    return {};
  }

  static void append_segment(std::vector<Vec2>& pts, std::vector<int>& kind,
                             std::vector<int>& lane, const Vec2& a,
                             const Vec2& b, int k, int lane_idx) {
    const double len = (b - a).norm();
    if (len < 1e-9) {
      if (pts.empty()) {
        pts.push_back(a);
        kind.push_back(k);
        lane.push_back(lane_idx);
      }
      return;
    }
    const int n = std::max(1, static_cast<int>(std::ceil(len / 1.0)));
    const bool include_start = pts.empty();
    for (int i = include_start ? 0 : 1; i <= n; ++i) {
      double t = static_cast<double>(i) / n;
      pts.push_back(a + (b - a) * t);
      kind.push_back(k);
      lane.push_back(lane_idx);
    }
  }

  std::vector<Waypoint> resample(const std::vector<Vec2>& pts,
                                 const std::vector<int>& kind,
                                 const std::vector<int>& lane) const {
    auto cum = cumulative_lengths(pts);
    const double total = cum.back();
    std::vector<Waypoint> out;
    const int n = std::max(1, static_cast<int>(
                                  std::floor(total / cfg_.waypoint_spacing)));
    for (int i = 0; i <= n; ++i) {
      double s = std::min(total, i * cfg_.waypoint_spacing);
      Vec2 p = point_at_arclength(pts, cum, s);
      // Carry the metadata of the nearest original sample.
      std::size_t j =
          std::upper_bound(cum.begin(), cum.end(), s) - cum.begin();
      if (j > 0) --j;
      Waypoint w;
      w.x = p.x;
      w.y = p.y;
      w.kind = static_cast<WaypointKind>(kind[j]);
      w.lane = lane[j];
      out.push_back(w);
    }
    // Make sure the exact route end is present.
    if ((Vec2{out.back().x, out.back().y} - pts.back()).norm() > 1e-9) {
      Waypoint w;
      w.x = pts.back().x;
      w.y = pts.back().y;
      w.kind = static_cast<WaypointKind>(kind.back());
      w.lane = lane.back();
      out.push_back(w);
    }
    // Tangent headings.
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t j = std::min(i + 1, out.size() - 1);
      std::size_t k = j > 0 ? j - 1 : 0;
      double dx = out[j].x - out[k].x;
      double dy = out[j].y - out[k].y;
      out[i].psi = std::atan2(dy, dx);
    }
    return out;
  }

  MapConfig cfg_;
  std::vector<Vec2> core_polygon_;
};

}  // namespace crossway
