#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "crossway/bandit.hpp"
#include "crossway/geometry.hpp"
#include "crossway/mpc.hpp"
#include "crossway/rng.hpp"
#include "crossway/road.hpp"
#include "crossway/vehicle.hpp"

namespace crossway {

enum class Style { aggressive = 0, moderate = 1, conservative = 2 };

enum class EventKind { none = 0, collision = 1, success = 2, timeout = 3 };

struct StepEvents {
  EventKind kind = EventKind::none;
  bool vehicle_collision = false;  // collision with an SV body
  bool off_road = false;           // failure of collision class
  bool terminal() const { return kind != EventKind::none; }
};

struct RewardConfig {
  double alpha1 = 1.0;        // success: per SV
  double alpha2 = 0.5;        // success: per potential collision point
  double alpha3 = 10.0;       // failure consolation scale (1/d)
  double r_f_max = 5.0;       // failure consolation cap
  double alpha4 = -0.5;       // collision penalty scale (per SV, per m/s)
  double r_timeout = -5.0;
  double r_lane_change = -1.0;
  double r_live = -0.01;      // per-step survival pressure
  double r_offroad = -10.0;   // leaving the drivable area
  double eps_d = 0.5;         // distance floor for the consolation term
};

struct SvConfig {
  double desired_speed = 5.0;
  double idm_time_headway = 1.5;
  double idm_min_gap = 2.0;
  double idm_accel = 2.0;
  double idm_decel = 2.5;
  double gap_aggressive = 1.0;    // style time-gap thresholds [s]
  double gap_moderate = 2.5;
  double gap_conservative = 4.0;
  double conflict_margin = 3.0;   // stop this far before a conflict point
  double conflict_horizon = 30.0; // ignore conflicts farther than this
  double lead_margin = 0.4;       // "clearly first" time margin
  double lat_accel_comfort = 1.2; // caps speed through curves
};

struct SpawnConfig {
  double ev_offset_min = 10.0;
  double ev_offset_max = 18.0;
  double ev_speed_min = 0.0;
  double ev_speed_max = 5.0;
  double sv_offset_min = 6.0;
  double sv_offset_max = 28.0;
  double sv_speed_min = 3.0;
  double sv_speed_max = 6.0;
  double goal_offset = 18.0;  // goal distance past the core on the exit arm
};

struct EnvConfig {
  MapConfig map;
  VehicleParams vehicle;
  RewardConfig reward;
  SvConfig sv;
  SpawnConfig spawn;
  double dt = 0.1;
  int max_steps = 300;
  int max_sv = 3;  // observation rows; must cover every curriculum cluster
  double body_length = 4.7;
  double body_width = 1.85;
  double obs_clip = 7.5;
  double success_pos_tol = 2.0;
  double success_psi_tol = 0.3;

  void validate() const {
    map.validate();
    vehicle.validate();
    if (dt <= 0.0) throw std::invalid_argument("env dt must be positive");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (max_sv < 0) throw std::invalid_argument("max_sv must be >= 0");
    if (body_length <= 0.0 || body_width <= 0.0)
      throw std::invalid_argument("vehicle footprint must be positive");
    if (spawn.ev_offset_max > map.arm_length ||
        spawn.sv_offset_max > map.arm_length ||
        spawn.goal_offset > map.arm_length)
      throw std::invalid_argument("spawn offsets exceed the arm length");
  }
};

struct MultiDiscreteAction {
  int wp_index = 0;     // 0..4
  int speed_index = 0;  // 0..4 -> {0,2,4,6,8} m/s
  int lane_change = 0;  // -1 left, 0 keep, +1 right
};

inline constexpr std::array<double, 5> kReferenceSpeeds{0.0, 2.0, 4.0,
                                                        6.0, 8.0};

struct SvAgent {
  VehicleState state;
  std::vector<Waypoint> route;
  std::vector<Vec2> route_pts;
  std::vector<double> route_s;
  Style style = Style::moderate;
  Task intent = Task::go_straight;
  Region origin = Region::upper;
  int spawn_index = 0;
  bool yielding = false;
};

struct EpisodeOutcome {
  EventKind terminal_kind = EventKind::none;
  int steps = 0;
  double total_reward = 0.0;
  double final_goal_distance = 0.0;
  bool vehicle_collision = false;
  bool off_road = false;
};

// One conflict between an agent's route and another vehicle's route inside
// the intersection core. `other` is the SV spawn index, or -1 for the EV.
struct ConflictPoint {
  double s_self = 0.0;
  double s_other = 0.0;
  int other = -1;
};

class World {
 public:
  explicit World(const EnvConfig& cfg) : cfg_(cfg), map_(cfg.map) {
    cfg_.validate();
  }

  // Build the episode world for one curriculum cell: the EV starts on the
  // lower arm with the task given by the arm index, and exactly `cluster`
  // SVs spawn on the other three arms with random styles and intents.
  void reset(const CurriculumIndex& curriculum, Rng& rng) {
    if (curriculum.cluster < 0 || curriculum.cluster > cfg_.max_sv)
      throw std::invalid_argument("curriculum cluster exceeds max_sv");
    if (curriculum.arm < 0 || curriculum.arm > 2)
      throw std::invalid_argument("curriculum arm out of range");
    task_ = static_cast<Task>(curriculum.arm);
    n_sv_ = curriculum.cluster;

    for (int attempt = 0;; ++attempt) {
      if (attempt >= 20)
        throw std::runtime_error("could not spawn a non-overlapping world");
      if (try_spawn(rng)) break;
    }

    window_cursor_ = 0;
    step_count_ = 0;
    total_reward_ = 0.0;
    terminal_ = StepEvents{};
    prev_lane_change_ = 0;
    pending_lane_change_penalties_ = 0;
    build_conflicts();
  }

  Task task() const { return task_; }
  int n_sv() const { return n_sv_; }
  const VehicleState& ev_state() const { return ev_; }
  const std::vector<SvAgent>& svs() const { return svs_; }
  const std::vector<Waypoint>& route() const { return route_; }
  const Waypoint& goal() const { return goal_; }
  const RoadMap& map() const { return map_; }
  int steps() const { return step_count_; }
  bool done() const { return terminal_.terminal(); }
  double total_reward() const { return total_reward_; }

  double goal_distance() const {
    return std::hypot(ev_.x - goal_.x, ev_.y - goal_.y);
  }

  // Flattened observation, row-major, EV row first. SV relative distances
  // are clipped to [0, obs_clip]; absent SVs contribute zero rows.
  std::vector<double> observe() const {
    std::vector<double> obs((cfg_.max_sv + 1) * 4, 0.0);
    obs[0] = std::abs(goal_.x - ev_.x);
    obs[1] = std::abs(goal_.y - ev_.y);
    obs[2] = ev_.v;
    obs[3] = wrap_angle(ev_.psi - goal_.psi);
    for (int i = 0; i < n_sv_; ++i) {
      const VehicleState& s = svs_[i].state;
      double* row = obs.data() + 4 * (i + 1);
      row[0] = std::clamp(std::abs(ev_.x - s.x), 0.0, cfg_.obs_clip);
      row[1] = std::clamp(std::abs(ev_.y - s.y), 0.0, cfg_.obs_clip);
      row[2] = ev_.v - s.v;
      row[3] = wrap_angle(ev_.psi - s.psi);
    }
    return obs;
  }

  // The five nearest not-yet-passed route waypoints. A waypoint counts as
  // passed once its longitudinal projection onto the EV heading is behind
  // the EV; the cursor only ever advances, so window[0] moves monotonically
  // along the route. The last waypoint is repeated when fewer than five
  // remain.
  std::array<Waypoint, 5> waypoint_window() {
    advance_cursor();
    std::array<Waypoint, 5> window;
    const int last = static_cast<int>(route_.size()) - 1;
    for (int i = 0; i < 5; ++i)
      window[i] = route_[std::min(window_cursor_ + i, last)];
    return window;
  }

  // Decode the multi-discrete action into the tracking reference. A lane
  // change replaces the chosen waypoint with the laterally adjacent-lane
  // waypoint on that side; without an adjacent lane (or inside the core)
  // it degrades to lane keeping.
  struct DecodedAction {
    IntermediateReference reference;
    bool lane_change_applied = false;
  };

  DecodedAction decode_action(const MultiDiscreteAction& a) {
    if (a.wp_index < 0 || a.wp_index > 4 || a.speed_index < 0 ||
        a.speed_index > 4 || a.lane_change < -1 || a.lane_change > 1)
      throw std::invalid_argument("action component out of range");
    auto window = waypoint_window();
    Waypoint wp = window[a.wp_index];
    bool applied = false;
    if (a.lane_change != 0 && wp.kind != WaypointKind::core) {
      const int target = wp.lane + a.lane_change;
      if (target >= 0 && target < map_.lanes()) {
        const double off = map_.lane_width() * a.lane_change;
        wp.x += std::sin(wp.psi) * off;
        wp.y += -std::cos(wp.psi) * off;
        wp.lane = target;
        applied = true;
      }
    }
    // Lane-change penalties are charged on maneuver initiation, not per
    // holding step.
    const int signal = applied ? a.lane_change : 0;
    if (signal != 0 && signal != prev_lane_change_)
      ++pending_lane_change_penalties_;
    prev_lane_change_ = signal;

    DecodedAction out;
    out.reference =
        IntermediateReference{wp.x, wp.y, kReferenceSpeeds[a.speed_index],
                              wp.psi};
    out.lane_change_applied = applied;
    return out;
  }

  // Advance the EV and every SV by one step, detect terminal events and
  // accumulate the step reward. Returns the events.
  StepEvents step(const ControlInput& ev_control) {
    if (terminal_.terminal())
      throw std::logic_error("step() called after a terminal event");

    // SV controls are computed against the pre-step world.
    std::vector<ControlInput> sv_controls(n_sv_);
    for (int i = 0; i < n_sv_; ++i) sv_controls[i] = sv_policy_step(i);

    ev_ = crossway::step(ev_, clamp_control(ev_control, cfg_.vehicle),
                         cfg_.vehicle, cfg_.dt);
    for (int i = 0; i < n_sv_; ++i) {
      SvAgent& sv = svs_[i];
      sv.state = crossway::step(sv.state, sv_controls[i], cfg_.vehicle,
                                cfg_.dt);
    }
    ++step_count_;

    StepEvents ev;
    if (ev_hits_sv()) {
      ev.kind = EventKind::collision;
      ev.vehicle_collision = true;
    } else if (!map_.drivable({ev_.x, ev_.y})) {
      ev.kind = EventKind::collision;
      ev.off_road = true;
    } else if (at_goal()) {
      ev.kind = EventKind::success;
    } else if (step_count_ >= cfg_.max_steps) {
      ev.kind = EventKind::timeout;
    }

    total_reward_ += step_reward(ev);
    if (ev.terminal()) terminal_ = ev;
    return ev;
  }

  EpisodeOutcome outcome() const {
    if (!terminal_.terminal())
      throw std::logic_error("outcome() before the episode ended");
    EpisodeOutcome o;
    o.terminal_kind = terminal_.kind;
    o.steps = step_count_;
    o.total_reward = total_reward_;
    o.final_goal_distance = goal_distance();
    o.vehicle_collision = terminal_.vehicle_collision;
    o.off_road = terminal_.off_road;
    return o;
  }

  int potential_collision_points() const {
    int total = 0;
    for (int i = 0; i < n_sv_; ++i)
      total += collision_point_count(task_, svs_[i].origin);
    return total;
  }

  // Rule-based surrounding-vehicle control: pure-pursuit steering along the
  // agent's route, IDM car following, and style-gated yielding at route
  // conflicts inside the core.
  ControlInput sv_policy_step(int index) {
    SvAgent& sv = svs_[index];
    const Vec2 pos{sv.state.x, sv.state.y};
    const auto proj = project_onto_polyline(pos, sv.route_pts, sv.route_s);
    const double s_self = proj.s;
    const double route_len = sv.route_s.back();

    // Steering: pure pursuit toward a short lookahead point; tight turns
    // are handled by slowing down rather than a long preview.
    const double lookahead = std::clamp(0.5 + 0.25 * sv.state.v, 1.2, 3.5);
    const Vec2 target =
        point_at_arclength(sv.route_pts, sv.route_s, s_self + lookahead);
    const double alpha =
        wrap_angle(std::atan2(target.y - pos.y, target.x - pos.x) -
                   sv.state.psi);
    const double curvature = 2.0 * std::sin(alpha) / lookahead;
    const double sin_delta =
        std::clamp(curvature * cfg_.vehicle.wheelbase / 2.0, -0.95, 0.95);
    double delta = std::clamp(std::asin(sin_delta), -cfg_.vehicle.delta_max,
                              cfg_.vehicle.delta_max);

    // Longitudinal: free-road IDM capped by the curve speed ahead, the
    // nearest leader, any yield point, and a stop at the route end.
    double v_des = cfg_.sv.desired_speed;
    for (double ahead = 0.0; ahead <= 10.0; ahead += 2.5) {
      const double k = route_curvature(sv.route_pts, sv.route_s,
                                       s_self + ahead);
      if (k > 1e-4) {
        const double v_curve = std::sqrt(cfg_.sv.lat_accel_comfort / k);
        const double v_allow = std::sqrt(
            v_curve * v_curve + 2.0 * cfg_.sv.idm_decel * ahead);
        v_des = std::min(v_des, v_allow);
      }
    }
    double accel = idm_accel(sv.state.v, v_des);
    double lead_gap, lead_dv;
    if (find_leader(index, s_self, lead_gap, lead_dv))
      accel = std::min(accel, idm_follow(sv.state.v, lead_gap, lead_dv));

    sv.yielding = false;
    double s_conf;
    if (should_yield(index, s_self, s_conf)) {
      sv.yielding = true;
      const double stop_gap =
          std::max(s_conf - cfg_.sv.conflict_margin - s_self, 0.05);
      accel = std::min(accel, idm_follow(sv.state.v, stop_gap, sv.state.v));
    }
    const double end_gap = std::max(route_len - 0.5 - s_self, 0.05);
    accel = std::min(accel, idm_follow(sv.state.v, end_gap, sv.state.v));

    return ControlInput{
        std::clamp(accel, cfg_.vehicle.a_min, cfg_.vehicle.a_max), delta};
  }

  int window_cursor() const { return window_cursor_; }
  const std::vector<ConflictPoint>& sv_conflicts(int i) const {
    return conflicts_[i];
  }

 private:
  bool try_spawn(Rng& rng) {
    // EV on the lower arm.
    const int ev_lane = rng.uniform_int(map_.lanes());
    const double ev_offset =
        rng.uniform(cfg_.spawn.ev_offset_min, cfg_.spawn.ev_offset_max);
    const double ev_speed =
        rng.uniform(cfg_.spawn.ev_speed_min, cfg_.spawn.ev_speed_max);
    route_ = map_.route(Region::lower, ev_lane, task_, ev_offset,
                        cfg_.spawn.goal_offset);
    if (route_.size() < 2) return false;
    goal_ = route_.back();
    const Waypoint& start = route_.front();
    ev_ = VehicleState{start.x, start.y, ev_speed, start.psi};
    route_pts_.clear();
    for (const Waypoint& w : route_) route_pts_.push_back({w.x, w.y});
    route_cum_ = cumulative_lengths(route_pts_);

    // SVs on the other arms.
    static constexpr Region kSvRegions[3] = {Region::upper, Region::left,
                                             Region::right};
    svs_.clear();
    for (int i = 0; i < n_sv_; ++i) {
      SvAgent sv;
      sv.spawn_index = i;
      sv.origin = kSvRegions[rng.uniform_int(3)];
      sv.style = static_cast<Style>(rng.uniform_int(3));
      sv.intent = static_cast<Task>(rng.uniform_int(3));
      const int lane = rng.uniform_int(map_.lanes());
      const double speed =
          rng.uniform(cfg_.spawn.sv_speed_min, cfg_.spawn.sv_speed_max);
      bool placed = false;
      for (int retry = 0; retry < 100; ++retry) {
        const double offset =
            rng.uniform(cfg_.spawn.sv_offset_min, cfg_.spawn.sv_offset_max);
        sv.route = map_.route(sv.origin, lane, sv.intent, offset,
                              map_.arm_length() - 2.0);
        const Waypoint& s0 = sv.route.front();
        sv.state = VehicleState{s0.x, s0.y, speed, s0.psi};
        if (!overlaps_existing(sv.state)) {
          placed = true;
          break;
        }
      }
      if (!placed) return false;  // re-roll the whole spawn set
      sv.route_pts.clear();
      for (const Waypoint& w : sv.route) sv.route_pts.push_back({w.x, w.y});
      sv.route_s = cumulative_lengths(sv.route_pts);
      svs_.push_back(std::move(sv));
    }
    return true;
  }

  bool overlaps_existing(const VehicleState& s) const {
    const OrientedBox box{{s.x, s.y}, s.psi, cfg_.body_length + 1.0,
                          cfg_.body_width + 0.5};
    const OrientedBox evb{{ev_.x, ev_.y}, ev_.psi, cfg_.body_length + 1.0,
                          cfg_.body_width + 0.5};
    if (boxes_overlap(box, evb)) return true;
    for (const SvAgent& other : svs_) {
      const OrientedBox ob{{other.state.x, other.state.y}, other.state.psi,
                           cfg_.body_length + 1.0, cfg_.body_width + 0.5};
      if (boxes_overlap(box, ob)) return true;
    }
    return false;
  }

  void build_conflicts() {
    conflicts_.assign(n_sv_, {});
    for (int i = 0; i < n_sv_; ++i) {
      for (auto& c : map_.route_conflicts(svs_[i].route_pts, svs_[i].route_s,
                                          route_pts_, route_cum_))
        conflicts_[i].push_back({c.s_a, c.s_b, -1});
      for (int j = 0; j < n_sv_; ++j) {
        if (j == i) continue;
        for (auto& c :
             map_.route_conflicts(svs_[i].route_pts, svs_[i].route_s,
                                  svs_[j].route_pts, svs_[j].route_s))
          conflicts_[i].push_back({c.s_a, c.s_b, j});
      }
      std::sort(conflicts_[i].begin(), conflicts_[i].end(),
                [](const ConflictPoint& a, const ConflictPoint& b) {
                  return a.s_self < b.s_self;
                });
    }
  }

  void advance_cursor() {
    const int last = static_cast<int>(route_.size()) - 1;
    const double cx = std::cos(ev_.psi), sy = std::sin(ev_.psi);
    while (window_cursor_ < last) {
      const Waypoint& w = route_[window_cursor_];
      const double proj = cx * (w.x - ev_.x) + sy * (w.y - ev_.y);
      if (proj < -1e-9)
        ++window_cursor_;
      else
        break;
    }
  }

  double idm_accel(double v, double v0) const {
    const double ratio = v / std::max(v0, 0.1);
    return cfg_.sv.idm_accel * (1.0 - std::pow(ratio, 4));
  }

  double idm_follow(double v, double gap, double dv) const {
    const double g = std::max(gap, 0.05);
    const double s_star =
        cfg_.sv.idm_min_gap + v * cfg_.sv.idm_time_headway +
        v * dv / (2.0 * std::sqrt(cfg_.sv.idm_accel * cfg_.sv.idm_decel));
    const double ratio = v / std::max(cfg_.sv.desired_speed, 0.1);
    return cfg_.sv.idm_accel *
           (1.0 - std::pow(ratio, 4) - std::pow(std::max(s_star, 0.0) / g, 2));
  }

  // Nearest vehicle ahead of `index` along its own route.
  bool find_leader(int index, double s_self, double& gap, double& dv) const {
    const SvAgent& me = svs_[index];
    bool found = false;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](const VehicleState& o) {
      const auto p =
          project_onto_polyline({o.x, o.y}, me.route_pts, me.route_s);
      if (p.lateral > 2.0) return;
      const double ds = p.s - s_self;
      if (ds <= 0.5 || ds > 40.0) return;
      if (ds < best) {
        best = ds;
        gap = ds - cfg_.body_length;
        dv = me.state.v - o.v;
        found = true;
      }
    };
    consider(ev_);
    for (const SvAgent& other : svs_)
      if (other.spawn_index != index) consider(other.state);
    return found;
  }

  // Style-gated yield decision at the nearest upcoming conflict point.
  bool should_yield(int index, double s_self, double& s_conf_out) const {
    const SvAgent& me = svs_[index];
    const double thr = style_threshold(me.style);
    for (const ConflictPoint& c : conflicts_[index]) {
      if (c.s_self <= s_self) continue;  // already passed
      const double dist = c.s_self - s_self;
      if (dist > cfg_.sv.conflict_horizon) break;

      // Other vehicle's progress toward the same point.
      double s_o, v_o;
      int other_id;
      if (c.other < 0) {
        const auto p =
            project_onto_polyline({ev_.x, ev_.y}, route_pts_, route_cum_);
        s_o = p.s;
        v_o = ev_.v;
        other_id = -1;
      } else {
        const SvAgent& o = svs_[c.other];
        const auto p = project_onto_polyline({o.state.x, o.state.y},
                                             o.route_pts, o.route_s);
        s_o = p.s;
        v_o = o.state.v;
        other_id = c.other;
      }
      if (s_o > c.s_other + cfg_.body_length) continue;  // other has passed

      const double t_self = dist / std::max(me.state.v, 1.0);
      const double t_other =
          std::max(c.s_other - s_o, 0.0) / std::max(v_o, 1.0);
      const double lead = t_other - t_self;  // > 0: I arrive first

      if (lead > cfg_.sv.lead_margin) continue;      // clearly first
      if (lead < -thr) continue;                     // other long gone by then
      if (std::abs(lead) <= cfg_.sv.lead_margin && index < other_id)
        continue;                                    // tie-break by priority
      s_conf_out = c.s_self;
      return true;
    }
    return false;
  }

  double style_threshold(Style s) const {
    switch (s) {
      case Style::aggressive: return cfg_.sv.gap_aggressive;
      case Style::moderate: return cfg_.sv.gap_moderate;
      case Style::conservative: return cfg_.sv.gap_conservative;
    }
    return cfg_.sv.gap_moderate;
  }

  bool ev_hits_sv() const {
    const OrientedBox evb{{ev_.x, ev_.y}, ev_.psi, cfg_.body_length,
                          cfg_.body_width};
    for (int i = 0; i < n_sv_; ++i) {
      const VehicleState& s = svs_[i].state;
      const OrientedBox ob{{s.x, s.y}, s.psi, cfg_.body_length,
                           cfg_.body_width};
      if (boxes_overlap(evb, ob)) return true;
    }
    return false;
  }

  bool at_goal() const {
    return goal_distance() <= cfg_.success_pos_tol &&
           std::abs(wrap_angle(ev_.psi - goal_.psi)) <= cfg_.success_psi_tol;
  }

  double step_reward(const StepEvents& ev) {
    const RewardConfig& rc = cfg_.reward;
    double r = rc.r_live;
    r += rc.r_lane_change * pending_lane_change_penalties_;
    pending_lane_change_penalties_ = 0;
    if (!ev.terminal()) return r;

    if (ev.kind == EventKind::success) {
      r += rc.alpha1 * n_sv_ + rc.alpha2 * potential_collision_points();
      return r;
    }
    // Failure consolation scales with the final distance to goal.
    const double d = std::max(goal_distance(), rc.eps_d);
    r += std::min(rc.r_f_max, rc.alpha3 / d);
    if (ev.vehicle_collision) r += rc.alpha4 * n_sv_ * ev_.v;
    if (ev.off_road) r += rc.r_offroad;
    if (ev.kind == EventKind::timeout) r += rc.r_timeout;
    return r;
  }

  EnvConfig cfg_;
  RoadMap map_;
  Task task_ = Task::go_straight;
  int n_sv_ = 0;
  VehicleState ev_;
  std::vector<Waypoint> route_;
  std::vector<Vec2> route_pts_;
  std::vector<double> route_cum_;
  Waypoint goal_;
  std::vector<SvAgent> svs_;
  std::vector<std::vector<ConflictPoint>> conflicts_;
  int window_cursor_ = 0;
  int step_count_ = 0;
  double total_reward_ = 0.0;
  StepEvents terminal_;
  int prev_lane_change_ = 0;
  int pending_lane_change_penalties_ = 0;
};

}  // namespace crossway
