#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crossway {

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

struct VehicleState {
  double x = 0.0;    // m
  double y = 0.0;    // m
  double v = 0.0;    // m/s
  double psi = 0.0;  // rad, in (-pi, pi]
};

struct ControlInput {
  double a = 0.0;      // m/s^2
  double delta = 0.0;  // rad
};

struct VehicleParams {
  double wheelbase = 2.875;  // m, Model-3 class
  double a_min = -4.0;
  double a_max = 3.0;
  double delta_max = 0.6;
  double v_min = 0.0;
  double v_max = 10.0;

  void validate() const {
    if (wheelbase <= 0.0) throw std::invalid_argument("wheelbase must be > 0");
    if (!(a_min < 0.0 && 0.0 < a_max))
      throw std::invalid_argument("need a_min < 0 < a_max");
    if (delta_max <= 0.0) throw std::invalid_argument("delta_max must be > 0");
    if (!(0.0 <= v_min && v_min < v_max))
      throw std::invalid_argument("need 0 <= v_min < v_max");
  }
};

// Kinematic bicycle rates in state-field order (xdot, ydot, vdot, psidot).
struct StateRate {
  double x_dot, y_dot, v_dot, psi_dot;
};

inline StateRate derivative(const VehicleState& s, const ControlInput& u,
                            const VehicleParams& p) {
  return StateRate{s.v * std::cos(s.psi + u.delta),
                   s.v * std::sin(s.psi + u.delta), u.a,
                   (2.0 * s.v / p.wheelbase) * std::sin(u.delta)};
}

// One explicit Euler step; speed clamped to the box, heading renormalized.
inline VehicleState step(const VehicleState& s, const ControlInput& u,
                         const VehicleParams& p, double dt) {
  StateRate f = derivative(s, u, p);
  VehicleState n;
  n.x = s.x + f.x_dot * dt;
  n.y = s.y + f.y_dot * dt;
  n.v = std::clamp(s.v + f.v_dot * dt, p.v_min, p.v_max);
  n.psi = wrap_angle(s.psi + f.psi_dot * dt);
  return n;
}

inline ControlInput clamp_control(const ControlInput& u,
                                  const VehicleParams& p) {
  return ControlInput{std::clamp(u.a, p.a_min, p.a_max),
                      std::clamp(u.delta, -p.delta_max, p.delta_max)};
}

}  // namespace crossway
