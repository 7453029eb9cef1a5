#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "crossway/vehicle.hpp"

namespace crossway {

// Pose-and-speed target the controller tracks in place of the final goal.
struct IntermediateReference {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
};

struct MpcConfig {
  int horizon = 10;
  double dt = 0.1;
  std::array<double, 4> q_x{100.0, 100.0, 100.0, 20.0};  // x, y, v, psi
  std::array<double, 2> q_u{10.0, 10.0};                 // a, delta
  std::array<double, 2> q_du{1.0, 1.0};
  int max_iterations = 100;
  double improvement_tol = 1e-6;
  VehicleParams vehicle;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    for (double q : q_x)
      if (q < 0.0) throw std::invalid_argument("state weights must be >= 0");
    for (double q : q_u)
      if (q < 0.0) throw std::invalid_argument("control weights must be >= 0");
    for (double q : q_du)
      if (q < 0.0) throw std::invalid_argument("rate weights must be >= 0");
    if (improvement_tol <= 0.0)
      throw std::invalid_argument("improvement_tol must be positive");
    vehicle.validate();
  }
};

struct MpcSolution {
  std::vector<ControlInput> controls;
  std::vector<VehicleState> predicted_states;  // states after each control
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double quad_state_error(const VehicleState& s,
                               const IntermediateReference& ref,
                               const std::array<double, 4>& q) {
  const double ex = s.x - ref.x;
  const double ey = s.y - ref.y;
  const double ev = s.v - ref.v;
  const double ep = wrap_angle(s.psi - ref.psi);
  return q[0] * ex * ex + q[1] * ey * ey + q[2] * ev * ev + q[3] * ep * ep;
}

}  // namespace detail

// Single-shooting rollout cost: terminal and running tracking terms plus
// control effort and control rate, with du_0 = u_0 - u_prev. Heading errors
// use the wrapped difference. Returns the cost and the predicted states.
inline std::pair<double, std::vector<VehicleState>> evaluate_cost(
    const std::vector<ControlInput>& controls, const VehicleState& x0,
    const IntermediateReference& ref, const MpcConfig& cfg,
    const ControlInput& u_prev = {}) {
  const int n = cfg.horizon;
  if (static_cast<int>(controls.size()) != n)
    throw std::invalid_argument("control sequence length != horizon");
  std::vector<VehicleState> states;
  states.reserve(n);
  double cost = detail::quad_state_error(x0, ref, cfg.q_x);
  VehicleState s = x0;
  ControlInput prev = u_prev;
  for (int k = 0; k < n; ++k) {
    const ControlInput& u = controls[k];
    cost += cfg.q_u[0] * u.a * u.a + cfg.q_u[1] * u.delta * u.delta;
    const double da = u.a - prev.a;
    const double dd = u.delta - prev.delta;
    cost += cfg.q_du[0] * da * da + cfg.q_du[1] * dd * dd;
    prev = u;
    s = step(s, u, cfg.vehicle, cfg.dt);
    states.push_back(s);
    cost += detail::quad_state_error(s, ref, cfg.q_x);
  }
  return {cost, std::move(states)};
}

namespace detail {

// Gradient of evaluate_cost w.r.t. the stacked controls (a0, d0, a1, d1, ...)
// by reverse accumulation through the Euler rollout. The speed clamp inside
// step() zeroes the corresponding sensitivities when active.
inline std::vector<double> cost_gradient(const std::vector<ControlInput>& u,
                                         const VehicleState& x0,
                                         const IntermediateReference& ref,
                                         const MpcConfig& cfg,
                                         const ControlInput& u_prev) {
  const int n = cfg.horizon;
  const double dt = cfg.dt;
  const VehicleParams& p = cfg.vehicle;

  std::vector<VehicleState> xs(n + 1);
  std::vector<bool> v_clamped(n, false);
  xs[0] = x0;
  for (int k = 0; k < n; ++k) {
    const double v_unclamped = xs[k].v + u[k].a * dt;
    xs[k + 1] = step(xs[k], u[k], p, dt);
    v_clamped[k] = v_unclamped < p.v_min || v_unclamped > p.v_max;
  }

  std::vector<double> grad(2 * n, 0.0);

  // Control effort and rate terms.
  for (int k = 0; k < n; ++k) {
    grad[2 * k] += 2.0 * cfg.q_u[0] * u[k].a;
    grad[2 * k + 1] += 2.0 * cfg.q_u[1] * u[k].delta;
    const double pa = k == 0 ? u_prev.a : u[k - 1].a;
    const double pd = k == 0 ? u_prev.delta : u[k - 1].delta;
    grad[2 * k] += 2.0 * cfg.q_du[0] * (u[k].a - pa);
    grad[2 * k + 1] += 2.0 * cfg.q_du[1] * (u[k].delta - pd);
    if (k + 1 < n) {
      grad[2 * k] -= 2.0 * cfg.q_du[0] * (u[k + 1].a - u[k].a);
      grad[2 * k + 1] -= 2.0 * cfg.q_du[1] * (u[k + 1].delta - u[k].delta);
    }
  }

  // Adjoint sweep over the tracking terms.
  auto tracking_grad = [&](const VehicleState& s, std::array<double, 4>& g) {
    g[0] = 2.0 * cfg.q_x[0] * (s.x - ref.x);
    g[1] = 2.0 * cfg.q_x[1] * (s.y - ref.y);
    g[2] = 2.0 * cfg.q_x[2] * (s.v - ref.v);
    g[3] = 2.0 * cfg.q_x[3] * wrap_angle(s.psi - ref.psi);
  };

  std::array<double, 4> lambda;
  tracking_grad(xs[n], lambda);
  for (int k = n - 1; k >= 0; --k) {
    const VehicleState& s = xs[k];
    const double a = u[k].a, d = u[k].delta;
    const double cpd = std::cos(s.psi + d), spd = std::sin(s.psi + d);
    const double dva = v_clamped[k] ? 0.0 : dt;  // dv'/da
    const double dvv = v_clamped[k] ? 0.0 : 1.0;  // dv'/dv

    // d(next)/du
    grad[2 * k] += lambda[2] * dva;
    grad[2 * k + 1] += lambda[0] * (-s.v * spd * dt) +
                       lambda[1] * (s.v * cpd * dt) +
                       lambda[3] * (2.0 * s.v / p.wheelbase) * std::cos(d) * dt;

    // lambda_k = lambda_{k+1}^T d(next)/dx + d(running tracking)/dx
    std::array<double, 4> lk;
    lk[0] = lambda[0];
    lk[1] = lambda[1];
    lk[2] = lambda[0] * cpd * dt + lambda[1] * spd * dt + lambda[2] * dvv +
            lambda[3] * (2.0 / p.wheelbase) * std::sin(d) * dt;
    lk[3] = lambda[0] * (-s.v * spd * dt) + lambda[1] * (s.v * cpd * dt) +
            lambda[3];

    std::array<double, 4> run;
    tracking_grad(s, run);
    for (int i = 0; i < 4; ++i) lk[i] += run[i];
    lambda = lk;
  }
  return grad;
}

inline void project(std::vector<ControlInput>& u, const VehicleParams& p) {
  for (ControlInput& c : u) c = clamp_control(c, p);
}

}  // namespace detail

// Projected-gradient solve with backtracking line search. The incumbent is
// initialized from the better of the zero sequence and the (projected) warm
// start, so the returned cost never exceeds either. Controls satisfy the box
// bounds by construction.
inline MpcSolution solve(const VehicleState& x0,
                         const IntermediateReference& ref,
                         const std::optional<MpcSolution>& warm_start,
                         const MpcConfig& cfg, const ControlInput& u_prev = {}) {
  const int n = cfg.horizon;
  std::vector<ControlInput> u(n);
  double cost;
  std::vector<VehicleState> states;
  std::tie(cost, states) = evaluate_cost(u, x0, ref, cfg, u_prev);
  if (warm_start && static_cast<int>(warm_start->controls.size()) == n) {
    std::vector<ControlInput> w = warm_start->controls;
    detail::project(w, cfg.vehicle);
    auto [wc, ws] = evaluate_cost(w, x0, ref, cfg, u_prev);
    if (wc < cost) {
      u = std::move(w);
      cost = wc;
      states = std::move(ws);
    }
  }
  if (!std::isfinite(cost))
    throw std::runtime_error("MPC: non-finite cost at initialization");

  MpcSolution sol;
  double step_size = 1e-2;
  int iter = 0;
  bool converged = false;
  for (; iter < cfg.max_iterations; ++iter) {
    std::vector<double> g = detail::cost_gradient(u, x0, ref, cfg, u_prev);
    double gnorm2 = 0.0;
    for (double gi : g) gnorm2 += gi * gi;
    if (gnorm2 < 1e-18) {
      converged = true;
      break;
    }

    // Backtracking on the projected step.
    double alpha = step_size * 4.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      std::vector<ControlInput> trial(n);
      for (int k = 0; k < n; ++k) {
        trial[k].a = u[k].a - alpha * g[2 * k];
        trial[k].delta = u[k].delta - alpha * g[2 * k + 1];
      }
      detail::project(trial, cfg.vehicle);
      auto [tc, ts] = evaluate_cost(trial, x0, ref, cfg, u_prev);
      if (!std::isfinite(tc))
        throw std::runtime_error("MPC: non-finite cost during line search");
      if (tc < cost) {
        const double improvement = cost - tc;
        u = std::move(trial);
        states = std::move(ts);
        cost = tc;
        step_size = alpha;
        improved = true;
        if (improvement < cfg.improvement_tol) converged = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) {
      converged = true;
      break;
    }
    if (converged) {
      ++iter;
      break;
    }
  }

  sol.controls = std::move(u);
  sol.predicted_states = std::move(states);
  sol.cost = cost;
  sol.iterations = iter;
  sol.converged = converged;
  return sol;
}

// Receding-horizon wrapper: solves, applies the first control, and keeps the
// shifted solution (drop first, repeat last) as the next warm start.
class MpcTracker {
 public:
  explicit MpcTracker(const MpcConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  std::pair<ControlInput, MpcSolution> step(const VehicleState& x,
                                            const IntermediateReference& ref) {
    std::optional<MpcSolution> warm;
    if (has_last_ && !last_.controls.empty()) {
      MpcSolution shifted = last_;
      const ControlInput tail = shifted.controls.back();
      shifted.controls.erase(shifted.controls.begin());
      shifted.controls.push_back(tail);
      warm = std::move(shifted);
    }
    MpcSolution sol = solve(x, ref, warm, cfg_, u_prev_);
    u_prev_ = sol.controls.front();
    last_ = sol;
    has_last_ = true;
    return {u_prev_, std::move(sol)};
  }

  void reset() {
    has_last_ = false;
    u_prev_ = {};
  }

  const MpcConfig& config() const { return cfg_; }

 private:
  MpcConfig cfg_;
  MpcSolution last_;
  ControlInput u_prev_{};
  bool has_last_ = false;
};

}  // namespace crossway
