#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "crossway/bandit.hpp"
#include "crossway/env.hpp"
#include "crossway/mpc.hpp"
#include "crossway/ppo.hpp"

namespace crossway {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthetic-learner parameters for the bandit testbed. Task hardness rank
// is right < straight < left; tau grows with cluster index and hardness.
struct BanditSimConfig {
  double p0 = 0.1;              // floor success probability
  double tau0 = 120.0;          // base learning time constant [episodes]
  double tau_cluster_gain = 1.0;
  double tau_task_gain = 0.3;
  double credit_decay = 0.5;    // discounted credit from easier curricula
  double success_base = 1.0;
  double task_value_step = 0.25;
  double fail_reward = -1.0;

  void validate() const {
    if (!(p0 > 0.0 && p0 < 1.0))
      throw std::invalid_argument("bandit_sim.p0 must be in (0, 1)");
    if (tau0 <= 0.0) throw std::invalid_argument("bandit_sim.tau0 must be > 0");
    if (!(credit_decay >= 0.0 && credit_decay < 1.0))
      throw std::invalid_argument("bandit_sim.credit_decay must be in [0, 1)");
  }
};

struct RunConfig {
  std::uint64_t seed = 1;
  long episodes = 20000;
  int eval_episodes = 100;
  std::string out_dir = "out";
  std::string scheduler = "bimab";
  long manual_stage_length = 0;  // 0 -> episodes / n_clusters
  long checkpoint_interval = 5000;
  BanditConfig bandit;
  VehicleParams vehicle;
  MpcConfig mpc;
  EnvConfig env;
  PpoConfig ppo;
  BanditSimConfig bandit_sim;

  int observation_dim() const { return (env.max_sv + 1) * 4; }

  void validate() const {
    bandit.validate();
    vehicle.validate();
    MpcConfig m = mpc;
    m.vehicle = vehicle;
    m.validate();
    EnvConfig e = env;
    e.vehicle = vehicle;
    e.validate();
    ppo.validate();
    bandit_sim.validate();
    scheduler_kind_from_string(scheduler);
    if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
    if (eval_episodes < 1)
      throw std::invalid_argument("eval_episodes must be >= 1");
    if (checkpoint_interval < 1)
      throw std::invalid_argument("checkpoint_interval must be >= 1");
    if (manual_stage_length < 0)
      throw std::invalid_argument("manual_stage_length must be >= 0");
    if (env.max_sv != bandit.n_clusters - 1)
      throw std::invalid_argument(
          "env.max_sv must equal bandit.n_clusters - 1");
    if (bandit.n_arms != 3)
      throw std::invalid_argument("bandit.n_arms must be 3 (task types)");
  }

  // Resolved copies with the shared vehicle parameters attached.
  MpcConfig mpc_resolved() const {
    MpcConfig m = mpc;
    m.vehicle = vehicle;
    return m;
  }
  EnvConfig env_resolved() const {
    EnvConfig e = env;
    e.vehicle = vehicle;
    return e;
  }
  long manual_stage_length_resolved() const {
    if (manual_stage_length > 0) return manual_stage_length;
    return std::max<long>(1, episodes / bandit.n_clusters);
  }
};

namespace cfgio {

// Assign-if-present readers that track which keys were consumed so unknown
// keys can be rejected with a usable path in the message.
class StrictView {
 public:
  StrictView(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("config node " + path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key " + path_ + "." + key + ": " + e.what());
    }
  }

  bool has_object(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  const json& child(const char* key) const { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key()))
        throw ConfigError("unknown config key: " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void load(const json& j, BanditConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("n_clusters", c.n_clusters);
  v.get("n_arms", c.n_arms);
  v.get("eta", c.eta);
  v.get("alpha_c", c.alpha_c);
  v.get("alpha_a", c.alpha_a);
  v.get("beta_c", c.beta_c);
  v.get("beta_a", c.beta_a);
  v.get("k0", c.k0);
  v.get("k1", c.k1);
  v.get("alpha_md", c.alpha_md);
  v.get("sync_interval", c.sync_interval);
  v.get("weight_clamp", c.weight_clamp);
  v.finish();
}

inline json dump(const BanditConfig& c) {
  return json{{"n_clusters", c.n_clusters}, {"n_arms", c.n_arms},
              {"eta", c.eta},               {"alpha_c", c.alpha_c},
              {"alpha_a", c.alpha_a},       {"beta_c", c.beta_c},
              {"beta_a", c.beta_a},         {"k0", c.k0},
              {"k1", c.k1},                 {"alpha_md", c.alpha_md},
              {"sync_interval", c.sync_interval},
              {"weight_clamp", c.weight_clamp}};
}

inline void load(const json& j, VehicleParams& c, const std::string& path) {
  StrictView v(j, path);
  v.get("wheelbase", c.wheelbase);
  v.get("a_min", c.a_min);
  v.get("a_max", c.a_max);
  v.get("delta_max", c.delta_max);
  v.get("v_min", c.v_min);
  v.get("v_max", c.v_max);
  v.finish();
}

inline json dump(const VehicleParams& c) {
  return json{{"wheelbase", c.wheelbase}, {"a_min", c.a_min},
              {"a_max", c.a_max},         {"delta_max", c.delta_max},
              {"v_min", c.v_min},         {"v_max", c.v_max}};
}

inline void load(const json& j, MpcConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("horizon", c.horizon);
  v.get("dt", c.dt);
  v.get("q_x", c.q_x);
  v.get("q_u", c.q_u);
  v.get("q_du", c.q_du);
  v.get("max_iterations", c.max_iterations);
  v.get("improvement_tol", c.improvement_tol);
  v.finish();
}

inline json dump(const MpcConfig& c) {
  return json{{"horizon", c.horizon},
              {"dt", c.dt},
              {"q_x", c.q_x},
              {"q_u", c.q_u},
              {"q_du", c.q_du},
              {"max_iterations", c.max_iterations},
              {"improvement_tol", c.improvement_tol}};
}

inline void load(const json& j, MapConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("lanes_per_direction", c.lanes_per_direction);
  v.get("lane_width", c.lane_width);
  v.get("arm_length", c.arm_length);
  v.get("waypoint_spacing", c.waypoint_spacing);
  v.finish();
}

inline json dump(const MapConfig& c) {
  return json{{"lanes_per_direction", c.lanes_per_direction},
              {"lane_width", c.lane_width},
              {"arm_length", c.arm_length},
              {"waypoint_spacing", c.waypoint_spacing}};
}

inline void load(const json& j, RewardConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("alpha1", c.alpha1);
  v.get("alpha2", c.alpha2);
  v.get("alpha3", c.alpha3);
  v.get("r_f_max", c.r_f_max);
  v.get("alpha4", c.alpha4);
  v.get("r_timeout", c.r_timeout);
  v.get("r_lane_change", c.r_lane_change);
  v.get("r_live", c.r_live);
  v.get("r_offroad", c.r_offroad);
  v.get("eps_d", c.eps_d);
  v.finish();
}

inline json dump(const RewardConfig& c) {
  return json{{"alpha1", c.alpha1},
              {"alpha2", c.alpha2},
              {"alpha3", c.alpha3},
              {"r_f_max", c.r_f_max},
              {"alpha4", c.alpha4},
              {"r_timeout", c.r_timeout},
              {"r_lane_change", c.r_lane_change},
              {"r_live", c.r_live},
              {"r_offroad", c.r_offroad},
              {"eps_d", c.eps_d}};
}

inline void load(const json& j, SvConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("desired_speed", c.desired_speed);
  v.get("idm_time_headway", c.idm_time_headway);
  v.get("idm_min_gap", c.idm_min_gap);
  v.get("idm_accel", c.idm_accel);
  v.get("idm_decel", c.idm_decel);
  v.get("gap_aggressive", c.gap_aggressive);
  v.get("gap_moderate", c.gap_moderate);
  v.get("gap_conservative", c.gap_conservative);
  v.get("conflict_margin", c.conflict_margin);
  v.get("conflict_horizon", c.conflict_horizon);
  v.get("lead_margin", c.lead_margin);
  v.get("lat_accel_comfort", c.lat_accel_comfort);
  v.finish();
}

inline json dump(const SvConfig& c) {
  return json{{"desired_speed", c.desired_speed},
              {"idm_time_headway", c.idm_time_headway},
              {"idm_min_gap", c.idm_min_gap},
              {"idm_accel", c.idm_accel},
              {"idm_decel", c.idm_decel},
              {"gap_aggressive", c.gap_aggressive},
              {"gap_moderate", c.gap_moderate},
              {"gap_conservative", c.gap_conservative},
              {"conflict_margin", c.conflict_margin},
              {"conflict_horizon", c.conflict_horizon},
              {"lead_margin", c.lead_margin},
              {"lat_accel_comfort", c.lat_accel_comfort}};
}

inline void load(const json& j, SpawnConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("ev_offset_min", c.ev_offset_min);
  v.get("ev_offset_max", c.ev_offset_max);
  v.get("ev_speed_min", c.ev_speed_min);
  v.get("ev_speed_max", c.ev_speed_max);
  v.get("sv_offset_min", c.sv_offset_min);
  v.get("sv_offset_max", c.sv_offset_max);
  v.get("sv_speed_min", c.sv_speed_min);
  v.get("sv_speed_max", c.sv_speed_max);
  v.get("goal_offset", c.goal_offset);
  v.finish();
}

inline json dump(const SpawnConfig& c) {
  return json{{"ev_offset_min", c.ev_offset_min},
              {"ev_offset_max", c.ev_offset_max},
              {"ev_speed_min", c.ev_speed_min},
              {"ev_speed_max", c.ev_speed_max},
              {"sv_offset_min", c.sv_offset_min},
              {"sv_offset_max", c.sv_offset_max},
              {"sv_speed_min", c.sv_speed_min},
              {"sv_speed_max", c.sv_speed_max},
              {"goal_offset", c.goal_offset}};
}

inline void load(const json& j, EnvConfig& c, const std::string& path) {
  StrictView v(j, path);
  if (v.has_object("map")) load(v.child("map"), c.map, path + ".map");
  if (v.has_object("reward"))
    load(v.child("reward"), c.reward, path + ".reward");
  if (v.has_object("sv")) load(v.child("sv"), c.sv, path + ".sv");
  if (v.has_object("spawn"))
    load(v.child("spawn"), c.spawn, path + ".spawn");
  v.get("dt", c.dt);
  v.get("max_steps", c.max_steps);
  v.get("max_sv", c.max_sv);
  v.get("body_length", c.body_length);
  v.get("body_width", c.body_width);
  v.get("obs_clip", c.obs_clip);
  v.get("success_pos_tol", c.success_pos_tol);
  v.get("success_psi_tol", c.success_psi_tol);
  v.finish();
}

inline json dump(const EnvConfig& c) {
  return json{{"map", dump(c.map)},
              {"reward", dump(c.reward)},
              {"sv", dump(c.sv)},
              {"spawn", dump(c.spawn)},
              {"dt", c.dt},
              {"max_steps", c.max_steps},
              {"max_sv", c.max_sv},
              {"body_length", c.body_length},
              {"body_width", c.body_width},
              {"obs_clip", c.obs_clip},
              {"success_pos_tol", c.success_pos_tol},
              {"success_psi_tol", c.success_psi_tol}};
}

inline void load(const json& j, PpoConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("clip_eps", c.clip_eps);
  v.get("gamma", c.gamma);
  v.get("gae_lambda", c.gae_lambda);
  v.get("epochs", c.epochs);
  v.get("actor_lr", c.actor_lr);
  v.get("critic_lr", c.critic_lr);
  v.get("sync_interval", c.sync_interval);
  v.get("minibatch", c.minibatch);
  v.get("entropy_coef", c.entropy_coef);
  v.get("hidden1", c.hidden1);
  v.get("hidden2", c.hidden2);
  v.finish();
}

inline json dump(const PpoConfig& c) {
  return json{{"clip_eps", c.clip_eps},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"epochs", c.epochs},
              {"actor_lr", c.actor_lr},
              {"critic_lr", c.critic_lr},
              {"sync_interval", c.sync_interval},
              {"minibatch", c.minibatch},
              {"entropy_coef", c.entropy_coef},
              {"hidden1", c.hidden1},
              {"hidden2", c.hidden2}};
}

inline void load(const json& j, BanditSimConfig& c, const std::string& path) {
  StrictView v(j, path);
  v.get("p0", c.p0);
  v.get("tau0", c.tau0);
  v.get("tau_cluster_gain", c.tau_cluster_gain);
  v.get("tau_task_gain", c.tau_task_gain);
  v.get("credit_decay", c.credit_decay);
  v.get("success_base", c.success_base);
  v.get("task_value_step", c.task_value_step);
  v.get("fail_reward", c.fail_reward);
  v.finish();
}

inline json dump(const BanditSimConfig& c) {
  return json{{"p0", c.p0},
              {"tau0", c.tau0},
              {"tau_cluster_gain", c.tau_cluster_gain},
              {"tau_task_gain", c.tau_task_gain},
              {"credit_decay", c.credit_decay},
              {"success_base", c.success_base},
              {"task_value_step", c.task_value_step},
              {"fail_reward", c.fail_reward}};
}

}  // namespace cfgio

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  cfgio::StrictView v(j, "$");
  v.get("seed", c.seed);
  v.get("episodes", c.episodes);
  v.get("eval_episodes", c.eval_episodes);
  v.get("out_dir", c.out_dir);
  v.get("scheduler", c.scheduler);
  v.get("manual_stage_length", c.manual_stage_length);
  v.get("checkpoint_interval", c.checkpoint_interval);
  if (v.has_object("bandit"))
    cfgio::load(v.child("bandit"), c.bandit, "$.bandit");
  if (v.has_object("vehicle"))
    cfgio::load(v.child("vehicle"), c.vehicle, "$.vehicle");
  if (v.has_object("mpc")) cfgio::load(v.child("mpc"), c.mpc, "$.mpc");
  if (v.has_object("env")) cfgio::load(v.child("env"), c.env, "$.env");
  if (v.has_object("ppo")) cfgio::load(v.child("ppo"), c.ppo, "$.ppo");
  if (v.has_object("bandit_sim"))
    cfgio::load(v.child("bandit_sim"), c.bandit_sim, "$.bandit_sim");
  v.finish();
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline json config_to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"episodes", c.episodes},
              {"eval_episodes", c.eval_episodes},
              {"out_dir", c.out_dir},
              {"scheduler", c.scheduler},
              {"manual_stage_length", c.manual_stage_length},
              {"checkpoint_interval", c.checkpoint_interval},
              {"bandit", cfgio::dump(c.bandit)},
              {"vehicle", cfgio::dump(c.vehicle)},
              {"mpc", cfgio::dump(c.mpc)},
              {"env", cfgio::dump(c.env)},
              {"ppo", cfgio::dump(c.ppo)},
              {"bandit_sim", cfgio::dump(c.bandit_sim)}};
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string dump_config(const RunConfig& c) {
  return config_to_json(c).dump(2) + "\n";
}

}  // namespace crossway
