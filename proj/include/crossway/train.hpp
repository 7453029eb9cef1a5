#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossway/bandit.hpp"
#include "crossway/config.hpp"
#include "crossway/env.hpp"
#include "crossway/mpc.hpp"
#include "crossway/nn.hpp"
#include "crossway/ppo.hpp"
#include "crossway/trace.hpp"

namespace crossway {

// Roll one episode: observe -> act -> decode -> MPC -> world step, recording
// the trajectory for the learner. The world must be freshly reset.
inline Trajectory rollout_episode(World& world, const PolicyParameters& live,
                                  MpcTracker& tracker, Rng& act_rng,
                                  ActMode mode) {
  Trajectory traj;
  tracker.reset();
  double prev_total = world.total_reward();
  while (!world.done()) {
    StepRecord rec;
    rec.observation = world.observe();
    ActResult a = act(live, rec.observation, act_rng, mode);
    rec.action = a.action;
    rec.log_prob = a.log_prob;
    rec.value = a.value;
    auto decoded = world.decode_action(a.action);
    auto [control, sol] = tracker.step(world.ev_state(), decoded.reference);
    StepEvents events = world.step(control);
    rec.reward = world.total_reward() - prev_total;
    prev_total = world.total_reward();
    rec.terminal = events.terminal();
    traj.steps.push_back(std::move(rec));
  }
  return traj;
}

struct TrainResult {
  long episodes = 0;
  std::string checkpoint_path;
  std::string trace_path;
  std::string snapshot_path;
};

// The full curriculum-scheduled training loop: sample a curriculum, roll an
// episode with the live policy, feed the terminal reward to the bandit,
// train the temporary policy every sync window, and synchronize both the
// policy and the bandit on their own schedules.
inline TrainResult train(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  const SchedulerKind kind = scheduler_kind_from_string(cfg.scheduler);
  const EnvConfig env_cfg = cfg.env_resolved();
  const MpcConfig mpc_cfg = cfg.mpc_resolved();

  Rng bandit_rng(mix_seed(cfg.seed, 1));
  Rng env_rng(mix_seed(cfg.seed, 2));
  Rng act_rng(mix_seed(cfg.seed, 3));
  Rng ppo_rng(mix_seed(cfg.seed, 4));
  Rng init_rng(mix_seed(cfg.seed, 5));

  PolicyParameters live = PolicyParameters::init(
      cfg.observation_dim(), cfg.ppo.hidden1, cfg.ppo.hidden2, init_rng);
  PolicyParameters temp = live;
  Adam actor_opt(cfg.ppo.actor_lr), critic_opt(cfg.ppo.critic_lr);

  BilevelBandit bandit(cfg.bandit);

  TrainResult result;
  result.trace_path = (fs::path(cfg.out_dir) / "traces.jsonl").string();
  result.snapshot_path =
      (fs::path(cfg.out_dir) / "snapshots.jsonl").string();
  result.checkpoint_path =
      (fs::path(cfg.out_dir) / "checkpoint.bin").string();

  JsonlWriter trace(result.trace_path);
  JsonlWriter snapshots(result.snapshot_path);
  std::ofstream timings((fs::path(cfg.out_dir) / "timings.jsonl").string(),
                        std::ios::trunc);
  {
    std::ofstream cfg_out((fs::path(cfg.out_dir) / "config.json").string(),
                          std::ios::trunc);
    cfg_out << dump_config(cfg);
  }
  save_checkpoint(live, result.checkpoint_path);

  World world(env_cfg);
  MpcTracker tracker(mpc_cfg);
  std::vector<Trajectory> batch;
  batch.reserve(cfg.ppo.sync_interval);

  for (long t = 1; t <= cfg.episodes; ++t) {
    const auto wall_start = std::chrono::steady_clock::now();

    SampledCurriculum sampled;
    if (kind == SchedulerKind::bimab) {
      sampled = bandit.sample(bandit_rng);
    } else {
      sampled.index = baseline_scheduler(
          kind, t - 1, cfg.bandit.n_clusters, cfg.bandit.n_arms,
          cfg.manual_stage_length_resolved(), bandit_rng);
    }

    world.reset(sampled.index, env_rng);
    Trajectory traj =
        rollout_episode(world, live, tracker, act_rng, ActMode::sample);
    const EpisodeOutcome outcome = world.outcome();
    const double raw = outcome.total_reward;

    EpisodeRecord rec;
    rec.t = t;
    rec.cluster = sampled.index.cluster;
    rec.arm = sampled.index.arm;
    rec.raw_reward = raw;
    rec.outcome = outcome.terminal_kind;
    rec.steps = outcome.steps;

    if (kind == SchedulerKind::bimab) {
      RescaledReward r = bandit.record_reward(sampled, raw);
      rec.r_norm = r.r_norm;
      rec.r_hat_cluster = r.r_hat_cluster;
      rec.r_hat_arm = r.r_hat_arm;
      if (bandit.at_sync_boundary()) {
        WeightSnapshot snap;
        snap.t = t;
        snap.cluster_weights = bandit.state().live_cluster_weights;
        snap.arm_weights = bandit.state().live_arm_weights;
        snapshots.write(snap.to_json());
      }
    }
    trace.write(rec.to_json());

    batch.push_back(std::move(traj));
    if (t % cfg.ppo.sync_interval == 0) {
      ppo_update(temp, batch, cfg.ppo, actor_opt, critic_opt, ppo_rng);
      sync_policy(live, temp);
      batch.clear();
    }

    if (t % cfg.checkpoint_interval == 0) {
      save_checkpoint(
          live,
          (fs::path(cfg.out_dir) / ("checkpoint_ep" + std::to_string(t) +
                                    ".bin")).string());
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - wall_start)
            .count();
    timings << nlohmann::json{{"t", t}, {"wall_ms", wall_ms}}.dump() << '\n';
    result.episodes = t;
  }

  save_checkpoint(live, result.checkpoint_path);
  return result;
}

}  // namespace crossway
