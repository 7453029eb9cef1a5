#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "crossway/bandit.hpp"
#include "crossway/config.hpp"
#include "crossway/trace.hpp"

namespace crossway {

// Synthetic learner standing in for the RL agent so bandit scheduling can
// be studied in seconds. Success probability on a curriculum ramps with the
// episodes spent there plus discounted credit from easier curricula; harder
// cells ramp slower and pay proportionally larger success rewards.
class SyntheticLearner {
 public:
  SyntheticLearner(const BanditSimConfig& cfg, int n_clusters, int n_arms)
      : cfg_(cfg),
        n_clusters_(n_clusters),
        n_arms_(n_arms),
        counts_(n_clusters * n_arms, 0) {}

  // Hardness rank: right turn 0, go straight 1, left turn 2.
  static int hardness(int arm) { return 2 - arm; }

  double success_probability(const CurriculumIndex& idx) const {
    const double n_eff = effective_experience(idx);
    const double tau =
        cfg_.tau0 * (1.0 + cfg_.tau_cluster_gain * idx.cluster) *
        (1.0 + cfg_.tau_task_gain * hardness(idx.arm));
    return 1.0 - (1.0 - cfg_.p0) * std::exp(-n_eff / tau);
  }

  // One synthetic episode: Bernoulli success and the corresponding raw
  // reward. Success pays (1 + cluster) * task value; failure pays a flat
  // penalty so early training looks uniform to the bandit.
  struct Episode {
    bool success = false;
    double raw_reward = 0.0;
  };

  Episode play(const CurriculumIndex& idx, Rng& rng) {
    Episode e;
    e.success = rng.bernoulli(success_probability(idx));
    const double task_value =
        cfg_.success_base + cfg_.task_value_step * hardness(idx.arm);
    e.raw_reward = e.success ? (1.0 + idx.cluster) * task_value
                             : cfg_.fail_reward;
    counts_[idx.cluster * n_arms_ + idx.arm]++;
    return e;
  }

  long count(int cluster, int arm) const {
    return counts_[cluster * n_arms_ + arm];
  }

 private:
  double effective_experience(const CurriculumIndex& idx) const {
    const int h = hardness(idx.arm);
    double n_eff = 0.0;
    for (int i = 0; i <= idx.cluster; ++i) {
      for (int a = 0; a < n_arms_; ++a) {
        const int ha = hardness(a);
        if (ha > h) continue;
        const int dist = (idx.cluster - i) + (h - ha);
        n_eff += std::pow(cfg_.credit_decay, dist) *
                 counts_[i * n_arms_ + a];
      }
    }
    return n_eff;
  }

  BanditSimConfig cfg_;
  int n_clusters_;
  int n_arms_;
  std::vector<long> counts_;
};

struct BanditSimResult {
  std::vector<long> sampled_counts;  // cluster-major [cluster * n_arms + arm]
  long episodes = 0;
};

// Run the bandit against the synthetic learner, emitting the same trace and
// snapshot streams as real training.
inline BanditSimResult bandit_sim(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  BilevelBandit bandit(cfg.bandit);
  SyntheticLearner learner(cfg.bandit_sim, cfg.bandit.n_clusters,
                           cfg.bandit.n_arms);
  Rng bandit_rng(mix_seed(cfg.seed, 1));
  Rng learner_rng(mix_seed(cfg.seed, 11));

  JsonlWriter trace((fs::path(cfg.out_dir) / "traces.jsonl").string());
  JsonlWriter snapshots(
      (fs::path(cfg.out_dir) / "snapshots.jsonl").string());
  {
    std::ofstream cfg_out((fs::path(cfg.out_dir) / "config.json").string(),
                          std::ios::trunc);
    cfg_out << dump_config(cfg);
  }

  BanditSimResult result;
  result.sampled_counts.assign(cfg.bandit.n_clusters * cfg.bandit.n_arms, 0);

  for (long t = 1; t <= cfg.episodes; ++t) {
    SampledCurriculum sampled = bandit.sample(bandit_rng);
    auto episode = learner.play(sampled.index, learner_rng);
    RescaledReward r = bandit.record_reward(sampled, episode.raw_reward);
    result.sampled_counts[sampled.index.cluster * cfg.bandit.n_arms +
                          sampled.index.arm]++;

    EpisodeRecord rec;
    rec.t = t;
    rec.cluster = sampled.index.cluster;
    rec.arm = sampled.index.arm;
    rec.raw_reward = episode.raw_reward;
    rec.r_norm = r.r_norm;
    rec.r_hat_cluster = r.r_hat_cluster;
    rec.r_hat_arm = r.r_hat_arm;
    rec.outcome = episode.success ? EventKind::success : EventKind::collision;
    rec.steps = 1;
    trace.write(rec.to_json());

    if (bandit.at_sync_boundary()) {
      WeightSnapshot snap;
      snap.t = t;
      snap.cluster_weights = bandit.state().live_cluster_weights;
      snap.arm_weights = bandit.state().live_arm_weights;
      snapshots.write(snap.to_json());
    }
    result.episodes = t;
  }
  return result;
}

}  // namespace crossway
