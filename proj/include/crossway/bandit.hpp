#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/rng.hpp"

namespace crossway {

// Index of one curriculum cell: cluster = number of surrounding vehicles,
// arm = ego task type (0 left-turn, 1 go-straight, 2 right-turn).
struct CurriculumIndex {
  int cluster = 0;
  int arm = 0;
  bool operator==(const CurriculumIndex&) const = default;
};

struct BanditConfig {
  int n_clusters = 4;
  int n_arms = 3;
  double eta = 0.2;        // exploration mix in (0, 1]
  double alpha_c = 0.1;    // cluster reward step
  double alpha_a = 0.1;    // arm reward step
  double beta_c = 0.001;   // cluster drift
  double beta_a = 0.001;   // arm drift
  double k0 = 1.0;         // rescaling constants
  double k1 = 1.0;
  double alpha_md = 1.0;   // negative-reward mirror factor
  int sync_interval = 1000;
  double weight_clamp = 50.0;

  void validate() const {
    if (n_clusters < 1 || n_arms < 1)
      throw std::invalid_argument("bandit needs at least one cluster and arm");
    if (!(eta > 0.0 && eta <= 1.0))
      throw std::invalid_argument("eta must be in (0, 1]");
    if (alpha_c <= 0.0 || alpha_a <= 0.0 || beta_c <= 0.0 || beta_a <= 0.0 ||
        k0 <= 0.0 || k1 <= 0.0 || alpha_md <= 0.0)
      throw std::invalid_argument("bandit scale constants must be positive");
    if (sync_interval < 1)
      throw std::invalid_argument("sync_interval must be >= 1");
    if (weight_clamp <= 0.0)
      throw std::invalid_argument("weight_clamp must be positive");
  }
};

// Running extrema of |raw reward| over the whole history.
struct RewardExtrema {
  bool initialized = false;
  double r_min = 0.0;
  double r_max = 0.0;

  void observe(double abs_raw) {
    if (!initialized) {
      initialized = true;
      r_min = r_max = abs_raw;
    } else {
      r_min = std::min(r_min, abs_raw);
      r_max = std::max(r_max, abs_raw);
    }
  }
};

struct BanditState {
  std::vector<double> live_cluster_weights;
  std::vector<std::vector<double>> live_arm_weights;
  std::vector<double> target_cluster_weights;
  std::vector<std::vector<double>> target_arm_weights;
  long episode_counter = 0;
  RewardExtrema extrema;

  static BanditState initial(const BanditConfig& cfg) {
    BanditState s;
    s.live_cluster_weights.assign(cfg.n_clusters, 1.0);
    s.live_arm_weights.assign(cfg.n_clusters,
                              std::vector<double>(cfg.n_arms, 1.0));
    s.target_cluster_weights = s.live_cluster_weights;
    s.target_arm_weights = s.live_arm_weights;
    return s;
  }
};

// Exp3.S probability mix: (1 - eta) * softmax(weights) + eta / K.
// Max-subtraction keeps the exponentials finite for weights up to ~1e6.
inline std::vector<double> cluster_probabilities(
    std::span<const double> weights, double eta) {
  if (weights.empty())
    throw std::invalid_argument("probabilities of empty weight vector");
  double max_w = weights[0];
  for (double w : weights) {
    if (!std::isfinite(w))
      throw std::domain_error("non-finite bandit weight: corrupted state");
    max_w = std::max(max_w, w);
  }
  std::vector<double> p(weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    p[i] = std::exp(weights[i] - max_w);
    sum += p[i];
  }
  const double k = static_cast<double>(weights.size());
  for (double& pi : p) pi = (1.0 - eta) * (pi / sum) + eta / k;
  return p;
}

inline std::vector<double> arm_probabilities(const BanditState& state,
                                             int cluster, double eta) {
  if (cluster < 0 ||
      cluster >= static_cast<int>(state.live_arm_weights.size()))
    throw std::out_of_range("cluster index out of range");
  return cluster_probabilities(state.live_arm_weights[cluster], eta);
}

struct SampledCurriculum {
  CurriculumIndex index;
  double p_cluster = 0.0;
  double p_arm = 0.0;
};

// Draw a cluster from the live cluster distribution, then an arm from the
// chosen cluster's live arm distribution.
inline SampledCurriculum sample_curriculum(const BanditState& state,
                                           const BanditConfig& cfg, Rng& rng) {
  auto pc = cluster_probabilities(state.live_cluster_weights, cfg.eta);
  int cluster = rng.categorical(pc);
  auto pa = arm_probabilities(state, cluster, cfg.eta);
  int arm = rng.categorical(pa);
  return SampledCurriculum{{cluster, arm}, pc[cluster], pa[arm]};
}

struct RescaledReward {
  double r_hat_cluster = 0.0;
  double r_hat_arm = 0.0;
  double r_norm = 0.0;
};

// Mirror negative rewards, normalize against the |reward| history extrema,
// clamp to [-1, 1], then importance-scale by the sampling probabilities.
// A degenerate normalizer (k1*Rmax <= k0*Rmin, e.g. the first episode)
// yields r_norm = 0: no information yet.
inline RescaledReward rescale_reward(double raw_reward, double p_cluster,
                                     double p_arm, BanditState& state,
                                     const BanditConfig& cfg) {
  if (!(p_cluster > 0.0 && p_arm > 0.0))
    throw std::invalid_argument("sampling probabilities must be positive");
  state.extrema.observe(std::abs(raw_reward));
  const double r_md =
      raw_reward >= 0.0 ? raw_reward : -cfg.alpha_md * raw_reward;
  const double denom =
      cfg.k1 * state.extrema.r_max - cfg.k0 * state.extrema.r_min;
  double r_norm = 0.0;
  if (denom > 0.0) {
    r_norm = 2.0 * (r_md - cfg.k0 * state.extrema.r_min) / denom - 1.0;
    r_norm = std::clamp(r_norm, -1.0, 1.0);
  }
  return RescaledReward{r_norm / p_cluster, r_norm / p_arm, r_norm};
}

// Apply the per-episode increment to the target weights only. The drift
// terms use the target weight sums evaluated before the increment; the
// unsampled clusters and arms receive nothing (their reward is zero).
inline void accumulate_update(BanditState& state, const CurriculumIndex& idx,
                              double r_hat_cluster, double r_hat_arm,
                              const BanditConfig& cfg) {
  if (idx.cluster < 0 || idx.cluster >= cfg.n_clusters || idx.arm < 0 ||
      idx.arm >= cfg.n_arms)
    throw std::out_of_range("curriculum index out of range");
  double w_sum_clusters = 0.0;
  for (double w : state.target_cluster_weights) w_sum_clusters += w;
  double w_sum_arms = 0.0;
  for (double w : state.target_arm_weights[idx.cluster]) w_sum_arms += w;
  state.target_cluster_weights[idx.cluster] +=
      cfg.alpha_c * r_hat_cluster + cfg.beta_c * w_sum_clusters;
  state.target_arm_weights[idx.cluster][idx.arm] +=
      cfg.alpha_a * r_hat_arm + cfg.beta_a * w_sum_arms;
}

// Copy target -> live at a sync boundary. Weights are clamped to the
// configured box first so softmax inputs stay bounded over long runs.
inline void sync_target(BanditState& state, const BanditConfig& cfg) {
  if (state.episode_counter % cfg.sync_interval != 0)
    throw std::logic_error("sync_target called off-schedule");
  auto clamp_vec = [&](std::vector<double>& v) {
    for (double& w : v) w = std::clamp(w, -cfg.weight_clamp, cfg.weight_clamp);
  };
  clamp_vec(state.target_cluster_weights);
  for (auto& row : state.target_arm_weights) clamp_vec(row);
  state.live_cluster_weights = state.target_cluster_weights;
  state.live_arm_weights = state.target_arm_weights;
}

// Convenience wrapper owning state + config and enforcing the episode
// protocol: sample -> record_reward -> (sync at interval boundaries).
class BilevelBandit {
 public:
  explicit BilevelBandit(const BanditConfig& cfg)
      : cfg_(cfg), state_(BanditState::initial(cfg)) {
    cfg_.validate();
  }

  SampledCurriculum sample(Rng& rng) const {
    return sample_curriculum(state_, cfg_, rng);
  }

  // Feeds one finished episode's raw reward back into the target bandit.
  // Returns the rescaled values for tracing. Advances the episode counter
  // and synchronizes live <- target when the counter hits the interval.
  RescaledReward record_reward(const SampledCurriculum& sampled,
                               double raw_reward) {
    RescaledReward r = rescale_reward(raw_reward, sampled.p_cluster,
                                      sampled.p_arm, state_, cfg_);
    accumulate_update(state_, sampled.index, r.r_hat_cluster, r.r_hat_arm,
                      cfg_);
    ++state_.episode_counter;
    if (state_.episode_counter % cfg_.sync_interval == 0)
      sync_target(state_, cfg_);
    return r;
  }

  bool at_sync_boundary() const {
    return state_.episode_counter % cfg_.sync_interval == 0 &&
           state_.episode_counter > 0;
  }

  const BanditState& state() const { return state_; }
  const BanditConfig& config() const { return cfg_; }

 private:
  BanditConfig cfg_;
  BanditState state_;
};

enum class SchedulerKind { bimab, fixed, random_uniform, manual_staged };

inline SchedulerKind scheduler_kind_from_string(const std::string& s) {
  if (s == "bimab") return SchedulerKind::bimab;
  if (s == "fixed") return SchedulerKind::fixed;
  if (s == "random") return SchedulerKind::random_uniform;
  if (s == "manual") return SchedulerKind::manual_staged;
  throw std::invalid_argument("unknown scheduler kind: " + s);
}

// Non-adaptive curriculum schedulers used as ablation baselines.
//   fixed:  always the hardest cluster, uniform-random arm
//   random: uniform over every (cluster, arm) cell
//   manual: cluster advances on a fixed episode schedule, uniform arm
inline CurriculumIndex baseline_scheduler(SchedulerKind kind,
                                          long episode_counter, int n_clusters,
                                          int n_arms, long stage_length,
                                          Rng& rng) {
  switch (kind) {
    case SchedulerKind::fixed:
      return {n_clusters - 1, rng.uniform_int(n_arms)};
    case SchedulerKind::random_uniform:
      return {rng.uniform_int(n_clusters), rng.uniform_int(n_arms)};
    case SchedulerKind::manual_staged: {
      if (stage_length < 1)
        throw std::invalid_argument("manual scheduler needs stage_length >= 1");
      int cluster = static_cast<int>(
          std::min<long>(episode_counter / stage_length, n_clusters - 1));
      return {cluster, rng.uniform_int(n_arms)};
    }
    case SchedulerKind::bimab:
      break;
  }
  throw std::invalid_argument("baseline_scheduler: not a baseline kind");
}

}  // namespace crossway
