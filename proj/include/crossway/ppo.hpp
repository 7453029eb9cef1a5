#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "crossway/env.hpp"
#include "crossway/nn.hpp"
#include "crossway/rng.hpp"

namespace crossway {

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 20;
  double actor_lr = 5e-4;
  double critic_lr = 1e-3;
  int sync_interval = 20;  // episodes between temporary -> live syncs
  int minibatch = 256;
  double entropy_coef = 0.01;
  int hidden1 = 256;
  int hidden2 = 128;

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
      throw std::invalid_argument("clip_eps must be in (0, 1)");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("gamma must be in (0, 1)");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
      throw std::invalid_argument("gae_lambda must be in [0, 1]");
    if (epochs < 1 || minibatch < 1 || sync_interval < 1)
      throw std::invalid_argument("epochs, minibatch and sync_interval must "
                                  "be positive");
    if (actor_lr <= 0.0 || critic_lr <= 0.0)
      throw std::invalid_argument("learning rates must be positive");
  }
};

struct StepRecord {
  std::vector<double> observation;
  MultiDiscreteAction action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool terminal = false;
};

struct Trajectory {
  std::vector<StepRecord> steps;
};

enum class ActMode { sample, greedy };

struct ActResult {
  MultiDiscreteAction action;
  double log_prob = 0.0;  // joint over the three heads
  double value = 0.0;
};

// Forward the observation through both networks and draw (or argmax) one
// action per head; the joint log-probability is the sum over heads.
inline ActResult act(const PolicyParameters& params,
                     std::span<const double> obs, Rng& rng, ActMode mode) {
  if (static_cast<int>(obs.size()) != params.obs_dim)
    throw std::invalid_argument("observation size mismatch");
  const Vec scale = observation_scale(params.obs_dim);
  Mat x(params.obs_dim, 1);
  for (int i = 0; i < params.obs_dim; ++i) x(i, 0) = obs[i] * scale(i);
  MlpForward fa = mlp_forward(params.actor, x);
  MlpForward fc = mlp_forward(params.critic, x);

  ActResult out;
  out.value = fc.head_out[0](0, 0);
  int choices[3];
  double logp = 0.0;
  for (int h = 0; h < 3; ++h) {
    Mat probs, log_probs;
    softmax_columns(fa.head_out[h], probs, log_probs);
    int a = 0;
    if (mode == ActMode::greedy) {
      probs.col(0).maxCoeff(&a);
    } else {
      std::vector<double> p(probs.rows());
      for (int i = 0; i < probs.rows(); ++i) p[i] = probs(i, 0);
      a = rng.categorical(p);
    }
    choices[h] = a;
    logp += log_probs(a, 0);
  }
  out.action = MultiDiscreteAction{choices[0], choices[1], choices[2] - 1};
  out.log_prob = logp;
  return out;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Standard generalized advantage estimation with a zero bootstrap value at
// the terminal step; returns = advantages + values.
inline GaeResult gae(const Trajectory& traj, double gamma, double lambda) {
  if (traj.steps.empty()) throw std::invalid_argument("empty trajectory");
  const int n = static_cast<int>(traj.steps.size());
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double running = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    const StepRecord& s = traj.steps[k];
    const double next_value =
        (k + 1 < n && !s.terminal) ? traj.steps[k + 1].value : 0.0;
    const double not_done = s.terminal ? 0.0 : 1.0;
    const double delta = s.reward + gamma * next_value - s.value;
    running = delta + gamma * lambda * not_done * running;
    out.advantages[k] = running;
    out.returns[k] = running + s.value;
  }
  return out;
}

// PPO clipped per-sample surrogate (the maximized objective).
inline double clipped_surrogate(double ratio, double advantage,
                                double clip_eps) {
  const double unclipped = ratio * advantage;
  const double clipped =
      std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
  return std::min(unclipped, clipped);
}

// One minibatch of flattened samples. Observations are pre-scaled columns.
struct MinibatchView {
  Mat obs;                      // obs_dim x mb
  std::vector<int> actions;     // 3 * mb, head-major per sample
  std::vector<double> old_logp; // mb
  std::vector<double> advantages;
  std::vector<double> returns;
  int size() const { return static_cast<int>(obs.cols()); }
};

struct MinibatchGrads {
  double actor_loss = 0.0;  // minimized: -(surrogate + entropy bonus)
  double value_loss = 0.0;  // mean squared value error
  Mlp actor_grad;
  Mlp critic_grad;
  double ratio_sum = 0.0;
  double surrogate_sum = 0.0;
  double entropy_sum = 0.0;
  int clipped = 0;
};

// Loss and analytic parameter gradients for one minibatch; this is the exact
// function the optimizer steps on, factored out so tests can difference it.
inline MinibatchGrads ppo_minibatch_grads(const PolicyParameters& params,
                                          const MinibatchView& mb,
                                          const PpoConfig& cfg) {
  const int m = mb.size();
  MinibatchGrads out;
  out.actor_grad = params.actor.zeros_like();
  out.critic_grad = params.critic.zeros_like();

  MlpForward fa = mlp_forward(params.actor, mb.obs);
  std::vector<Mat> probs(3), log_probs(3);
  for (int h = 0; h < 3; ++h)
    softmax_columns(fa.head_out[h], probs[h], log_probs[h]);

  std::vector<Mat> dlogits(3);
  for (int h = 0; h < 3; ++h) dlogits[h] = Mat::Zero(kHeadSizes[h], m);

  for (int j = 0; j < m; ++j) {
    double new_logp = 0.0;
    int a[3];
    for (int h = 0; h < 3; ++h) {
      a[h] = mb.actions[3 * j + h];
      new_logp += log_probs[h](a[h], j);
    }
    const double adv = mb.advantages[j];
    const double ratio = std::exp(new_logp - mb.old_logp[j]);
    if (!std::isfinite(ratio))
      throw std::runtime_error("PPO update: non-finite policy ratio");
    const double unclipped = ratio * adv;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    const bool use_unclipped = unclipped <= clipped;
    const double dsurr = use_unclipped ? ratio * adv : 0.0;
    out.surrogate_sum += std::min(unclipped, clipped);
    out.ratio_sum += ratio;
    if (!use_unclipped) ++out.clipped;

    double sample_entropy = 0.0;
    for (int h = 0; h < 3; ++h) {
      double H = 0.0;
      for (int i = 0; i < kHeadSizes[h]; ++i)
        H -= probs[h](i, j) * log_probs[h](i, j);
      sample_entropy += H;
      for (int i = 0; i < kHeadSizes[h]; ++i) {
        const double p = probs[h](i, j);
        const double dlogp = (i == a[h] ? 1.0 : 0.0) - p;
        const double dent = -p * (log_probs[h](i, j) + H);
        dlogits[h](i, j) = -(dsurr * dlogp + cfg.entropy_coef * dent) / m;
      }
    }
    out.entropy_sum += sample_entropy;
    out.actor_loss -= (std::min(unclipped, clipped) +
                       cfg.entropy_coef * sample_entropy) /
                      m;
  }
  mlp_backward(params.actor, fa, dlogits, out.actor_grad);

  MlpForward fc = mlp_forward(params.critic, mb.obs);
  std::vector<Mat> dvalue(1);
  dvalue[0] = Mat::Zero(1, m);
  for (int j = 0; j < m; ++j) {
    const double err = fc.head_out[0](0, j) - mb.returns[j];
    if (!std::isfinite(err))
      throw std::runtime_error("PPO update: non-finite value error");
    out.value_loss += err * err / m;
    dvalue[0](0, j) = 2.0 * err / m;
  }
  mlp_backward(params.critic, fc, dvalue, out.critic_grad);
  return out;
}

struct PpoDiagnostics {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double surrogate = 0.0;
  int samples = 0;
};

namespace detail {

struct FlatBatch {
  Mat obs;
  std::vector<int> actions;
  std::vector<double> old_logp;
  std::vector<double> advantages;
  std::vector<double> returns;
  int size = 0;
};

inline FlatBatch flatten(const PolicyParameters& params,
                         std::span<const Trajectory> batch,
                         const PpoConfig& cfg) {
  int total = 0;
  for (const Trajectory& t : batch)
    total += static_cast<int>(t.steps.size());
  FlatBatch fb;
  fb.size = total;
  fb.obs.resize(params.obs_dim, total);
  fb.actions.resize(3 * total);
  fb.old_logp.resize(total);
  fb.advantages.resize(total);
  fb.returns.resize(total);
  const Vec scale = observation_scale(params.obs_dim);
  int col = 0;
  for (const Trajectory& t : batch) {
    GaeResult g = gae(t, cfg.gamma, cfg.gae_lambda);
    for (std::size_t k = 0; k < t.steps.size(); ++k, ++col) {
      const StepRecord& s = t.steps[k];
      if (static_cast<int>(s.observation.size()) != params.obs_dim)
        throw std::invalid_argument("observation size mismatch in batch");
      for (int i = 0; i < params.obs_dim; ++i)
        fb.obs(i, col) = s.observation[i] * scale(i);
      fb.actions[3 * col] = s.action.wp_index;
      fb.actions[3 * col + 1] = s.action.speed_index;
      fb.actions[3 * col + 2] = s.action.lane_change + 1;
      fb.old_logp[col] = s.log_prob;
      fb.advantages[col] = g.advantages[k];
      fb.returns[col] = g.returns[k];
    }
  }
  // Batch advantage normalization: zero mean, unit variance.
  double mean = 0.0;
  for (double a : fb.advantages) mean += a;
  mean /= std::max(1, total);
  double var = 0.0;
  for (double a : fb.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / std::max(1, total)) + 1e-8;
  for (double& a : fb.advantages) a = (a - mean) / sd;
  return fb;
}

}  // namespace detail

// One PPO training phase over a batch of trajectories: `epochs` passes of
// shuffled minibatch updates maximizing the clipped surrogate plus entropy
// bonus and minimizing the squared value error, with separate Adam states
// for actor and critic.
inline PpoDiagnostics ppo_update(PolicyParameters& temp,
                                 std::span<const Trajectory> batch,
                                 const PpoConfig& cfg, Adam& actor_opt,
                                 Adam& critic_opt, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("empty trajectory batch");
  detail::FlatBatch fb = detail::flatten(temp, batch, cfg);
  const int m = fb.size;

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);

  PpoDiagnostics diag;
  long samples_seen = 0, clip_count = 0, batches = 0;
  double ratio_sum = 0.0, entropy_sum = 0.0, vloss_sum = 0.0,
         surrogate_sum = 0.0;

  MinibatchView mb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = m - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);

    for (int start = 0; start < m; start += cfg.minibatch) {
      const int n = std::min(cfg.minibatch, m - start);
      mb.obs.resize(temp.obs_dim, n);
      mb.actions.resize(3 * n);
      mb.old_logp.resize(n);
      mb.advantages.resize(n);
      mb.returns.resize(n);
      for (int j = 0; j < n; ++j) {
        const int idx = order[start + j];
        mb.obs.col(j) = fb.obs.col(idx);
        for (int h = 0; h < 3; ++h)
          mb.actions[3 * j + h] = fb.actions[3 * idx + h];
        mb.old_logp[j] = fb.old_logp[idx];
        mb.advantages[j] = fb.advantages[idx];
        mb.returns[j] = fb.returns[idx];
      }
      MinibatchGrads g = ppo_minibatch_grads(temp, mb, cfg);
      actor_opt.step(temp.actor, g.actor_grad);
      critic_opt.step(temp.critic, g.critic_grad);

      samples_seen += n;
      clip_count += g.clipped;
      ratio_sum += g.ratio_sum;
      entropy_sum += g.entropy_sum;
      surrogate_sum += g.surrogate_sum;
      vloss_sum += g.value_loss * n;
      ++batches;
    }
  }

  if (!temp.finite())
    throw std::runtime_error("PPO update produced non-finite parameters");

  diag.samples = m;
  diag.mean_ratio = ratio_sum / std::max<long>(1, samples_seen);
  diag.clip_fraction =
      static_cast<double>(clip_count) / std::max<long>(1, samples_seen);
  diag.value_loss = vloss_sum / std::max<long>(1, samples_seen);
  diag.entropy = entropy_sum / std::max<long>(1, samples_seen);
  diag.surrogate = surrogate_sum / std::max<long>(1, samples_seen);
  return diag;
}

// The acting (live) parameters adopt the trained temporary parameters.
inline void sync_policy(PolicyParameters& live,
                        const PolicyParameters& temp) {
  live = temp;
}

}  // namespace crossway
