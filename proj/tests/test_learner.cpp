#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "crossway/nn.hpp"
#include "crossway/ppo.hpp"
#include "crossway/rng.hpp"

using namespace crossway;

namespace {

// Random minibatch over a small network, with policy ratios kept away from
// the clip kinks so central differences are valid.
MinibatchView random_minibatch(const PolicyParameters& params, int m,
                               Rng& rng, const PpoConfig& cfg) {
  MinibatchView mb;
  mb.obs.resize(params.obs_dim, m);
  mb.actions.resize(3 * m);
  mb.old_logp.resize(m);
  mb.advantages.resize(m);
  mb.returns.resize(m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < params.obs_dim; ++i)
      mb.obs(i, j) = rng.uniform(-1.0, 1.0);
    MlpForward f = mlp_forward(params.actor, mb.obs.col(j));
    double logp = 0.0;
    for (int h = 0; h < 3; ++h) {
      Mat p, lp;
      softmax_columns(f.head_out[h], p, lp);
      int a = rng.uniform_int(kHeadSizes[h]);
      mb.actions[3 * j + h] = a;
      logp += lp(a, 0);
    }
    double ratio;
    double offset;
    do {
      offset = rng.uniform(-0.25, 0.25);
      ratio = std::exp(offset);
    } while (std::abs(ratio - (1.0 - cfg.clip_eps)) < 0.02 ||
             std::abs(ratio - (1.0 + cfg.clip_eps)) < 0.02);
    mb.old_logp[j] = logp - offset;
    do {
      mb.advantages[j] = rng.uniform(-2.0, 2.0);
    } while (std::abs(mb.advantages[j]) < 0.05);
    mb.returns[j] = rng.uniform(-3.0, 3.0);
  }
  return mb;
}

// Worst relative error between analytic gradients and central differences
// over every trainable tensor of both networks.
double gradient_check(PolicyParameters params, int batch, Rng& rng) {
  PpoConfig cfg;
  MinibatchView mb = random_minibatch(params, batch, rng, cfg);
  MinibatchGrads g = ppo_minibatch_grads(params, mb, cfg);

  const double h = 1e-5;
  double worst = 0.0;
  auto check_net = [&](bool is_actor) {
    Mlp& net = is_actor ? params.actor : params.critic;
    Mlp& grad = is_actor ? g.actor_grad : g.critic_grad;
    std::vector<Mat*> ts, gs;
    net.for_each_tensor([&](Mat& t) { ts.push_back(&t); });
    grad.for_each_tensor([&](Mat& t) { gs.push_back(&t); });
    for (std::size_t n = 0; n < ts.size(); ++n) {
      for (int i = 0; i < ts[n]->rows(); ++i) {
        for (int j = 0; j < ts[n]->cols(); ++j) {
          const double orig = (*ts[n])(i, j);
          (*ts[n])(i, j) = orig + h;
          MinibatchGrads gp = ppo_minibatch_grads(params, mb, cfg);
          (*ts[n])(i, j) = orig - h;
          MinibatchGrads gm = ppo_minibatch_grads(params, mb, cfg);
          (*ts[n])(i, j) = orig;
          const double lp = is_actor ? gp.actor_loss : gp.value_loss;
          const double lm = is_actor ? gm.actor_loss : gm.value_loss;
          const double fd = (lp - lm) / (2.0 * h);
          const double ana = (*gs[n])(i, j);
          const double scale = std::max({1.0, std::abs(fd), std::abs(ana)});
          worst = std::max(worst, std::abs(fd - ana) / scale);
        }
      }
    }
  };
  check_net(true);
  check_net(false);
  return worst;
}

}  // namespace

TEST_CASE("acting") {
  Rng rng(3);
  PolicyParameters p = PolicyParameters::init(8, 16, 12, rng);

  SUBCASE("zeroed heads give uniform per-head distributions") {
    for (auto& w : p.actor.head_w) w.setZero();
    for (auto& b : p.actor.head_b) b.setZero();
    std::vector<double> obs(8, 0.4);
    auto r = act(p, obs, rng, ActMode::sample);
    CHECK(r.log_prob ==
          doctest::Approx(std::log(1.0 / 5) + std::log(1.0 / 5) +
                          std::log(1.0 / 3)).epsilon(1e-12));
  }

  SUBCASE("per-head probabilities sum to one for random parameters") {
    std::vector<double> obs(8);
    for (int trial = 0; trial < 50; ++trial) {
      for (double& o : obs) o = rng.uniform(-5, 5);
      const Vec scale = observation_scale(8);
      Mat x(8, 1);
      for (int i = 0; i < 8; ++i) x(i, 0) = obs[i] * scale(i);
      MlpForward f = mlp_forward(p.actor, x);
      for (int h = 0; h < 3; ++h) {
        Mat probs, lp;
        softmax_columns(f.head_out[h], probs, lp);
        CHECK(probs.col(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
        double entropy = 0.0;
        for (int i = 0; i < probs.rows(); ++i)
          entropy -= probs(i, 0) * lp(i, 0);
        CHECK(entropy >= -1e-12);
        CHECK(entropy <= std::log(static_cast<double>(kHeadSizes[h])) + 1e-9);
      }
    }
  }

  SUBCASE("greedy mode is deterministic") {
    std::vector<double> obs(8, 1.0);
    auto a = act(p, obs, rng, ActMode::greedy);
    auto b = act(p, obs, rng, ActMode::greedy);
    CHECK(a.action.wp_index == b.action.wp_index);
    CHECK(a.action.speed_index == b.action.speed_index);
    CHECK(a.action.lane_change == b.action.lane_change);
    CHECK(a.log_prob == b.log_prob);
  }

  SUBCASE("observation shape mismatch is rejected") {
    std::vector<double> obs(7, 0.0);
    CHECK_THROWS_AS(act(p, obs, rng, ActMode::sample),
                    std::invalid_argument);
  }
}

TEST_CASE("generalized advantage estimation") {
  SUBCASE("single terminal step: A = r - V") {
    Trajectory t;
    t.steps.push_back({{}, {}, 0.0, 2.5, 0.7, true});
    auto g = gae(t, 0.99, 0.95);
    CHECK(g.advantages[0] == doctest::Approx(2.5 - 0.7).epsilon(1e-12));
    CHECK(g.returns[0] == doctest::Approx(2.5).epsilon(1e-12));
  }

  SUBCASE("lambda = 1 equals the discounted Monte-Carlo advantage") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + rng.uniform_int(10);
      Trajectory t;
      for (int k = 0; k < n; ++k)
        t.steps.push_back({{},
                           {},
                           0.0,
                           rng.uniform(-2, 2),
                           rng.uniform(-1, 1),
                           k == n - 1});
      const double gamma = 0.97;
      auto g = gae(t, gamma, 1.0);
      for (int k = 0; k < n; ++k) {
        double mc = 0.0;
        double disc = 1.0;
        for (int l = k; l < n; ++l) {
          mc += disc * t.steps[l].reward;
          disc *= gamma;
        }
        CHECK(std::abs(g.advantages[k] - (mc - t.steps[k].value)) < 1e-10);
      }
    }
  }

  SUBCASE("lambda = 0 collapses to the one-step TD residual") {
    Rng rng(23);
    Trajectory t;
    const int n = 8;
    for (int k = 0; k < n; ++k)
      t.steps.push_back({{},
                         {},
                         0.0,
                         rng.uniform(-2, 2),
                         rng.uniform(-1, 1),
                         k == n - 1});
    const double gamma = 0.9;
    auto g = gae(t, gamma, 0.0);
    for (int k = 0; k < n; ++k) {
      const double nv = k + 1 < n ? t.steps[k + 1].value : 0.0;
      const double td = t.steps[k].reward + gamma * nv - t.steps[k].value;
      CHECK(g.advantages[k] == doctest::Approx(td).epsilon(1e-12));
    }
  }

  SUBCASE("empty trajectory is rejected") {
    Trajectory t;
    CHECK_THROWS_AS(gae(t, 0.99, 0.95), std::invalid_argument);
  }
}

TEST_CASE("clipped surrogate properties") {
  Rng rng(5);
  const double eps = 0.2;

  SUBCASE("envelope: never exceeds max((1-eps)A, (1+eps)A)") {
    for (int i = 0; i < 10000; ++i) {
      const double ratio = rng.uniform(0.0, 3.0);
      const double adv = rng.uniform(-5.0, 5.0);
      const double s = clipped_surrogate(ratio, adv, eps);
      CHECK(s <= std::max((1 - eps) * adv, (1 + eps) * adv) + 1e-12);
    }
  }

  SUBCASE("constant for ratio beyond 1+eps at positive advantage") {
    const double adv = 1.7;
    const double base = clipped_surrogate(1.0 + eps, adv, eps);
    for (double ratio : {1.3, 1.8, 2.5, 10.0})
      CHECK(clipped_surrogate(ratio, adv, eps) ==
            doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    PolicyParameters p = PolicyParameters::init(6, 8, 8, rng);
    // Wake up the heads so the check is not performed at tiny logits only.
    p.actor.for_each_tensor([&](Mat& t) {
      for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) t(i, j) += 0.05 * rng.normal();
    });
    const double worst = gradient_check(p, 5, rng);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("identity update diagnostics") {
  // With temp == acting parameters every ratio is 1, the surrogate equals
  // the mean (normalized) advantage and nothing clips.
  Rng rng(7);
  PolicyParameters p = PolicyParameters::init(6, 8, 8, rng);
  PpoConfig cfg;
  std::vector<Trajectory> batch(1);
  for (int k = 0; k < 12; ++k) {
    StepRecord s;
    s.observation.assign(6, rng.uniform(-1, 1));
    auto r = act(p, s.observation, rng, ActMode::sample);
    s.action = r.action;
    s.log_prob = r.log_prob;
    s.value = r.value;
    s.reward = rng.uniform(-1, 1);
    s.terminal = k == 11;
    batch[0].steps.push_back(s);
  }
  MinibatchView mb;
  auto fb = detail::flatten(p, batch, cfg);
  mb.obs = fb.obs;
  mb.actions = fb.actions;
  mb.old_logp = fb.old_logp;
  mb.advantages = fb.advantages;
  mb.returns = fb.returns;
  MinibatchGrads g = ppo_minibatch_grads(p, mb, cfg);
  CHECK(g.ratio_sum / 12.0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(g.clipped == 0);
  double mean_adv = 0.0;
  for (double a : mb.advantages) mean_adv += a;
  mean_adv /= 12.0;
  CHECK(g.surrogate_sum / 12.0 == doctest::Approx(mean_adv).epsilon(1e-9));
}

TEST_CASE("policy synchronization") {
  Rng rng(9);
  PolicyParameters live = PolicyParameters::init(6, 8, 8, rng);
  PolicyParameters temp = PolicyParameters::init(6, 8, 8, rng);
  std::vector<double> obs(6, 0.3);
  auto before = act(live, obs, rng, ActMode::greedy);
  auto live_again = act(live, obs, rng, ActMode::greedy);
  CHECK(before.log_prob == live_again.log_prob);
  sync_policy(live, temp);
  auto a = act(live, obs, rng, ActMode::greedy);
  auto b = act(temp, obs, rng, ActMode::greedy);
  CHECK(a.log_prob == b.log_prob);
  CHECK(a.action.wp_index == b.action.wp_index);
  CHECK(a.value == b.value);
}

TEST_CASE("learning sanity on a two-context bandit") {
  Rng rng(2024);
  PolicyParameters live = PolicyParameters::init(4, 16, 16, rng);
  PolicyParameters temp = live;
  PpoConfig cfg;
  cfg.epochs = 5;
  cfg.minibatch = 64;
  Adam actor_opt(1e-3), critic_opt(2e-3);

  auto context_obs = [](int c) {
    return std::vector<double>(4, c == 0 ? 2.0 : -2.0);
  };
  auto reward_of = [](int c, const MultiDiscreteAction& a) {
    if (c == 0) return a.wp_index == 2 ? 1.0 : 0.0;
    return a.speed_index == 4 ? 1.0 : 0.0;
  };

  bool solved = false;
  for (int update = 0; update < 200 && !solved; ++update) {
    std::vector<Trajectory> batch;
    for (int e = 0; e < 16; ++e) {
      const int c = e % 2;
      Trajectory t;
      StepRecord s;
      s.observation = context_obs(c);
      auto r = act(live, s.observation, rng, ActMode::sample);
      s.action = r.action;
      s.log_prob = r.log_prob;
      s.value = r.value;
      s.reward = reward_of(c, r.action);
      s.terminal = true;
      t.steps.push_back(s);
      batch.push_back(t);
    }
    ppo_update(temp, batch, cfg, actor_opt, critic_opt, rng);
    sync_policy(live, temp);
    auto g0 = act(live, context_obs(0), rng, ActMode::greedy);
    auto g1 = act(live, context_obs(1), rng, ActMode::greedy);
    solved = g0.action.wp_index == 2 && g1.action.speed_index == 4;
  }
  CHECK(solved);
}

TEST_CASE("checkpoint round-trip is exact") {
  namespace fs = std::filesystem;
  Rng rng(42);
  PolicyParameters p = PolicyParameters::init(16, 32, 24, rng);
  const std::string path =
      (fs::temp_directory_path() / "crossway_ckpt_test.bin").string();
  save_checkpoint(p, path);

  Rng rng2(77);
  PolicyParameters q = PolicyParameters::init(16, 32, 24, rng2);
  load_checkpoint(q, path);
  bool identical = true;
  std::vector<const Mat*> tp, tq;
  p.actor.for_each_tensor([&](const Mat& t) { tp.push_back(&t); });
  p.critic.for_each_tensor([&](const Mat& t) { tp.push_back(&t); });
  q.actor.for_each_tensor([&](const Mat& t) { tq.push_back(&t); });
  q.critic.for_each_tensor([&](const Mat& t) { tq.push_back(&t); });
  for (std::size_t i = 0; i < tp.size(); ++i)
    identical = identical && (*tp[i] == *tq[i]);
  CHECK(identical);

  SUBCASE("shape mismatch is rejected") {
    Rng rng3(5);
    PolicyParameters wrong = PolicyParameters::init(16, 16, 24, rng3);
    CHECK_THROWS(load_checkpoint(wrong, path));
  }

  SUBCASE("corrupt magic is rejected") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOTMAGIC garbage";
    os.close();
    PolicyParameters r = p;
    CHECK_THROWS(load_checkpoint(r, path));
  }
  fs::remove(path);
}
