#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossway/config.hpp"
#include "crossway/env.hpp"
#include "crossway/nn.hpp"
#include "crossway/train.hpp"

namespace crossway {

struct EvalCell {
  int success = 0;
  int collision = 0;
  int timeout = 0;
  int episodes() const { return success + collision + timeout; }
  double pct(int count) const {
    return episodes() > 0 ? 100.0 * count / episodes() : 0.0;
  }
};

// Per (task, SV count) outcome percentages over a fixed number of seeded
// episodes; the three buckets partition every episode.
struct EvaluationMatrix {
  int n_sv_levels = 4;
  int episodes_per_cell = 100;
  std::vector<EvalCell> cells;  // task-major: [task * n_sv_levels + n_sv]

  EvalCell& at(int task, int n_sv) {
    return cells[task * n_sv_levels + n_sv];
  }
  const EvalCell& at(int task, int n_sv) const {
    return cells[task * n_sv_levels + n_sv];
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (int task = 0; task < 3; ++task) {
      for (int s = 0; s < n_sv_levels; ++s) {
        const EvalCell& c = at(task, s);
        rows.push_back({{"task", task_name(static_cast<Task>(task))},
                        {"n_sv", s},
                        {"success_pct", c.pct(c.success)},
                        {"collision_pct", c.pct(c.collision)},
                        {"timeout_pct", c.pct(c.timeout)},
                        {"episodes", c.episodes()}});
      }
    }
    return nlohmann::json{{"episodes_per_cell", episodes_per_cell},
                          {"cells", rows}};
  }

  std::string render() const {
    std::ostringstream os;
    os << "task         ";
    for (int s = 0; s < n_sv_levels; ++s)
      os << "|   N_sv=" << s << " S/C/TO   ";
    os << "\n";
    for (int task = 0; task < 3; ++task) {
      os.width(13);
      os << std::left << task_name(static_cast<Task>(task));
      for (int s = 0; s < n_sv_levels; ++s) {
        const EvalCell& c = at(task, s);
        char buf[40];
        std::snprintf(buf, sizeof(buf), "| %5.1f %5.1f %5.1f ",
                      c.pct(c.success), c.pct(c.collision), c.pct(c.timeout));
        os << buf;
      }
      os << "\n";
    }
    return os.str();
  }
};

// Generic evaluation over an episode runner so tests can substitute stub
// environments; the runner returns the terminal kind for (task, n_sv, i).
template <typename Runner>
EvaluationMatrix evaluation_matrix(int n_sv_levels, int episodes_per_cell,
                                   Runner&& run) {
  EvaluationMatrix m;
  m.n_sv_levels = n_sv_levels;
  m.episodes_per_cell = episodes_per_cell;
  m.cells.assign(3 * n_sv_levels, EvalCell{});
  for (int task = 0; task < 3; ++task) {
    for (int s = 0; s < n_sv_levels; ++s) {
      for (int i = 0; i < episodes_per_cell; ++i) {
        switch (run(task, s, i)) {
          case EventKind::success: ++m.at(task, s).success; break;
          case EventKind::collision: ++m.at(task, s).collision; break;
          case EventKind::timeout: ++m.at(task, s).timeout; break;
          case EventKind::none:
            throw std::logic_error("evaluation episode did not terminate");
        }
      }
    }
  }
  return m;
}

// Greedy-policy evaluation on the real environment with per-episode seeds
// derived from (seed, task, n_sv, index).
inline EvaluationMatrix evaluate(const RunConfig& cfg,
                                 const PolicyParameters& params) {
  cfg.validate();
  const EnvConfig env_cfg = cfg.env_resolved();
  const MpcConfig mpc_cfg = cfg.mpc_resolved();
  Rng dummy(0);
  return evaluation_matrix(
      cfg.bandit.n_clusters, cfg.eval_episodes,
      [&](int task, int n_sv, int i) {
        Rng episode_rng(
            mix_seed(cfg.seed, 0x9000 + task * 256 + n_sv * 16) + i);
        World world(env_cfg);
        world.reset({n_sv, task}, episode_rng);
        MpcTracker tracker(mpc_cfg);
        Rng act_rng(1);  // greedy acting draws nothing
        rollout_episode(world, params, tracker, act_rng, ActMode::greedy);
        return world.outcome().terminal_kind;
      });
}

}  // namespace crossway
