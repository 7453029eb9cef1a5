// Command-line front end: curriculum-scheduled training, greedy policy
// evaluation, the synthetic-learner bandit testbed, and trace reporting.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "crossway/bandit_sim.hpp"
#include "crossway/config.hpp"
#include "crossway/evaluate.hpp"
#include "crossway/report.hpp"
#include "crossway/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> scheduler;
  std::optional<long> episodes;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_scheduler) {
  cmd->add_option("--config", args.config_path, "Config file (JSON)");
  cmd->add_option("--seed", args.seed, "Master seed override");
  cmd->add_option("--out", args.out_dir, "Output directory override");
  cmd->add_option("--episodes", args.episodes, "Episode count override");
  if (with_scheduler)
    cmd->add_option("--scheduler", args.scheduler,
                    "Curriculum scheduler: bimab|fixed|random|manual");
}

crossway::RunConfig resolve_config(const CommonArgs& args) {
  crossway::RunConfig cfg;
  if (!args.config_path.empty())
    cfg = crossway::load_config_file(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out_dir) cfg.out_dir = *args.out_dir;
  if (args.scheduler) cfg.scheduler = *args.scheduler;
  if (args.episodes) cfg.episodes = *args.episodes;
  try {
    cfg.validate();
  } catch (const crossway::ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw crossway::ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bandit-scheduled curriculum training for intersection "
               "crossing policies"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, sim_args;
  std::string eval_checkpoint;
  std::vector<std::string> report_inputs;
  std::string report_out = "report_out";

  CLI::App* train_cmd =
      app.add_subcommand("train", "Run curriculum-scheduled training");
  add_common(train_cmd, train_args, true);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint greedily");
  add_common(eval_cmd, eval_args, false);
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "Policy checkpoint to evaluate")
      ->required();

  CLI::App* sim_cmd = app.add_subcommand(
      "bandit-sim", "Run the bandit against the synthetic learner");
  add_common(sim_cmd, sim_args, false);

  CLI::App* report_cmd =
      app.add_subcommand("report", "Summarize trace files into tables");
  report_cmd
      ->add_option("inputs", report_inputs,
                   "Trace file or run directory (traces.jsonl "
                   "[snapshots.jsonl])")
      ->required();
  report_cmd->add_option("--out", report_out, "Report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      crossway::RunConfig cfg = resolve_config(train_args);
      auto result = crossway::train(cfg);
      std::cout << "trained " << result.episodes << " episodes\n"
                << "checkpoint: " << result.checkpoint_path << "\n"
                << "traces:     " << result.trace_path << "\n";
      return kExitOk;
    }
    if (*eval_cmd) {
      crossway::RunConfig cfg = resolve_config(eval_args);
      if (eval_args.episodes)
        cfg.eval_episodes = static_cast<int>(*eval_args.episodes);
      crossway::Rng init_rng(crossway::mix_seed(cfg.seed, 5));
      crossway::PolicyParameters params = crossway::PolicyParameters::init(
          cfg.observation_dim(), cfg.ppo.hidden1, cfg.ppo.hidden2, init_rng);
      crossway::load_checkpoint(params, eval_checkpoint);
      auto matrix = crossway::evaluate(cfg, params);
      std::cout << matrix.render();
      namespace fs = std::filesystem;
      fs::create_directories(cfg.out_dir);
      std::ofstream os((fs::path(cfg.out_dir) / "eval_matrix.json").string(),
                       std::ios::trunc);
      os << matrix.to_json().dump(2) << "\n";
      return kExitOk;
    }
    if (*sim_cmd) {
      crossway::RunConfig cfg = resolve_config(sim_args);
      auto result = crossway::bandit_sim(cfg);
      std::cout << "simulated " << result.episodes << " episodes\n";
      for (int c = 0; c < cfg.bandit.n_clusters; ++c) {
        long total = 0;
        for (int a = 0; a < cfg.bandit.n_arms; ++a)
          total += result.sampled_counts[c * cfg.bandit.n_arms + a];
        std::cout << "cluster " << c << ": " << total << " (";
        for (int a = 0; a < cfg.bandit.n_arms; ++a)
          std::cout << result.sampled_counts[c * cfg.bandit.n_arms + a]
                    << (a + 1 < cfg.bandit.n_arms ? " " : ")\n");
      }
      return kExitOk;
    }
    if (*report_cmd) {
      namespace fs = std::filesystem;
      std::string trace_path = report_inputs[0];
      std::string snapshot_path =
          report_inputs.size() > 1 ? report_inputs[1] : "";
      if (fs::is_directory(trace_path)) {
        snapshot_path = (fs::path(trace_path) / "snapshots.jsonl").string();
        trace_path = (fs::path(trace_path) / "traces.jsonl").string();
      }
      auto result = crossway::report(trace_path, snapshot_path);
      std::cout << result.text;
      crossway::write_report(result, report_out);
      if (result.too_corrupt()) {
        std::cerr << "error: " << result.corrupt_lines << " of "
                  << result.total_lines << " lines corrupt (> 1%)\n";
        return kExitRuntimeError;
      }
      if (result.corrupt_lines > 0)
        std::cerr << "warning: skipped " << result.corrupt_lines
                  << " corrupt lines\n";
      return kExitOk;
    }
  } catch (const crossway::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
