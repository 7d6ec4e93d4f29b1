// Command-line driver for option discovery experiments in gridworlds.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "optforge/config.hpp"
#include "optforge/pipeline.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitStageError = 3;

struct GlobalOpts {
  std::string config_path;
  std::int64_t seed = -1;  // -1 = keep config value
  std::string out_dir;
};

optforge::ExperimentConfig resolve_config(const GlobalOpts& opts) {
  optforge::ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = optforge::load_config(opts.config_path);
  else cfg = optforge::parse_config({});
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"option discovery from expert trajectories in gridworld MDPs"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "experiment config file");
  app.add_option("--seed", opts.seed, "override the config seed");
  app.add_option("--out", opts.out_dir, "override the output directory");

  auto* cmd_expert =
      app.add_subcommand("expert", "generate an expert trajectory dataset");
  auto* cmd_ddo =
      app.add_subcommand("ddo", "infer options from a trajectory dataset");
  std::string ddo_input;
  cmd_ddo->add_option("--trajectories", ddo_input,
                      "trajectory dataset (defaults to <out>/trajectories.jsonl)");
  auto* cmd_smdp =
      app.add_subcommand("smdp", "train the SMDP meta-policy from saved params");
  std::string smdp_params;
  cmd_smdp->add_option("--params", smdp_params,
                       "params file (defaults to <out>/ddo_params.json)");
  auto* cmd_eval = app.add_subcommand("eval", "run the full pipeline and report metrics");
  auto* cmd_render = app.add_subcommand("render", "render saved options as arrow maps");
  std::string render_params, render_format = "ascii";
  cmd_render->add_option("--params", render_params, "params file");
  cmd_render->add_option("--format", render_format, "ascii or svg");
  auto* cmd_pipeline =
      app.add_subcommand("pipeline", "expert -> ddo -> smdp -> eval, one pass");
  auto* cmd_iterate =
      app.add_subcommand("iterate", "iterated loop with agent rollouts fed back");

  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;  // bad usage is a config error
  }

  optforge::ExperimentConfig cfg;
  try {
    cfg = resolve_config(opts);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    namespace fs = std::filesystem;
    if (cmd_expert->parsed()) {
      const optforge::GridMap map = optforge::load_map(cfg.map_path);
      const auto dataset = optforge::make_expert_dataset(
          map, cfg.mdp, cfg.expert_trajectories, cfg.seed,
          cfg.expert_temperature);
      fs::create_directories(cfg.out_dir);
      optforge::save_trajectories(cfg.out_dir + "/trajectories.jsonl", map,
                                  dataset);
      std::cout << "wrote " << dataset.size() << " trajectories to "
                << cfg.out_dir << "/trajectories.jsonl\n";
    } else if (cmd_ddo->parsed()) {
      const optforge::GridMap map = optforge::load_map(cfg.map_path);
      const std::string input = ddo_input.empty()
                                    ? cfg.out_dir + "/trajectories.jsonl"
                                    : ddo_input;
      const auto dataset = optforge::load_trajectories(input, map);
      optforge::TrainConfig tc = cfg.ddo;
      tc.seed = cfg.seed;
      const auto result = optforge::train(dataset, map.n_states(), tc);
      const auto scaled =
          optforge::scale_termination(result.params, cfg.ddo.alpha);
      fs::create_directories(cfg.out_dir);
      optforge::save_params(cfg.out_dir + "/ddo_params.json", scaled);
      std::cout << "log-likelihood " << result.history.front().log_likelihood
                << " -> " << result.history.back().log_likelihood << "\n";
      if (result.no_progress) std::cout << "warning: no progress\n";
    } else if (cmd_smdp->parsed()) {
      const optforge::GridMap map = optforge::load_map(cfg.map_path);
      const std::string input = smdp_params.empty()
                                    ? cfg.out_dir + "/ddo_params.json"
                                    : smdp_params;
      const auto params = optforge::load_params(input);
      const auto options = optforge::extract_options(params);
      std::mt19937_64 rng(cfg.seed);
      const int goal = optforge::sample_task(map, rng).goal;
      optforge::EnvContext env{map, cfg.mdp, goal};
      optforge::SmdpConfig sc = cfg.smdp;
      sc.seed = cfg.seed;
      const auto table = optforge::smdp_q_learning(env, options, sc);
      fs::create_directories(cfg.out_dir);
      optforge::save_qtable(cfg.out_dir + "/qtable.json", table);
      std::cout << "trained meta-policy for goal state " << goal << "\n";
    } else if (cmd_eval->parsed() || cmd_pipeline->parsed()) {
      const auto artifacts = optforge::run_pipeline(cfg);
      std::cout << optforge::report_to_text(artifacts.report);
    } else if (cmd_render->parsed()) {
      const optforge::GridMap map = optforge::load_map(cfg.map_path);
      const std::string input = render_params.empty()
                                    ? cfg.out_dir + "/ddo_params.json"
                                    : render_params;
      const auto params = optforge::load_params(input);
      const auto options = optforge::extract_options(params);
      const auto format = render_format == "svg"
                              ? optforge::RenderFormat::kSvg
                              : optforge::RenderFormat::kAscii;
      fs::create_directories(cfg.out_dir);
      for (const auto& option : options.options) {
        if (format == optforge::RenderFormat::kSvg) {
          write_file(cfg.out_dir + "/" + option.label + ".svg",
                     optforge::render_policy(map, option.policy, format,
                                             &option.termination));
        } else {
          std::cout << option.label << ":\n"
                    << optforge::render_policy(map, option.policy, format)
                    << "\n";
        }
      }
    } else if (cmd_iterate->parsed()) {
      const auto iterations = optforge::run_iterated(cfg);
      for (std::size_t i = 0; i < iterations.size(); ++i)
        std::cout << "iter " << i << ": heldout loglik "
                  << iterations[i].heldout_log_likelihood << ", success rate "
                  << iterations[i].report.success_rate << ", buffer "
                  << iterations[i].buffer_size << "\n";
    }
  } catch (const optforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageError;
  }
  return 0;
}
