#include "optforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace optforge {

namespace {

constexpr int kArtifactVersion = 1;

nlohmann::json read_json(const std::string& path, const char* kind) {
  std::ifstream in(path);
  if (!in) throw Corrupt("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Corrupt("cannot parse " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("version"))
    throw Corrupt(path + " has no version field");
  if (j["version"].get<int>() != kArtifactVersion)
    throw VersionMismatch(path + " has version " + j["version"].dump() +
                          ", expected " + std::to_string(kArtifactVersion));
  if (j.value("kind", "") != kind)
    throw Corrupt(path + " is not a " + std::string(kind) + " artifact");
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

void save_params(const std::string& path, const DdoParams& params) {
  nlohmann::json j;
  j["version"] = kArtifactVersion;
  j["kind"] = "ddo_params";
  j["n_options"] = params.n_options;
  j["n_states"] = params.n_states;
  j["n_actions"] = params.n_actions;
  j["eta_logits"] = params.eta_logits;
  j["pi_logits"] = params.pi_logits;
  j["psi_logits"] = params.psi_logits;
  j["termination_scale"] = params.termination_scale;
  write_json(path, j);
}

DdoParams load_params(const std::string& path) {
  const nlohmann::json j = read_json(path, "ddo_params");
  DdoParams params;
  try {
    params.n_options = j.at("n_options").get<int>();
    params.n_states = j.at("n_states").get<int>();
    params.n_actions = j.at("n_actions").get<int>();
    params.eta_logits = j.at("eta_logits").get<std::vector<double>>();
    params.pi_logits = j.at("pi_logits").get<std::vector<double>>();
    params.psi_logits = j.at("psi_logits").get<std::vector<double>>();
    params.termination_scale = j.at("termination_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Corrupt(path + ": " + e.what());
  }
  const std::size_t S = params.n_states, H = params.n_options;
  if (params.eta_logits.size() != S * H ||
      params.pi_logits.size() != H * S * params.n_actions ||
      params.psi_logits.size() != H * S)
    throw Corrupt(path + ": logit arrays do not match shape metadata");
  return params;
}

void save_qtable(const std::string& path, const SmdpQTable& table) {
  nlohmann::json j;
  j["version"] = kArtifactVersion;
  j["kind"] = "smdp_qtable";
  j["n_states"] = table.n_states;
  j["n_choices"] = table.n_choices;
  j["q"] = table.q;
  j["visits"] = table.visits;
  write_json(path, j);
}

SmdpQTable load_qtable(const std::string& path) {
  const nlohmann::json j = read_json(path, "smdp_qtable");
  SmdpQTable table;
  try {
    table.n_states = j.at("n_states").get<int>();
    table.n_choices = j.at("n_choices").get<int>();
    table.q = j.at("q").get<std::vector<double>>();
    table.visits = j.at("visits").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Corrupt(path + ": " + e.what());
  }
  const std::size_t expect =
      static_cast<std::size_t>(table.n_states) * table.n_choices;
  if (table.q.size() != expect || table.visits.size() != expect)
    throw Corrupt(path + ": table arrays do not match shape metadata");
  return table;
}

void save_report(const std::string& path, const MetricReport& report) {
  nlohmann::json j;
  j["version"] = kArtifactVersion;
  j["kind"] = "metric_report";
  j["ce_error"] = report.ce_error;
  j["hinge_loss"] = report.hinge_loss;
  nlohmann::json term = nlohmann::json::array();
  for (const TerminationStat& stat : report.per_option_termination)
    term.push_back({{"mean", stat.mean}, {"variance", stat.variance}});
  j["per_option_termination"] = std::move(term);
  j["option_time_fraction"] = report.option_time_fraction;
  j["median_option_duration"] = report.median_option_duration;
  j["mean_option_duration"] = report.mean_option_duration;
  j["success_rate"] = report.success_rate;
  j["diffusion_time"] = report.diffusion_time;
  j["diffusion_time_with_options"] = report.diffusion_time_with_options;
  j["visitation"] = report.visitation;
  write_json(path, j);
}

std::string render_policy(const GridMap& map, const Policy& policy,
                          RenderFormat format,
                          const std::vector<double>* termination, int goal) {
  if (format == RenderFormat::kAscii) {
    std::string out;
    for (int r = 0; r < map.height; ++r) {
      for (int c = 0; c < map.width; ++c) {
        const int s = map.state_at(r, c);
        if (s < 0) {
          out += '#';
        } else if (s == goal) {
          out += 'G';
        } else {
          out += action_arrow(argmax_action(policy[s]));
        }
      }
      out += '\n';
    }
    return out;
  }

  const int cell = 24;
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
      << map.width * cell << "\" height=\"" << map.height * cell << "\">\n";
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      const int s = map.state_at(r, c);
      const int x = c * cell, y = r * cell;
      if (s < 0) {
        svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
            << "\" height=\"" << cell << "\" fill=\"#333333\"/>\n";
        continue;
      }
      double shade = termination ? (*termination)[s] : 0.0;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell
          << "\" fill=\"rgb(255," << static_cast<int>(255 * (1.0 - shade))
          << "," << static_cast<int>(255 * (1.0 - shade))
          << ")\" stroke=\"#cccccc\"/>\n";
      if (s == goal) {
        svg << "<circle cx=\"" << x + cell / 2 << "\" cy=\"" << y + cell / 2
            << "\" r=\"" << cell / 3 << "\" fill=\"#2a9d2a\"/>\n";
        continue;
      }
      const int a = argmax_action(policy[s]);
      const double len = 0.5 * cell * policy[s][a];
      const double cx = x + cell / 2.0, cy = y + cell / 2.0;
      const double dx = action_dcol(a) * len, dy = action_drow(a) * len;
      svg << "<line x1=\"" << cx - dx << "\" y1=\"" << cy - dy << "\" x2=\""
          << cx + dx << "\" y2=\"" << cy + dy
          << "\" stroke=\"#1f4e9c\" stroke-width=\"2\"/>\n";
      svg << "<circle cx=\"" << cx + dx << "\" cy=\"" << cy + dy
          << "\" r=\"2\" fill=\"#1f4e9c\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
  // splitmix64 over (seed, stage)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stage + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct Manifest {
  nlohmann::json stages = nlohmann::json::array();

  void add(const std::string& stage, const std::vector<std::string>& files) {
    stages.push_back({{"name", stage}, {"outputs", files}});
  }
  void write(const std::string& dir, const ExperimentConfig& cfg) const {
    nlohmann::json j;
    j["version"] = kArtifactVersion;
    j["kind"] = "manifest";
    j["config"] = config_to_kv(cfg);
    j["stages"] = stages;
    write_json(dir + "/manifest.json", j);
  }
};

// DDO -> SMDP -> metrics for one dataset; shared by the one-shot pipeline
// and the iterated loop.
PipelineArtifacts run_core(const ExperimentConfig& cfg, const GridMap& map,
                           const std::vector<Trajectory>& dataset,
                           const DdoParams* warm_start, std::uint64_t round,
                           const std::string& out_dir, Manifest& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  PipelineArtifacts artifacts;
  artifacts.map = map;
  artifacts.expert_dataset = dataset;

  // --- ddo ---
  try {
    TrainConfig tc = cfg.ddo;
    tc.seed = derive_seed(cfg.seed, 1000 + round);
    TrainResult result = train(dataset, map.n_states(), tc, warm_start);
    artifacts.params = std::move(result.params);
    const DdoParams scaled = scale_termination(artifacts.params, cfg.ddo.alpha);
    save_params(out_dir + "/ddo_params.json", scaled);
    std::ostringstream history;
    history << "epoch,log_likelihood,regularizer\n";
    for (std::size_t e = 0; e < result.history.size(); ++e)
      history << e << "," << result.history[e].log_likelihood << ","
              << result.history[e].regularizer << "\n";
    write_text(out_dir + "/ddo_history.csv", history.str());
    artifacts.options = extract_options(scaled);
    manifest.add("ddo", {out_dir + "/ddo_params.json",
                         out_dir + "/ddo_history.csv"});
  } catch (const std::exception& e) {
    throw StageError("ddo", e.what());
  }

  // --- smdp ---
  try {
    std::mt19937_64 goal_rng(derive_seed(cfg.seed, 2));
    artifacts.eval_goal = sample_task(map, goal_rng).goal;
    EnvContext env{map, cfg.mdp, artifacts.eval_goal};
    SmdpConfig sc = cfg.smdp;
    sc.seed = derive_seed(cfg.seed, 3000 + round);
    artifacts.qtable = smdp_q_learning(env, artifacts.options, sc);
    save_qtable(out_dir + "/qtable.json", artifacts.qtable);
    manifest.add("smdp", {out_dir + "/qtable.json"});
  } catch (const std::exception& e) {
    throw StageError("smdp", e.what());
  }

  // --- eval ---
  try {
    EnvContext env{map, cfg.mdp, artifacts.eval_goal};
    std::mt19937_64 rng(derive_seed(cfg.seed, 4000 + round));
    std::uniform_int_distribution<int> any_state(0, map.n_states() - 1);

    const ValueTable expert_table =
        value_iteration(map, cfg.mdp, artifacts.eval_goal);
    const Policy expert = greedy_policy(expert_table);
    std::vector<int> expert_actions(map.n_states());
    for (int s = 0; s < map.n_states(); ++s)
      expert_actions[s] = argmax_action(expert[s]);

    std::vector<Trajectory> expert_rollouts;
    for (int i = 0; i < cfg.eval_tasks; ++i) {
      Task task;
      task.goal = artifacts.eval_goal;
      task.start = any_state(rng);
      while (task.start == task.goal) task.start = any_state(rng);
      task.map_id = map.name;
      artifacts.eval_rollouts.push_back(
          rollout_meta(env, artifacts.qtable, artifacts.options, task, rng,
                       /*greedy=*/true, 0.0, cfg.smdp.option_max_steps,
                       cfg.mdp.max_episode_steps));
      expert_rollouts.push_back(rollout_flat(map, cfg.mdp, task, expert, rng,
                                             cfg.mdp.max_episode_steps));
    }
    save_rollouts(out_dir + "/eval_rollouts.jsonl", map,
                  artifacts.eval_rollouts);

    MetricReport& report = artifacts.report;
    const Visitation expert_visits =
        visitation_counts(expert_rollouts, map.n_states());
    report.ce_error = cross_entropy_metric(
        expert_actions,
        empirical_action_distribution(artifacts.eval_rollouts, map.n_states()),
        expert_visits.distribution);

    std::vector<double> v_agent(map.n_states());
    for (int s = 0; s < map.n_states(); ++s)
      v_agent[s] = artifacts.qtable.state_value(s);
    report.hinge_loss = hinge_value_loss(v_agent, expert_table.v);

    report.per_option_termination = termination_stats(artifacts.options);
    const UsageStats usage = usage_stats(artifacts.eval_rollouts);
    report.option_time_fraction = usage.option_time_fraction;
    report.median_option_duration = usage.median_duration;
    report.mean_option_duration = usage.mean_duration;
    report.success_rate = usage.success_rate;
    report.diffusion_time = diffusion_time_exact(map);
    report.diffusion_time_with_options =
        diffusion_time_monte_carlo(map, cfg.mdp, artifacts.options,
                                   cfg.eval_diffusion_samples,
                                   derive_seed(cfg.seed, 5000 + round),
                                   cfg.smdp.option_max_steps)
            .mean;
    report.visitation =
        visitation_counts(artifacts.eval_rollouts, map.n_states()).counts;

    save_report(out_dir + "/metrics.json", report);
    write_text(out_dir + "/metrics.txt", report_to_text(report));
    std::ostringstream term_csv;
    term_csv << "option,mean_psi,variance\n";
    for (std::size_t h = 0; h < report.per_option_termination.size(); ++h)
      term_csv << h << "," << report.per_option_termination[h].mean << ","
               << report.per_option_termination[h].variance << "\n";
    write_text(out_dir + "/termination.csv", term_csv.str());
    std::ostringstream usage_csv;
    usage_csv << "option_time_fraction,median_duration,mean_duration,"
                 "success_rate,ce_error,hinge_loss\n"
              << report.option_time_fraction << ","
              << report.median_option_duration << ","
              << report.mean_option_duration << "," << report.success_rate
              << "," << report.ce_error << "," << report.hinge_loss << "\n";
    write_text(out_dir + "/usage.csv", usage_csv.str());
    manifest.add("eval",
                 {out_dir + "/eval_rollouts.jsonl", out_dir + "/metrics.json",
                  out_dir + "/metrics.txt", out_dir + "/termination.csv",
                  out_dir + "/usage.csv"});
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("eval", e.what());
  }

  // --- render ---
  try {
    std::vector<std::string> files;
    std::string ascii;
    for (std::size_t h = 0; h < artifacts.options.options.size(); ++h) {
      const OptionDefinition& option = artifacts.options.options[h];
      ascii += option.label + ":\n" +
               render_policy(map, option.policy, RenderFormat::kAscii) + "\n";
      const std::string svg_path =
          out_dir + "/" + option.label + ".svg";
      write_text(svg_path,
                 render_policy(map, option.policy, RenderFormat::kSvg,
                               &option.termination));
      files.push_back(svg_path);
    }
    write_text(out_dir + "/options_ascii.txt", ascii);
    files.push_back(out_dir + "/options_ascii.txt");
    manifest.add("render", files);
  } catch (const std::exception& e) {
    throw StageError("render", e.what());
  }

  return artifacts;
}

std::vector<Trajectory> expert_stage(const ExperimentConfig& cfg,
                                     const GridMap& map,
                                     const std::string& out_dir,
                                     Manifest& manifest) {
  try {
    std::vector<Trajectory> dataset =
        make_expert_dataset(map, cfg.mdp, cfg.expert_trajectories,
                            derive_seed(cfg.seed, 0), cfg.expert_temperature);
    std::filesystem::create_directories(out_dir);
    save_trajectories(out_dir + "/trajectories.jsonl", map, dataset);
    manifest.add("expert", {out_dir + "/trajectories.jsonl"});
    return dataset;
  } catch (const std::exception& e) {
    throw StageError("expert", e.what());
  }
}

}  // namespace

PipelineArtifacts run_pipeline(const ExperimentConfig& cfg) {
  const GridMap map = load_map(cfg.map_path);
  Manifest manifest;
  const std::vector<Trajectory> dataset =
      expert_stage(cfg, map, cfg.out_dir, manifest);
  PipelineArtifacts artifacts =
      run_core(cfg, map, dataset, nullptr, 0, cfg.out_dir, manifest);
  manifest.write(cfg.out_dir, cfg);
  return artifacts;
}

std::vector<IterationArtifacts> run_iterated(const ExperimentConfig& cfg) {
  const GridMap map = load_map(cfg.map_path);
  Manifest manifest;
  std::vector<Trajectory> buffer =
      expert_stage(cfg, map, cfg.out_dir, manifest);

  // held-out expert set, never added to the buffer
  const std::vector<Trajectory> heldout = make_expert_dataset(
      map, cfg.mdp, std::max(1, cfg.expert_trajectories / 5),
      derive_seed(cfg.seed, 99), cfg.expert_temperature);

  std::vector<IterationArtifacts> iterations;
  DdoParams params;
  bool have_params = false;

  for (int iter = 0; iter < cfg.loop_iterations; ++iter) {
    const std::string iter_dir =
        cfg.out_dir + "/iter" + std::to_string(iter);

    // sample T trajectories from the buffer (0 = use everything, in order)
    std::vector<Trajectory> sample;
    if (cfg.loop_sample_size <= 0 ||
        cfg.loop_sample_size >= static_cast<int>(buffer.size())) {
      sample = buffer;
    } else {
      std::mt19937_64 rng(derive_seed(cfg.seed, 100 + iter));
      std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
      for (int i = 0; i < cfg.loop_sample_size; ++i)
        sample.push_back(buffer[pick(rng)]);
    }

    PipelineArtifacts artifacts = run_core(
        cfg, map, sample,
        cfg.loop_warm_start && have_params ? &params : nullptr,
        static_cast<std::uint64_t>(iter), iter_dir, manifest);
    params = artifacts.params;
    have_params = true;

    IterationArtifacts record;
    record.params = artifacts.params;
    record.qtable = artifacts.qtable;
    record.report = artifacts.report;
    record.heldout_log_likelihood = log_likelihood(artifacts.params, heldout);

    // rollout T' agent trajectories and grow the buffer
    if (cfg.loop_rollouts > 0) {
      EnvContext env{map, cfg.mdp, artifacts.eval_goal};
      std::mt19937_64 rng(derive_seed(cfg.seed, 200 + iter));
      std::uniform_int_distribution<int> any_state(0, map.n_states() - 1);
      for (int i = 0; i < cfg.loop_rollouts; ++i) {
        Task task;
        task.goal = artifacts.eval_goal;
        task.start = any_state(rng);
        while (task.start == task.goal) task.start = any_state(rng);
        task.map_id = map.name;
        SegmentedRollout rollout = rollout_meta(
            env, artifacts.qtable, artifacts.options, task, rng,
            /*greedy=*/false, 0.05, cfg.smdp.option_max_steps,
            cfg.mdp.max_episode_steps);
        buffer.push_back(std::move(rollout.flat));
      }
    }
    record.buffer_size = buffer.size();
    iterations.push_back(std::move(record));
  }
  manifest.write(cfg.out_dir, cfg);
  return iterations;
}

}  // namespace optforge
