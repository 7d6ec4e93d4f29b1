#include "optforge/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace optforge {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string env_key(const std::string& key) {
  std::string out = "OPTFORGE_";
  for (char c : key)
    out += c == '.' ? '_' : static_cast<char>(std::toupper(c));
  return out;
}

class KvReader {
 public:
  explicit KvReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  std::string get(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (const char* env = std::getenv(env_key(key).c_str())) return env;
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }
  double get(const std::string& key, double fallback) {
    const std::string raw = get(key, std::string());
    if (raw.empty()) return fallback;
    try {
      return std::stod(raw);
    } catch (const std::exception&) {
      throw ConfigError("bad numeric value for " + key + ": " + raw);
    }
  }
  std::int64_t get(const std::string& key, std::int64_t fallback) {
    const std::string raw = get(key, std::string());
    if (raw.empty()) return fallback;
    try {
      return std::stoll(raw);
    } catch (const std::exception&) {
      throw ConfigError("bad integer value for " + key + ": " + raw);
    }
  }
  bool get(const std::string& key, bool fallback) {
    const std::string raw = get(key, std::string());
    if (raw.empty()) return fallback;
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw ConfigError("bad boolean value for " + key + ": " + raw);
  }

  void check_unknown() const {
    for (const auto& [key, value] : kv_)
      if (!seen_.count(key)) throw ConfigError("unknown config key: " + key);
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  KvReader r(kv);

  cfg.map_path = r.get("map", cfg.map_path);
  cfg.mdp.slip_prob = r.get("slip_prob", cfg.mdp.slip_prob);
  cfg.mdp.goal_reward = r.get("goal_reward", cfg.mdp.goal_reward);
  cfg.mdp.step_reward = r.get("step_reward", cfg.mdp.step_reward);
  cfg.mdp.discount = r.get("discount", cfg.mdp.discount);
  cfg.mdp.max_episode_steps = static_cast<int>(
      r.get("max_episode_steps", std::int64_t{cfg.mdp.max_episode_steps}));

  cfg.expert_trajectories = static_cast<int>(
      r.get("expert.n_trajectories", std::int64_t{cfg.expert_trajectories}));
  cfg.expert_temperature = r.get("expert.temperature", cfg.expert_temperature);

  cfg.ddo.n_options =
      static_cast<int>(r.get("ddo.n_options", std::int64_t{cfg.ddo.n_options}));
  cfg.ddo.learning_rate = r.get("ddo.learning_rate", cfg.ddo.learning_rate);
  cfg.ddo.epochs =
      static_cast<int>(r.get("ddo.epochs", std::int64_t{cfg.ddo.epochs}));
  cfg.ddo.minibatch =
      static_cast<int>(r.get("ddo.minibatch", std::int64_t{cfg.ddo.minibatch}));
  cfg.ddo.lambda = r.get("ddo.lambda", cfg.ddo.lambda);
  cfg.ddo.alpha = r.get("ddo.alpha", cfg.ddo.alpha);
  cfg.ddo.init_scale = r.get("ddo.init_scale", cfg.ddo.init_scale);
  const std::string rho = r.get("ddo.rho", std::string("expert-visitation"));
  if (rho == "expert-visitation") {
    cfg.ddo.rho = RhoMode::kExpertVisitation;
  } else if (rho == "uniform") {
    cfg.ddo.rho = RhoMode::kUniform;
  } else {
    throw ConfigError("ddo.rho must be expert-visitation or uniform, got " + rho);
  }

  cfg.smdp.episodes =
      static_cast<int>(r.get("smdp.episodes", std::int64_t{cfg.smdp.episodes}));
  cfg.smdp.learning_rate = r.get("smdp.learning_rate", cfg.smdp.learning_rate);
  cfg.smdp.epsilon_start = r.get("smdp.epsilon_start", cfg.smdp.epsilon_start);
  cfg.smdp.epsilon_end = r.get("smdp.epsilon_end", cfg.smdp.epsilon_end);
  cfg.smdp.epsilon_decay_fraction =
      r.get("smdp.epsilon_decay_fraction", cfg.smdp.epsilon_decay_fraction);
  cfg.smdp.option_max_steps = static_cast<int>(
      r.get("smdp.option_max_steps", std::int64_t{cfg.smdp.option_max_steps}));

  cfg.eval_tasks =
      static_cast<int>(r.get("eval.n_tasks", std::int64_t{cfg.eval_tasks}));
  cfg.eval_diffusion_samples = static_cast<int>(r.get(
      "eval.diffusion_samples", std::int64_t{cfg.eval_diffusion_samples}));

  cfg.loop_iterations = static_cast<int>(
      r.get("loop.iterations", std::int64_t{cfg.loop_iterations}));
  cfg.loop_sample_size = static_cast<int>(
      r.get("loop.sample_size", std::int64_t{cfg.loop_sample_size}));
  cfg.loop_rollouts =
      static_cast<int>(r.get("loop.rollouts", std::int64_t{cfg.loop_rollouts}));
  cfg.loop_warm_start = r.get("loop.warm_start", cfg.loop_warm_start);

  cfg.seed = static_cast<std::uint64_t>(
      r.get("seed", static_cast<std::int64_t>(cfg.seed)));
  cfg.out_dir = r.get("out", cfg.out_dir);

  r.check_unknown();

  if (!(cfg.mdp.discount > 0.0 && cfg.mdp.discount < 1.0))
    throw ConfigError("discount must lie in (0,1)");
  if (cfg.mdp.slip_prob < 0.0 || cfg.mdp.slip_prob >= 1.0)
    throw ConfigError("slip_prob must lie in [0,1)");
  if (!(cfg.ddo.alpha > 0.0) || cfg.ddo.alpha > 1.0)
    throw ConfigError("ddo.alpha must lie in (0,1]");
  if (cfg.ddo.lambda < 0.0) throw ConfigError("ddo.lambda must be >= 0");
  if (!(cfg.ddo.learning_rate > 0.0))
    throw ConfigError("ddo.learning_rate must be > 0");
  if (cfg.loop_iterations < 1) throw ConfigError("loop.iterations must be >= 1");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key = value: " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return parse_config(kv);
}

std::map<std::string, std::string> config_to_kv(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  auto num = [](double x) {
    std::ostringstream out;
    out.precision(17);
    out << x;
    return out.str();
  };
  kv["map"] = cfg.map_path;
  kv["slip_prob"] = num(cfg.mdp.slip_prob);
  kv["goal_reward"] = num(cfg.mdp.goal_reward);
  kv["step_reward"] = num(cfg.mdp.step_reward);
  kv["discount"] = num(cfg.mdp.discount);
  kv["max_episode_steps"] = std::to_string(cfg.mdp.max_episode_steps);
  kv["expert.n_trajectories"] = std::to_string(cfg.expert_trajectories);
  kv["expert.temperature"] = num(cfg.expert_temperature);
  kv["ddo.n_options"] = std::to_string(cfg.ddo.n_options);
  kv["ddo.learning_rate"] = num(cfg.ddo.learning_rate);
  kv["ddo.epochs"] = std::to_string(cfg.ddo.epochs);
  kv["ddo.minibatch"] = std::to_string(cfg.ddo.minibatch);
  kv["ddo.lambda"] = num(cfg.ddo.lambda);
  kv["ddo.alpha"] = num(cfg.ddo.alpha);
  kv["ddo.init_scale"] = num(cfg.ddo.init_scale);
  kv["ddo.rho"] = cfg.ddo.rho == RhoMode::kUniform ? "uniform" : "expert-visitation";
  kv["smdp.episodes"] = std::to_string(cfg.smdp.episodes);
  kv["smdp.learning_rate"] = num(cfg.smdp.learning_rate);
  kv["smdp.epsilon_start"] = num(cfg.smdp.epsilon_start);
  kv["smdp.epsilon_end"] = num(cfg.smdp.epsilon_end);
  kv["smdp.epsilon_decay_fraction"] = num(cfg.smdp.epsilon_decay_fraction);
  kv["smdp.option_max_steps"] = std::to_string(cfg.smdp.option_max_steps);
  kv["eval.n_tasks"] = std::to_string(cfg.eval_tasks);
  kv["eval.diffusion_samples"] = std::to_string(cfg.eval_diffusion_samples);
  kv["loop.iterations"] = std::to_string(cfg.loop_iterations);
  kv["loop.sample_size"] = std::to_string(cfg.loop_sample_size);
  kv["loop.rollouts"] = std::to_string(cfg.loop_rollouts);
  kv["loop.warm_start"] = cfg.loop_warm_start ? "true" : "false";
  kv["seed"] = std::to_string(cfg.seed);
  kv["out"] = cfg.out_dir;
  return kv;
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  for (const auto& [key, value] : config_to_kv(cfg))
    out << key << " = " << value << "\n";
}

}  // namespace optforge
