#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "optforge/ddo.hpp"
#include "optforge/gridworld.hpp"
#include "optforge/smdp.hpp"

namespace optforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key-value experiment configuration. File format: one `key = value`
// per line, '#' comments. Environment variables OPTFORGE_<KEY> (dots
// replaced by underscores, uppercased) override file values.
struct ExperimentConfig {
  std::string map_path = "assets/fourroom.map";
  MdpSpec mdp;

  int expert_trajectories = 200;
  double expert_temperature = 0.0;  // <= 0 means greedy

  TrainConfig ddo;

  SmdpConfig smdp;

  int eval_tasks = 100;
  int eval_diffusion_samples = 2000;

  int loop_iterations = 1;   // N
  int loop_sample_size = 0;  // T; 0 = whole buffer
  int loop_rollouts = 0;     // T'
  bool loop_warm_start = true;

  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

ExperimentConfig parse_config(const std::map<std::string, std::string>& kv);
ExperimentConfig load_config(const std::string& path);
std::map<std::string, std::string> config_to_kv(const ExperimentConfig& cfg);
void save_config(const std::string& path, const ExperimentConfig& cfg);

}  // namespace optforge
