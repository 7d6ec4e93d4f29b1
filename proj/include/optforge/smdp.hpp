#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "optforge/expert.hpp"
#include "optforge/gridworld.hpp"

namespace optforge {

// Choices are enumerated primitives first (0..3), then options in label
// order as stored.
struct OptionSet {
  std::vector<OptionDefinition> options;
  bool primitives_included = true;

  int n_choices() const {
    return kNumActions + static_cast<int>(options.size());
  }
  bool is_option(int choice) const { return choice >= kNumActions; }
  const OptionDefinition& option_of(int choice) const {
    return options[choice - kNumActions];
  }
};

struct EnvContext {
  const GridMap& map;
  const MdpSpec& spec;
  int goal;
};

struct OptionExecution {
  int next = 0;
  double discounted_return = 0.0;
  int duration = 0;
  std::vector<int> states;   // trace, duration+1 entries
  std::vector<int> actions;  // duration entries
  bool reached_goal = false;
};

// Runs one option until its termination fires, the goal is reached, or
// option_max_steps is hit. Always takes at least one step.
OptionExecution execute_option(const EnvContext& env,
                               const OptionDefinition& option, int state,
                               std::mt19937_64& rng, int option_max_steps);

struct SmdpQTable {
  int n_states = 0;
  int n_choices = 0;
  std::vector<double> q;             // [state * n_choices + choice]
  std::vector<std::int64_t> visits;  // same layout

  double& at(int s, int c) { return q[static_cast<std::size_t>(s) * n_choices + c]; }
  double at(int s, int c) const { return q[static_cast<std::size_t>(s) * n_choices + c]; }
  int greedy_choice(int s) const;
  double state_value(int s) const;
};

struct SmdpConfig {
  int episodes = 20000;
  double learning_rate = 0.5;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // linear decay over this share of episodes
  int option_max_steps = 20;
  std::uint64_t seed = 0;
};

// Tabular SMDP Q-learning over primitives and options with a fixed goal.
// Starts are sampled uniformly from free states each episode.
SmdpQTable smdp_q_learning(const EnvContext& env, const OptionSet& options,
                           const SmdpConfig& config);

struct Segment {
  int choice = 0;
  int start_index = 0;  // offset into the flat trajectory
  int duration = 0;
  double discounted_return = 0.0;
};

struct SegmentedRollout {
  Trajectory flat;
  std::vector<Segment> segments;
  bool success = false;
};

// Greedy (or epsilon-greedy) rollout of the meta-policy with segment
// bookkeeping. Options interrupted by the episode cap still record their
// accrued return and duration.
SegmentedRollout rollout_meta(const EnvContext& env, const SmdpQTable& table,
                              const OptionSet& options, const Task& task,
                              std::mt19937_64& rng, bool greedy,
                              double epsilon, int option_max_steps,
                              int episode_cap);

void save_rollouts(const std::string& path, const GridMap& map,
                   const std::vector<SegmentedRollout>& rollouts);

}  // namespace optforge
