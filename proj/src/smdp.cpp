#include "optforge/smdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace optforge {

namespace {

int sample_from(const ActionDist& dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double x = unit(rng);
  double cum = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    cum += dist[a];
    if (x < cum) return a;
  }
  return kNumActions - 1;
}

}  // namespace

int SmdpQTable::greedy_choice(int s) const {
  int best = 0;
  for (int c = 1; c < n_choices; ++c)
    if (at(s, c) > at(s, best)) best = c;
  return best;
}

double SmdpQTable::state_value(int s) const {
  double best = at(s, 0);
  for (int c = 1; c < n_choices; ++c) best = std::max(best, at(s, c));
  return best;
}

OptionExecution execute_option(const EnvContext& env,
                               const OptionDefinition& option, int state,
                               std::mt19937_64& rng, int option_max_steps) {
  OptionExecution exec;
  exec.states.push_back(state);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double discount = 1.0;
  int s = state;
  for (int k = 0; k < option_max_steps; ++k) {
    const int a = sample_from(option.policy[s], rng);
    const StepResult result = step(env.map, env.spec, s, a, env.goal, rng);
    exec.actions.push_back(a);
    exec.states.push_back(result.next);
    exec.discounted_return += discount * result.reward;
    discount *= env.spec.discount;
    ++exec.duration;
    s = result.next;
    if (result.done) {
      exec.reached_goal = true;
      break;
    }
    if (unit(rng) < option.termination[s]) break;
  }
  exec.next = s;
  return exec;
}

namespace {

double epsilon_at(const SmdpConfig& config, int episode) {
  const double decay_span =
      std::max(1.0, config.epsilon_decay_fraction * config.episodes);
  const double frac = std::min(1.0, episode / decay_span);
  return config.epsilon_start +
         frac * (config.epsilon_end - config.epsilon_start);
}

}  // namespace

SmdpQTable smdp_q_learning(const EnvContext& env, const OptionSet& options,
                           const SmdpConfig& config) {
  SmdpQTable table;
  table.n_states = env.map.n_states();
  table.n_choices = options.n_choices();
  table.q.assign(static_cast<std::size_t>(table.n_states) * table.n_choices,
                 0.0);
  table.visits.assign(table.q.size(), 0);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_state(0, table.n_states - 1);
  std::uniform_int_distribution<int> any_choice(0, table.n_choices - 1);

  for (int episode = 0; episode < config.episodes; ++episode) {
    const double eps = epsilon_at(config, episode);
    int s = any_state(rng);
    if (s == env.goal) continue;
    int steps = 0;
    while (s != env.goal && steps < env.spec.max_episode_steps) {
      const int choice =
          unit(rng) < eps ? any_choice(rng) : table.greedy_choice(s);
      double ret;
      int duration;
      int next;
      bool done;
      if (options.is_option(choice)) {
        const OptionExecution exec = execute_option(
            env, options.option_of(choice), s, rng, config.option_max_steps);
        ret = exec.discounted_return;
        duration = exec.duration;
        next = exec.next;
        done = exec.reached_goal;
      } else {
        const StepResult result = step(env.map, env.spec, s, choice, env.goal, rng);
        ret = result.reward;
        duration = 1;
        next = result.next;
        done = result.done;
      }
      const double bootstrap =
          done ? 0.0 : table.state_value(next);
      const double target =
          ret + std::pow(env.spec.discount, duration) * bootstrap;
      double& q = table.at(s, choice);
      q += config.learning_rate * (target - q);
      ++table.visits[static_cast<std::size_t>(s) * table.n_choices + choice];
      s = next;
      steps += duration;
    }
  }
  return table;
}

SegmentedRollout rollout_meta(const EnvContext& env, const SmdpQTable& table,
                              const OptionSet& options, const Task& task,
                              std::mt19937_64& rng, bool greedy,
                              double epsilon, int option_max_steps,
                              int episode_cap) {
  SegmentedRollout rollout;
  rollout.flat.task = task;
  rollout.flat.states.push_back(task.start);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_choice(0, table.n_choices - 1);

  int s = task.start;
  int steps = 0;
  while (s != task.goal && steps < episode_cap) {
    const bool explore = !greedy && unit(rng) < epsilon;
    const int choice = explore ? any_choice(rng) : table.greedy_choice(s);
    Segment segment;
    segment.choice = choice;
    segment.start_index = steps;
    if (options.is_option(choice)) {
      const int remaining = episode_cap - steps;
      const OptionExecution exec =
          execute_option(env, options.option_of(choice), s, rng,
                         std::min(option_max_steps, remaining));
      segment.duration = exec.duration;
      segment.discounted_return = exec.discounted_return;
      for (std::size_t k = 0; k < exec.actions.size(); ++k) {
        rollout.flat.actions.push_back(exec.actions[k]);
        rollout.flat.states.push_back(exec.states[k + 1]);
      }
      s = exec.next;
    } else {
      const StepResult result = step(env.map, env.spec, s, choice, task.goal, rng);
      segment.duration = 1;
      segment.discounted_return = result.reward;
      rollout.flat.actions.push_back(choice);
      rollout.flat.states.push_back(result.next);
      s = result.next;
    }
    steps += segment.duration;
    rollout.segments.push_back(segment);
  }
  rollout.success = s == task.goal;
  rollout.flat.truncated = !rollout.success;
  return rollout;
}

void save_rollouts(const std::string& path, const GridMap& map,
                   const std::vector<SegmentedRollout>& rollouts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const SegmentedRollout& rollout : rollouts) {
    nlohmann::json j;
    auto cell = [&](int s) {
      return nlohmann::json::array(
          {map.free_states[s].row, map.free_states[s].col});
    };
    j["start"] = cell(rollout.flat.task.start);
    j["goal"] = cell(rollout.flat.task.goal);
    nlohmann::json states = nlohmann::json::array();
    for (int s : rollout.flat.states) states.push_back(cell(s));
    j["states"] = std::move(states);
    j["actions"] = rollout.flat.actions;
    j["success"] = rollout.success;
    nlohmann::json segments = nlohmann::json::array();
    for (const Segment& seg : rollout.segments)
      segments.push_back({{"choice", seg.choice},
                          {"start", seg.start_index},
                          {"duration", seg.duration},
                          {"return", seg.discounted_return}});
    j["segments"] = std::move(segments);
    out << j.dump() << "\n";
  }
}

}  // namespace optforge
