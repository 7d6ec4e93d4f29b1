#include "optforge/expert.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include <json.hpp>

namespace optforge {

namespace {

// Expected one-step backup with the goal absorbing at value 0.
double backup(const GridMap& map, const MdpSpec& spec,
              const std::vector<double>& v, int goal, int s, int a) {
  auto branch = [&](int attempted) {
    const int next = apply_move(map, s, attempted);
    if (next == goal) return spec.goal_reward;
    return spec.step_reward + spec.discount * v[next];
  };
  if (spec.slip_prob <= 0.0) return branch(a);
  double value = (1.0 - spec.slip_prob) * branch(a);
  for (int other = 0; other < kNumActions; ++other) {
    if (other == a) continue;
    value += spec.slip_prob / (kNumActions - 1) * branch(other);
  }
  return value;
}

}  // namespace

ValueTable value_iteration(const GridMap& map, const MdpSpec& spec, int goal,
                           double tol, int max_iters) {
  const int n = map.n_states();
  ValueTable table;
  table.v.assign(n, 0.0);
  table.q.assign(n, ActionDist{});

  double residual = 0.0;
  bool converged = false;
  for (int iter = 0; iter < max_iters; ++iter) {
    residual = 0.0;
    for (int s = 0; s < n; ++s) {
      if (s == goal) continue;  // absorbing, V(goal)=0
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < kNumActions; ++a) {
        table.q[s][a] = backup(map, spec, table.v, goal, s, a);
        best = std::max(best, table.q[s][a]);
      }
      residual = std::max(residual, std::abs(best - table.v[s]));
      table.v[s] = best;
    }
    if (residual < tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NoConvergence("value iteration residual " + std::to_string(residual) +
                        " after " + std::to_string(max_iters) + " iterations");
  table.residual = residual;
  return table;
}

int argmax_action(const ActionDist& dist) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (dist[a] > dist[best]) best = a;
  return best;
}

Policy greedy_policy(const ValueTable& table) {
  Policy policy(table.q.size());
  for (std::size_t s = 0; s < table.q.size(); ++s) {
    policy[s] = ActionDist{0.0, 0.0, 0.0, 0.0};
    policy[s][argmax_action(table.q[s])] = 1.0;
  }
  return policy;
}

Policy softmax_policy(const ValueTable& table, double beta) {
  Policy policy(table.q.size());
  for (std::size_t s = 0; s < table.q.size(); ++s) {
    double mx = *std::max_element(table.q[s].begin(), table.q[s].end());
    double total = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      policy[s][a] = std::exp(beta * (table.q[s][a] - mx));
      total += policy[s][a];
    }
    for (int a = 0; a < kNumActions; ++a) policy[s][a] /= total;
  }
  return policy;
}

namespace {

int sample_action(const ActionDist& dist, std::mt19937_64& rng) {
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

Trajectory rollout_flat(const GridMap& map, const MdpSpec& spec,
                        const Task& task, const Policy& policy,
                        std::mt19937_64& rng, int max_steps) {
  Trajectory traj;
  traj.task = task;
  int s = task.start;
  traj.states.push_back(s);
  for (int t = 0; t < max_steps; ++t) {
    const int a = sample_action(policy[s], rng);
    const StepResult result = step(map, spec, s, a, task.goal, rng);
    traj.actions.push_back(a);
    traj.states.push_back(result.next);
    s = result.next;
    if (result.done) return traj;
  }
  traj.truncated = true;
  return traj;
}

std::vector<int> bfs_distances(const GridMap& map, int target) {
  std::vector<int> dist(map.n_states(), -1);
  std::deque<int> queue{target};
  dist[target] = 0;
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    for (int a = 0; a < kNumActions; ++a) {
      const int next = apply_move(map, s, a);
      if (dist[next] < 0) {
        dist[next] = dist[s] + 1;
        queue.push_back(next);
      }
    }
  }
  return dist;
}

HandcodedOption make_handcoded_option(const GridMap& map, int subgoal,
                                      const std::string& label) {
  const std::vector<int> dist = bfs_distances(map, subgoal);
  HandcodedOption result;
  result.option.label = label.empty() ? "handcoded" : label;
  result.option.policy.assign(map.n_states(), ActionDist{});
  result.option.termination.assign(map.n_states(), 0.0);
  result.option.termination[subgoal] = 1.0;

  for (int s = 0; s < map.n_states(); ++s) {
    if (dist[s] < 0) {
      result.unreachable.push_back(s);
      result.option.policy[s].fill(1.0 / kNumActions);
      continue;
    }
    int best = 0;
    for (int a = 0; a < kNumActions; ++a) {
      const int next = apply_move(map, s, a);
      if (dist[next] >= 0 && dist[next] == dist[s] - 1) {
        best = a;
        break;  // lowest action index wins ties
      }
    }
    result.option.policy[s] = ActionDist{0.0, 0.0, 0.0, 0.0};
    result.option.policy[s][best] = 1.0;
  }
  return result;
}

std::vector<Trajectory> make_expert_dataset(const GridMap& map,
                                            const MdpSpec& spec, int n,
                                            std::uint64_t seed,
                                            double temperature) {
  std::vector<Trajectory> dataset;
  dataset.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t traj_seed = seed + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(traj_seed);
    Task task = sample_task(map, rng);
    ValueTable table = value_iteration(map, spec, task.goal);
    Policy policy = temperature > 0.0 ? softmax_policy(table, 1.0 / temperature)
                                      : greedy_policy(table);
    Trajectory traj =
        rollout_flat(map, spec, task, policy, rng, spec.max_episode_steps);
    traj.seed = traj_seed;
    dataset.push_back(std::move(traj));
  }
  return dataset;
}

void save_trajectories(const std::string& path, const GridMap& map,
                       const std::vector<Trajectory>& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Trajectory& traj : dataset) {
    nlohmann::json j;
    j["map_id"] = traj.task.map_id;
    j["seed"] = traj.seed;
    auto cell = [&](int s) {
      return nlohmann::json::array(
          {map.free_states[s].row, map.free_states[s].col});
    };
    j["start"] = cell(traj.task.start);
    j["goal"] = cell(traj.task.goal);
    nlohmann::json states = nlohmann::json::array();
    for (int s : traj.states) states.push_back(cell(s));
    j["states"] = std::move(states);
    j["actions"] = traj.actions;
    if (traj.truncated) j["truncated"] = true;
    if (!traj.annotations.empty()) {
      nlohmann::json ann = nlohmann::json::array();
      for (const StepAnnotation& a : traj.annotations)
        ann.push_back({{"option", a.option}, {"terminated", a.terminated}});
      j["annotations"] = std::move(ann);
    }
    out << j.dump() << "\n";
  }
}

std::vector<Trajectory> load_trajectories(const std::string& path,
                                          const GridMap& map) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Trajectory> dataset;
  std::string line;
  auto to_state = [&](const nlohmann::json& rc) {
    const int s = map.state_at(rc.at(0).get<int>(), rc.at(1).get<int>());
    if (s < 0) throw std::runtime_error("trajectory cell is not free in map");
    return s;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Trajectory traj;
    traj.task.map_id = j.value("map_id", "");
    traj.seed = j.value("seed", std::uint64_t{0});
    traj.task.start = to_state(j.at("start"));
    traj.task.goal = to_state(j.at("goal"));
    for (const auto& rc : j.at("states")) traj.states.push_back(to_state(rc));
    traj.actions = j.at("actions").get<std::vector<int>>();
    traj.truncated = j.value("truncated", false);
    if (j.contains("annotations")) {
      for (const auto& a : j["annotations"])
        traj.annotations.push_back(
            {a.at("option").get<int>(), a.at("terminated").get<bool>()});
    }
    dataset.push_back(std::move(traj));
  }
  return dataset;
}

}  // namespace optforge
