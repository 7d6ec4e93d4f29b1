#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "optforge/gridworld.hpp"

namespace optforge {

using ActionDist = std::array<double, kNumActions>;
// One action distribution per free state.
using Policy = std::vector<ActionDist>;

struct ValueTable {
  std::vector<double> v;                // per state
  std::vector<ActionDist> q;            // per state, per action
  double residual = 0.0;                // final Bellman residual
};

class NoConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepAnnotation {
  int option = -1;
  bool terminated = false;
};

struct Trajectory {
  std::vector<int> states;   // length T+1
  std::vector<int> actions;  // length T
  Task task;
  std::uint64_t seed = 0;
  bool truncated = false;                   // hit the step cap before the goal
  std::vector<StepAnnotation> annotations;  // per step; empty for flat experts
};

// Value iteration with the goal treated as absorbing (V(goal)=0 after the
// goal reward is collected on entry).
ValueTable value_iteration(const GridMap& map, const MdpSpec& spec, int goal,
                           double tol = 1e-10, int max_iters = 100000);

// Deterministic argmax policy; ties broken toward the lowest action index.
Policy greedy_policy(const ValueTable& table);
// softmax(beta * Q) for trajectory diversity.
Policy softmax_policy(const ValueTable& table, double beta);

int argmax_action(const ActionDist& dist);

Trajectory rollout_flat(const GridMap& map, const MdpSpec& spec,
                        const Task& task, const Policy& policy,
                        std::mt19937_64& rng, int max_steps);

struct OptionDefinition {
  Policy policy;
  std::vector<double> termination;  // per state, in [0,1]
  std::string label;
};

// BFS shortest-path distances to `target` over free cells; -1 if unreachable.
std::vector<int> bfs_distances(const GridMap& map, int target);

struct HandcodedOption {
  OptionDefinition option;
  std::vector<int> unreachable;  // states with no path to the subgoal
};

// Shortest-path option toward a subgoal: one-hot BFS-greedy policy,
// termination 1 at the subgoal and 0 elsewhere. Unreachable states get a
// uniform fallback policy and are flagged.
HandcodedOption make_handcoded_option(const GridMap& map, int subgoal,
                                      const std::string& label = "");

// n trajectories from greedy (temperature <= 0) or softmax experts, each on
// a freshly sampled random task.
std::vector<Trajectory> make_expert_dataset(const GridMap& map,
                                            const MdpSpec& spec, int n,
                                            std::uint64_t seed,
                                            double temperature = 0.0);

// JSON Lines, one trajectory per line; states serialized as [row,col].
void save_trajectories(const std::string& path, const GridMap& map,
                       const std::vector<Trajectory>& dataset);
std::vector<Trajectory> load_trajectories(const std::string& path,
                                          const GridMap& map);

}  // namespace optforge
