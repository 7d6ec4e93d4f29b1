#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "optforge/expert.hpp"

using namespace optforge;

namespace {

GridMap fourroom() {
  return load_map(std::string(OPTFORGE_ASSET_DIR) + "/fourroom.map");
}

}  // namespace

TEST_CASE("value iteration on a 1x3 corridor matches the hand fixed point") {
  const GridMap map = parse_map("#####\n#...#\n#####");
  MdpSpec spec;
  spec.discount = 0.9;
  const int goal = 2;  // rightmost
  const ValueTable table = value_iteration(map, spec, goal);
  CHECK(table.v[0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(table.v[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(table.v[goal] == 0.0);  // absorbing convention
}

TEST_CASE("value iteration equals gamma^(d-1) on an open room") {
  const GridMap map = parse_map("#######\n#.....#\n#.....#\n#.....#\n#.....#\n#.....#\n#######");
  MdpSpec spec;
  const int goal = map.state_at(3, 3);
  const ValueTable table = value_iteration(map, spec, goal);
  const std::vector<int> dist = bfs_distances(map, goal);
  for (int s = 0; s < map.n_states(); ++s) {
    if (s == goal) continue;
    CHECK(table.v[s] ==
          doctest::Approx(std::pow(spec.discount, dist[s] - 1)).epsilon(1e-9));
  }
}

TEST_CASE("value iteration sweeps from zero are monotone") {
  const GridMap map = fourroom();
  MdpSpec spec;
  const int goal = 50;
  std::vector<double> prev(map.n_states(), 0.0);
  // re-run with increasing sweep budgets; each cap is a prefix of the same
  // sweep sequence, so values must be pointwise non-decreasing
  for (int sweeps = 1; sweeps <= 40; sweeps += 3) {
    ValueTable table;
    try {
      table = value_iteration(map, spec, goal, 1e-12, sweeps);
    } catch (const NoConvergence&) {
      // rebuild the partial table by hand: rerun with a huge tolerance
      table = value_iteration(map, spec, goal, 1e300, sweeps);
    }
    for (int s = 0; s < map.n_states(); ++s) {
      CHECK(table.v[s] >= prev[s] - 1e-12);
    }
    prev = table.v;
  }
}

TEST_CASE("value iteration raises NoConvergence when the budget is too small") {
  const GridMap map = fourroom();
  MdpSpec spec;
  CHECK_THROWS_AS(value_iteration(map, spec, 0, 1e-12, 2), NoConvergence);
}

TEST_CASE("greedy rollout length equals BFS distance") {
  const GridMap map = fourroom();
  MdpSpec spec;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 25; ++i) {
    const Task task = sample_task(map, rng);
    const ValueTable table = value_iteration(map, spec, task.goal);
    const Policy policy = greedy_policy(table);
    const Trajectory traj =
        rollout_flat(map, spec, task, policy, rng, spec.max_episode_steps);
    const std::vector<int> dist = bfs_distances(map, task.goal);
    CHECK(static_cast<int>(traj.actions.size()) == dist[task.start]);
    CHECK(!traj.truncated);
    CHECK(traj.states.back() == task.goal);
  }
}

TEST_CASE("start adjacent to goal gives a single-step trajectory") {
  const GridMap map = parse_map("####\n#..#\n####");
  MdpSpec spec;
  Task task{0, 1, "c"};
  const ValueTable table = value_iteration(map, spec, task.goal);
  std::mt19937_64 rng(0);
  const Trajectory traj =
      rollout_flat(map, spec, task, greedy_policy(table), rng, 100);
  CHECK(traj.actions.size() == 1);
}

TEST_CASE("softmax rollouts are reproducible under a fixed seed") {
  const GridMap map = fourroom();
  MdpSpec spec;
  Task task{3, 80, "f"};
  const ValueTable table = value_iteration(map, spec, task.goal);
  const Policy policy = softmax_policy(table, 5.0);
  std::mt19937_64 a(99), b(99);
  const Trajectory t1 = rollout_flat(map, spec, task, policy, a, 200);
  const Trajectory t2 = rollout_flat(map, spec, task, policy, b, 200);
  CHECK(t1.states == t2.states);
  CHECK(t1.actions == t2.actions);
}

TEST_CASE("handcoded doorway option routes the room toward the doorway") {
  const GridMap map =
      load_map(std::string(OPTFORGE_ASSET_DIR) + "/tworoom.map");
  const int doorway = map.state_at(3, 6);
  REQUIRE(doorway >= 0);
  const HandcodedOption handcoded = make_handcoded_option(map, doorway, "door");
  CHECK(handcoded.unreachable.empty());
  CHECK(handcoded.option.termination[doorway] == 1.0);
  const std::vector<int> dist = bfs_distances(map, doorway);
  for (int s = 0; s < map.n_states(); ++s) {
    if (s == doorway) continue;
    CHECK(handcoded.option.termination[s] == 0.0);
    const int a = argmax_action(handcoded.option.policy[s]);
    CHECK(dist[apply_move(map, s, a)] == dist[s] - 1);
  }
}

TEST_CASE("walled pocket is flagged as unreachable") {
  const GridMap map = parse_map("#####\n#.#.#\n#####");
  const HandcodedOption handcoded = make_handcoded_option(map, 0);
  REQUIRE(handcoded.unreachable.size() == 1);
  CHECK(handcoded.unreachable[0] == 1);
  // uniform fallback there
  for (int a = 0; a < kNumActions; ++a)
    CHECK(handcoded.option.policy[1][a] == doctest::Approx(0.25));
}

TEST_CASE("trajectory dataset round-trips through JSON Lines") {
  const GridMap map = fourroom();
  MdpSpec spec;
  const auto dataset = make_expert_dataset(map, spec, 20, 1234);
  const std::string path =
      (std::filesystem::temp_directory_path() / "optforge_traj_test.jsonl")
          .string();
  save_trajectories(path, map, dataset);
  const auto loaded = load_trajectories(path, map);
  REQUIRE(loaded.size() == dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    CHECK(loaded[i].states == dataset[i].states);
    CHECK(loaded[i].actions == dataset[i].actions);
    CHECK(loaded[i].task.start == dataset[i].task.start);
    CHECK(loaded[i].task.goal == dataset[i].task.goal);
    CHECK(loaded[i].seed == dataset[i].seed);
  }
  std::remove(path.c_str());
}

TEST_CASE("expert dataset generation is deterministic") {
  const GridMap map = fourroom();
  MdpSpec spec;
  const auto a = make_expert_dataset(map, spec, 5, 77);
  const auto b = make_expert_dataset(map, spec, 5, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].states == b[i].states);
    CHECK(a[i].actions == b[i].actions);
  }
}
