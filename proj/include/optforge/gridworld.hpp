#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace optforge {

// Actions are ordered N,E,S,W; this order is part of the file formats.
enum Action : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
constexpr int kNumActions = 4;

inline int action_drow(int a) {
  static constexpr int d[4] = {-1, 0, 1, 0};
  return d[a];
}
inline int action_dcol(int a) {
  static constexpr int d[4] = {0, 1, 0, -1};
  return d[a];
}
inline char action_arrow(int a) {
  static constexpr char c[4] = {'^', '>', 'v', '<'};
  return c[a];
}

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell& o) const { return row == o.row && col == o.col; }
};

class MapParseError : public std::runtime_error {
 public:
  enum Kind { kRaggedRows, kUnknownChar, kTooFewFreeCells, kEmpty };
  MapParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Rectangular maze. Cells are either Wall ('#') or Free ('.').
// free_states is the row-major enumeration of free cells; all state
// indices elsewhere in the library refer to positions in this list.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> wall;  // row-major, 1 = wall
  std::vector<Cell> free_states;
  std::vector<int> free_index;  // row-major cell -> state index, -1 for walls
  std::string name;

  int n_states() const { return static_cast<int>(free_states.size()); }
  bool is_wall(int r, int c) const {
    return r < 0 || r >= height || c < 0 || c >= width ||
           wall[static_cast<std::size_t>(r) * width + c] != 0;
  }
  int state_at(int r, int c) const {
    if (r < 0 || r >= height || c < 0 || c >= width) return -1;
    return free_index[static_cast<std::size_t>(r) * width + c];
  }
};

GridMap parse_map(const std::string& text, const std::string& name = "");
GridMap load_map(const std::string& path);

// Transition/reward semantics shared by all modules.
struct MdpSpec {
  double slip_prob = 0.0;
  double goal_reward = 1.0;
  double step_reward = 0.0;
  double discount = 0.99;
  int max_episode_steps = 400;
};

struct Task {
  int start = 0;  // state index
  int goal = 0;
  std::string map_id;
};

struct StepResult {
  int next = 0;
  double reward = 0.0;
  bool done = false;
};

// Deterministic move; blocked moves (wall or off-grid) stay in place.
int apply_move(const GridMap& map, int state, int action);

// One environment transition. With probability slip_prob one of the
// other three actions is attempted instead of `action`.
StepResult step(const GridMap& map, const MdpSpec& spec, int state, int action,
                int goal, std::mt19937_64& rng);

// Start and goal drawn uniformly without replacement from free states.
Task sample_task(const GridMap& map, std::mt19937_64& rng);

}  // namespace optforge
