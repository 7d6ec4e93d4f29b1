#include "optforge/gridworld.hpp"

#include <fstream>
#include <sstream>

namespace optforge {

GridMap parse_map(const std::string& text, const std::string& name) {
  if (text.empty())
    throw MapParseError(MapParseError::kEmpty, "empty map text");

  std::vector<std::string> rows;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) rows.push_back(line);
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty())
    throw MapParseError(MapParseError::kEmpty, "empty map text");

  const std::size_t width = rows[0].size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width)
      throw MapParseError(MapParseError::kRaggedRows,
                          "row " + std::to_string(r) + " has length " +
                              std::to_string(rows[r].size()) + ", expected " +
                              std::to_string(width));
  }

  GridMap map;
  map.width = static_cast<int>(width);
  map.height = static_cast<int>(rows.size());
  map.name = name;
  map.wall.assign(width * rows.size(), 0);
  map.free_index.assign(width * rows.size(), -1);

  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      const char ch = rows[r][c];
      const std::size_t idx = static_cast<std::size_t>(r) * width + c;
      if (ch == '#') {
        map.wall[idx] = 1;
      } else if (ch == '.') {
        map.free_index[idx] = static_cast<int>(map.free_states.size());
        map.free_states.push_back({r, c});
      } else {
        throw MapParseError(MapParseError::kUnknownChar,
                            std::string("unknown map character '") + ch +
                                "' at (" + std::to_string(r) + "," +
                                std::to_string(c) + ")");
      }
    }
  }

  if (map.free_states.size() < 2)
    throw MapParseError(MapParseError::kTooFewFreeCells,
                        "map needs at least 2 free cells, found " +
                            std::to_string(map.free_states.size()));
  return map;
}

GridMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  return parse_map(buf.str(), name);
}

int apply_move(const GridMap& map, int state, int action) {
  const Cell cell = map.free_states[state];
  const int r = cell.row + action_drow(action);
  const int c = cell.col + action_dcol(action);
  if (map.is_wall(r, c)) return state;
  return map.state_at(r, c);
}

StepResult step(const GridMap& map, const MdpSpec& spec, int state, int action,
                int goal, std::mt19937_64& rng) {
  int attempted = action;
  if (spec.slip_prob > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < spec.slip_prob) {
      std::uniform_int_distribution<int> other(0, kNumActions - 2);
      int pick = other(rng);
      if (pick >= action) ++pick;
      attempted = pick;
    }
  }
  StepResult result;
  result.next = apply_move(map, state, attempted);
  result.done = result.next == goal;
  result.reward = result.done ? spec.goal_reward : spec.step_reward;
  return result;
}

Task sample_task(const GridMap& map, std::mt19937_64& rng) {
  const int n = map.n_states();
  std::uniform_int_distribution<int> first(0, n - 1);
  Task task;
  task.start = first(rng);
  std::uniform_int_distribution<int> second(0, n - 2);
  task.goal = second(rng);
  if (task.goal >= task.start) ++task.goal;
  task.map_id = map.name;
  return task;
}

}  // namespace optforge
