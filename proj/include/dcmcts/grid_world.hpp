#pragma once

#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcmcts {

using Rng = std::mt19937_64;

struct StateId {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const StateId&, const StateId&) = default;
};

std::string to_string(StateId s);

enum class Cell : std::uint8_t { Wall, Empty };

/// Rectangular grid of wall/empty cells.
///
/// Empty cells are indexed densely in row-major order; that index is what
/// the search machinery uses internally as a compact state handle.
class Maze {
 public:
  Maze() = default;
  Maze(int width, int height, std::vector<Cell> cells, double density = 0.0,
       std::uint64_t seed = 0);

  /// Fully open grid (no walls anywhere, including the border).
  static Maze open(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  double density() const { return density_; }
  std::uint64_t seed() const { return seed_; }

  bool in_bounds(StateId s) const {
    return s.row >= 0 && s.row < height_ && s.col >= 0 && s.col < width_;
  }
  bool is_empty(StateId s) const {
    return in_bounds(s) && cells_[offset(s)] == Cell::Empty;
  }
  Cell at(StateId s) const { return cells_[offset(s)]; }
  const std::vector<Cell>& cells() const { return cells_; }

  const std::vector<StateId>& empty_cells() const { return empty_; }
  int num_empty() const { return static_cast<int>(empty_.size()); }
  /// Dense index of an empty cell, or -1 for walls / out of bounds.
  int index_of(StateId s) const {
    return in_bounds(s) ? index_[offset(s)] : -1;
  }
  StateId cell(int index) const { return empty_[index]; }

  /// Empty 4-neighbors in the order up, left, right, down.
  std::vector<StateId> empty_neighbors(StateId s) const;
  int num_walls() const;

  friend bool operator==(const Maze& a, const Maze& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.cells_ == b.cells_;
  }

 private:
  std::size_t offset(StateId s) const {
    return static_cast<std::size_t>(s.row) * width_ + s.col;
  }
  void build_index();

  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
  double density_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<StateId> empty_;
  std::vector<int> index_;
};

struct Task {
  Maze maze;
  StateId start;
  StateId goal;
};

enum class CellLabel : std::uint8_t { Empty = 0, Wall = 1, Start = 2, Goal = 3 };

/// Categorical feature map of a task (the maze with start and goal marked).
struct TaskEncoding {
  int width = 0;
  int height = 0;
  std::vector<CellLabel> labels;  // row-major

  CellLabel at(StateId s) const { return labels[s.row * width + s.col]; }
  friend bool operator==(const TaskEncoding&, const TaskEncoding&) = default;
};

struct Trajectory {
  std::vector<StateId> states;
  bool reached_goal = false;
  int steps = 0;
};

bool adjacent(StateId a, StateId b);

/// Procedural maze: recursive-backtracker perfect maze, then a seeded
/// subset of interior walls is knocked down so that round(density * W)
/// walls remain, W being the interior wall count of the perfect maze.
/// The border is always wall.
Maze generate_maze(int width, int height, double density, std::uint64_t seed);

/// Start and goal drawn uniformly without replacement from empty cells.
Task sample_task(const Maze& maze, std::uint64_t seed);

void validate_task(const Task& task);

TaskEncoding encode_task(const Task& task);
Task decode_task(const TaskEncoding& encoding);

/// True iff the empty cells form one 4-connected component.
bool is_connected(const Maze& maze);

/// Goal-conditioned low-level controller together with its value oracle.
class LowLevelPolicy {
 public:
  virtual ~LowLevelPolicy() = default;
  /// Probability of reaching `subgoal` from `s` when conditioned on it.
  virtual double value(StateId s, StateId subgoal) const = 0;
  virtual StateId step(Rng& rng, StateId s, StateId subgoal) const = 0;
};

double low_level_value_pi0(const Maze& maze, StateId s, StateId s_prime);
StateId low_level_step_pi0(Rng& rng, const Maze& maze, StateId s, StateId subgoal);

/// The hard-coded myopic controller: succeeds in one step when the sub-goal
/// is adjacent, otherwise wanders to a random empty neighbor.
class MyopicPolicy final : public LowLevelPolicy {
 public:
  explicit MyopicPolicy(const Maze& maze) : maze_(&maze) {}
  double value(StateId s, StateId subgoal) const override {
    return low_level_value_pi0(*maze_, s, subgoal);
  }
  StateId step(Rng& rng, StateId s, StateId subgoal) const override {
    return low_level_step_pi0(rng, *maze_, s, subgoal);
  }

 private:
  const Maze* maze_;
};

/// Runs the low-level policy conditioned on successive sub-goals of `plan`.
/// `plan` starts at the task start and ends at its goal.
Trajectory execute_plan(Rng& rng, const Task& task, std::span<const StateId> plan,
                        int step_limit, const LowLevelPolicy& policy);
Trajectory execute_plan(Rng& rng, const Task& task, std::span<const StateId> plan,
                        int step_limit);

// Text format: `maze v1 <width> <height>` then one row per line using
// '#' wall, '.' empty, 'S' start, 'G' goal.
std::string serialize_maze(const Maze& maze);
std::string serialize_task(const Task& task);

struct ParsedMaze {
  Maze maze;
  std::vector<StateId> starts;
  std::vector<StateId> goals;
};
ParsedMaze parse_maze_text(std::string_view text);

}  // namespace dcmcts
