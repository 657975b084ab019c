#include "dcmcts/grid_world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

namespace {

constexpr std::array<StateId, 4> kSteps{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

StateId shifted(StateId s, StateId d, int scale = 1) {
  return {s.row + scale * d.row, s.col + scale * d.col};
}

}  // namespace

std::string to_string(StateId s) {
  return std::to_string(s.row) + "," + std::to_string(s.col);
}

Maze::Maze(int width, int height, std::vector<Cell> cells, double density,
           std::uint64_t seed)
    : width_(width), height_(height), cells_(std::move(cells)), density_(density),
      seed_(seed) {
  if (width <= 0 || height <= 0 ||
      cells_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("maze: cell count does not match dimensions");
  }
  build_index();
}

Maze Maze::open(int width, int height) {
  return Maze(width, height,
              std::vector<Cell>(static_cast<std::size_t>(width) * height, Cell::Empty));
}

void Maze::build_index() {
  empty_.clear();
  index_.assign(cells_.size(), -1);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (cells_[offset({r, c})] == Cell::Empty) {
        index_[offset({r, c})] = static_cast<int>(empty_.size());
        empty_.push_back({r, c});
      }
    }
  }
}

std::vector<StateId> Maze::empty_neighbors(StateId s) const {
  std::vector<StateId> out;
  out.reserve(4);
  for (const auto& d : kSteps) {
    StateId n = shifted(s, d);
    if (is_empty(n)) out.push_back(n);
  }
  return out;
}

int Maze::num_walls() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), Cell::Wall));
}

bool adjacent(StateId a, StateId b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

bool is_connected(const Maze& maze) {
  const int n = maze.num_empty();
  if (n == 0) return true;
  std::vector<char> seen(n, 0);
  std::vector<StateId> stack{maze.cell(0)};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    StateId s = stack.back();
    stack.pop_back();
    for (StateId nb : maze.empty_neighbors(s)) {
      int i = maze.index_of(nb);
      if (!seen[i]) {
        seen[i] = 1;
        ++reached;
        stack.push_back(nb);
      }
    }
  }
  return reached == n;
}

Maze generate_maze(int width, int height, double density, std::uint64_t seed) {
  if (width < 3 || height < 3) {
    throw std::invalid_argument("generate_maze: width and height must be >= 3");
  }
  if (!(density >= 0.0 && density <= 1.0)) {
    throw std::invalid_argument("generate_maze: density must lie in [0, 1]");
  }
  if ((width - 2) * (height - 2) < 2) {
    throw std::invalid_argument(
        "generate_maze: dimensions too small to host two distinct empty cells");
  }

  Rng rng(seed);
  std::vector<Cell> cells(static_cast<std::size_t>(width) * height, Cell::Wall);
  auto at = [&](StateId s) -> Cell& { return cells[s.row * width + s.col]; };
  auto interior = [&](StateId s) {
    return s.row >= 1 && s.row <= height - 2 && s.col >= 1 && s.col <= width - 2;
  };

  // Recursive backtracker over the odd lattice.
  std::vector<StateId> stack{{1, 1}};
  at({1, 1}) = Cell::Empty;
  while (!stack.empty()) {
    StateId cur = stack.back();
    std::array<StateId, 4> dirs = kSteps;
    std::shuffle(dirs.begin(), dirs.end(), rng);
    bool moved = false;
    for (const auto& d : dirs) {
      StateId next = shifted(cur, d, 2);
      if (interior(next) && at(next) == Cell::Wall) {
        at(shifted(cur, d)) = Cell::Empty;
        at(next) = Cell::Empty;
        stack.push_back(next);
        moved = true;
        break;
      }
    }
    if (!moved) stack.pop_back();
  }

  std::vector<StateId> walls;
  for (int r = 1; r <= height - 2; ++r) {
    for (int c = 1; c <= width - 2; ++c) {
      if (at({r, c}) == Cell::Wall) walls.push_back({r, c});
    }
  }
  const int perfect_walls = static_cast<int>(walls.size());
  int keep = static_cast<int>(std::lround(density * perfect_walls));
  // At least two empty cells must survive (e.g. 3x4 grids).
  keep = std::min(keep, (width - 2) * (height - 2) - 2);

  // Knock down walls in shuffled order, only ever opening a cell that touches
  // the already-open region so that connectedness is preserved.
  std::shuffle(walls.begin(), walls.end(), rng);
  int to_remove = perfect_walls - keep;
  while (to_remove > 0) {
    bool progress = false;
    for (auto& w : walls) {
      if (to_remove == 0) break;
      if (at(w) != Cell::Wall) continue;
      bool touches = false;
      for (const auto& d : kSteps) {
        StateId n = shifted(w, d);
        if (interior(n) && at(n) == Cell::Empty) touches = true;
      }
      if (touches) {
        at(w) = Cell::Empty;
        --to_remove;
        progress = true;
      }
    }
    if (!progress) break;
  }

  Maze maze(width, height, std::move(cells), density, seed);
  if (!is_connected(maze)) {
    throw std::logic_error("generate_maze: produced a disconnected maze");
  }
  return maze;
}

Task sample_task(const Maze& maze, std::uint64_t seed) {
  const int n = maze.num_empty();
  if (n < 2) {
    throw std::invalid_argument("sample_task: maze has fewer than two empty cells");
  }
  Rng rng(seed);
  std::uniform_int_distribution<int> first(0, n - 1);
  std::uniform_int_distribution<int> second(0, n - 2);
  int a = first(rng);
  int b = second(rng);
  if (b >= a) ++b;
  return Task{maze, maze.cell(a), maze.cell(b)};
}

void validate_task(const Task& task) {
  if (!task.maze.is_empty(task.start) || !task.maze.is_empty(task.goal)) {
    throw std::invalid_argument("task: start and goal must be empty cells");
  }
  if (task.start == task.goal) {
    throw std::invalid_argument("task: start and goal must differ");
  }
}

TaskEncoding encode_task(const Task& task) {
  const Maze& m = task.maze;
  TaskEncoding enc{m.width(), m.height(), {}};
  enc.labels.reserve(m.cells().size());
  for (Cell c : m.cells()) {
    enc.labels.push_back(c == Cell::Wall ? CellLabel::Wall : CellLabel::Empty);
  }
  enc.labels[task.start.row * m.width() + task.start.col] = CellLabel::Start;
  enc.labels[task.goal.row * m.width() + task.goal.col] = CellLabel::Goal;
  return enc;
}

Task decode_task(const TaskEncoding& enc) {
  std::vector<Cell> cells;
  cells.reserve(enc.labels.size());
  StateId start{-1, -1};
  StateId goal{-1, -1};
  int starts = 0;
  int goals = 0;
  for (int i = 0; i < static_cast<int>(enc.labels.size()); ++i) {
    CellLabel l = enc.labels[i];
    cells.push_back(l == CellLabel::Wall ? Cell::Wall : Cell::Empty);
    StateId s{i / enc.width, i % enc.width};
    if (l == CellLabel::Start) start = s, ++starts;
    if (l == CellLabel::Goal) goal = s, ++goals;
  }
  if (starts != 1 || goals != 1) {
    throw std::invalid_argument("decode_task: need exactly one start and one goal");
  }
  return Task{Maze(enc.width, enc.height, std::move(cells)), start, goal};
}

double low_level_value_pi0(const Maze& maze, StateId s, StateId s_prime) {
  if (!maze.is_empty(s) || !maze.is_empty(s_prime)) {
    throw std::invalid_argument("low-level value queried on a wall cell (invalid sub-goal " +
                                to_string(s) + " -> " + to_string(s_prime) + ")");
  }
  return (s == s_prime || adjacent(s, s_prime)) ? 1.0 : 0.0;
}

StateId low_level_step_pi0(Rng& rng, const Maze& maze, StateId s, StateId subgoal) {
  if (adjacent(s, subgoal) && maze.is_empty(subgoal)) return subgoal;
  auto nbs = maze.empty_neighbors(s);
  if (nbs.empty()) return s;
  std::uniform_int_distribution<std::size_t> pick(0, nbs.size() - 1);
  return nbs[pick(rng)];
}

Trajectory execute_plan(Rng& rng, const Task& task, std::span<const StateId> plan,
                        int step_limit, const LowLevelPolicy& policy) {
  Trajectory traj;
  StateId pos = task.start;
  traj.states.push_back(pos);
  if (pos == task.goal) {
    traj.reached_goal = true;
    return traj;
  }
  std::size_t next = 0;
  while (next < plan.size() && plan[next] == pos) ++next;
  while (traj.steps < step_limit && next < plan.size()) {
    pos = policy.step(rng, pos, plan[next]);
    ++traj.steps;
    traj.states.push_back(pos);
    if (pos == task.goal) {
      traj.reached_goal = true;
      break;
    }
    while (next < plan.size() && plan[next] == pos) ++next;
  }
  return traj;
}

Trajectory execute_plan(Rng& rng, const Task& task, std::span<const StateId> plan,
                        int step_limit) {
  MyopicPolicy pi0(task.maze);
  return execute_plan(rng, task, plan, step_limit, pi0);
}

namespace {

std::string serialize_grid(const Maze& maze, const StateId* start, const StateId* goal) {
  std::ostringstream out;
  out << "maze v1 " << maze.width() << ' ' << maze.height() << '\n';
  for (int r = 0; r < maze.height(); ++r) {
    for (int c = 0; c < maze.width(); ++c) {
      StateId s{r, c};
      char ch = maze.at(s) == Cell::Wall ? '#' : '.';
      if (start && s == *start) ch = 'S';
      if (goal && s == *goal) ch = 'G';
      out << ch;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string serialize_maze(const Maze& maze) { return serialize_grid(maze, nullptr, nullptr); }

std::string serialize_task(const Task& task) {
  return serialize_grid(task.maze, &task.start, &task.goal);
}

ParsedMaze parse_maze_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, version;
  int width = 0;
  int height = 0;
  if (!(in >> magic >> version >> width >> height) || magic != "maze" || version != "v1") {
    throw std::invalid_argument("maze text: expected header 'maze v1 <width> <height>'");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("maze text: non-positive dimensions");
  }
  std::string line;
  std::getline(in, line);
  ParsedMaze parsed;
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(width) * height);
  for (int r = 0; r < height; ++r) {
    if (!std::getline(in, line) || static_cast<int>(line.size()) != width) {
      throw std::invalid_argument("maze text: row " + std::to_string(r) +
                                  " missing or has wrong width");
    }
    for (int c = 0; c < width; ++c) {
      switch (line[c]) {
        case '#': cells.push_back(Cell::Wall); break;
        case '.': cells.push_back(Cell::Empty); break;
        case 'S': cells.push_back(Cell::Empty); parsed.starts.push_back({r, c}); break;
        case 'G': cells.push_back(Cell::Empty); parsed.goals.push_back({r, c}); break;
        default:
          throw std::invalid_argument(std::string("maze text: unexpected character '") +
                                      line[c] + "'");
      }
    }
  }
  if (std::getline(in, line) && !line.empty()) {
    throw std::invalid_argument("maze text: trailing content after grid");
  }
  parsed.maze = Maze(width, height, std::move(cells));
  return parsed;
}

}  // namespace dcmcts
