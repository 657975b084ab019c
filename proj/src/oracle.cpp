#include "dcmcts/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void guard_size(const Maze& maze) {
  if (maze.num_empty() > kOracleMaxCells) {
    throw std::invalid_argument("oracle: " + std::to_string(maze.num_empty()) +
                                " empty cells exceed the exact-oracle limit of " +
                                std::to_string(kOracleMaxCells) +
                                "; use sampled evaluation instead");
  }
}

}  // namespace

ValueTable::ValueTable(const Maze& maze, const LowLevelPolicy& policy)
    : maze_(&maze), n_(maze.num_empty()) {
  guard_size(maze);
  const std::size_t nn = static_cast<std::size_t>(n_) * n_;
  std::vector<double> dist(nn, kInf);
  next_.assign(nn, -1);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (i == j) {
        dist[idx(i, j)] = 0.0;
        next_[idx(i, j)] = j;
        continue;
      }
      const double v = policy.value(maze.cell(i), maze.cell(j));
      if (v > 0.0) {
        dist[idx(i, j)] = -std::log(v);
        next_[idx(i, j)] = j;
      }
    }
  }
  for (int k = 0; k < n_; ++k) {
    for (int i = 0; i < n_; ++i) {
      const double dik = dist[idx(i, k)];
      if (dik == kInf) continue;
      for (int j = 0; j < n_; ++j) {
        const double cand = dik + dist[idx(k, j)];
        if (cand < dist[idx(i, j)]) {
          dist[idx(i, j)] = cand;
          next_[idx(i, j)] = next_[idx(i, k)];
        }
      }
    }
  }
  value_.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) value_[i] = dist[i] == kInf ? 0.0 : std::exp(-dist[i]);
}

double ValueTable::value(StateId s, StateId s2) const {
  const int a = maze_->index_of(s);
  const int b = maze_->index_of(s2);
  if (a < 0 || b < 0) throw std::invalid_argument("value table: not an empty cell");
  return at(a, b);
}

std::vector<StateId> ValueTable::path(StateId s, StateId s2) const {
  int a = maze_->index_of(s);
  const int b = maze_->index_of(s2);
  if (a < 0 || b < 0) throw std::invalid_argument("value table: not an empty cell");
  std::vector<StateId> out{s};
  if (a == b) {
    out.push_back(s2);
    return out;
  }
  if (next_[idx(a, b)] < 0) {
    out.push_back(s2);
    return out;
  }
  while (a != b) {
    a = next_[idx(a, b)];
    out.push_back(maze_->cell(a));
  }
  return out;
}

std::string ValueTable::export_text() const {
  std::ostringstream out;
  char buf[32];
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      std::snprintf(buf, sizeof buf, "%.9f", at(i, j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
  return out.str();
}

ValueTable exact_value_table(const Task& task, const LowLevelPolicy& policy) {
  return ValueTable(task.maze, policy);
}

ValueTable exact_value_table(const Task& task) {
  MyopicPolicy pi0(task.maze);
  return ValueTable(task.maze, pi0);
}

OptimalPlan optimal_plan(const Task& task, const ValueTable& table, const LowLevelPolicy& policy) {
  OptimalPlan out;
  out.feasible = table.value(task.start, task.goal) > 0.0;
  out.plan.sigma = table.path(task.start, task.goal);
  out.plan.objective_L = plan_objective(task, out.plan.sigma, policy);
  return out;
}

OptimalPlan optimal_plan(const Task& task, const ValueTable& table) {
  MyopicPolicy pi0(task.maze);
  return optimal_plan(task, table, pi0);
}

void pi0_transitions(const Maze& maze, StateId s, StateId subgoal, Transitions& out) {
  out.clear();
  if (adjacent(s, subgoal) && maze.is_empty(subgoal)) {
    out.emplace_back(subgoal, 1.0);
    return;
  }
  const auto nb = maze.empty_neighbors(s);
  if (nb.empty()) {
    out.emplace_back(s, 1.0);
    return;
  }
  for (StateId x : nb) out.emplace_back(x, 1.0 / nb.size());
}

StochasticTestPolicy::StochasticTestPolicy(const Maze& maze, double epsilon, int horizon)
    : maze_(&maze), epsilon_(epsilon), horizon_(horizon > 0 ? horizon : 4 * maze.num_empty()),
      n_(maze.num_empty()) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("test policy: epsilon must be in [0, 1]");
  }
  guard_size(maze);
  dist_.assign(static_cast<std::size_t>(n_) * n_, -1);
  for (int src = 0; src < n_; ++src) {
    int* d = dist_.data() + static_cast<std::size_t>(src) * n_;
    std::deque<int> queue{src};
    d[src] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (StateId x : maze.empty_neighbors(maze.cell(u))) {
        const int v = maze.index_of(x);
        if (d[v] < 0) {
          d[v] = d[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  values_.resize(n_);
}

int StochasticTestPolicy::distance(StateId a, StateId b) const {
  return dist_[static_cast<std::size_t>(maze_->index_of(a)) * n_ + maze_->index_of(b)];
}

StateId StochasticTestPolicy::greedy_step(StateId s, StateId subgoal) const {
  const int d = distance(s, subgoal);
  for (StateId x : maze_->empty_neighbors(s)) {
    if (distance(x, subgoal) == d - 1) return x;
  }
  return s;  // unreachable sub-goal
}

void StochasticTestPolicy::transitions(StateId s, StateId subgoal, Transitions& out) const {
  out.clear();
  if (s == subgoal) {
    out.emplace_back(s, 1.0);
    return;
  }
  const auto nb = maze_->empty_neighbors(s);
  if (epsilon_ < 1.0) out.emplace_back(greedy_step(s, subgoal), 1.0 - epsilon_);
  if (epsilon_ > 0.0) {
    if (nb.empty()) {
      out.emplace_back(s, epsilon_);
    } else {
      for (StateId x : nb) out.emplace_back(x, epsilon_ / nb.size());
    }
  }
}

StateId StochasticTestPolicy::step(Rng& rng, StateId s, StateId subgoal) const {
  if (s == subgoal) return s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= epsilon_) return greedy_step(s, subgoal);
  const auto nb = maze_->empty_neighbors(s);
  if (nb.empty()) return s;
  std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
  return nb[pick(rng)];
}

double StochasticTestPolicy::value(StateId s, StateId subgoal) const {
  const int a = maze_->index_of(s);
  const int g = maze_->index_of(subgoal);
  if (a < 0 || g < 0) throw std::invalid_argument("test policy: not an empty cell");
  std::lock_guard lock(mu_);
  auto& table = values_[g];
  if (table.empty()) {
    // Backward DP: p_h(x) = P(reach g within h steps from x).
    std::vector<double> cur(n_, 0.0), nxt(n_);
    cur[g] = 1.0;
    Transitions tr;
    for (int h = 0; h < horizon_; ++h) {
      for (int x = 0; x < n_; ++x) {
        if (x == g) {
          nxt[x] = 1.0;
          continue;
        }
        transitions(maze_->cell(x), subgoal, tr);
        double p = 0.0;
        for (auto [y, w] : tr) p += w * cur[maze_->index_of(y)];
        nxt[x] = p;
      }
      std::swap(cur, nxt);
    }
    table = std::move(cur);
  }
  return table[a];
}

double exact_policy_value(const Maze& maze, const TransitionFn& transitions, StateId s,
                          StateId subgoal, int horizon) {
  guard_size(maze);
  const int n = maze.num_empty();
  const int a = maze.index_of(s);
  const int g = maze.index_of(subgoal);
  if (a < 0 || g < 0) throw std::invalid_argument("exact_policy_value: not an empty cell");
  if (a == g) return 1.0;
  // Forward propagation of the not-yet-absorbed mass.
  std::vector<double> mass(n, 0.0), next(n);
  mass[a] = 1.0;
  double absorbed = 0.0;
  Transitions tr;
  for (int h = 0; h < horizon; ++h) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int x = 0; x < n; ++x) {
      if (mass[x] == 0.0) continue;
      transitions(maze.cell(x), subgoal, tr);
      for (auto [y, w] : tr) {
        const int j = maze.index_of(y);
        if (j == g) absorbed += mass[x] * w;
        else next[j] += mass[x] * w;
      }
    }
    std::swap(mass, next);
  }
  return absorbed;
}

double exact_policy_value(const Maze& maze, const StochasticTestPolicy& policy, StateId s,
                          StateId subgoal, int horizon) {
  return exact_policy_value(
      maze, [&](StateId x, StateId g, Transitions& out) { policy.transitions(x, g, out); }, s,
      subgoal, horizon);
}

double exact_plan_success(const Task& task, std::span<const StateId> plan,
                          const TransitionFn& transitions, int step_limit) {
  const Maze& maze = task.maze;
  guard_size(maze);
  if (task.start == task.goal) return 1.0;
  const int n = maze.num_empty();
  const int m = static_cast<int>(plan.size());
  auto advance = [&](int next, StateId pos) {
    while (next < m && plan[next] == pos) ++next;
    return next;
  };
  // mass over (position, index of the next sub-goal); index m = exhausted
  const std::size_t width = static_cast<std::size_t>(m) + 1;
  std::vector<double> mass(static_cast<std::size_t>(n) * width, 0.0), next(mass.size());
  mass[maze.index_of(task.start) * width + advance(0, task.start)] = 1.0;
  double success = 0.0;
  Transitions tr;
  for (int step = 0; step < step_limit; ++step) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int x = 0; x < n; ++x) {
      for (int k = 0; k < m; ++k) {  // exhausted plans stop moving
        const double p = mass[x * width + k];
        if (p == 0.0) continue;
        transitions(maze.cell(x), plan[k], tr);
        for (auto [y, w] : tr) {
          if (y == task.goal) {
            success += p * w;
            continue;
          }
          next[maze.index_of(y) * width + advance(k, y)] += p * w;
        }
      }
    }
    std::swap(mass, next);
  }
  return success;
}

MonteCarloEstimate monte_carlo_success(Rng& rng, const Task& task, std::span<const StateId> plan,
                                       const LowLevelPolicy& policy, int trials, int step_limit) {
  if (trials < 1) throw std::invalid_argument("monte_carlo_success: trials must be >= 1");
  int wins = 0;
  for (int t = 0; t < trials; ++t) {
    wins += execute_plan(rng, task, plan, step_limit, policy).reached_goal ? 1 : 0;
  }
  MonteCarloEstimate est;
  est.trials = trials;
  est.rate = static_cast<double>(wins) / trials;
  est.stderr_ = std::sqrt(est.rate * (1.0 - est.rate) / trials);
  return est;
}

ExactHeuristics::ExactHeuristics(const ValueTable& table, const LowLevelPolicy& policy,
                                 SearchMode mode)
    : table_(&table), policy_(&policy), mode_(mode) {}

SubGoal ExactHeuristics::best_split(const OrKey& key) const {
  const double vstar = table_->value(key.s, key.s2);
  if (policy_->value(key.s, key.s2) >= vstar - 1e-12) return std::nullopt;
  const auto hops = table_->path(key.s, key.s2);
  if (hops.size() < 3) return std::nullopt;
  const std::size_t k = hops.size() - 1;
  return mode_ == SearchMode::SequentialRight ? hops[1] : hops[k / 2];
}

void ExactHeuristics::prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const SubGoal split = best_split(key);
  out[split ? ctx.index_of(*split) + 1 : kStopCandidate] = 1.0;
}

double ExactHeuristics::value(const TaskContext&, const OrKey& key) const {
  return table_->value(key.s, key.s2);
}

}  // namespace dcmcts
