#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcmcts/grid_world.hpp"
#include "dcmcts/heuristics.hpp"
#include "dcmcts/planner.hpp"

namespace dcmcts {

/// Largest instance the exact oracles accept.
inline constexpr int kOracleMaxCells = 400;

/// v*(s, s'') for every ordered pair of empty cells, from all-pairs
/// shortest paths over edge weights -log v_pi(s, s'') (zero-value edges
/// are absent).
class ValueTable {
 public:
  ValueTable(const Maze& maze, const LowLevelPolicy& policy);

  const Maze& maze() const { return *maze_; }
  int num_cells() const { return n_; }
  double at(int s, int s2) const { return value_[idx(s, s2)]; }
  double value(StateId s, StateId s2) const;
  /// Hop sequence realising v*(s, s2): s, ..., s2. Just (s, s2) when
  /// v*(s, s2) = 0.
  std::vector<StateId> path(StateId s, StateId s2) const;

  /// Square matrix in row-major empty-cell order, 9 decimals.
  std::string export_text() const;

 private:
  std::size_t idx(int s, int s2) const { return static_cast<std::size_t>(s) * n_ + s2; }

  const Maze* maze_;
  int n_ = 0;
  std::vector<double> value_;
  std::vector<int> next_;  // first hop on the best path, -1 if none
};

/// Throws std::invalid_argument above kOracleMaxCells empty cells.
ValueTable exact_value_table(const Task& task, const LowLevelPolicy& policy);
ValueTable exact_value_table(const Task& task);

struct OptimalPlan {
  Plan plan;
  bool feasible = false;
};

OptimalPlan optimal_plan(const Task& task, const ValueTable& table, const LowLevelPolicy& policy);
OptimalPlan optimal_plan(const Task& task, const ValueTable& table);

using Transitions = std::vector<std::pair<StateId, double>>;
using TransitionFn = std::function<void(StateId s, StateId subgoal, Transitions& out)>;

/// Next-state distribution of the myopic controller.
void pi0_transitions(const Maze& maze, StateId s, StateId subgoal, Transitions& out);

/// With probability 1 - epsilon steps to the first neighbor (up, left,
/// right, down) on a shortest path to the sub-goal, otherwise to a uniformly
/// random empty neighbor. Stays put once at the sub-goal. Its value is the
/// exact probability of reaching the sub-goal within `horizon` steps.
class StochasticTestPolicy final : public LowLevelPolicy {
 public:
  StochasticTestPolicy(const Maze& maze, double epsilon, int horizon = 0);

  double value(StateId s, StateId subgoal) const override;
  StateId step(Rng& rng, StateId s, StateId subgoal) const override;
  void transitions(StateId s, StateId subgoal, Transitions& out) const;

  double epsilon() const { return epsilon_; }
  int horizon() const { return horizon_; }
  int distance(StateId a, StateId b) const;

 private:
  StateId greedy_step(StateId s, StateId subgoal) const;

  const Maze* maze_;
  double epsilon_;
  int horizon_;
  int n_;
  std::vector<int> dist_;  // BFS distances between empty cells
  mutable std::mutex mu_;
  mutable std::vector<std::vector<double>> values_;  // per sub-goal, lazily
};

/// P(reach `subgoal` from `s` within `horizon` steps), by dynamic
/// programming over the policy's Markov chain.
double exact_policy_value(const Maze& maze, const TransitionFn& transitions, StateId s,
                          StateId subgoal, int horizon);
double exact_policy_value(const Maze& maze, const StochasticTestPolicy& policy, StateId s,
                          StateId subgoal, int horizon);

/// Exact success probability of execute_plan(task, plan, step_limit) under
/// the given transition model.
double exact_plan_success(const Task& task, std::span<const StateId> plan,
                          const TransitionFn& transitions, int step_limit);

struct MonteCarloEstimate {
  double rate = 0.0;
  double stderr_ = 0.0;
  int trials = 0;
};

MonteCarloEstimate monte_carlo_success(Rng& rng, const Task& task, std::span<const StateId> plan,
                                       const LowLevelPolicy& policy, int trials, int step_limit);

/// Search heuristics read off the exact oracle: v = v*, and a prior
/// concentrated on one optimal split. Splits are the temporal midpoint of
/// an optimal hop sequence (divide-and-conquer) or its first hop
/// (sequential); the empty sub-goal when v_pi already attains v*.
class ExactHeuristics final : public PolicyPrior, public ValueEstimator {
 public:
  ExactHeuristics(const ValueTable& table, const LowLevelPolicy& policy, SearchMode mode);

  void prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const override;
  double value(const TaskContext& ctx, const OrKey& key) const override;
  HeuristicPair pair() const { return {this, this}; }

  /// The split the prior concentrates on (nullopt = no split).
  SubGoal best_split(const OrKey& key) const;

 private:
  const ValueTable* table_;
  const LowLevelPolicy* policy_;
  SearchMode mode_;
};

}  // namespace dcmcts
