#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcmcts/grid_world.hpp"
#include "dcmcts/heuristics.hpp"
#include "dcmcts/search_tree.hpp"

namespace dcmcts {

enum class SearchMode {
  DivideAndConquer,
  SequentialRight,
  DescendLeftFirst,
  DescendLowerValue,
  DescendTwoWayUct,
};

std::string_view to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view name);

struct PlannerConfig {
  int budget = 200;
  int max_depth = 8;
  double c_puct = 5.0;
  SearchMode mode = SearchMode::DivideAndConquer;
  std::uint64_t seed = 0;
  /// Search stops after this many consecutive traversals without expansion.
  int stall_limit = 32;
  /// AND nodes shallower than this traverse both children concurrently.
  int parallel_depth = 0;
  /// Exploration constant of the two-way UCT descend rule.
  double two_way_c = 1.0;
};

void validate(const PlannerConfig& config);

struct Plan {
  std::vector<StateId> sigma;
  double objective_L = 0.0;
};

struct SolutionNode {
  OrKey key;
  int depth = 0;
  SubGoal chosen;         // nullopt for terminal nodes
  bool terminal = true;
  double G = 0.0;         // realised return of this sub-tree
  double v_pi = 0.0;
  int left = -1;
  int right = -1;
};

/// Binary tree of OR nodes induced by a plan; nodes[0] is the root.
struct SolutionTree {
  std::vector<SolutionNode> nodes;

  const SolutionNode& root() const { return nodes.front(); }
  /// Sub-tasks of the terminal nodes in left-to-right order.
  std::vector<OrKey> leaves() const;
};

struct PlanResult {
  Plan plan;
  SolutionTree solution_tree;
  int budget_used = 0;
  int traversals = 0;
  double root_V = 0.0;
  std::uint32_t root_N = 0;
  SearchTree tree;
};

/// L(sigma): product of low-level values over consecutive pairs.
double plan_objective(const Task& task, std::span<const StateId> sigma,
                      const LowLevelPolicy& policy);
double plan_objective(const Task& task, std::span<const StateId> sigma);

/// exploit + c * prior * sqrt(parent_visits) / (1 + child_visits)
double puct_score(double exploit, double prior, std::uint32_t parent_visits,
                  std::uint32_t child_visits, double c_puct);

/// pUCT selection over candidate slots:
///   exploit[k] + c * prior[k] * sqrt(parent_visits) / (1 + child_visits[k]).
/// Slots with allowed[k] == 0 are skipped. Exact score ties go to the larger
/// prior, remaining ties are broken uniformly at random.
int select_by_score(std::span<const double> exploit, std::span<const double> prior,
                    std::span<const std::uint32_t> child_visits, std::uint32_t parent_visits,
                    double c_puct, std::span<const char> allowed, Rng& rng);

enum class Branch { Left, Right };

struct BranchStats {
  double V = 0.0;
  std::uint32_t N = 0;
};

/// 2-way UCT score of a branch: weakness (1 - V) plus a visit-count bonus
/// c * sqrt(ln(1 + N_left + N_right) / (1 + N_branch)).
double two_way_uct_score(BranchStats branch, BranchStats sibling, double c);

/// Picks the single branch to descend into for the descend-one modes.
/// Ties go Left.
Branch descend_one(SearchMode mode, BranchStats left, BranchStats right, Rng& rng,
                   double two_way_c = 1.0);

/// One DC-MCTS search over a task. Owns the bootstrap caches; the search
/// tree itself is passed in so that tests can drive traversals directly.
class Planner {
 public:
  Planner(const TaskContext& ctx, HeuristicPair heuristics, PlannerConfig config,
          const LowLevelPolicy& policy);

  const PlannerConfig& config() const { return config_; }
  const TaskContext& context() const { return *ctx_; }
  SearchTree make_tree() const;

  /// One recursive traversal from OR node `key` at `depth`; returns G.
  double traverse(SearchTree& tree, const OrKey& key, int depth, Rng& rng);
  /// Selected candidate slot at an expanded OR node.
  int select(const SearchTree& tree, const OrKey& key, Rng& rng) const;

  struct Extraction {
    Plan plan;
    double G = 0.0;
    SolutionTree solution;
  };
  /// Best plan currently encoded in the tree, rooted at `key`.
  Extraction extract(const SearchTree& tree, const OrKey& key) const;
  Extraction extract(const SearchTree& tree) const { return extract(tree, tree.root()); }

  PlanResult run();

  double low_level(int s, int s2) const;
  double raw_bootstrap(int s, int s2) const;
  /// max(v_pi, v): the value of an unexpanded node.
  double bootstrap(int s, int s2) const { return std::max(low_level(s, s2), raw_bootstrap(s, s2)); }
  /// V of an expanded node, otherwise its bootstrap value.
  double child_value(const SearchTree& tree, int s, int s2) const;

 private:
  double traverse_index(SearchTree& tree, int s, int s2, int depth, Rng& rng);
  int select_index(const SearchTree& tree, int s, int s2, Rng& rng) const;
  std::pair<double, double> traverse_both(SearchTree& tree, int s, int m, int s2, int depth,
                                          Rng& left_rng, Rng& right_rng);
  int extract_index(const SearchTree& tree, int s, int s2, int depth, SolutionTree& out,
                    std::vector<StateId>& sigma) const;

  const TaskContext* ctx_;
  HeuristicPair heuristics_;
  PlannerConfig config_;
  const LowLevelPolicy* policy_;
  int n_ = 0;
  // Lazily filled caches, NaN = not yet computed. Written concurrently only
  // with identical values.
  std::unique_ptr<std::atomic<double>[]> vpi_cache_;
  std::unique_ptr<std::atomic<double>[]> boot_cache_;
};

PlanResult run_search(const TaskContext& ctx, HeuristicPair heuristics, const PlannerConfig& config,
                      const LowLevelPolicy& policy);
PlanResult run_search(const Task& task, HeuristicPair heuristics, const PlannerConfig& config);
/// Sequential-MCTS baseline: only the right sub-problem is ever recursed.
PlanResult run_search_sequential(const TaskContext& ctx, HeuristicPair heuristics,
                                 PlannerConfig config, const LowLevelPolicy& policy);
PlanResult run_search_sequential(const Task& task, HeuristicPair heuristics, PlannerConfig config);

/// JSON report of a plan result (plan states, L, G, budget used).
std::string plan_result_json(const PlanResult& result);

}  // namespace dcmcts
