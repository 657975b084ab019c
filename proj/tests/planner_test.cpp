#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "dcmcts/oracle.hpp"
#include "dcmcts/planner.hpp"
#include "test_support.hpp"

namespace dcmcts {
namespace {

/// Low-level policy with hand-set values; unspecified pairs are 0 (1 on
/// the diagonal). Never executed.
class TablePolicy final : public LowLevelPolicy {
 public:
  std::map<std::pair<StateId, StateId>, double> values;
  double value(StateId s, StateId s2) const override {
    if (s == s2) return 1.0;
    auto it = values.find({s, s2});
    return it == values.end() ? 0.0 : it->second;
  }
  StateId step(Rng&, StateId s, StateId) const override { return s; }
};

/// Prior concentrated on a fixed sub-goal for every OR node.
class FixedPrior final : public PolicyPrior {
 public:
  SubGoal target;
  void prior(const TaskContext& ctx, const OrKey&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[target ? ctx.index_of(*target) + 1 : kStopCandidate] = 1.0;
  }
};

TEST(PlanObjective, Examples) {
  Task t{Maze::open(5, 5), {0, 0}, {0, 3}};
  std::vector<StateId> adjacent_chain{{0, 0}, {0, 1}, {0, 2}, {0, 3}};
  EXPECT_EQ(plan_objective(t, adjacent_chain), 1.0);
  std::vector<StateId> direct{{0, 0}, {0, 3}};
  EXPECT_EQ(plan_objective(t, direct), 0.0);

  TablePolicy p;
  p.values[{{0, 0}, {0, 1}}] = 0.5;
  p.values[{{0, 1}, {0, 3}}] = 0.8;
  std::vector<StateId> two_hop{{0, 0}, {0, 1}, {0, 3}};
  EXPECT_DOUBLE_EQ(plan_objective(t, two_hop, p), 0.4);
}

TEST(PuctScore, HandComputedValues) {
  // 0.3 + 2 * 0.5 * sqrt(4) / (1 + 1) = 1.3
  EXPECT_NEAR(puct_score(0.3, 0.5, 4, 1, 2.0), 1.3, 1e-12);
  // Unvisited parent: pure exploitation.
  EXPECT_EQ(puct_score(0.42, 0.9, 0, 0, 5.0), 0.42);
  // 0 + 1 * 0.25 * 3 / 4
  EXPECT_NEAR(puct_score(0.0, 0.25, 9, 3, 1.0), 0.1875, 1e-12);
}

TEST(SelectByScore, ZeroExplorationIsArgmax) {
  Rng rng(1);
  std::vector<double> exploit{0.1, 0.7, 0.3, 0.69};
  std::vector<double> prior{0.7, 0.1, 0.1, 0.1};
  std::vector<std::uint32_t> visits{0, 5, 0, 0};
  std::vector<char> allowed(4, 1);
  EXPECT_EQ(select_by_score(exploit, prior, visits, 5, 0.0, allowed, rng), 1);
  allowed[1] = 0;
  EXPECT_EQ(select_by_score(exploit, prior, visits, 5, 0.0, allowed, rng), 3);
}

TEST(SelectByScore, HighPriorWinsWhenValuesAreEqual) {
  Rng rng(1);
  std::vector<double> exploit(3, 0.0);
  std::vector<double> prior{0.05, 0.9, 0.05};
  std::vector<std::uint32_t> visits(3, 0);
  std::vector<char> allowed(3, 1);
  EXPECT_EQ(select_by_score(exploit, prior, visits, 1, 1.0, allowed, rng), 1);
}

TEST(SelectByScore, UnvisitedParentTieGoesToLargerPrior) {
  // N = 0 leaves only exploitation, all zero: the prior breaks the tie.
  Rng rng(1);
  std::vector<double> exploit(3, 0.0);
  std::vector<double> prior{0.2, 0.3, 0.5};
  std::vector<std::uint32_t> visits(3, 0);
  std::vector<char> allowed(3, 1);
  EXPECT_EQ(select_by_score(exploit, prior, visits, 0, 5.0, allowed, rng), 2);
}

TEST(SelectByScore, ExactTiesAreBrokenRandomly) {
  Rng rng(9);
  std::vector<double> exploit{0.5, 0.5, 0.1};
  std::vector<double> prior{0.4, 0.4, 0.2};
  std::vector<std::uint32_t> visits{1, 1, 0};
  std::vector<char> allowed(3, 1);
  std::map<int, int> counts;
  for (int i = 0; i < 2000; ++i) ++counts[select_by_score(exploit, prior, visits, 2, 0.0, allowed, rng)];
  EXPECT_EQ(counts.count(2), 0u);
  EXPECT_LT(std::abs(testing::binomial_z(counts[0], 2000, 0.5)), 5.0);
}

TEST(DescendOne, Rules) {
  Rng rng(0);
  BranchStats strong{0.9, 3}, weak{0.2, 3};
  EXPECT_EQ(descend_one(SearchMode::DescendLeftFirst, strong, weak, rng), Branch::Left);
  EXPECT_EQ(descend_one(SearchMode::DescendLowerValue, strong, weak, rng), Branch::Right);
  EXPECT_EQ(descend_one(SearchMode::DescendLowerValue, weak, strong, rng), Branch::Left);
  EXPECT_EQ(descend_one(SearchMode::DescendLowerValue, weak, weak, rng), Branch::Left);
  EXPECT_EQ(descend_one(SearchMode::DescendTwoWayUct, strong, weak, rng), Branch::Right);
  // Equal values: the less visited branch gets the bonus.
  EXPECT_EQ(descend_one(SearchMode::DescendTwoWayUct, {0.5, 10}, {0.5, 1}, rng), Branch::Right);
  // 1 - 0.5 + sqrt(ln(1 + 4 + 0) / 1)
  EXPECT_NEAR(two_way_uct_score({0.5, 0}, {0.5, 4}, 1.0), 0.5 + std::sqrt(std::log(5.0)), 1e-12);
}

TEST(SearchMode, NamesRoundTrip) {
  for (SearchMode m : {SearchMode::DivideAndConquer, SearchMode::SequentialRight,
                       SearchMode::DescendLeftFirst, SearchMode::DescendLowerValue,
                       SearchMode::DescendTwoWayUct})
    EXPECT_EQ(parse_search_mode(to_string(m)), m);
  EXPECT_THROW(parse_search_mode("bogus"), std::invalid_argument);
}

TEST(PlannerConfig, Validation) {
  PlannerConfig c;
  EXPECT_NO_THROW(validate(c));
  c.budget = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = {};
  c.c_puct = -1.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

// Corridor a - b - c with hand-set values: v(a, b) = 0.9, v(b, c) = 0.8,
// v(a, c) = 0, and a prior that always proposes b.
struct Corridor {
  Task task{Maze::open(3, 1), {0, 0}, {0, 2}};
  TaskContext ctx{task};
  TablePolicy policy;
  FixedPrior prior;
  ZeroValue zero;
  Corridor() {
    policy.values[{{0, 0}, {0, 1}}] = 0.9;
    policy.values[{{0, 1}, {0, 2}}] = 0.8;
    prior.target = StateId{0, 1};
  }
  Planner planner(SearchMode mode, int max_depth = 8) {
    PlannerConfig cfg;
    cfg.budget = 10;
    cfg.max_depth = max_depth;
    cfg.mode = mode;
    return Planner(ctx, {&prior, &zero}, cfg, policy);
  }
};

TEST(Traverse, FirstVisitExpandsAndReturnsBootstrap) {
  Corridor c;
  Planner p = c.planner(SearchMode::DivideAndConquer);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  EXPECT_EQ(p.traverse(tree, tree.root(), 0, rng), 0.0);
  EXPECT_EQ(tree.budget_used(), 1);
  EXPECT_EQ(tree.find(tree.root())->N, 0u);
}

TEST(Traverse, DivideAndConquerMultipliesChildReturns) {
  Corridor c;
  Planner p = c.planner(SearchMode::DivideAndConquer);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  p.traverse(tree, tree.root(), 0, rng);
  // Both children are unexpanded: they expand and return 0.9 and 0.8.
  EXPECT_NEAR(p.traverse(tree, tree.root(), 0, rng), 0.72, 1e-15);
  EXPECT_EQ(tree.budget_used(), 3);
  EXPECT_NEAR(tree.find(tree.root())->V, 0.72, 1e-15);
  EXPECT_EQ(tree.and_visits({{0, 0}, StateId{0, 1}, {0, 2}}), 1u);
}

TEST(Traverse, SequentialUsesLowLevelOnTheLeft) {
  Corridor c;
  Planner p = c.planner(SearchMode::SequentialRight);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  p.traverse(tree, tree.root(), 0, rng);
  EXPECT_NEAR(p.traverse(tree, tree.root(), 0, rng), 0.72, 1e-15);
  EXPECT_EQ(tree.find(0, 1), nullptr);  // left sub-task never becomes a node
  EXPECT_EQ(tree.budget_used(), 2);
}

TEST(Traverse, DepthLimitFallsBackToLowLevel) {
  Corridor c;
  c.policy.values[{{0, 0}, {0, 2}}] = 0.1;
  Planner p = c.planner(SearchMode::DivideAndConquer, 1);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  p.traverse(tree, tree.root(), 1, rng);
  EXPECT_EQ(p.traverse(tree, tree.root(), 1, rng), 0.1);
  EXPECT_EQ(tree.budget_used(), 1);
}

TEST(Traverse, ReturnIsThresholdedByLowLevelValue) {
  Corridor c;
  c.policy.values[{{0, 0}, {0, 2}}] = 0.75;  // better than splitting (0.72)
  Planner p = c.planner(SearchMode::DivideAndConquer);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  EXPECT_EQ(p.traverse(tree, tree.root(), 0, rng), 0.75);
  // Unvisited parent: pure exploitation picks the empty sub-goal (0.75 > 0.72).
  EXPECT_EQ(p.traverse(tree, tree.root(), 0, rng), 0.75);
  EXPECT_EQ(tree.and_visits({{0, 0}, std::nullopt, {0, 2}}), 1u);
  // Now the exploration bonus of the split dominates; its product 0.72 is
  // lifted to v_pi = 0.75.
  EXPECT_EQ(p.traverse(tree, tree.root(), 0, rng), 0.75);
  EXPECT_EQ(tree.and_visits({{0, 0}, StateId{0, 1}, {0, 2}}), 1u);
}

TEST(Traverse, DescendOneUsesSiblingValue) {
  Corridor c;
  Planner p = c.planner(SearchMode::DescendLeftFirst);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  p.traverse(tree, tree.root(), 0, rng);
  // Left (a, b) expands to 0.9; right is unexpanded with bootstrap 0.8.
  EXPECT_NEAR(p.traverse(tree, tree.root(), 0, rng), 0.72, 1e-15);
  EXPECT_EQ(tree.budget_used(), 2);
  EXPECT_EQ(tree.find(1, 2), nullptr);
}

TEST(Extract, PrefersSplitOnlyWhenItBeatsLowLevel) {
  Corridor c;
  Planner p = c.planner(SearchMode::DivideAndConquer);
  SearchTree tree = p.make_tree();
  Rng rng(1);
  for (int i = 0; i < 3; ++i) p.traverse(tree, tree.root(), 0, rng);
  auto ex = p.extract(tree);
  std::vector<StateId> want{{0, 0}, {0, 1}, {0, 2}};
  EXPECT_EQ(ex.plan.sigma, want);
  EXPECT_NEAR(ex.G, 0.72, 1e-15);
  EXPECT_NEAR(ex.plan.objective_L, 0.72, 1e-15);
  ASSERT_EQ(ex.solution.nodes.size(), 3u);
  EXPECT_FALSE(ex.solution.root().terminal);
  EXPECT_EQ(*ex.solution.root().chosen, StateId(0, 1));
  EXPECT_EQ(ex.solution.leaves().size(), 2u);

  c.policy.values[{{0, 0}, {0, 2}}] = 0.9 * 0.8;  // tie: keep the direct sub-task
  Planner q = c.planner(SearchMode::DivideAndConquer);
  auto direct = q.extract(tree);
  std::vector<StateId> want_direct{{0, 0}, {0, 2}};
  EXPECT_EQ(direct.plan.sigma, want_direct);
}

TEST(Extract, UnexpandedRootGivesDirectPlan) {
  Corridor c;
  Planner p = c.planner(SearchMode::DivideAndConquer);
  SearchTree tree = p.make_tree();
  auto ex = p.extract(tree);
  std::vector<StateId> want{{0, 0}, {0, 2}};
  EXPECT_EQ(ex.plan.sigma, want);
  EXPECT_EQ(ex.G, 0.0);
}

TEST(RunSearch, BudgetOneGivesDirectPlan) {
  Task t = sample_task(generate_maze(11, 11, 0.75, 3), 3);
  PlannerConfig cfg;
  cfg.budget = 1;
  PlanResult r = run_search(t, untrained_heuristics(), cfg);
  EXPECT_EQ(r.budget_used, 1);
  std::vector<StateId> want{t.start, t.goal};
  EXPECT_EQ(r.plan.sigma, want);
}

TEST(RunSearch, AdjacentStartAndGoal) {
  Task t{Maze::open(4, 4), {1, 1}, {1, 2}};
  PlannerConfig cfg;
  cfg.budget = 50;
  PlanResult r = run_search(t, untrained_heuristics(), cfg);
  EXPECT_EQ(r.plan.objective_L, 1.0);
  EXPECT_EQ(r.plan.sigma.size(), 2u);
}

TEST(RunSearch, ExactHeuristicsReachOptimum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Task t = sample_task(generate_maze(7, 7, 0.5, seed), seed);
    ValueTable table = exact_value_table(t);
    MyopicPolicy pi0(t.maze);
    for (SearchMode mode : {SearchMode::DivideAndConquer, SearchMode::SequentialRight}) {
      ExactHeuristics h(table, pi0, mode);
      PlannerConfig cfg;
      cfg.mode = mode;
      cfg.budget = 2 * t.maze.num_empty();
      cfg.max_depth = t.maze.num_empty();
      PlanResult r = mode == SearchMode::SequentialRight ? run_search_sequential(t, h.pair(), cfg)
                                                         : run_search(t, h.pair(), cfg);
      EXPECT_EQ(r.plan.objective_L, 1.0) << seed << " " << to_string(mode);
      EXPECT_EQ(r.plan.sigma.front(), t.start);
      EXPECT_EQ(r.plan.sigma.back(), t.goal);
    }
  }
}

// Plan soundness and the ordering L <= v* <= 1 on untrained searches, in
// every mode.
TEST(RunSearch, PlansAreSoundInEveryMode) {
  for (SearchMode mode : {SearchMode::DivideAndConquer, SearchMode::SequentialRight,
                          SearchMode::DescendLeftFirst, SearchMode::DescendLowerValue,
                          SearchMode::DescendTwoWayUct}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      Task t = sample_task(generate_maze(7, 7, 0.25, seed), seed + 100);
      PlannerConfig cfg;
      cfg.mode = mode;
      cfg.budget = 60;
      cfg.seed = seed;
      PlanResult r = run_search(t, untrained_heuristics(), cfg);
      ASSERT_GE(r.plan.sigma.size(), 2u);
      EXPECT_EQ(r.plan.sigma.front(), t.start);
      EXPECT_EQ(r.plan.sigma.back(), t.goal);
      for (StateId s : r.plan.sigma) EXPECT_TRUE(t.maze.is_empty(s));
      EXPECT_EQ(r.plan.objective_L, plan_objective(t, r.plan.sigma));
      double leaf_product = 1.0;
      for (const OrKey& k : r.solution_tree.leaves())
        leaf_product *= low_level_value_pi0(t.maze, k.s, k.s2);
      EXPECT_EQ(leaf_product, r.plan.objective_L);
      EXPECT_LE(r.plan.objective_L, exact_value_table(t).value(t.start, t.goal) + 1e-12);
      EXPECT_LE(r.budget_used, cfg.budget);
      for (const OrNode& n : r.tree.or_nodes()) EXPECT_GE(n.V, n.v_pi);
    }
  }
}

TEST(RunSearch, SequentialTreeOnlyGrowsToTheRight) {
  Task t = sample_task(generate_maze(9, 9, 0.5, 2), 5);
  PlannerConfig cfg;
  cfg.budget = 80;
  PlanResult r = run_search_sequential(t, untrained_heuristics(), cfg);
  // Every OR node solves "get from somewhere to the goal".
  for (const OrNode& n : r.tree.or_nodes()) EXPECT_EQ(n.key.s2, t.goal);
  EXPECT_LE(static_cast<int>(r.tree.num_or_nodes()), t.maze.num_empty());
  // Left children of the solution tree are always terminal.
  for (const SolutionNode& n : r.solution_tree.nodes)
    if (!n.terminal) EXPECT_TRUE(r.solution_tree.nodes[n.left].terminal);
}

TEST(RunSearch, DeterministicInSeed) {
  Task t = sample_task(generate_maze(11, 11, 0.75, 8), 8);
  PlannerConfig cfg;
  cfg.budget = 150;
  cfg.seed = 77;
  PlanResult a = run_search(t, untrained_heuristics(), cfg);
  PlanResult b = run_search(t, untrained_heuristics(), cfg);
  EXPECT_EQ(a.tree.dump(), b.tree.dump());
  EXPECT_EQ(a.plan.sigma, b.plan.sigma);
  EXPECT_EQ(plan_result_json(a), plan_result_json(b));
}

TEST(RunSearch, ParallelTraversalMatchesSerial) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Task t = sample_task(generate_maze(11, 11, 0.5, seed), seed);
    for (int budget : {20, 150}) {
      PlannerConfig cfg;
      cfg.budget = budget;
      cfg.seed = seed;
      PlanResult serial = run_search(t, untrained_heuristics(), cfg);
      cfg.parallel_depth = 3;
      PlanResult parallel = run_search(t, untrained_heuristics(), cfg);
      EXPECT_EQ(serial.tree.dump(), parallel.tree.dump()) << seed << " " << budget;
      EXPECT_EQ(serial.plan.sigma, parallel.plan.sigma);
      EXPECT_EQ(serial.traversals, parallel.traversals);
    }
  }
}

TEST(RunSearch, StopsWhenNothingNewCanBeExpanded) {
  // Two empty cells: only the root can ever be expanded.
  Task t{generate_maze(4, 3, 1.0, 3), {}, {}};
  t.start = t.maze.cell(0);
  t.goal = t.maze.cell(1);
  PlannerConfig cfg;
  cfg.budget = 100;
  PlanResult r = run_search(t, untrained_heuristics(), cfg);
  EXPECT_EQ(r.budget_used, 1);
  EXPECT_EQ(r.traversals, 1 + cfg.stall_limit);
  EXPECT_EQ(r.plan.objective_L, 1.0);
}

TEST(PlanResultJson, HasStableFields) {
  Task t = sample_task(generate_maze(7, 7, 0.5, 1), 1);
  PlanResult r = run_search(t, untrained_heuristics(), PlannerConfig{});
  const std::string j = plan_result_json(r);
  for (const char* key : {"\"plan\"", "\"L\"", "\"G\"", "\"budget_used\"", "\"plan_length\""})
    EXPECT_NE(j.find(key), std::string::npos) << key;
}

}  // namespace
}  // namespace dcmcts
