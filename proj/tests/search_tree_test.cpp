#include <gtest/gtest.h>

#include <numeric>

#include "dcmcts/search_tree.hpp"

namespace dcmcts {
namespace {

struct Fixture {
  Maze maze = Maze::open(3, 3);
  OrKey root{{0, 0}, {2, 2}};
  SearchTree tree{maze, root, 5, 8};
  int s = tree.index_of({0, 0});
  int s2 = tree.index_of({2, 2});
  std::vector<double> uniform() const {
    return std::vector<double>(tree.num_candidates(), 1.0 / tree.num_candidates());
  }
};

TEST(SearchTree, ExpandStoresInitialStatistics) {
  Fixture f;
  auto v = f.tree.expand(f.s, f.s2, 0.0, 0.3, f.uniform());
  ASSERT_TRUE(v);
  EXPECT_DOUBLE_EQ(*v, 0.3);
  const OrNode* n = f.tree.find(f.root);
  ASSERT_NE(n, nullptr);
  EXPECT_TRUE(n->expanded);
  EXPECT_EQ(n->N, 0u);
  EXPECT_EQ(n->V, 0.3);
  EXPECT_EQ(n->v_pi, 0.0);
  EXPECT_EQ(f.tree.budget_used(), 1);
  EXPECT_EQ(n->child_visits.size(), 10u);
}

TEST(SearchTree, InitialValueIsMaxOfLowLevelAndBootstrap) {
  Fixture f;
  f.tree.expand(f.s, f.s2, 0.7, 0.2, f.uniform());
  EXPECT_EQ(f.tree.find(f.root)->V, 0.7);
}

TEST(SearchTree, ExhaustedBudgetLeavesTreeUnchanged) {
  Maze maze = Maze::open(3, 3);
  SearchTree tree(maze, {{0, 0}, {2, 2}}, 1, 8);
  std::vector<double> prior(tree.num_candidates(), 0.1);
  ASSERT_TRUE(tree.expand(0, 8, 0.0, 0.0, prior));
  const std::string before = tree.dump();
  EXPECT_FALSE(tree.expand(0, 4, 0.0, 0.0, prior));
  EXPECT_EQ(tree.dump(), before);
  EXPECT_EQ(tree.budget_used(), 1);
  EXPECT_EQ(tree.find(0, 4), nullptr);
}

TEST(SearchTree, DuplicateExpansionThrows) {
  Fixture f;
  f.tree.expand(f.s, f.s2, 0.0, 0.0, f.uniform());
  EXPECT_THROW(f.tree.expand(f.s, f.s2, 0.0, 0.0, f.uniform()), std::logic_error);
}

TEST(SearchTree, WrongPriorSizeThrows) {
  Fixture f;
  EXPECT_THROW(f.tree.expand(f.s, f.s2, 0.0, 0.0, {0.5, 0.5}), std::invalid_argument);
}

TEST(SearchTree, UpdateExamples) {
  Fixture f;
  f.tree.expand(f.s, f.s2, 0.0, 0.5, f.uniform());
  // Initial V (0.5) carries no weight: the first update replaces it.
  auto [v1, n1] = f.tree.update(f.s, f.s2, 1.0);
  EXPECT_EQ(v1, 1.0);
  EXPECT_EQ(n1, 1u);
  auto [v2, n2] = f.tree.update(f.s, f.s2, 0.0);
  EXPECT_EQ(v2, 0.5);
  EXPECT_EQ(n2, 2u);
  auto [v3, n3] = f.tree.update(f.s, f.s2, 0.5);
  EXPECT_DOUBLE_EQ(v3, 0.5);
  EXPECT_EQ(n3, 3u);
}

TEST(SearchTree, UpdateIsTheRunningMean) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Fixture f;
    f.tree.expand(f.s, f.s2, 0.0, u(rng), f.uniform());
    std::vector<double> gs;
    const int k = 1 + trial * 3;
    for (int i = 0; i < k; ++i) {
      gs.push_back(u(rng));
      f.tree.update(f.s, f.s2, gs.back());
    }
    const double mean = std::accumulate(gs.begin(), gs.end(), 0.0) / gs.size();
    EXPECT_NEAR(f.tree.find(f.root)->V, mean, 1e-12);
    EXPECT_EQ(f.tree.find(f.root)->N, static_cast<std::uint32_t>(k));
  }
}

TEST(SearchTree, TouchCountsAndNodes) {
  Fixture f;
  f.tree.expand(f.s, f.s2, 0.0, 0.0, f.uniform());
  EXPECT_EQ(f.tree.touch(f.s, 3, f.s2), 1u);
  EXPECT_EQ(f.tree.touch(f.s, 3, f.s2), 2u);
  EXPECT_EQ(f.tree.touch(f.s, kStopCandidate, f.s2), 1u);
  EXPECT_EQ(f.tree.and_visits({{0, 0}, f.tree.candidate(3), {2, 2}}), 2u);
  EXPECT_EQ(f.tree.and_visits({{0, 0}, std::nullopt, {2, 2}}), 1u);
  auto ands = f.tree.and_nodes();
  EXPECT_EQ(ands.size(), 2u);
}

TEST(SearchTree, CandidatesAreStopThenEveryEmptyCell) {
  Maze m = generate_maze(7, 7, 0.5, 4);
  Task t = sample_task(m, 1);
  auto c = candidate_subgoals(t, {t.start, t.goal});
  ASSERT_EQ(static_cast<int>(c.size()), m.num_empty() + 1);
  EXPECT_FALSE(c[0].has_value());
  for (int i = 0; i < m.num_empty(); ++i) EXPECT_EQ(*c[i + 1], m.cell(i));
  SearchTree tree(m, {t.start, t.goal}, 10, 4);
  for (int slot = 1; slot < tree.num_candidates(); ++slot) EXPECT_EQ(tree.candidate(slot), c[slot]);
}

TEST(SearchTree, KeyedHelpersMatchIndexApi) {
  Fixture f;
  OrKey key{{0, 1}, {1, 1}};
  ASSERT_TRUE(expand_node(f.tree, key, 1.0, 0.0, f.uniform()));
  auto [v, n] = update_or_stats(f.tree, key, 0.25);
  EXPECT_EQ(v, 0.25);
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(touch_and_node(f.tree, {{0, 1}, StateId{0, 2}, {1, 1}}), 1u);
  EXPECT_EQ(f.tree.find(f.tree.index_of({0, 1}), f.tree.index_of({1, 1}))->N, 1u);
}

TEST(SearchTree, DumpRoundTrip) {
  Fixture f;
  f.tree.expand(f.s, f.s2, 0.0, 0.125, f.uniform());
  f.tree.expand(f.s, 4, 0.0, 0.3, f.uniform());
  f.tree.touch(f.s, 5, f.s2);
  f.tree.update(f.s, f.s2, 0.1);
  f.tree.update(f.s, 4, 1.0 / 3.0);
  const std::string text = f.tree.dump();
  SearchTree back = SearchTree::parse_dump(f.maze, f.root, 5, 8, text);
  EXPECT_EQ(back.dump(), text);
  EXPECT_EQ(back.budget_used(), 2);
  EXPECT_EQ(back.find(f.root)->V, f.tree.find(f.root)->V);
}

TEST(SearchTree, BudgetUsedCountsExpandedNodes) {
  Maze m = Maze::open(4, 4);
  SearchTree tree(m, {{0, 0}, {3, 3}}, 100, 8);
  std::vector<double> prior(tree.num_candidates(), 0.0);
  for (int a = 0; a < 16; a += 3)
    for (int b = 0; b < 16; b += 5) tree.expand(a, b, 0.0, 0.0, prior);
  int expanded = 0;
  for (const OrNode& n : tree.or_nodes()) expanded += n.expanded ? 1 : 0;
  EXPECT_EQ(tree.budget_used(), expanded);
  EXPECT_EQ(tree.num_or_nodes(), static_cast<std::size_t>(expanded));
}

}  // namespace
}  // namespace dcmcts
