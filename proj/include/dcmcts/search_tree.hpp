#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcmcts/grid_world.hpp"

namespace dcmcts {

/// A sub-goal: an empty cell, or nullopt for "no further split".
using SubGoal = std::optional<StateId>;

/// Sub-task (s, s'') labelling an OR node.
struct OrKey {
  StateId s;
  StateId s2;
  friend auto operator<=>(const OrKey&, const OrKey&) = default;
};

/// Triple (s, s', s'') labelling an AND node.
struct AndKey {
  StateId s;
  SubGoal mid;
  StateId s2;
  friend auto operator<=>(const AndKey&, const AndKey&) = default;
};

/// Candidate slot 0 is the empty sub-goal; slot k > 0 is empty cell k - 1.
inline constexpr int kStopCandidate = 0;

struct OrNode {
  OrKey key;
  double V = 0.0;
  std::uint32_t N = 0;
  bool expanded = false;
  double v_pi = 0.0;
  double v_boot = 0.0;
  std::vector<double> prior;                // one entry per candidate slot
  std::vector<std::uint32_t> child_visits;  // AND-node visit counts, per slot
};

struct AndNode {
  AndKey key;
  std::uint32_t N = 0;
};

/// Records which OR nodes a traversal read or wrote. Used to validate
/// speculative parallel sub-traversals.
struct AccessLog {
  std::vector<std::uint32_t> reads;
  std::vector<std::uint32_t> writes;
  bool saw_exhausted_budget = false;
};

/// The (partial) AND/OR search tree. OR nodes are keyed by their sub-task
/// only, so every path reaching the same (s, s'') shares one node. AND
/// nodes live inside their parent OR node as per-candidate visit counts.
class SearchTree {
 public:
  SearchTree() = default;
  SearchTree(const Maze& maze, OrKey root, int budget_max, int max_depth);

  const OrKey& root() const { return root_; }
  int budget_used() const { return budget_used_; }
  int budget_max() const { return budget_max_; }
  int max_depth() const { return max_depth_; }
  bool budget_left() const { return budget_used_ < budget_max_; }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_candidates() const { return num_cells() + 1; }

  int index_of(StateId s) const;
  StateId cell(int index) const { return cells_[index]; }
  SubGoal candidate(int slot) const {
    return slot == kStopCandidate ? SubGoal{} : SubGoal{cells_[slot - 1]};
  }

  // Index-based access (cell indices of the maze's empty cells).
  const OrNode* find(int s, int s2) const;
  const OrNode* find(const OrKey& key) const;
  /// Stores a freshly expanded node. Returns nullopt without touching the
  /// tree when the budget is exhausted.
  std::optional<double> expand(int s, int s2, double v_pi, double v_boot,
                               std::vector<double> prior);
  /// Running-average update; returns the new (V, N).
  std::pair<double, std::uint32_t> update(int s, int s2, double G);
  /// Increments the AND child `slot` of OR node (s, s2); returns its new N.
  std::uint32_t touch(int s, int slot, int s2);

  std::size_t num_or_nodes() const { return nodes_.size(); }
  const std::vector<OrNode>& or_nodes() const { return nodes_; }
  std::vector<AndNode> and_nodes() const;
  std::uint32_t and_visits(const AndKey& key) const;

  void set_access_log(AccessLog* log) { log_ = log; }
  std::uint32_t pack(int s, int s2) const {
    return static_cast<std::uint32_t>(s) * cells_.size() + static_cast<std::uint32_t>(s2);
  }
  /// Copies OR nodes `keys` from `other` (same maze and root) into this tree.
  void merge_nodes(const SearchTree& other, const std::vector<std::uint32_t>& keys);
  void set_budget_used(int used) { budget_used_ = used; }

  /// `OR r,c r,c V N expanded` and `AND r,c [∅|r,c] r,c N` lines sorted by key.
  std::string dump() const;
  static SearchTree parse_dump(const Maze& maze, OrKey root, int budget_max, int max_depth,
                               std::string_view text);

 private:
  OrNode& mutable_node(int s, int s2);
  void log_read(int s, int s2) const {
    if (log_) log_->reads.push_back(pack(s, s2));
  }
  void log_write(int s, int s2) {
    if (log_) log_->writes.push_back(pack(s, s2));
  }

  OrKey root_{};
  int budget_used_ = 0;
  int budget_max_ = 0;
  int max_depth_ = 0;
  int width_ = 0;
  std::vector<StateId> cells_;
  std::vector<int> cell_index_;  // row-major grid -> empty-cell index
  std::vector<std::int32_t> slot_;  // packed key -> position in nodes_
  std::vector<OrNode> nodes_;
  AccessLog* log_ = nullptr;
};

std::optional<double> expand_node(SearchTree& tree, const OrKey& key, double v_pi,
                                  double v_boot, std::vector<double> prior);
std::pair<double, std::uint32_t> update_or_stats(SearchTree& tree, const OrKey& key, double G);
std::uint32_t touch_and_node(SearchTree& tree, const AndKey& key);

/// The empty sub-goal followed by every empty cell in row-major order.
std::vector<SubGoal> candidate_subgoals(const Task& task, const OrKey& key);

}  // namespace dcmcts
