#pragma once

#include <array>
#include <span>
#include <vector>

#include "dcmcts/grid_world.hpp"
#include "dcmcts/search_tree.hpp"

namespace dcmcts {

/// Width of the local wall-occupancy patch stored per empty cell
/// (5x5 neighborhood without its center).
inline constexpr int kPatchSize = 24;

/// Immutable per-task data shared by the heuristics: the task, its
/// categorical encoding and precomputed local wall patches.
class TaskContext {
 public:
  explicit TaskContext(Task task);

  const Task& task() const { return task_; }
  const Maze& maze() const { return task_.maze; }
  const TaskEncoding& encoding() const { return encoding_; }
  int num_cells() const { return task_.maze.num_empty(); }
  /// Candidate slots: the empty sub-goal plus one per empty cell.
  int num_candidates() const { return num_cells() + 1; }
  int index_of(StateId s) const { return task_.maze.index_of(s); }
  const std::array<double, kPatchSize>& patch(int cell) const { return patches_[cell]; }

 private:
  Task task_;
  TaskEncoding encoding_;
  std::vector<std::array<double, kPatchSize>> patches_;
};

/// p(s' | s, s''): a distribution over candidate slots (see kStopCandidate).
class PolicyPrior {
 public:
  virtual ~PolicyPrior() = default;
  virtual void prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const = 0;
};

/// Bootstrap estimate v(s, s'') of the high-level value, in [0, 1].
class ValueEstimator {
 public:
  virtual ~ValueEstimator() = default;
  virtual double value(const TaskContext& ctx, const OrKey& key) const = 0;
};

struct HeuristicPair {
  const PolicyPrior* prior = nullptr;
  const ValueEstimator* value = nullptr;
};

class UniformPrior final : public PolicyPrior {
 public:
  void prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const override;
};

class ZeroValue final : public ValueEstimator {
 public:
  double value(const TaskContext&, const OrKey&) const override { return 0.0; }
};

std::vector<double> uniform_prior(const TaskContext& ctx, const OrKey& key);
double zero_value(const TaskContext& ctx, const OrKey& key);

/// Uniform prior with zero bootstrap value: the untrained baseline.
HeuristicPair untrained_heuristics();

}  // namespace dcmcts
