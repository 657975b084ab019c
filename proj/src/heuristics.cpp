#include "dcmcts/heuristics.hpp"

#include <algorithm>

namespace dcmcts {

TaskContext::TaskContext(Task task) : task_(std::move(task)) {
  encoding_ = encode_task(task_);
  const Maze& m = task_.maze;
  patches_.resize(m.num_empty());
  for (int i = 0; i < m.num_empty(); ++i) {
    StateId c = m.cell(i);
    int k = 0;
    for (int dr = -2; dr <= 2; ++dr) {
      for (int dc = -2; dc <= 2; ++dc) {
        if (dr == 0 && dc == 0) continue;
        patches_[i][k++] = m.is_empty({c.row + dr, c.col + dc}) ? 0.0 : 1.0;
      }
    }
  }
}

void UniformPrior::prior(const TaskContext& ctx, const OrKey&, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 1.0 / ctx.num_candidates());
}

std::vector<double> uniform_prior(const TaskContext& ctx, const OrKey& key) {
  std::vector<double> out(ctx.num_candidates());
  UniformPrior{}.prior(ctx, key, out);
  return out;
}

double zero_value(const TaskContext& ctx, const OrKey& key) { return ZeroValue{}.value(ctx, key); }

HeuristicPair untrained_heuristics() {
  static const UniformPrior prior;
  static const ZeroValue value;
  return {&prior, &value};
}

}  // namespace dcmcts
