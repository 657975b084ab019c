#pragma once

#include <deque>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcmcts/model.hpp"

namespace dcmcts {

struct PriorEntry {
  std::shared_ptr<const TaskContext> ctx;
  int s = 0;
  int s2 = 0;
  std::vector<std::pair<int, double>> target;  // sparse (slot, probability)
};

struct ValueEntry {
  std::shared_ptr<const TaskContext> ctx;
  int s = 0;
  int s2 = 0;
  double target = 0.0;
};

/// Two FIFO lists (prior and value examples), each bounded by `capacity`.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2048);

  std::size_t capacity() const { return capacity_; }
  std::size_t prior_size() const { return prior_.size(); }
  std::size_t value_size() const { return value_.size(); }
  const std::deque<PriorEntry>& prior_entries() const { return prior_; }
  const std::deque<ValueEntry>& value_entries() const { return value_; }

  /// Throws std::invalid_argument for malformed targets.
  void add_prior(PriorEntry entry);
  void add_value(ValueEntry entry);

  /// True when at least one list holds `batch_size` entries.
  bool can_sample(std::size_t batch_size) const;
  /// Uniform sample without replacement of `batch_size` entries from every
  /// list that holds at least that many.
  Batch sample(Rng& rng, std::size_t batch_size) const;

  /// `replay v1` text snapshot; task contexts are stored once each.
  std::string serialize() const;
  static ReplayBuffer deserialize(std::string_view text);

 private:
  std::size_t capacity_;
  std::deque<PriorEntry> prior_;
  std::deque<ValueEntry> value_;
};

}  // namespace dcmcts
