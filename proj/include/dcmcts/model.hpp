#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcmcts/heuristics.hpp"

namespace dcmcts {

/// Features of a sub-task (s, s''): offsets, distances, adjacency flags and
/// the wall patches around both endpoints.
inline constexpr int kPairFeatures = 7 + 2 * kPatchSize;
/// Features of a candidate sub-goal x for (s, s''): offsets s->x and x->s'',
/// distance terms and the wall patch around x.
inline constexpr int kCandidateFeatures = 15 + kPatchSize;

void pair_features(const TaskContext& ctx, int s, int s2, std::span<double> out);
void candidate_features(const TaskContext& ctx, int s, int x, int s2, std::span<double> out);

struct ModelShape {
  int value_hidden = 16;
  int stop_hidden = 8;
  int candidate_hidden = 16;
};

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Supervised prior example: target distribution over candidate slots of
/// task (s, s''), stored sparsely as (slot, probability) pairs.
struct PriorExample {
  const TaskContext* ctx = nullptr;
  int s = 0;
  int s2 = 0;
  std::vector<std::pair<int, double>> target;
};

struct ValueExample {
  const TaskContext* ctx = nullptr;
  int s = 0;
  int s2 = 0;
  double target = 0.0;
};

struct Batch {
  std::vector<PriorExample> prior;
  std::vector<ValueExample> value;
};

struct Losses {
  double prior = 0.0;
  double value = 0.0;
};

/// Compact two-headed network.
///   value head: pair features -> tanh hidden -> sigmoid
///   prior head: one logit per candidate slot. Cell candidates share a tanh
///   hidden layer over [candidate features, pair features]; the empty
///   sub-goal gets its logit from a separate small pair network.
/// Prior logits are divided by `temperature` at inference only.
class TrainableModel final : public PolicyPrior, public ValueEstimator {
 public:
  TrainableModel(ModelShape shape, std::uint64_t seed);

  void prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const override;
  double value(const TaskContext& ctx, const OrKey& key) const override;

  /// Logits at temperature 1 for every candidate slot.
  void logits(const TaskContext& ctx, int s, int s2, std::span<double> out) const;
  double value_index(const TaskContext& ctx, int s, int s2) const;

  /// Batch-mean cross-entropy losses; accumulates their gradient into
  /// `grad` when it is non-empty (size num_params()).
  Losses loss_and_gradient(const Batch& batch, std::span<double> grad) const;
  /// One optimizer step on `batch`; returns the losses before the step.
  Losses train_step(const Batch& batch);

  const ModelShape& shape() const { return shape_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  double temperature = 0.003;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// `model v1` text checkpoint including optimizer state.
  std::string serialize() const;
  static TrainableModel deserialize(std::string_view text);
  void save(const std::string& path) const;
  static TrainableModel load(const std::string& path);

  bool operator==(const TrainableModel& other) const;

 private:
  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  struct Layout {
    std::size_t wv1, bv1, wv2, bv2;
    std::size_t ws1, bs1, ws2, bs2;
    std::size_t wc1, wp1, bc1, wc2, bc2;
  };

  void build_layout();
  double prior_example(const PriorExample& ex, double scale, std::span<double> grad) const;
  double value_example(const ValueExample& ex, double scale, std::span<double> grad) const;

  ModelShape shape_;
  std::vector<Block> blocks_;
  Layout at_{};
  std::vector<double> params_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  std::uint64_t steps_ = 0;
};

}  // namespace dcmcts
