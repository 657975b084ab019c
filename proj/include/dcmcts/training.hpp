#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcmcts/model.hpp"
#include "dcmcts/planner.hpp"
#include "dcmcts/replay_buffer.hpp"

namespace dcmcts {

enum class HerParserKind { LeftFirst, RightFirst, TemporallyBalanced, WeightBalanced };

std::string_view to_string(HerParserKind kind);
HerParserKind parse_parser_kind(std::string_view name);

struct Triplet {
  StateId s;
  StateId mid;
  StateId s2;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

using PairValueFn = std::function<double(StateId, StateId)>;

/// Hindsight parsing of a visited-state sequence into (s, s', s'')
/// supervision triplets. Fewer than 3 states give no triplets.
///   LeftFirst:          (s_t, s_{t+1}, s_T) for t = 0 .. T-2
///   RightFirst:         (s_0, s_{t-1}, s_t) for t = T .. 2
///   TemporallyBalanced: (s_a, s_{(a+b)/2}, s_b) over the recursive
///                       midpoint split of [0, T], pre-order
///   WeightBalanced:     as above, splitting where
///                       |value_fn(s_a, s_m) - value_fn(s_m, s_b)| is
///                       smallest (first index on ties)
std::vector<Triplet> parse_trajectory(HerParserKind kind, std::span<const StateId> states,
                                      const PairValueFn& value_fn = {});

struct ValueTarget {
  OrKey key;
  double G = 0.0;
};

/// One regression target per solution-tree OR node: its extracted return.
std::vector<ValueTarget> value_targets_from_result(const PlanResult& result);

/// Target distribution over candidate slots of an expanded OR node,
/// proportional to V(s, s') * V(s', s'') (v_pi(s, s'') for the empty
/// sub-goal; the bootstrap value for unexpanded children; v_pi(s, s') on the
/// left in sequential mode). Degenerate splits get zero mass. nullopt when
/// the node has no touched child or every product is zero.
std::optional<std::vector<double>> prior_targets_from_tree(const Planner& planner,
                                                           const SearchTree& tree,
                                                           const OrKey& key);

struct EnvConfig {
  int width = 11;
  int height = 11;
  double density = 0.75;
  /// Fixed number of low-level steps allowed when executing a plan. 0 means
  /// steps_per_hop * (|plan| - 1): with one step per hop, v_pi0 is exactly
  /// the success probability of each hop.
  int step_limit = 0;
  int steps_per_hop = 1;
};

int effective_step_limit(const EnvConfig& env, std::size_t plan_length);

enum class PriorTargetSource { TreeValues, PlanSplits };

std::string_view to_string(PriorTargetSource source);
PriorTargetSource parse_prior_target_source(std::string_view name);

struct TrainConfig {
  int episodes = 5000;
  std::size_t buffer_capacity = 2048;
  std::size_t batch_size = 128;
  int train_steps_per_episode = 1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double temperature = 0.003;
  ModelShape shape;
  HerParserKind parser = HerParserKind::TemporallyBalanced;
  PriorTargetSource prior_targets = PriorTargetSource::TreeValues;
  /// Also regress the value head on hindsight sub-tasks of the trajectory
  /// (target 1: the low-level policy did get from s to s'').
  bool her_value_targets = false;
  /// Ablation: value targets from the executed outcome instead of the
  /// extracted returns.
  bool monte_carlo_value_targets = false;
};

void validate(const EnvConfig& env);
void validate(const TrainConfig& train);

/// Independent 64-bit seed for (base seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t seed = 0;  // seed of the episode's maze and task
  bool solved = false;
  int plan_length = 0;
  double L = 0.0;
  double G = 0.0;
  int budget_used = 0;
  bool trained = false;
  double prior_loss = 0.0;
  double value_loss = 0.0;
  double wall_ms = -1.0;  // negative when timing is off
};

/// The seeded task of episode `index` in stream `stream`.
Task episode_task(const EnvConfig& env, std::uint64_t seed, std::uint64_t stream,
                  std::uint64_t index);

/// Episode-by-episode training state. Every episode derives its own seeds
/// from (seed, episode), so model + buffer + episode counter is all the
/// state a resumed run needs.
class Trainer {
 public:
  Trainer(EnvConfig env, PlannerConfig planner, TrainConfig train, std::uint64_t seed);

  EpisodeRecord run_episode();
  int next_episode() const { return next_episode_; }
  bool done() const { return next_episode_ >= train_.episodes; }

  TrainableModel& model() { return model_; }
  const TrainableModel& model() const { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const EnvConfig& env() const { return env_; }
  const PlannerConfig& planner_config() const { return planner_; }
  const TrainConfig& train_config() const { return train_; }
  std::uint64_t seed() const { return seed_; }
  bool timing = false;

  /// `trainer v1` text: episode counter, model and replay buffer.
  std::string checkpoint() const;
  void restore(std::string_view text);

 private:
  EnvConfig env_;
  PlannerConfig planner_;
  TrainConfig train_;
  std::uint64_t seed_;
  TrainableModel model_;
  ReplayBuffer buffer_;
  int next_episode_ = 0;
};

std::vector<EpisodeRecord> training_loop(const EnvConfig& env, const PlannerConfig& planner,
                                         const TrainConfig& train, std::uint64_t seed);

/// Seed streams for episode_task.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kEvalStream = 2;

struct EvalSummary {
  int tasks = 0;
  int solved = 0;
  double fraction = 0.0;
  double ci_low = 0.0;   // Wilson 95% interval
  double ci_high = 0.0;
  double mean_L = 0.0;
};

/// Plans and executes `tasks` evaluation tasks drawn from the eval stream.
EvalSummary evaluate(const EnvConfig& env, const PlannerConfig& planner, HeuristicPair heuristics,
                     int tasks, std::uint64_t seed);

}  // namespace dcmcts
