#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcmcts/training.hpp"

namespace dcmcts {

struct ExperimentConfig {
  EnvConfig env;
  PlannerConfig planner;
  TrainConfig train;
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  /// Evaluate every this many episodes on `eval_tasks` fresh tasks (0: off).
  int eval_every = 0;
  int eval_tasks = 100;
};

/// Environment variables overriding config keys: DCMCTS_<KEY IN UPPER CASE>.
inline constexpr std::string_view kEnvPrefix = "DCMCTS_";

/// Known config keys in canonical order.
const std::vector<std::string>& config_keys();
/// Throws std::invalid_argument for unknown keys or malformed values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Flat `key = value` lines, `#` comments. Throws std::invalid_argument
/// naming the offending line.
ExperimentConfig parse_config(std::string_view text);
/// Applies overrides found through `getenv` (defaults to std::getenv).
void apply_environment(ExperimentConfig& config,
                       const std::function<const char*(const char*)>& getenv_fn = {});
std::string config_text(const ExperimentConfig& config);

/// Paper-style desk-scale defaults: 11x11, density 0.75, budget 100,
/// buffer 2048, batch 128, Adam at 1e-3, temperature 0.003.
ExperimentConfig desk_scale_config();

std::string metrics_line(const EpisodeRecord& record);
EpisodeRecord parse_metrics_line(std::string_view line);
/// Error message for the first malformed line, nullopt if all lines are valid.
std::optional<std::string> validate_metrics(std::string_view text);

std::string eval_summary_json(const EvalSummary& summary, const ExperimentConfig& config,
                              std::string_view arm);

/// Character grid of the maze with the plan's sub-goals labelled by the
/// depth (1-9, then '+') of the solution-tree node that chose them; a
/// revisited cell shows its smallest depth. S/G mark start and goal.
std::string render_plan(const Task& task, const PlanResult& result);

/// Training run persisted under `dir`: config.txt, metrics.jsonl,
/// checkpoint.txt (resumable trainer state), model.txt and, when
/// eval_every > 0, eval.jsonl.
struct RunOptions {
  bool resume = false;
  bool timing = false;
  /// Called after every episode (progress reporting).
  std::function<void(const EpisodeRecord&)> on_episode;
};
void run_training(const ExperimentConfig& config, const std::string& dir, const RunOptions& options);

/// Learning curve of a run directory: solve fraction per `window` episodes.
struct CurvePoint {
  int episode_end = 0;
  int episodes = 0;
  double solved_fraction = 0.0;
};
std::vector<CurvePoint> learning_curve(const std::vector<EpisodeRecord>& records, int window);
std::vector<EpisodeRecord> read_metrics_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

}  // namespace dcmcts
