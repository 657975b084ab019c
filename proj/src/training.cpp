#include "dcmcts/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

std::string_view to_string(HerParserKind kind) {
  switch (kind) {
    case HerParserKind::LeftFirst: return "left_first";
    case HerParserKind::RightFirst: return "right_first";
    case HerParserKind::TemporallyBalanced: return "temporally_balanced";
    case HerParserKind::WeightBalanced: return "weight_balanced";
  }
  return "left_first";
}

HerParserKind parse_parser_kind(std::string_view name) {
  for (auto k : {HerParserKind::LeftFirst, HerParserKind::RightFirst,
                 HerParserKind::TemporallyBalanced, HerParserKind::WeightBalanced}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown parser '" + std::string(name) + "'");
}

namespace {

void balanced(std::span<const StateId> st, std::size_t a, std::size_t b, const PairValueFn* fn,
              std::vector<Triplet>& out) {
  if (b - a < 2) return;
  std::size_t m = (a + b) / 2;
  if (fn) {
    double best = 0.0;
    for (std::size_t k = a + 1; k < b; ++k) {
      const double gap = std::abs((*fn)(st[a], st[k]) - (*fn)(st[k], st[b]));
      if (k == a + 1 || gap < best) {
        best = gap;
        m = k;
      }
    }
  }
  out.push_back({st[a], st[m], st[b]});
  balanced(st, a, m, fn, out);
  balanced(st, m, b, fn, out);
}

}  // namespace

std::vector<Triplet> parse_trajectory(HerParserKind kind, std::span<const StateId> states,
                                      const PairValueFn& value_fn) {
  std::vector<Triplet> out;
  if (states.size() < 3) return out;
  const std::size_t T = states.size() - 1;
  switch (kind) {
    case HerParserKind::LeftFirst:
      for (std::size_t t = 0; t + 1 < T; ++t) out.push_back({states[t], states[t + 1], states[T]});
      break;
    case HerParserKind::RightFirst:
      for (std::size_t t = T; t >= 2; --t) out.push_back({states[0], states[t - 1], states[t]});
      break;
    case HerParserKind::TemporallyBalanced:
      balanced(states, 0, T, nullptr, out);
      break;
    case HerParserKind::WeightBalanced:
      if (!value_fn) throw std::invalid_argument("weight-balanced parsing needs a value function");
      balanced(states, 0, T, &value_fn, out);
      break;
  }
  return out;
}

std::vector<ValueTarget> value_targets_from_result(const PlanResult& result) {
  std::vector<ValueTarget> out;
  out.reserve(result.solution_tree.nodes.size());
  for (const auto& n : result.solution_tree.nodes) out.push_back({n.key, n.G});
  return out;
}

std::optional<std::vector<double>> prior_targets_from_tree(const Planner& planner,
                                                           const SearchTree& tree,
                                                           const OrKey& key) {
  const int s = tree.index_of(key.s);
  const int s2 = tree.index_of(key.s2);
  if (s < 0 || s2 < 0) return std::nullopt;
  const OrNode* node = tree.find(s, s2);
  if (!node || !node->expanded) return std::nullopt;
  if (std::none_of(node->child_visits.begin(), node->child_visits.end(),
                   [](std::uint32_t n) { return n > 0; })) {
    return std::nullopt;
  }
  const int n = tree.num_cells();
  const bool sequential = planner.config().mode == SearchMode::SequentialRight;
  std::vector<double> target(n + 1, 0.0);
  target[kStopCandidate] = planner.low_level(s, s2);
  for (int m = 0; m < n; ++m) {
    if (m == s || m == s2) continue;
    const double left = sequential ? planner.low_level(s, m) : planner.child_value(tree, s, m);
    if (left == 0.0) continue;
    target[m + 1] = left * planner.child_value(tree, m, s2);
  }
  double total = 0.0;
  for (double t : target) total += t;
  if (total <= 0.0) return std::nullopt;
  for (double& t : target) t /= total;
  return target;
}

std::string_view to_string(PriorTargetSource source) {
  return source == PriorTargetSource::TreeValues ? "tree_values" : "plan_splits";
}

PriorTargetSource parse_prior_target_source(std::string_view name) {
  if (name == "tree_values") return PriorTargetSource::TreeValues;
  if (name == "plan_splits") return PriorTargetSource::PlanSplits;
  throw std::invalid_argument("unknown prior target source '" + std::string(name) + "'");
}

int effective_step_limit(const EnvConfig& env, std::size_t plan_length) {
  if (env.step_limit > 0) return env.step_limit;
  return env.steps_per_hop * static_cast<int>(plan_length > 1 ? plan_length - 1 : 1);
}

void validate(const EnvConfig& env) {
  if (env.width < 3 || env.height < 3) throw std::invalid_argument("env: maze must be at least 3x3");
  if (!(env.density >= 0.0 && env.density <= 1.0)) {
    throw std::invalid_argument("env: density must be in [0, 1]");
  }
  if (env.step_limit < 0) throw std::invalid_argument("env: step_limit must be >= 0");
  if (env.steps_per_hop < 1) throw std::invalid_argument("env: steps_per_hop must be >= 1");
}

void validate(const TrainConfig& train) {
  if (train.episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
  if (train.buffer_capacity < 1) throw std::invalid_argument("train: buffer capacity must be >= 1");
  if (train.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (train.train_steps_per_episode < 0) {
    throw std::invalid_argument("train: train_steps_per_episode must be >= 0");
  }
  if (!(train.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (!(train.temperature > 0.0)) throw std::invalid_argument("train: temperature must be > 0");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a mix of the three inputs
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

Task episode_task(const EnvConfig& env, std::uint64_t seed, std::uint64_t stream,
                  std::uint64_t index) {
  const std::uint64_t task_seed = derive_seed(seed, stream, index);
  Maze maze = generate_maze(env.width, env.height, env.density, task_seed);
  return sample_task(maze, derive_seed(task_seed, 0, 0));
}

namespace {

TrainableModel make_model(const TrainConfig& train, std::uint64_t seed) {
  TrainableModel model(train.shape, derive_seed(seed, 100, 0));
  model.learning_rate = train.learning_rate;
  model.optimizer = train.optimizer;
  model.temperature = train.temperature;
  return model;
}

enum Stream : std::uint64_t { kSearch = 10, kExecute = 11, kSample = 12 };

}  // namespace

Trainer::Trainer(EnvConfig env, PlannerConfig planner, TrainConfig train, std::uint64_t seed)
    : env_(env), planner_(planner), train_(train), seed_(seed), model_(make_model(train, seed)),
      buffer_(train.buffer_capacity) {
  validate(env_);
  validate(planner_);
  validate(train_);
}

EpisodeRecord Trainer::run_episode() {
  const auto t0 = std::chrono::steady_clock::now();
  const int ep = next_episode_;
  EpisodeRecord rec;
  rec.episode = ep;
  rec.seed = derive_seed(seed_, kTrainStream, ep);

  auto ctx = std::make_shared<const TaskContext>(episode_task(env_, seed_, kTrainStream, ep));
  const Task& task = ctx->task();
  MyopicPolicy pi0(ctx->maze());
  PlannerConfig cfg = planner_;
  cfg.seed = derive_seed(seed_, kSearch, ep);
  Planner planner(*ctx, {&model_, &model_}, cfg, pi0);
  PlanResult result = planner.run();

  rec.plan_length = static_cast<int>(result.plan.sigma.size());
  rec.L = result.plan.objective_L;
  rec.G = result.solution_tree.root().G;
  rec.budget_used = result.budget_used;

  Rng exec_rng(derive_seed(seed_, kExecute, ep));
  const Trajectory traj = execute_plan(exec_rng, task, result.plan.sigma,
                                       effective_step_limit(env_, result.plan.sigma.size()), pi0);
  rec.solved = traj.reached_goal;

  // Targets from the search.
  for (const auto& n : result.solution_tree.nodes) {
    const int s = ctx->index_of(n.key.s);
    const int s2 = ctx->index_of(n.key.s2);
    double target = n.G;
    if (train_.monte_carlo_value_targets) target = traj.reached_goal ? 1.0 : 0.0;
    buffer_.add_value({ctx, s, s2, target});
    if (train_.prior_targets == PriorTargetSource::TreeValues) {
      if (auto dist = prior_targets_from_tree(planner, result.tree, n.key)) {
        PriorEntry e{ctx, s, s2, {}};
        for (int k = 0; k < static_cast<int>(dist->size()); ++k) {
          if ((*dist)[k] > 0.0) e.target.emplace_back(k, (*dist)[k]);
        }
        buffer_.add_prior(std::move(e));
      }
    } else if (!n.terminal) {
      buffer_.add_prior({ctx, s, s2, {{ctx->index_of(*n.chosen) + 1, 1.0}}});
    }
  }

  // Hindsight relabelling: the trajectory solved the task (s_0, s_T).
  PairValueFn fn;
  if (train_.parser == HerParserKind::WeightBalanced) {
    fn = [&](StateId a, StateId b) { return model_.value(*ctx, {a, b}); };
  }
  for (const Triplet& t : parse_trajectory(train_.parser, traj.states, fn)) {
    if (t.s == t.s2 || t.mid == t.s || t.mid == t.s2) continue;
    const int s = ctx->index_of(t.s);
    const int s2 = ctx->index_of(t.s2);
    buffer_.add_prior({ctx, s, s2, {{ctx->index_of(t.mid) + 1, 1.0}}});
    if (train_.her_value_targets) buffer_.add_value({ctx, s, s2, 1.0});
  }

  if (buffer_.can_sample(train_.batch_size)) {
    Rng sample_rng(derive_seed(seed_, kSample, ep));
    for (int i = 0; i < train_.train_steps_per_episode; ++i) {
      const Losses l = model_.train_step(buffer_.sample(sample_rng, train_.batch_size));
      rec.trained = true;
      rec.prior_loss = l.prior;
      rec.value_loss = l.value;
    }
  }

  ++next_episode_;
  if (timing) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
  }
  return rec;
}

std::string Trainer::checkpoint() const {
  const std::string model = model_.serialize();
  const std::string replay = buffer_.serialize();
  std::ostringstream out;
  out << "trainer v1\n";
  out << "seed " << seed_ << '\n';
  out << "episode " << next_episode_ << '\n';
  out << "model " << model.size() << '\n' << model;
  out << "replay " << replay.size() << '\n' << replay;
  return out.str();
}

void Trainer::restore(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  if (line != "trainer v1") throw std::invalid_argument("trainer checkpoint: bad header");
  std::string key;
  std::uint64_t seed = 0;
  int episode = 0;
  in >> key >> seed;
  if (!in || key != "seed") throw std::invalid_argument("trainer checkpoint: expected seed");
  if (seed != seed_) throw std::invalid_argument("trainer checkpoint: seed does not match run");
  in >> key >> episode;
  if (!in || key != "episode") throw std::invalid_argument("trainer checkpoint: expected episode");
  auto block = [&](const char* name) {
    std::size_t size = 0;
    in >> key >> size;
    if (!in || key != name) throw std::invalid_argument(std::string("trainer checkpoint: expected ") + name);
    in.get();
    std::string data(size, '\0');
    in.read(data.data(), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in.gcount()) != size) {
      throw std::invalid_argument("trainer checkpoint: truncated block");
    }
    return data;
  };
  TrainableModel model = TrainableModel::deserialize(block("model"));
  ReplayBuffer buffer = ReplayBuffer::deserialize(block("replay"));
  model_ = std::move(model);
  buffer_ = std::move(buffer);
  next_episode_ = episode;
}

std::vector<EpisodeRecord> training_loop(const EnvConfig& env, const PlannerConfig& planner,
                                         const TrainConfig& train, std::uint64_t seed) {
  Trainer trainer(env, planner, train, seed);
  std::vector<EpisodeRecord> out;
  out.reserve(train.episodes);
  while (!trainer.done()) out.push_back(trainer.run_episode());
  return out;
}

EvalSummary evaluate(const EnvConfig& env, const PlannerConfig& planner, HeuristicPair heuristics,
                     int tasks, std::uint64_t seed) {
  validate(env);
  if (tasks < 1) throw std::invalid_argument("evaluate: tasks must be >= 1");
  EvalSummary sum;
  sum.tasks = tasks;
  double total_L = 0.0;
  for (int i = 0; i < tasks; ++i) {
    TaskContext ctx(episode_task(env, seed, kEvalStream, i));
    MyopicPolicy pi0(ctx.maze());
    PlannerConfig cfg = planner;
    cfg.seed = derive_seed(seed, kSearch + 100, i);
    PlanResult r = run_search(ctx, heuristics, cfg, pi0);
    Rng rng(derive_seed(seed, kExecute + 100, i));
    Trajectory t = execute_plan(rng, ctx.task(), r.plan.sigma,
                                effective_step_limit(env, r.plan.sigma.size()), pi0);
    sum.solved += t.reached_goal ? 1 : 0;
    total_L += r.plan.objective_L;
  }
  const double n = tasks;
  const double p = sum.solved / n;
  const double z = 1.959963984540054;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  sum.fraction = p;
  sum.ci_low = std::max(0.0, centre - half);
  sum.ci_high = std::min(1.0, centre + half);
  sum.mean_L = total_L / n;
  return sum;
}

}  // namespace dcmcts
