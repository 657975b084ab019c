#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "dcmcts/harness.hpp"
#include "test_support.hpp"

namespace dcmcts {
namespace {

TEST(Config, ParsesKeyValueLinesWithComments) {
  ExperimentConfig c = parse_config(
      "# desk run\n"
      "seed = 7\n"
      "width=9\n"
      "  height = 13  # trailing comment\n"
      "\n"
      "mode = sequential\n"
      "optimizer = adam\n"
      "parser = left_first\n"
      "her_value_targets = true\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.env.width, 9);
  EXPECT_EQ(c.env.height, 13);
  EXPECT_EQ(c.planner.mode, SearchMode::SequentialRight);
  EXPECT_EQ(c.train.optimizer, OptimizerKind::Adam);
  EXPECT_EQ(c.train.parser, HerParserKind::LeftFirst);
  EXPECT_TRUE(c.train.her_value_targets);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("colour = blue\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("budget = lots\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("budget 100\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("density = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("mode = astar\n"), std::invalid_argument);
}

TEST(Config, TextRoundTripCoversEveryKey) {
  ExperimentConfig c = desk_scale_config();
  c.seed = 11;
  c.planner.c_puct = 3.25;
  c.train.learning_rate = 3e-4;
  const std::string text = config_text(c);
  for (const std::string& key : config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
  EXPECT_EQ(config_text(parse_config(text)), text);
}

TEST(Config, DeskScaleDefaults) {
  ExperimentConfig c = desk_scale_config();
  EXPECT_EQ(c.env.width, 11);
  EXPECT_EQ(c.env.height, 11);
  EXPECT_EQ(c.env.density, 0.75);
  EXPECT_EQ(c.planner.budget, 100);
  EXPECT_EQ(c.train.buffer_capacity, 2048u);
  EXPECT_EQ(c.train.batch_size, 128u);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.train.temperature, 0.003);
}

TEST(Config, EnvironmentOverrides) {
  std::map<std::string, std::string> env{{"DCMCTS_BUDGET", "77"}, {"DCMCTS_MODE", "sequential"}};
  ExperimentConfig c;
  apply_environment(c, [&](const char* name) -> const char* {
    auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  EXPECT_EQ(c.planner.budget, 77);
  EXPECT_EQ(c.planner.mode, SearchMode::SequentialRight);
  EXPECT_EQ(c.env.width, ExperimentConfig{}.env.width);
}

EpisodeRecord sample_record() {
  EpisodeRecord r;
  r.episode = 3;
  r.seed = 123456789012345ull;
  r.solved = true;
  r.plan_length = 4;
  r.L = 1.0;
  r.G = 0.875;
  r.budget_used = 100;
  r.trained = true;
  r.prior_loss = 2.5;
  r.value_loss = 0.125;
  return r;
}

TEST(Metrics, LineRoundTrip) {
  EpisodeRecord r = sample_record();
  const std::string line = metrics_line(r);
  EXPECT_EQ(metrics_line(parse_metrics_line(line)), line);
  for (const char* key : {"\"episode\"", "\"solved\"", "\"L\"", "\"G\"", "\"budget\"",
                          "\"prior_loss\"", "\"value_loss\"", "\"seed\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  EXPECT_EQ(line.find("wall_ms"), std::string::npos);
  r.wall_ms = 12.5;
  EXPECT_NE(metrics_line(r).find("wall_ms"), std::string::npos);
}

TEST(Metrics, Validation) {
  EpisodeRecord a = sample_record(), b = sample_record();
  a.episode = 0;
  b.episode = 1;
  EXPECT_FALSE(validate_metrics(metrics_line(a) + "\n" + metrics_line(b) + "\n"));
  EXPECT_TRUE(validate_metrics("{\"episode\": 0}\n"));
  EXPECT_TRUE(validate_metrics("not json\n"));
  EXPECT_TRUE(validate_metrics(metrics_line(b) + "\n" + metrics_line(a) + "\n"));
  EpisodeRecord bad = sample_record();
  bad.L = 1.5;
  EXPECT_TRUE(validate_metrics(metrics_line(bad) + "\n"));
}

TEST(Render, LabelsSubgoalsByDepth) {
  Task t{Maze::open(5, 1), {0, 0}, {0, 4}};
  PlanResult r;
  r.plan.sigma = {{0, 0}, {0, 2}, {0, 4}};
  SolutionNode root;
  root.key = {t.start, t.goal};
  root.terminal = false;
  root.chosen = StateId{0, 2};
  root.left = 1;
  root.right = 2;
  SolutionNode left, right;
  left.key = {{0, 0}, {0, 2}};
  left.depth = 1;
  right.key = {{0, 2}, {0, 4}};
  right.depth = 1;
  r.solution_tree.nodes = {root, left, right};
  const std::string text = render_plan(t, r);
  EXPECT_EQ(text, "S.1.G\n");
}

TEST(Render, GridDimensions) {
  Task t = sample_task(generate_maze(9, 7, 0.5, 1), 1);
  PlanResult r = run_search(t, untrained_heuristics(), PlannerConfig{});
  const std::string text = render_plan(t, r);
  int lines = 0;
  std::size_t pos = 0, prev = 0;
  while ((pos = text.find('\n', prev)) != std::string::npos) {
    EXPECT_EQ(pos - prev, 9u);
    prev = pos + 1;
    ++lines;
  }
  EXPECT_EQ(lines, 7);
}

TEST(RunTraining, WritesRecordsAndResumes) {
  const std::string dir = testing::temp_dir("run");
  ExperimentConfig c;
  c.env = {7, 7, 0.5};
  c.planner.budget = 20;
  c.train.episodes = 10;
  c.train.batch_size = 4;
  c.checkpoint_every = 3;
  c.eval_every = 4;
  c.eval_tasks = 5;
  run_training(c, dir, {});
  const std::string metrics = read_file(dir + "/metrics.jsonl");
  EXPECT_FALSE(validate_metrics(metrics));
  EXPECT_EQ(read_metrics_file(dir + "/metrics.jsonl").size(), 10u);
  EXPECT_EQ(config_text(parse_config(read_file(dir + "/config.txt"))), config_text(c));
  const std::string eval = read_file(dir + "/eval.jsonl");
  EXPECT_EQ(std::count(eval.begin(), eval.end(), '\n'), 2);

  // Crash after episode 8 (last checkpoint after 6), then resume: records
  // written after the checkpoint are replaced and the run ends identical.
  const std::string crashed = testing::temp_dir("crashed");
  RunOptions crash;
  crash.on_episode = [](const EpisodeRecord& r) {
    if (r.episode == 7) throw std::runtime_error("simulated crash");
  };
  EXPECT_THROW(run_training(c, crashed, crash), std::runtime_error);
  EXPECT_EQ(read_metrics_file(crashed + "/metrics.jsonl").size(), 8u);
  RunOptions resume;
  resume.resume = true;
  EXPECT_THROW(run_training(desk_scale_config(), crashed, resume), std::exception);
  run_training(c, crashed, resume);
  for (const char* f : {"/metrics.jsonl", "/checkpoint.txt", "/eval.jsonl", "/model.txt"})
    EXPECT_EQ(read_file(crashed + f), read_file(dir + f)) << f;
}

TEST(LearningCurve, Windows) {
  std::vector<EpisodeRecord> recs(5);
  for (int i = 0; i < 5; ++i) {
    recs[i].episode = i;
    recs[i].solved = i % 2 == 0;
  }
  auto curve = learning_curve(recs, 2);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].solved_fraction, 0.5);
  EXPECT_EQ(curve[0].episode_end, 2);
  EXPECT_EQ(curve[2].episodes, 1);
  EXPECT_EQ(curve[2].solved_fraction, 1.0);
}

}  // namespace
}  // namespace dcmcts
