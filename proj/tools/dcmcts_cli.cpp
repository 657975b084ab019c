// Command-line front end: gen, plan, train, eval, compare, sweep, validate.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcmcts/harness.hpp"
#include "dcmcts/model.hpp"
#include "dcmcts/planner.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dcmcts;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

StateId parse_cell(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("expected a cell as 'row,col', got '" + text + "'");
  try {
    std::size_t a = 0, b = 0;
    const int r = std::stoi(text.substr(0, comma), &a);
    const int c = std::stoi(text.substr(comma + 1), &b);
    if (a != comma || b != text.size() - comma - 1) throw std::invalid_argument("trailing");
    return {r, c};
  } catch (const std::logic_error&) {
    throw UsageError("expected a cell as 'row,col', got '" + text + "'");
  }
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

struct PlanArgs {
  std::string maze;
  std::string start, goal;
  std::string model;
  std::string mode = "dc";
  int budget = 200;
  int max_depth = 8;
  double c_puct = 5.0;
  std::uint64_t seed = 0;
  int parallel_depth = 0;
  bool render = false;
  std::string dump_tree;
};

int cmd_plan(const PlanArgs& a) {
  const ParsedMaze parsed = parse_maze_text(read_file(a.maze));
  Task task{parsed.maze, {}, {}};
  if (!a.start.empty()) task.start = parse_cell(a.start);
  else if (parsed.starts.size() == 1) task.start = parsed.starts.front();
  else throw UsageError("no start: pass --start or mark exactly one 'S' in the maze file");
  if (!a.goal.empty()) task.goal = parse_cell(a.goal);
  else if (parsed.goals.size() == 1) task.goal = parsed.goals.front();
  else throw UsageError("no goal: pass --goal or mark exactly one 'G' in the maze file");
  validate_task(task);

  PlannerConfig cfg;
  cfg.mode = parse_search_mode(a.mode);
  cfg.budget = a.budget;
  cfg.max_depth = a.max_depth;
  cfg.c_puct = a.c_puct;
  cfg.seed = a.seed;
  cfg.parallel_depth = a.parallel_depth;
  validate(cfg);

  std::optional<TrainableModel> model;
  HeuristicPair heuristics = untrained_heuristics();
  if (!a.model.empty()) {
    model = TrainableModel::load(a.model);
    heuristics = {&*model, &*model};
  }
  TaskContext ctx(task);
  MyopicPolicy pi0(ctx.maze());
  const PlanResult result = run_search(ctx, heuristics, cfg, pi0);
  std::cout << plan_result_json(result) << '\n';
  if (a.render) std::cout << render_plan(task, result);
  if (!a.dump_tree.empty()) write_file(a.dump_tree, result.tree.dump());
  return 0;
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig config = path.empty() ? desk_scale_config() : parse_config(read_file(path));
  apply_environment(config);
  return config;
}

std::string summary_text(const EvalSummary& s, const ExperimentConfig& c, const std::string& arm) {
  return eval_summary_json(s, c, arm) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Divide-and-conquer MCTS planner over sub-goal trees"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a maze file");
  int gen_w = 21, gen_h = 21;
  double gen_d = 0.75;
  std::uint64_t gen_seed = 0;
  std::optional<std::uint64_t> gen_task_seed;
  std::string gen_out;
  gen->add_option("--width", gen_w, "Maze width")->required();
  gen->add_option("--height", gen_h, "Maze height")->required();
  gen->add_option("--density", gen_d, "Interior wall density in [0,1]")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--task-seed", gen_task_seed, "Also sample and mark a start/goal pair");
  gen->add_option("--out", gen_out, "Output file (default: stdout)");

  // plan
  auto* plan = app.add_subcommand("plan", "Plan on a maze file");
  PlanArgs pa;
  plan->add_option("--maze", pa.maze, "Maze file")->required();
  plan->add_option("--start", pa.start, "Start cell row,col (default: 'S' in file)");
  plan->add_option("--goal", pa.goal, "Goal cell row,col (default: 'G' in file)");
  plan->add_option("--model", pa.model, "Model checkpoint (default: untrained heuristics)");
  plan->add_option("--mode", pa.mode, "dc | sequential | descend_left_first | "
                                      "descend_lower_value | descend_two_way_uct");
  plan->add_option("--budget", pa.budget, "Node expansions");
  plan->add_option("--max-depth", pa.max_depth, "Maximum tree depth");
  plan->add_option("--c-puct", pa.c_puct, "Exploration constant");
  plan->add_option("--seed", pa.seed, "Search seed");
  plan->add_option("--parallel-depth", pa.parallel_depth, "Traverse AND children concurrently above this depth");
  plan->add_flag("--render", pa.render, "Print the maze with numbered sub-goals");
  plan->add_option("--dump-tree", pa.dump_tree, "Write the search tree dump here");

  // train
  auto* train = app.add_subcommand("train", "Train heuristics; writes metrics and checkpoints");
  std::string train_config, train_out;
  bool train_resume = false, train_timing = false, train_quiet = false;
  train->add_option("--config", train_config, "key = value config file (default: desk-scale)");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--resume", train_resume, "Continue from the run directory's checkpoint");
  train->add_flag("--timing", train_timing, "Record wall-clock time per episode");
  train->add_flag("--quiet", train_quiet, "No progress output");

  // eval
  auto* eval = app.add_subcommand("eval", "Solve fraction on fresh tasks");
  std::string eval_model, eval_config, eval_out, eval_mode = "dc";
  bool eval_untrained = false;
  int eval_size = 11, eval_budget = 100, eval_tasks = 100;
  double eval_density = 0.75;
  std::uint64_t eval_seed = 1;
  eval->add_option("--model", eval_model, "Model checkpoint");
  eval->add_flag("--untrained", eval_untrained, "Uniform prior and zero value");
  eval->add_option("--config", eval_config, "Config file supplying planner settings");
  eval->add_option("--size", eval_size, "Maze width and height");
  eval->add_option("--density", eval_density, "Wall density");
  eval->add_option("--budget", eval_budget, "Node expansions");
  eval->add_option("--tasks", eval_tasks, "Number of tasks");
  eval->add_option("--mode", eval_mode, "Search mode");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--out", eval_out, "Write the summary here as well");

  // compare
  auto* compare = app.add_subcommand("compare", "Learning curves or budget sweep as a table");
  std::vector<std::string> cmp_runs;
  std::vector<int> cmp_budgets;
  std::vector<std::string> cmp_models, cmp_modes{"dc", "sequential"};
  int cmp_window = 500, cmp_tasks = 100, cmp_size = 11;
  double cmp_density = 0.75;
  std::uint64_t cmp_seed = 1;
  compare->add_option("--runs", cmp_runs, "Run directories (learning curves)");
  compare->add_option("--window", cmp_window, "Episodes per curve point");
  compare->add_option("--budgets", cmp_budgets, "Budget sweep values");
  compare->add_option("--modes", cmp_modes, "Modes for the budget sweep");
  compare->add_option("--models", cmp_models, "One checkpoint per mode (default: untrained)");
  compare->add_option("--tasks", cmp_tasks, "Tasks per budget");
  compare->add_option("--size", cmp_size, "Maze width and height");
  compare->add_option("--density", cmp_density, "Wall density");
  compare->add_option("--seed", cmp_seed, "Evaluation seed");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train several runs with c_puct sampled in [3,7]");
  std::string sweep_config, sweep_out;
  int sweep_samples = 4;
  std::uint64_t sweep_seed = 1;
  sweep->add_option("--config", sweep_config, "Base config file");
  sweep->add_option("--out", sweep_out, "Parent directory of the runs")->required();
  sweep->add_option("--samples", sweep_samples, "Number of runs");
  sweep->add_option("--seed", sweep_seed, "Seed for the c_puct draws");

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check metrics files");
  std::vector<std::string> validate_files;
  validate_cmd->add_option("files", validate_files, "metrics.jsonl files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const Maze maze = generate_maze(gen_w, gen_h, gen_d, gen_seed);
      const std::string text = gen_task_seed ? serialize_task(sample_task(maze, *gen_task_seed))
                                             : serialize_maze(maze);
      emit(gen_out, text);
      if (!gen_out.empty()) std::cout << gen_out << '\n';
      return 0;
    }
    if (*plan) return cmd_plan(pa);
    if (*train) {
      const ExperimentConfig config = load_config(train_config);
      RunOptions opt;
      opt.resume = train_resume;
      opt.timing = train_timing;
      int solved = 0, seen = 0;
      if (!train_quiet) {
        opt.on_episode = [&](const EpisodeRecord& r) {
          solved += r.solved;
          ++seen;
          if ((r.episode + 1) % 100 == 0) {
            std::fprintf(stderr, "episode %d  solved(last %d) %.3f  prior_loss %.4f  value_loss %.4f\n",
                         r.episode + 1, seen, static_cast<double>(solved) / seen, r.prior_loss,
                         r.value_loss);
            solved = seen = 0;
          }
        };
      }
      run_training(config, train_out, opt);
      std::cout << train_out << '\n';
      return 0;
    }
    if (*eval) {
      if (eval_tasks < 1) throw UsageError("--tasks must be >= 1");
      if (eval_untrained == !eval_model.empty()) throw UsageError("pass exactly one of --model or --untrained");
      ExperimentConfig config = eval_config.empty() ? ExperimentConfig{} : load_config(eval_config);
      // Explicit flags win over the config file.
      if (eval_config.empty() || eval->count("--size")) config.env.width = config.env.height = eval_size;
      if (eval_config.empty() || eval->count("--density")) config.env.density = eval_density;
      if (eval_config.empty() || eval->count("--budget")) config.planner.budget = eval_budget;
      if (eval_config.empty() || eval->count("--mode")) config.planner.mode = parse_search_mode(eval_mode);
      config.seed = eval_seed;
      std::optional<TrainableModel> model;
      HeuristicPair h = untrained_heuristics();
      if (!eval_model.empty()) {
        model = TrainableModel::load(eval_model);
        h = {&*model, &*model};
      }
      const EvalSummary s = evaluate(config.env, config.planner, h, eval_tasks, config.seed);
      const std::string text = summary_text(s, config, eval_untrained ? "untrained" : "trained");
      std::cout << text;
      if (!eval_out.empty()) write_file(eval_out, text);
      return 0;
    }
    if (*compare) {
      ordered_json table;
      if (!cmp_runs.empty()) {
        std::string meta;
        for (const auto& run : cmp_runs) {
          const ExperimentConfig c = parse_config(read_file(run + "/config.txt"));
          const std::string m = std::to_string(c.env.width) + "x" + std::to_string(c.env.height) +
                                " d=" + std::to_string(c.env.density) +
                                " budget=" + std::to_string(c.planner.budget);
          if (meta.empty()) meta = m;
          else if (m != meta) throw std::invalid_argument("compare: incompatible runs (" + meta + " vs " + m + ")");
          ordered_json col = ordered_json::array();
          for (const auto& p : learning_curve(read_metrics_file(run + "/metrics.jsonl"), cmp_window)) {
            col.push_back({{"episode", p.episode_end}, {"solved_fraction", p.solved_fraction}});
          }
          table["runs"][run] = col;
        }
        table["setting"] = meta;
      } else if (!cmp_budgets.empty()) {
        if (!cmp_models.empty() && cmp_models.size() != cmp_modes.size()) {
          throw UsageError("--models needs one checkpoint per mode");
        }
        for (std::size_t i = 0; i < cmp_modes.size(); ++i) {
          std::optional<TrainableModel> model;
          HeuristicPair h = untrained_heuristics();
          if (!cmp_models.empty()) {
            model = TrainableModel::load(cmp_models[i]);
            h = {&*model, &*model};
          }
          ordered_json col = ordered_json::array();
          for (int b : cmp_budgets) {
            PlannerConfig pc;
            pc.mode = parse_search_mode(cmp_modes[i]);
            pc.budget = b;
            const EvalSummary s =
                evaluate({cmp_size, cmp_size, cmp_density, 0}, pc, h, cmp_tasks, cmp_seed);
            col.push_back({{"budget", b}, {"fraction", s.fraction}, {"ci_low", s.ci_low},
                           {"ci_high", s.ci_high}});
          }
          table["modes"][cmp_modes[i]] = col;
        }
      } else {
        throw UsageError("compare needs --runs or --budgets");
      }
      std::cout << table.dump(2) << '\n';
      return 0;
    }
    if (*sweep) {
      if (sweep_samples < 1) throw UsageError("--samples must be >= 1");
      const ExperimentConfig base = load_config(sweep_config);
      Rng rng(sweep_seed);
      std::uniform_real_distribution<double> c_dist(3.0, 7.0);
      for (int i = 0; i < sweep_samples; ++i) {
        ExperimentConfig c = base;
        c.planner.c_puct = c_dist(rng);
        c.seed = base.seed + i;
        const std::string dir = sweep_out + "/run_" + std::to_string(i);
        run_training(c, dir, {});
        std::cout << dir << " c_puct=" << c.planner.c_puct << '\n';
      }
      return 0;
    }
    if (*validate_cmd) {
      int bad = 0;
      for (const auto& f : validate_files) {
        if (auto err = validate_metrics(read_file(f))) {
          std::cerr << f << ": " << *err << '\n';
          ++bad;
        } else {
          std::cout << f << ": ok\n";
        }
      }
      return bad ? 2 : 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
