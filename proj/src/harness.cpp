#include "dcmcts/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dcmcts {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_int(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects an integer, got '" +
                                std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: '" + std::string(key) + "' expects true/false, got '" +
                              std::string(value) + "'");
}

template <typename F>
auto wrap(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind("config:", 0) == 0) throw;
    throw std::invalid_argument("config: '" + std::string(key) + "': " + msg);
  }
}

using Getter = std::string (*)(const ExperimentConfig&);
using Setter = void (*)(ExperimentConfig&, std::string_view key, std::string_view value);

struct Field {
  const char* key;
  Getter get;
  Setter set;
};

#define INT_FIELD(name, expr, type)                                                  \
  Field {                                                                            \
    name, [](const ExperimentConfig& c) { return std::to_string(c.expr); },         \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {            \
          c.expr = parse_int<type>(k, v);                                            \
        }                                                                            \
  }
#define DOUBLE_FIELD(name, expr)                                                                  \
  Field {                                                                                         \
    name, [](const ExperimentConfig& c) { return fmt(c.expr); },                                 \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.expr = parse_double(k, v); } \
  }
#define BOOL_FIELD(name, expr)                                                                   \
  Field {                                                                                        \
    name, [](const ExperimentConfig& c) { return std::string(c.expr ? "true" : "false"); },     \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.expr = parse_bool(k, v); } \
  }
#define ENUM_FIELD(name, expr, parser)                                                           \
  Field {                                                                                        \
    name, [](const ExperimentConfig& c) { return std::string(to_string(c.expr)); },             \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {                        \
          c.expr = wrap(k, [&] { return parser(v); });                                           \
        }                                                                                        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      INT_FIELD("seed", seed, std::uint64_t),
      INT_FIELD("width", env.width, int),
      INT_FIELD("height", env.height, int),
      DOUBLE_FIELD("density", env.density),
      INT_FIELD("step_limit", env.step_limit, int),
      INT_FIELD("steps_per_hop", env.steps_per_hop, int),
      ENUM_FIELD("mode", planner.mode, parse_search_mode),
      INT_FIELD("budget", planner.budget, int),
      INT_FIELD("max_depth", planner.max_depth, int),
      DOUBLE_FIELD("c_puct", planner.c_puct),
      INT_FIELD("stall_limit", planner.stall_limit, int),
      INT_FIELD("parallel_depth", planner.parallel_depth, int),
      DOUBLE_FIELD("two_way_c", planner.two_way_c),
      INT_FIELD("episodes", train.episodes, int),
      INT_FIELD("buffer_capacity", train.buffer_capacity, std::size_t),
      INT_FIELD("batch_size", train.batch_size, std::size_t),
      INT_FIELD("train_steps_per_episode", train.train_steps_per_episode, int),
      DOUBLE_FIELD("learning_rate", train.learning_rate),
      ENUM_FIELD("optimizer", train.optimizer, parse_optimizer),
      DOUBLE_FIELD("temperature", train.temperature),
      INT_FIELD("value_hidden", train.shape.value_hidden, int),
      INT_FIELD("stop_hidden", train.shape.stop_hidden, int),
      INT_FIELD("candidate_hidden", train.shape.candidate_hidden, int),
      ENUM_FIELD("parser", train.parser, parse_parser_kind),
      ENUM_FIELD("prior_targets", train.prior_targets, parse_prior_target_source),
      BOOL_FIELD("her_value_targets", train.her_value_targets),
      BOOL_FIELD("monte_carlo_value_targets", train.monte_carlo_value_targets),
      INT_FIELD("checkpoint_every", checkpoint_every, int),
      INT_FIELD("eval_every", eval_every, int),
      INT_FIELD("eval_tasks", eval_tasks, int),
  };
  return all;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef ENUM_FIELD

void validate(const ExperimentConfig& c) {
  validate(c.env);
  validate(c.planner);
  validate(c.train);
  if (c.checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (c.eval_every < 0) throw std::invalid_argument("config: eval_every must be >= 0");
  if (c.eval_every > 0 && c.eval_tasks < 1) {
    throw std::invalid_argument("config: eval_tasks must be >= 1");
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, key, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    try {
      apply_setting(config, trim(std::string_view(t).substr(0, eq)),
                    trim(std::string_view(t).substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(config);
  return config;
}

void apply_environment(ExperimentConfig& config,
                       const std::function<const char*(const char*)>& getenv_fn) {
  for (const auto& key : config_keys()) {
    std::string name(kEnvPrefix);
    for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const char* value = getenv_fn ? getenv_fn(name.c_str()) : std::getenv(name.c_str());
    if (value) {
      try {
        apply_setting(config, key, trim(value));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(name + ": " + e.what());
      }
    }
  }
  validate(config);
}

std::string config_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

ExperimentConfig desk_scale_config() {
  ExperimentConfig c;
  c.env = {11, 11, 0.75, 0, 1};
  c.planner.budget = 100;
  c.planner.max_depth = 8;
  c.planner.c_puct = 5.0;
  c.train.episodes = 5000;
  c.train.buffer_capacity = 2048;
  c.train.batch_size = 128;
  c.train.learning_rate = 1e-3;
  c.train.optimizer = OptimizerKind::Adam;
  c.train.temperature = 0.003;
  return c;
}

std::string metrics_line(const EpisodeRecord& r) {
  ordered_json j;
  j["episode"] = r.episode;
  j["seed"] = r.seed;
  j["solved"] = r.solved;
  j["plan_length"] = r.plan_length;
  j["L"] = r.L;
  j["G"] = r.G;
  j["budget"] = r.budget_used;
  j["trained"] = r.trained;
  j["prior_loss"] = r.prior_loss;
  j["value_loss"] = r.value_loss;
  if (r.wall_ms >= 0.0) j["wall_ms"] = r.wall_ms;
  return j.dump();
}

EpisodeRecord parse_metrics_line(std::string_view line) {
  const auto j = ordered_json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("metrics: record is not an object");
  auto need = [&](const char* key) -> const ordered_json& {
    if (!j.contains(key)) throw std::invalid_argument(std::string("metrics: missing field ") + key);
    return j.at(key);
  };
  auto number = [&](const char* key) {
    const auto& v = need(key);
    if (!v.is_number()) throw std::invalid_argument(std::string("metrics: non-numeric ") + key);
    return v.get<double>();
  };
  EpisodeRecord r;
  const auto& ep = need("episode");
  const auto& seed = need("seed");
  if (!ep.is_number_integer() || !seed.is_number_unsigned()) {
    throw std::invalid_argument("metrics: episode/seed must be integers");
  }
  r.episode = ep.get<int>();
  r.seed = seed.get<std::uint64_t>();
  const auto& solved = need("solved");
  const auto& trained = need("trained");
  if (!solved.is_boolean() || !trained.is_boolean()) {
    throw std::invalid_argument("metrics: solved/trained must be booleans");
  }
  r.solved = solved.get<bool>();
  r.trained = trained.get<bool>();
  r.plan_length = static_cast<int>(number("plan_length"));
  r.L = number("L");
  r.G = number("G");
  r.budget_used = static_cast<int>(number("budget"));
  r.prior_loss = number("prior_loss");
  r.value_loss = number("value_loss");
  if (j.contains("wall_ms")) r.wall_ms = number("wall_ms");
  if (!(r.L >= 0.0 && r.L <= 1.0) || !(r.G >= 0.0 && r.G <= 1.0)) {
    throw std::invalid_argument("metrics: L and G must lie in [0, 1]");
  }
  if (r.episode < 0 || r.plan_length < 2 || r.budget_used < 0) {
    throw std::invalid_argument("metrics: negative counter or plan shorter than 2");
  }
  return r;
}

std::optional<std::string> validate_metrics(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  int expected = -1;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      const EpisodeRecord r = parse_metrics_line(line);
      if (expected >= 0 && r.episode != expected) {
        return "line " + std::to_string(lineno) + ": episode " + std::to_string(r.episode) +
               " out of order (expected " + std::to_string(expected) + ")";
      }
      expected = r.episode + 1;
    } catch (const std::exception& e) {
      return "line " + std::to_string(lineno) + ": " + e.what();
    }
  }
  return std::nullopt;
}

std::string eval_summary_json(const EvalSummary& s, const ExperimentConfig& config,
                              std::string_view arm) {
  ordered_json j;
  j["arm"] = arm;
  j["mode"] = to_string(config.planner.mode);
  j["width"] = config.env.width;
  j["height"] = config.env.height;
  j["density"] = config.env.density;
  j["budget"] = config.planner.budget;
  j["seed"] = config.seed;
  j["tasks"] = s.tasks;
  j["solved"] = s.solved;
  j["fraction"] = s.fraction;
  j["ci_low"] = s.ci_low;
  j["ci_high"] = s.ci_high;
  j["mean_L"] = s.mean_L;
  return j.dump();
}

std::string render_plan(const Task& task, const PlanResult& result) {
  const Maze& m = task.maze;
  std::vector<int> depth(static_cast<std::size_t>(m.width()) * m.height(), -1);
  for (const auto& n : result.solution_tree.nodes) {
    if (n.terminal || !n.chosen) continue;
    int& d = depth[n.chosen->row * m.width() + n.chosen->col];
    const int label = n.depth + 1;
    if (d < 0 || label < d) d = label;
  }
  std::string out;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const StateId s{r, c};
      char ch = m.at(s) == Cell::Wall ? '#' : '.';
      const int d = depth[r * m.width() + c];
      if (d > 0) ch = d <= 9 ? static_cast<char>('0' + d) : '+';
      if (s == task.start) ch = 'S';
      if (s == task.goal) ch = 'G';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

std::vector<EpisodeRecord> read_metrics_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_metrics_line(line));
  }
  return out;
}

std::vector<CurvePoint> learning_curve(const std::vector<EpisodeRecord>& records, int window) {
  if (window < 1) throw std::invalid_argument("learning curve: window must be >= 1");
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < records.size(); i += window) {
    const std::size_t end = std::min(records.size(), i + window);
    int solved = 0;
    for (std::size_t k = i; k < end; ++k) solved += records[k].solved ? 1 : 0;
    out.push_back({records[end - 1].episode + 1, static_cast<int>(end - i),
                   static_cast<double>(solved) / (end - i)});
  }
  return out;
}

namespace {

// Keeps the lines of a line-delimited JSON file whose "episode" is below
// `limit`.
void truncate_records(const std::string& path, int limit) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    if (j.at("episode").get<int>() < limit) kept += line + "\n";
  }
  write_file(path, kept);
}

}  // namespace

void run_training(const ExperimentConfig& config, const std::string& dir, const RunOptions& options) {
  validate(config);
  fs::create_directories(dir);
  const std::string config_path = dir + "/config.txt";
  const std::string metrics_path = dir + "/metrics.jsonl";
  const std::string eval_path = dir + "/eval.jsonl";
  const std::string checkpoint_path = dir + "/checkpoint.txt";
  const std::string text = config_text(config);

  Trainer trainer(config.env, config.planner, config.train, config.seed);
  trainer.timing = options.timing;
  if (options.resume) {
    if (!fs::exists(checkpoint_path)) throw std::runtime_error("resume: no checkpoint in " + dir);
    if (read_file(config_path) != text) {
      throw std::invalid_argument("resume: configuration differs from the run in " + dir);
    }
    trainer.restore(read_file(checkpoint_path));
    truncate_records(metrics_path, trainer.next_episode());
    truncate_records(eval_path, trainer.next_episode() + 1);
  } else {
    write_file(config_path, text);
    write_file(metrics_path, "");
    if (fs::exists(eval_path)) fs::remove(eval_path);
  }

  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
  while (!trainer.done()) {
    const EpisodeRecord rec = trainer.run_episode();
    metrics << metrics_line(rec) << '\n';
    metrics.flush();
    const int done = trainer.next_episode();
    if (config.eval_every > 0 && done % config.eval_every == 0) {
      const EvalSummary s = evaluate(config.env, config.planner,
                                     {&trainer.model(), &trainer.model()}, config.eval_tasks,
                                     config.seed);
      auto j = ordered_json::parse(eval_summary_json(s, config, "trained"));
      ordered_json line;
      line["episode"] = done;
      for (auto& [k, v] : j.items()) line[k] = v;
      std::ofstream eval(eval_path, std::ios::binary | std::ios::app);
      eval << line.dump() << '\n';
    }
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      write_file(checkpoint_path, trainer.checkpoint());
    }
    if (options.on_episode) options.on_episode(rec);
  }
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
  write_file(checkpoint_path, trainer.checkpoint());
  write_file(dir + "/model.txt", trainer.model().serialize());
}

}  // namespace dcmcts
