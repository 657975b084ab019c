#include "dcmcts/planner.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace dcmcts {

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

std::vector<std::uint32_t> sorted_unique(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool intersects(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) ++i; else ++j;
  }
  return false;
}

}  // namespace

std::string_view to_string(SearchMode mode) {
  switch (mode) {
    case SearchMode::DivideAndConquer: return "dc";
    case SearchMode::SequentialRight: return "sequential";
    case SearchMode::DescendLeftFirst: return "descend_left_first";
    case SearchMode::DescendLowerValue: return "descend_lower_value";
    case SearchMode::DescendTwoWayUct: return "descend_two_way_uct";
  }
  return "dc";
}

SearchMode parse_search_mode(std::string_view name) {
  for (auto m : {SearchMode::DivideAndConquer, SearchMode::SequentialRight,
                 SearchMode::DescendLeftFirst, SearchMode::DescendLowerValue,
                 SearchMode::DescendTwoWayUct}) {
    if (name == to_string(m)) return m;
  }
  if (name == "divide_and_conquer") return SearchMode::DivideAndConquer;
  if (name == "sequential_right" || name == "mcts") return SearchMode::SequentialRight;
  throw std::invalid_argument("unknown search mode '" + std::string(name) + "'");
}

void validate(const PlannerConfig& config) {
  if (config.budget < 1) throw std::invalid_argument("planner: budget must be >= 1");
  if (config.max_depth < 1) throw std::invalid_argument("planner: max_depth must be >= 1");
  if (!(config.c_puct >= 0.0)) throw std::invalid_argument("planner: c_puct must be >= 0");
  if (config.stall_limit < 1) throw std::invalid_argument("planner: stall_limit must be >= 1");
}

std::vector<OrKey> SolutionTree::leaves() const {
  std::vector<OrKey> out;
  if (nodes.empty()) return out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const SolutionNode& n = nodes[stack.back()];
    stack.pop_back();
    if (n.terminal) {
      out.push_back(n.key);
    } else {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  return out;
}

double plan_objective(const Task& task, std::span<const StateId> sigma,
                      const LowLevelPolicy& policy) {
  if (sigma.size() < 2 || sigma.front() != task.start || sigma.back() != task.goal) {
    throw std::invalid_argument("plan_objective: plan must run from start to goal");
  }
  double L = 1.0;
  for (std::size_t i = 0; i + 1 < sigma.size(); ++i) L *= policy.value(sigma[i], sigma[i + 1]);
  return L;
}

double plan_objective(const Task& task, std::span<const StateId> sigma) {
  return plan_objective(task, sigma, MyopicPolicy(task.maze));
}

double puct_score(double exploit, double prior, std::uint32_t parent_visits,
                  std::uint32_t child_visits, double c_puct) {
  return exploit + c_puct * prior * std::sqrt(static_cast<double>(parent_visits)) /
                       (1.0 + child_visits);
}

int select_by_score(std::span<const double> exploit, std::span<const double> prior,
                    std::span<const std::uint32_t> child_visits, std::uint32_t parent_visits,
                    double c_puct, std::span<const char> allowed, Rng& rng) {
  int best = -1;
  double best_score = 0.0;
  double best_prior = 0.0;
  std::vector<int> ties;
  for (std::size_t k = 0; k < exploit.size(); ++k) {
    if (!allowed[k]) continue;
    const double score = puct_score(exploit[k], prior[k], parent_visits, child_visits[k], c_puct);
    if (best < 0 || score > best_score || (score == best_score && prior[k] > best_prior)) {
      best = static_cast<int>(k);
      best_score = score;
      best_prior = prior[k];
      ties.assign(1, best);
    } else if (score == best_score && prior[k] == best_prior) {
      ties.push_back(static_cast<int>(k));
    }
  }
  if (best < 0) throw std::logic_error("select: no admissible candidate");
  if (ties.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
    best = ties[pick(rng)];
  }
  return best;
}

double two_way_uct_score(BranchStats branch, BranchStats sibling, double c) {
  const double total = 1.0 + branch.N + sibling.N;
  return (1.0 - branch.V) + c * std::sqrt(std::log(total) / (1.0 + branch.N));
}

Branch descend_one(SearchMode mode, BranchStats left, BranchStats right, [[maybe_unused]] Rng& rng,
                   double two_way_c) {
  switch (mode) {
    case SearchMode::DescendLeftFirst:
      return Branch::Left;
    case SearchMode::DescendLowerValue:
      return right.V < left.V ? Branch::Right : Branch::Left;
    case SearchMode::DescendTwoWayUct:
      return two_way_uct_score(right, left, two_way_c) > two_way_uct_score(left, right, two_way_c)
                 ? Branch::Right
                 : Branch::Left;
    default:
      throw std::invalid_argument("descend_one: not a descend-one mode");
  }
}

Planner::Planner(const TaskContext& ctx, HeuristicPair heuristics, PlannerConfig config,
                 const LowLevelPolicy& policy)
    : ctx_(&ctx), heuristics_(heuristics), config_(config), policy_(&policy),
      n_(ctx.num_cells()) {
  validate(config_);
  validate_task(ctx.task());
  if (!heuristics_.prior || !heuristics_.value) {
    throw std::invalid_argument("planner: both heuristics must be provided");
  }
  const std::size_t pairs = static_cast<std::size_t>(n_) * n_;
  vpi_cache_ = std::make_unique<std::atomic<double>[]>(pairs);
  boot_cache_ = std::make_unique<std::atomic<double>[]>(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    vpi_cache_[i].store(kUnset, std::memory_order_relaxed);
    boot_cache_[i].store(kUnset, std::memory_order_relaxed);
  }
}

SearchTree Planner::make_tree() const {
  return SearchTree(ctx_->maze(), {ctx_->task().start, ctx_->task().goal}, config_.budget,
                    config_.max_depth);
}

double Planner::low_level(int s, int s2) const {
  auto& slot = vpi_cache_[static_cast<std::size_t>(s) * n_ + s2];
  double v = slot.load(std::memory_order_relaxed);
  if (std::isnan(v)) {
    const Maze& m = ctx_->maze();
    v = policy_->value(m.cell(s), m.cell(s2));
    slot.store(v, std::memory_order_relaxed);
  }
  return v;
}

double Planner::raw_bootstrap(int s, int s2) const {
  auto& slot = boot_cache_[static_cast<std::size_t>(s) * n_ + s2];
  double v = slot.load(std::memory_order_relaxed);
  if (std::isnan(v)) {
    const Maze& m = ctx_->maze();
    v = heuristics_.value->value(*ctx_, {m.cell(s), m.cell(s2)});
    slot.store(v, std::memory_order_relaxed);
  }
  return v;
}

double Planner::child_value(const SearchTree& tree, int s, int s2) const {
  const OrNode* n = tree.find(s, s2);
  return (n && n->expanded) ? n->V : bootstrap(s, s2);
}

int Planner::select(const SearchTree& tree, const OrKey& key, Rng& rng) const {
  return select_index(tree, tree.index_of(key.s), tree.index_of(key.s2), rng);
}

int Planner::select_index(const SearchTree& tree, int s, int s2, Rng& rng) const {
  const OrNode* node = tree.find(s, s2);
  if (!node || !node->expanded) throw std::logic_error("select: OR node is not expanded");
  thread_local std::vector<double> exploit;
  thread_local std::vector<char> allowed;
  const int slots = n_ + 1;
  exploit.assign(slots, 0.0);
  allowed.assign(slots, 1);
  exploit[kStopCandidate] = node->v_pi;
  const bool sequential = config_.mode == SearchMode::SequentialRight;
  for (int m = 0; m < n_; ++m) {
    if (m == s || m == s2) {
      allowed[m + 1] = 0;  // degenerate split: one side repeats the parent
      continue;
    }
    const double left = sequential ? low_level(s, m) : child_value(tree, s, m);
    exploit[m + 1] = left == 0.0 ? 0.0 : left * child_value(tree, m, s2);
  }
  return select_by_score(exploit, node->prior, node->child_visits, node->N, config_.c_puct,
                         allowed, rng);
}

double Planner::traverse(SearchTree& tree, const OrKey& key, int depth, Rng& rng) {
  return traverse_index(tree, tree.index_of(key.s), tree.index_of(key.s2), depth, rng);
}

double Planner::traverse_index(SearchTree& tree, int s, int s2, int depth, Rng& rng) {
  const OrNode* node = tree.find(s, s2);
  if (!node || !node->expanded) {
    const double vpi = low_level(s, s2);
    const double vb = raw_bootstrap(s, s2);
    if (tree.budget_left()) {
      std::vector<double> prior(n_ + 1);
      heuristics_.prior->prior(*ctx_, {tree.cell(s), tree.cell(s2)}, prior);
      tree.expand(s, s2, vpi, vb, std::move(prior));
    } else {
      tree.expand(s, s2, vpi, vb, {});  // records the exhausted budget
    }
    return std::max(vpi, vb);
  }

  const int slot = select_index(tree, s, s2, rng);
  tree.touch(s, slot, s2);
  const double vpi = low_level(s, s2);
  double G = vpi;
  if (slot != kStopCandidate && depth < config_.max_depth) {
    const int m = slot - 1;
    switch (config_.mode) {
      case SearchMode::DivideAndConquer: {
        Rng left_rng(rng());
        Rng right_rng(rng());
        auto [gl, gr] = traverse_both(tree, s, m, s2, depth, left_rng, right_rng);
        G = gl * gr;
        break;
      }
      case SearchMode::SequentialRight:
        G = low_level(s, m) * traverse_index(tree, m, s2, depth + 1, rng);
        break;
      default: {
        auto stats = [&](int a, int b) {
          const OrNode* n = tree.find(a, b);
          return (n && n->expanded) ? BranchStats{n->V, n->N} : BranchStats{bootstrap(a, b), 0};
        };
        if (descend_one(config_.mode, stats(s, m), stats(m, s2), rng, config_.two_way_c) ==
            Branch::Left) {
          const double gl = traverse_index(tree, s, m, depth + 1, rng);
          G = gl * child_value(tree, m, s2);
        } else {
          const double gr = traverse_index(tree, m, s2, depth + 1, rng);
          G = child_value(tree, s, m) * gr;
        }
        break;
      }
    }
  }
  G = std::max(G, vpi);  // threshold the return
  tree.update(s, s2, G);
  return G;
}

std::pair<double, double> Planner::traverse_both(SearchTree& tree, int s, int m, int s2, int depth,
                                                 Rng& left_rng, Rng& right_rng) {
  if (depth >= config_.parallel_depth) {
    const double gl = traverse_index(tree, s, m, depth + 1, left_rng);
    const double gr = traverse_index(tree, m, s2, depth + 1, right_rng);
    return {gl, gr};
  }

  // Speculative parallel execution: both halves run on private copies of
  // the tree. The left half is committed first; the right half is kept only
  // if it read nothing the left half wrote and its budget use still fits,
  // otherwise it is replayed against the committed tree with the same RNG.
  // Either way the result equals left-then-right sequential execution.
  const int base_used = tree.budget_used();
  const Rng right_rng_start = right_rng;
  SearchTree left_tree = tree;
  SearchTree right_tree = tree;
  AccessLog left_log;
  AccessLog right_log;
  left_tree.set_access_log(&left_log);
  right_tree.set_access_log(&right_log);
  // Nested AND nodes inside a speculative branch run sequentially.
  const int saved_parallel_depth = config_.parallel_depth;
  config_.parallel_depth = 0;
  auto right_future = std::async(std::launch::async, [&] {
    return traverse_index(right_tree, m, s2, depth + 1, right_rng);
  });
  double gl = 0.0;
  try {
    gl = traverse_index(left_tree, s, m, depth + 1, left_rng);
  } catch (...) {
    right_future.wait();
    config_.parallel_depth = saved_parallel_depth;
    throw;
  }
  double gr = right_future.get();
  config_.parallel_depth = saved_parallel_depth;

  const auto left_writes = sorted_unique(std::move(left_log.writes));
  const auto right_reads = sorted_unique(std::move(right_log.reads));
  const int left_expansions = left_tree.budget_used() - base_used;
  const int right_expansions = right_tree.budget_used() - base_used;
  tree.merge_nodes(left_tree, left_writes);
  tree.set_budget_used(base_used + left_expansions);

  const bool valid = !intersects(left_writes, right_reads) &&
                     tree.budget_used() + right_expansions <= tree.budget_max() &&
                     (!right_log.saw_exhausted_budget || left_expansions == 0);
  if (valid) {
    tree.merge_nodes(right_tree, sorted_unique(std::move(right_log.writes)));
    tree.set_budget_used(tree.budget_used() + right_expansions);
  } else {
    right_rng = right_rng_start;
    gr = traverse_index(tree, m, s2, depth + 1, right_rng);
  }
  return {gl, gr};
}

Planner::Extraction Planner::extract(const SearchTree& tree, const OrKey& key) const {
  Extraction out;
  std::vector<StateId> sigma;
  extract_index(tree, tree.index_of(key.s), tree.index_of(key.s2), 0, out.solution, sigma);
  out.G = out.solution.root().G;
  out.plan.sigma = std::move(sigma);
  double L = 1.0;
  for (std::size_t i = 0; i + 1 < out.plan.sigma.size(); ++i) {
    L *= policy_->value(out.plan.sigma[i], out.plan.sigma[i + 1]);
  }
  out.plan.objective_L = L;
  return out;
}

int Planner::extract_index(const SearchTree& tree, int s, int s2, int depth, SolutionTree& out,
                           std::vector<StateId>& sigma) const {
  const int idx = static_cast<int>(out.nodes.size());
  out.nodes.push_back({});
  out.nodes[idx].key = {tree.cell(s), tree.cell(s2)};
  out.nodes[idx].depth = depth;
  const double vpi = low_level(s, s2);
  out.nodes[idx].v_pi = vpi;

  // Realisable value of a child: its V when expanded, otherwise the only
  // thing extraction can return for it, v_pi.
  auto realisable = [&](int a, int b) {
    const OrNode* n = tree.find(a, b);
    return (n && n->expanded) ? n->V : low_level(a, b);
  };

  int best_slot = kStopCandidate;
  const OrNode* node = tree.find(s, s2);
  if (node && node->expanded && depth < config_.max_depth) {
    double best = vpi;
    for (int slot = 1; slot <= n_; ++slot) {
      if (node->child_visits[slot] == 0) continue;
      const int m = slot - 1;
      if (m == s || m == s2) continue;
      const double score = realisable(s, m) * realisable(m, s2);
      if (score > best) {
        best = score;
        best_slot = slot;
      }
    }
  }

  if (best_slot == kStopCandidate) {
    if (sigma.empty()) sigma.push_back(tree.cell(s));
    sigma.push_back(tree.cell(s2));
    out.nodes[idx].terminal = true;
    out.nodes[idx].G = vpi;
    return idx;
  }
  const int m = best_slot - 1;
  const int left = extract_index(tree, s, m, depth + 1, out, sigma);
  const int right = extract_index(tree, m, s2, depth + 1, out, sigma);
  SolutionNode& n = out.nodes[idx];
  n.terminal = false;
  n.chosen = tree.cell(m);
  n.left = left;
  n.right = right;
  n.G = out.nodes[left].G * out.nodes[right].G;
  return idx;
}

PlanResult Planner::run() {
  SearchTree tree = make_tree();
  const OrKey root = tree.root();
  Rng rng(config_.seed);
  int traversals = 0;
  int stall = 0;
  while (tree.budget_left() && stall < config_.stall_limit) {
    const int before = tree.budget_used();
    traverse(tree, root, 0, rng);
    ++traversals;
    stall = tree.budget_used() == before ? stall + 1 : 0;
  }
  Extraction ex = extract(tree, root);
  PlanResult result;
  result.plan = std::move(ex.plan);
  result.solution_tree = std::move(ex.solution);
  result.budget_used = tree.budget_used();
  result.traversals = traversals;
  if (const OrNode* r = tree.find(root)) {
    result.root_V = r->V;
    result.root_N = r->N;
  }
  result.tree = std::move(tree);
  return result;
}

PlanResult run_search(const TaskContext& ctx, HeuristicPair heuristics, const PlannerConfig& config,
                      const LowLevelPolicy& policy) {
  Planner planner(ctx, heuristics, config, policy);
  return planner.run();
}

PlanResult run_search(const Task& task, HeuristicPair heuristics, const PlannerConfig& config) {
  TaskContext ctx(task);
  MyopicPolicy pi0(ctx.maze());
  return run_search(ctx, heuristics, config, pi0);
}

PlanResult run_search_sequential(const TaskContext& ctx, HeuristicPair heuristics,
                                 PlannerConfig config, const LowLevelPolicy& policy) {
  config.mode = SearchMode::SequentialRight;
  return run_search(ctx, heuristics, config, policy);
}

PlanResult run_search_sequential(const Task& task, HeuristicPair heuristics, PlannerConfig config) {
  config.mode = SearchMode::SequentialRight;
  return run_search(task, heuristics, config);
}

std::string plan_result_json(const PlanResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  for (StateId s : result.plan.sigma) states.push_back({s.row, s.col});
  j["plan"] = states;
  j["plan_length"] = result.plan.sigma.size();
  j["L"] = result.plan.objective_L;
  j["G"] = result.solution_tree.nodes.empty() ? 0.0 : result.solution_tree.root().G;
  j["root_V"] = result.root_V;
  j["root_N"] = result.root_N;
  j["budget_used"] = result.budget_used;
  j["traversals"] = result.traversals;
  j["or_nodes"] = result.tree.num_or_nodes();
  return j.dump();
}

}  // namespace dcmcts
