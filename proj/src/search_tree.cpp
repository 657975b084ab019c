#include "dcmcts/search_tree.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

StateId parse_state(const std::string& token) {
  auto comma = token.find(',');
  if (comma == std::string::npos) {
    throw std::invalid_argument("tree dump: bad state '" + token + "'");
  }
  return {std::stoi(token.substr(0, comma)), std::stoi(token.substr(comma + 1))};
}

const std::string kEmptySymbol = "\xE2\x88\x85";  // U+2205

}  // namespace

SearchTree::SearchTree(const Maze& maze, OrKey root, int budget_max, int max_depth)
    : root_(root), budget_max_(budget_max), max_depth_(max_depth), width_(maze.width()),
      cells_(maze.empty_cells()) {
  if (budget_max < 1) throw std::invalid_argument("search tree: budget must be >= 1");
  if (max_depth < 1) throw std::invalid_argument("search tree: max_depth must be >= 1");
  if (!maze.is_empty(root.s) || !maze.is_empty(root.s2)) {
    throw std::invalid_argument("search tree: root endpoints must be empty cells");
  }
  cell_index_.assign(static_cast<std::size_t>(maze.width()) * maze.height(), -1);
  for (int i = 0; i < num_cells(); ++i) {
    cell_index_[cells_[i].row * width_ + cells_[i].col] = i;
  }
  slot_.assign(cells_.size() * cells_.size(), -1);
}

int SearchTree::index_of(StateId s) const {
  if (s.row < 0 || s.col < 0 || s.col >= width_) return -1;
  std::size_t off = static_cast<std::size_t>(s.row) * width_ + s.col;
  return off < cell_index_.size() ? cell_index_[off] : -1;
}

const OrNode* SearchTree::find(int s, int s2) const {
  log_read(s, s2);
  std::int32_t at = slot_[pack(s, s2)];
  return at < 0 ? nullptr : &nodes_[at];
}

const OrNode* SearchTree::find(const OrKey& key) const {
  int s = index_of(key.s);
  int s2 = index_of(key.s2);
  if (s < 0 || s2 < 0) return nullptr;
  return find(s, s2);
}

OrNode& SearchTree::mutable_node(int s, int s2) {
  std::int32_t at = slot_[pack(s, s2)];
  if (at < 0 || !nodes_[at].expanded) {
    throw std::logic_error("search tree: OR node (" + to_string(cells_[s]) + " " +
                           to_string(cells_[s2]) + ") is not expanded");
  }
  return nodes_[at];
}

std::optional<double> SearchTree::expand(int s, int s2, double v_pi, double v_boot,
                                         std::vector<double> prior) {
  log_read(s, s2);
  if (!budget_left()) {
    if (log_) log_->saw_exhausted_budget = true;
    return std::nullopt;
  }
  std::uint32_t key = pack(s, s2);
  if (slot_[key] >= 0) {
    throw std::logic_error("search tree: duplicate expansion of (" + to_string(cells_[s]) +
                           " " + to_string(cells_[s2]) + ")");
  }
  if (static_cast<int>(prior.size()) != num_candidates()) {
    throw std::invalid_argument("search tree: prior has wrong number of candidates");
  }
  log_write(s, s2);
  OrNode node;
  node.key = {cells_[s], cells_[s2]};
  node.v_pi = v_pi;
  node.v_boot = v_boot;
  node.V = std::max(v_pi, v_boot);
  node.expanded = true;
  node.prior = std::move(prior);
  node.child_visits.assign(num_candidates(), 0);
  slot_[key] = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  ++budget_used_;
  return nodes_.back().V;
}

std::pair<double, std::uint32_t> SearchTree::update(int s, int s2, double G) {
  log_read(s, s2);
  log_write(s, s2);
  OrNode& n = mutable_node(s, s2);
  n.V = (n.V * n.N + G) / (n.N + 1.0);
  n.N += 1;
  return {n.V, n.N};
}

std::uint32_t SearchTree::touch(int s, int slot, int s2) {
  log_read(s, s2);
  log_write(s, s2);
  OrNode& n = mutable_node(s, s2);
  return ++n.child_visits.at(slot);
}

std::vector<AndNode> SearchTree::and_nodes() const {
  std::vector<AndNode> out;
  for (const auto& n : nodes_) {
    for (int slot = 0; slot < static_cast<int>(n.child_visits.size()); ++slot) {
      if (n.child_visits[slot] > 0) {
        out.push_back({{n.key.s, candidate(slot), n.key.s2}, n.child_visits[slot]});
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const AndNode& a, const AndNode& b) { return a.key < b.key; });
  return out;
}

std::uint32_t SearchTree::and_visits(const AndKey& key) const {
  const OrNode* n = find({key.s, key.s2});
  if (!n || !n->expanded) return 0;
  int slot = key.mid ? index_of(*key.mid) + 1 : kStopCandidate;
  if (slot < 0) return 0;
  return n->child_visits[slot];
}

void SearchTree::merge_nodes(const SearchTree& other, const std::vector<std::uint32_t>& keys) {
  for (std::uint32_t key : keys) {
    std::int32_t src = other.slot_[key];
    if (src < 0) continue;
    std::int32_t& dst = slot_[key];
    if (dst < 0) {
      dst = static_cast<std::int32_t>(nodes_.size());
      nodes_.push_back(other.nodes_[src]);
    } else {
      nodes_[dst] = other.nodes_[src];
    }
  }
}

std::string SearchTree::dump() const {
  std::vector<const OrNode*> sorted;
  sorted.reserve(nodes_.size());
  for (const auto& n : nodes_) sorted.push_back(&n);
  std::sort(sorted.begin(), sorted.end(),
            [](const OrNode* a, const OrNode* b) { return a->key < b->key; });
  std::ostringstream out;
  for (const OrNode* n : sorted) {
    out << "OR " << to_string(n->key.s) << ' ' << to_string(n->key.s2) << ' '
        << format_double(n->V) << ' ' << n->N << ' ' << (n->expanded ? 1 : 0) << '\n';
  }
  for (const auto& a : and_nodes()) {
    out << "AND " << to_string(a.key.s) << ' '
        << (a.key.mid ? to_string(*a.key.mid) : kEmptySymbol) << ' ' << to_string(a.key.s2)
        << ' ' << a.N << '\n';
  }
  return out.str();
}

SearchTree SearchTree::parse_dump(const Maze& maze, OrKey root, int budget_max, int max_depth,
                                  std::string_view text) {
  SearchTree tree(maze, root, budget_max, max_depth);
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, a, b, c;
    ls >> kind;
    if (kind == "OR") {
      std::string v;
      std::uint32_t N = 0;
      int expanded = 0;
      ls >> a >> b >> v >> N >> expanded;
      if (!ls) throw std::invalid_argument("tree dump: malformed OR line: " + line);
      int s = tree.index_of(parse_state(a));
      int s2 = tree.index_of(parse_state(b));
      if (s < 0 || s2 < 0) throw std::invalid_argument("tree dump: key not an empty cell");
      OrNode node;
      node.key = {tree.cells_[s], tree.cells_[s2]};
      node.V = std::stod(v);
      node.N = N;
      node.expanded = expanded != 0;
      node.prior.assign(tree.num_candidates(), 1.0 / tree.num_candidates());
      node.child_visits.assign(tree.num_candidates(), 0);
      tree.slot_[tree.pack(s, s2)] = static_cast<std::int32_t>(tree.nodes_.size());
      tree.nodes_.push_back(std::move(node));
      if (expanded) ++tree.budget_used_;
    } else if (kind == "AND") {
      std::uint32_t N = 0;
      ls >> a >> b >> c >> N;
      if (!ls) throw std::invalid_argument("tree dump: malformed AND line: " + line);
      int s = tree.index_of(parse_state(a));
      int s2 = tree.index_of(parse_state(c));
      int slot = b == kEmptySymbol ? kStopCandidate : tree.index_of(parse_state(b)) + 1;
      if (s < 0 || s2 < 0 || slot < 0) throw std::invalid_argument("tree dump: bad AND key");
      std::int32_t at = tree.slot_[tree.pack(s, s2)];
      if (at < 0) throw std::invalid_argument("tree dump: AND node without parent OR node");
      tree.nodes_[at].child_visits[slot] = N;
    } else {
      throw std::invalid_argument("tree dump: unknown line kind '" + kind + "'");
    }
  }
  return tree;
}

std::optional<double> expand_node(SearchTree& tree, const OrKey& key, double v_pi,
                                  double v_boot, std::vector<double> prior) {
  return tree.expand(tree.index_of(key.s), tree.index_of(key.s2), v_pi, v_boot,
                     std::move(prior));
}

std::pair<double, std::uint32_t> update_or_stats(SearchTree& tree, const OrKey& key, double G) {
  if (!(G >= 0.0 && G <= 1.0)) throw std::invalid_argument("update: return outside [0, 1]");
  return tree.update(tree.index_of(key.s), tree.index_of(key.s2), G);
}

std::uint32_t touch_and_node(SearchTree& tree, const AndKey& key) {
  int slot = key.mid ? tree.index_of(*key.mid) + 1 : kStopCandidate;
  if (slot < 0) throw std::invalid_argument("touch: sub-goal is not an empty cell");
  return tree.touch(tree.index_of(key.s), slot, tree.index_of(key.s2));
}

std::vector<SubGoal> candidate_subgoals(const Task& task, const OrKey& /*key*/) {
  std::vector<SubGoal> out;
  out.reserve(task.maze.num_empty() + 1);
  out.push_back(std::nullopt);
  for (StateId s : task.maze.empty_cells()) out.push_back(s);
  return out;
}

}  // namespace dcmcts
