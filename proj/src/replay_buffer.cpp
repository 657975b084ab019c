#include "dcmcts/replay_buffer.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_key(const TaskContext* ctx, int s, int s2) {
  if (!ctx) throw std::invalid_argument("replay: entry without task context");
  if (s < 0 || s2 < 0 || s >= ctx->num_cells() || s2 >= ctx->num_cells()) {
    throw std::invalid_argument("replay: cell index out of range");
  }
}

// First k positions of a partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay: capacity must be >= 1");
}

void ReplayBuffer::add_prior(PriorEntry entry) {
  check_key(entry.ctx.get(), entry.s, entry.s2);
  double total = 0.0;
  for (auto [slot, p] : entry.target) {
    if (slot < 0 || slot >= entry.ctx->num_candidates()) {
      throw std::invalid_argument("replay: prior target slot out of range");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("replay: prior target outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("replay: prior target does not sum to 1");
  if (prior_.size() == capacity_) prior_.pop_front();
  prior_.push_back(std::move(entry));
}

void ReplayBuffer::add_value(ValueEntry entry) {
  check_key(entry.ctx.get(), entry.s, entry.s2);
  if (!(entry.target >= 0.0 && entry.target <= 1.0)) {
    throw std::invalid_argument("replay: value target outside [0, 1]");
  }
  if (value_.size() == capacity_) value_.pop_front();
  value_.push_back(std::move(entry));
}

bool ReplayBuffer::can_sample(std::size_t batch_size) const {
  return batch_size > 0 && (prior_.size() >= batch_size || value_.size() >= batch_size);
}

Batch ReplayBuffer::sample(Rng& rng, std::size_t batch_size) const {
  Batch batch;
  if (batch_size == 0) return batch;
  if (prior_.size() >= batch_size) {
    for (std::size_t i : sample_indices(rng, prior_.size(), batch_size)) {
      const auto& e = prior_[i];
      batch.prior.push_back({e.ctx.get(), e.s, e.s2, e.target});
    }
  }
  if (value_.size() >= batch_size) {
    for (std::size_t i : sample_indices(rng, value_.size(), batch_size)) {
      const auto& e = value_[i];
      batch.value.push_back({e.ctx.get(), e.s, e.s2, e.target});
    }
  }
  return batch;
}

std::string ReplayBuffer::serialize() const {
  std::map<const TaskContext*, int> ids;
  std::vector<const TaskContext*> order;
  auto id_of = [&](const TaskContext* ctx) {
    auto [it, inserted] = ids.emplace(ctx, static_cast<int>(order.size()));
    if (inserted) order.push_back(ctx);
    return it->second;
  };
  std::ostringstream body;
  body << "prior " << prior_.size() << '\n';
  for (const auto& e : prior_) {
    body << id_of(e.ctx.get()) << ' ' << e.s << ' ' << e.s2 << ' ' << e.target.size();
    for (auto [slot, p] : e.target) body << ' ' << slot << ' ' << fmt(p);
    body << '\n';
  }
  body << "value " << value_.size() << '\n';
  for (const auto& e : value_) {
    body << id_of(e.ctx.get()) << ' ' << e.s << ' ' << e.s2 << ' ' << fmt(e.target) << '\n';
  }

  std::ostringstream out;
  out << "replay v1 " << capacity_ << '\n';
  out << "tasks " << order.size() << '\n';
  for (const TaskContext* ctx : order) out << serialize_task(ctx->task());
  out << body.str();
  return out.str();
}

ReplayBuffer ReplayBuffer::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tag, version;
  std::size_t capacity = 0;
  in >> tag >> version >> capacity;
  if (!in || tag != "replay" || version != "v1") {
    throw std::invalid_argument("replay snapshot: bad header");
  }
  ReplayBuffer buffer(capacity);
  std::size_t num_tasks = 0;
  in >> tag >> num_tasks;
  if (!in || tag != "tasks") throw std::invalid_argument("replay snapshot: expected tasks");
  std::string line;
  std::getline(in, line);
  std::vector<std::shared_ptr<const TaskContext>> contexts;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string m, v;
    int w = 0, h = 0;
    hs >> m >> v >> w >> h;
    if (!hs || m != "maze") throw std::invalid_argument("replay snapshot: bad task header");
    std::string text_block = header + '\n';
    for (int r = 0; r < h; ++r) {
      if (!std::getline(in, line)) throw std::invalid_argument("replay snapshot: truncated task");
      text_block += line + '\n';
    }
    ParsedMaze parsed = parse_maze_text(text_block);
    if (parsed.starts.size() != 1 || parsed.goals.size() != 1) {
      throw std::invalid_argument("replay snapshot: task needs one start and one goal");
    }
    contexts.push_back(std::make_shared<const TaskContext>(
        Task{parsed.maze, parsed.starts.front(), parsed.goals.front()}));
  }
  auto context = [&](int id) {
    if (id < 0 || id >= static_cast<int>(contexts.size())) {
      throw std::invalid_argument("replay snapshot: bad task id");
    }
    return contexts[id];
  };
  std::size_t count = 0;
  in >> tag >> count;
  if (!in || tag != "prior") throw std::invalid_argument("replay snapshot: expected prior");
  for (std::size_t i = 0; i < count; ++i) {
    int id = 0;
    PriorEntry e;
    std::size_t k = 0;
    in >> id >> e.s >> e.s2 >> k;
    for (std::size_t j = 0; j < k; ++j) {
      int slot = 0;
      std::string p;
      in >> slot >> p;
      e.target.emplace_back(slot, std::stod(p));
    }
    if (!in) throw std::invalid_argument("replay snapshot: truncated prior entry");
    e.ctx = context(id);
    buffer.add_prior(std::move(e));
  }
  in >> tag >> count;
  if (!in || tag != "value") throw std::invalid_argument("replay snapshot: expected value");
  for (std::size_t i = 0; i < count; ++i) {
    int id = 0;
    ValueEntry e;
    std::string target;
    in >> id >> e.s >> e.s2 >> target;
    if (!in) throw std::invalid_argument("replay snapshot: truncated value entry");
    e.target = std::stod(target);
    e.ctx = context(id);
    buffer.add_value(std::move(e));
  }
  return buffer;
}

}  // namespace dcmcts
