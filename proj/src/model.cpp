#include "dcmcts/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dcmcts {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_array(std::ostringstream& out, const std::string& tag, const std::string& name,
                 std::span<const double> values) {
  out << tag << ' ' << name << ' ' << values.size() << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << fmt(values[i]);
  out << '\n';
}

std::vector<double> read_array(std::istream& in, const std::string& tag, const std::string& name) {
  std::string t, n;
  std::size_t size = 0;
  in >> t >> n >> size;
  if (!in || t != tag || n != name) {
    throw std::invalid_argument("model checkpoint: expected '" + tag + " " + name + "'");
  }
  std::vector<double> out(size);
  for (auto& v : out) {
    std::string tok;
    in >> tok;
    if (!in) throw std::invalid_argument("model checkpoint: truncated array " + name);
    v = std::stod(tok);
  }
  return out;
}

// y += W x for a row-major (rows x cols) matrix.
void matvec_add(const double* W, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* w = W + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += w[c] * x[c];
    y[r] += acc;
  }
}

// G += d x^T
void outer_add(double* G, int rows, int cols, const double* d, const double* x) {
  for (int r = 0; r < rows; ++r) {
    if (d[r] == 0.0) continue;
    double* g = G + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) g[c] += d[r] * x[c];
  }
}

}  // namespace

void pair_features(const TaskContext& ctx, int s, int s2, std::span<double> out) {
  const Maze& m = ctx.maze();
  const StateId a = m.cell(s);
  const StateId b = m.cell(s2);
  const double D = std::max(m.width(), m.height());
  const int dr = b.row - a.row;
  const int dc = b.col - a.col;
  const int manhattan = std::abs(dr) + std::abs(dc);
  out[0] = dr / D;
  out[1] = dc / D;
  out[2] = std::abs(dr) / D;
  out[3] = std::abs(dc) / D;
  out[4] = manhattan / D;
  out[5] = manhattan == 1 ? 1.0 : 0.0;
  out[6] = manhattan == 0 ? 1.0 : 0.0;
  std::copy(ctx.patch(s).begin(), ctx.patch(s).end(), out.begin() + 7);
  std::copy(ctx.patch(s2).begin(), ctx.patch(s2).end(), out.begin() + 7 + kPatchSize);
}

void candidate_features(const TaskContext& ctx, int s, int x, int s2, std::span<double> out) {
  const Maze& m = ctx.maze();
  const StateId a = m.cell(s);
  const StateId c = m.cell(x);
  const StateId b = m.cell(s2);
  const double D = std::max(m.width(), m.height());
  const int r1 = c.row - a.row, c1 = c.col - a.col;
  const int r2 = b.row - c.row, c2 = b.col - c.col;
  const int m1 = std::abs(r1) + std::abs(c1);
  const int m2 = std::abs(r2) + std::abs(c2);
  const int m12 = std::abs(b.row - a.row) + std::abs(b.col - a.col);
  out[0] = r1 / D;
  out[1] = c1 / D;
  out[2] = r2 / D;
  out[3] = c2 / D;
  out[4] = std::abs(r1) / D;
  out[5] = std::abs(c1) / D;
  out[6] = std::abs(r2) / D;
  out[7] = std::abs(c2) / D;
  out[8] = m1 / D;
  out[9] = m2 / D;
  out[10] = m12 / D;
  out[11] = (m1 + m2 - m12) / D;
  out[12] = std::abs(m1 - m2) / D;
  out[13] = m1 == 1 ? 1.0 : 0.0;
  out[14] = m2 == 1 ? 1.0 : 0.0;
  std::copy(ctx.patch(x).begin(), ctx.patch(x).end(), out.begin() + 15);
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

TrainableModel::TrainableModel(ModelShape shape, std::uint64_t seed) : shape_(shape) {
  if (shape.value_hidden < 1 || shape.stop_hidden < 1 || shape.candidate_hidden < 1) {
    throw std::invalid_argument("model: hidden sizes must be >= 1");
  }
  build_layout();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init = [&](std::size_t offset, std::size_t size, int fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < size; ++i) params_[offset + i] = scale * normal(rng);
  };
  const int V = shape_.value_hidden, S = shape_.stop_hidden, C = shape_.candidate_hidden;
  init(at_.wv1, static_cast<std::size_t>(V) * kPairFeatures, kPairFeatures);
  init(at_.wv2, V, V);
  init(at_.ws1, static_cast<std::size_t>(S) * kPairFeatures, kPairFeatures);
  init(at_.ws2, S, S);
  init(at_.wc1, static_cast<std::size_t>(C) * kCandidateFeatures,
       kCandidateFeatures + kPairFeatures);
  init(at_.wp1, static_cast<std::size_t>(C) * kPairFeatures, kCandidateFeatures + kPairFeatures);
  init(at_.wc2, C, C);
}

void TrainableModel::build_layout() {
  const std::size_t V = shape_.value_hidden, S = shape_.stop_hidden, C = shape_.candidate_hidden;
  std::size_t offset = 0;
  blocks_.clear();
  auto add = [&](const char* name, std::size_t size) {
    blocks_.push_back({name, offset, size});
    offset += size;
    return blocks_.back().offset;
  };
  at_.wv1 = add("value_w1", V * kPairFeatures);
  at_.bv1 = add("value_b1", V);
  at_.wv2 = add("value_w2", V);
  at_.bv2 = add("value_b2", 1);
  at_.ws1 = add("stop_w1", S * kPairFeatures);
  at_.bs1 = add("stop_b1", S);
  at_.ws2 = add("stop_w2", S);
  at_.bs2 = add("stop_b2", 1);
  at_.wc1 = add("cand_w1", C * kCandidateFeatures);
  at_.wp1 = add("cand_pair_w1", C * kPairFeatures);
  at_.bc1 = add("cand_b1", C);
  at_.wc2 = add("cand_w2", C);
  at_.bc2 = add("cand_b2", 1);
  params_.assign(offset, 0.0);
  adam_m_.assign(offset, 0.0);
  adam_v_.assign(offset, 0.0);
}

double TrainableModel::value_index(const TaskContext& ctx, int s, int s2) const {
  thread_local std::vector<double> phi(kPairFeatures), h;
  pair_features(ctx, s, s2, phi);
  const int V = shape_.value_hidden;
  const double* p = params_.data();
  h.assign(p + at_.bv1, p + at_.bv1 + V);
  matvec_add(p + at_.wv1, V, kPairFeatures, phi.data(), h.data());
  double y = p[at_.bv2];
  for (int i = 0; i < V; ++i) y += p[at_.wv2 + i] * std::tanh(h[i]);
  return sigmoid(y);
}

double TrainableModel::value(const TaskContext& ctx, const OrKey& key) const {
  return value_index(ctx, ctx.index_of(key.s), ctx.index_of(key.s2));
}

void TrainableModel::logits(const TaskContext& ctx, int s, int s2, std::span<double> out) const {
  thread_local std::vector<double> phi(kPairFeatures), psi(kCandidateFeatures), base, h;
  const int C = shape_.candidate_hidden, S = shape_.stop_hidden;
  const double* p = params_.data();
  pair_features(ctx, s, s2, phi);

  h.assign(p + at_.bs1, p + at_.bs1 + S);
  matvec_add(p + at_.ws1, S, kPairFeatures, phi.data(), h.data());
  double z0 = p[at_.bs2];
  for (int i = 0; i < S; ++i) z0 += p[at_.ws2 + i] * std::tanh(h[i]);
  out[kStopCandidate] = z0;

  base.assign(p + at_.bc1, p + at_.bc1 + C);
  matvec_add(p + at_.wp1, C, kPairFeatures, phi.data(), base.data());
  for (int x = 0; x < ctx.num_cells(); ++x) {
    candidate_features(ctx, s, x, s2, psi);
    h = base;
    matvec_add(p + at_.wc1, C, kCandidateFeatures, psi.data(), h.data());
    double z = p[at_.bc2];
    for (int i = 0; i < C; ++i) z += p[at_.wc2 + i] * std::tanh(h[i]);
    out[x + 1] = z;
  }
}

void TrainableModel::prior(const TaskContext& ctx, const OrKey& key, std::span<double> out) const {
  logits(ctx, ctx.index_of(key.s), ctx.index_of(key.s2), out);
  const double inv_t = 1.0 / temperature;
  const double zmax = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& z : out) {
    z = std::exp((z - zmax) * inv_t);
    total += z;
  }
  for (double& z : out) z /= total;
}

double TrainableModel::value_example(const ValueExample& ex, double scale,
                                     std::span<double> grad) const {
  thread_local std::vector<double> phi(kPairFeatures), h;
  const int V = shape_.value_hidden;
  const double* p = params_.data();
  pair_features(*ex.ctx, ex.s, ex.s2, phi);
  h.assign(p + at_.bv1, p + at_.bv1 + V);
  matvec_add(p + at_.wv1, V, kPairFeatures, phi.data(), h.data());
  for (double& x : h) x = std::tanh(x);
  double y = p[at_.bv2];
  for (int i = 0; i < V; ++i) y += p[at_.wv2 + i] * h[i];
  // -[t log sigmoid(y) + (1 - t) log(1 - sigmoid(y))]
  const double loss = ex.target * softplus(-y) + (1.0 - ex.target) * softplus(y);
  if (!grad.empty()) {
    const double dy = (sigmoid(y) - ex.target) * scale;
    double* g = grad.data();
    g[at_.bv2] += dy;
    thread_local std::vector<double> dh;
    dh.resize(V);
    for (int i = 0; i < V; ++i) {
      g[at_.wv2 + i] += dy * h[i];
      dh[i] = dy * p[at_.wv2 + i] * (1.0 - h[i] * h[i]);
      g[at_.bv1 + i] += dh[i];
    }
    outer_add(g + at_.wv1, V, kPairFeatures, dh.data(), phi.data());
  }
  return loss;
}

double TrainableModel::prior_example(const PriorExample& ex, double scale,
                                     std::span<double> grad) const {
  const TaskContext& ctx = *ex.ctx;
  const int n = ctx.num_cells();
  const int C = shape_.candidate_hidden, S = shape_.stop_hidden;
  const double* p = params_.data();
  thread_local std::vector<double> phi(kPairFeatures), psi(kCandidateFeatures), base, hs, z, hc;
  pair_features(ctx, ex.s, ex.s2, phi);

  hs.assign(p + at_.bs1, p + at_.bs1 + S);
  matvec_add(p + at_.ws1, S, kPairFeatures, phi.data(), hs.data());
  for (double& x : hs) x = std::tanh(x);
  z.assign(n + 1, 0.0);
  z[0] = p[at_.bs2];
  for (int i = 0; i < S; ++i) z[0] += p[at_.ws2 + i] * hs[i];

  base.assign(p + at_.bc1, p + at_.bc1 + C);
  matvec_add(p + at_.wp1, C, kPairFeatures, phi.data(), base.data());
  hc.resize(static_cast<std::size_t>(n) * C);
  for (int x = 0; x < n; ++x) {
    candidate_features(ctx, ex.s, x, ex.s2, psi);
    double* h = hc.data() + static_cast<std::size_t>(x) * C;
    std::copy(base.begin(), base.end(), h);
    matvec_add(p + at_.wc1, C, kCandidateFeatures, psi.data(), h);
    double zx = p[at_.bc2];
    for (int i = 0; i < C; ++i) {
      h[i] = std::tanh(h[i]);
      zx += p[at_.wc2 + i] * h[i];
    }
    z[x + 1] = zx;
  }

  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - zmax);
  const double log_norm = zmax + std::log(total);
  double loss = 0.0;
  double target_mass = 0.0;
  for (auto [slot, t] : ex.target) {
    loss -= t * (z[slot] - log_norm);
    target_mass += t;
  }
  if (grad.empty()) return loss;

  // dL/dz_k = mass * softmax_k - t_k
  thread_local std::vector<double> dz, dh, dbase;
  dz.resize(n + 1);
  for (int k = 0; k <= n; ++k) dz[k] = target_mass * std::exp(z[k] - log_norm);
  for (auto [slot, t] : ex.target) dz[slot] -= t;
  for (double& d : dz) d *= scale;

  double* g = grad.data();
  g[at_.bs2] += dz[0];
  dh.resize(S);
  for (int i = 0; i < S; ++i) {
    g[at_.ws2 + i] += dz[0] * hs[i];
    dh[i] = dz[0] * p[at_.ws2 + i] * (1.0 - hs[i] * hs[i]);
    g[at_.bs1 + i] += dh[i];
  }
  outer_add(g + at_.ws1, S, kPairFeatures, dh.data(), phi.data());

  dbase.assign(C, 0.0);
  dh.resize(C);
  for (int x = 0; x < n; ++x) {
    const double d = dz[x + 1];
    if (d == 0.0) continue;
    const double* h = hc.data() + static_cast<std::size_t>(x) * C;
    g[at_.bc2] += d;
    for (int i = 0; i < C; ++i) {
      g[at_.wc2 + i] += d * h[i];
      dh[i] = d * p[at_.wc2 + i] * (1.0 - h[i] * h[i]);
      dbase[i] += dh[i];
    }
    candidate_features(ctx, ex.s, x, ex.s2, psi);
    outer_add(g + at_.wc1, C, kCandidateFeatures, dh.data(), psi.data());
  }
  for (int i = 0; i < C; ++i) g[at_.bc1 + i] += dbase[i];
  outer_add(g + at_.wp1, C, kPairFeatures, dbase.data(), phi.data());
  return loss;
}

Losses TrainableModel::loss_and_gradient(const Batch& batch, std::span<double> grad) const {
  if (!grad.empty() && grad.size() != params_.size()) {
    throw std::invalid_argument("model: gradient buffer has wrong size");
  }
  Losses out;
  if (!batch.prior.empty()) {
    const double scale = 1.0 / batch.prior.size();
    for (const auto& ex : batch.prior) out.prior += prior_example(ex, scale, grad);
    out.prior *= scale;
  }
  if (!batch.value.empty()) {
    const double scale = 1.0 / batch.value.size();
    for (const auto& ex : batch.value) out.value += value_example(ex, scale, grad);
    out.value *= scale;
  }
  return out;
}

Losses TrainableModel::train_step(const Batch& batch) {
  if (batch.prior.empty() && batch.value.empty()) {
    throw std::invalid_argument("train_step: empty batch");
  }
  std::vector<double> grad(params_.size(), 0.0);
  const Losses losses = loss_and_gradient(batch, grad);
  if (!std::isfinite(losses.prior) || !std::isfinite(losses.value)) {
    throw std::runtime_error("train_step: non-finite loss (prior " + fmt(losses.prior) +
                             ", value " + fmt(losses.value) + ") at step " +
                             std::to_string(steps_));
  }
  ++steps_;
  if (optimizer == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= learning_rate * grad[i];
  } else {
    const double c1 = 1.0 - std::pow(adam_beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(adam_beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adam_m_[i] = adam_beta1 * adam_m_[i] + (1.0 - adam_beta1) * grad[i];
      adam_v_[i] = adam_beta2 * adam_v_[i] + (1.0 - adam_beta2) * grad[i] * grad[i];
      params_[i] -= learning_rate * (adam_m_[i] / c1) / (std::sqrt(adam_v_[i] / c2) + adam_eps);
    }
  }
  return losses;
}

std::string TrainableModel::serialize() const {
  std::ostringstream out;
  out << "model v1\n";
  out << "shape " << shape_.value_hidden << ' ' << shape_.stop_hidden << ' '
      << shape_.candidate_hidden << '\n';
  out << "temperature " << fmt(temperature) << '\n';
  out << "learning_rate " << fmt(learning_rate) << '\n';
  out << "optimizer " << to_string(optimizer) << ' ' << fmt(adam_beta1) << ' ' << fmt(adam_beta2)
      << ' ' << fmt(adam_eps) << '\n';
  out << "steps " << steps_ << '\n';
  const std::span<const double> p(params_), m(adam_m_), v(adam_v_);
  for (const auto& b : blocks_) write_array(out, "param", b.name, p.subspan(b.offset, b.size));
  for (const auto& b : blocks_) write_array(out, "adam_m", b.name, m.subspan(b.offset, b.size));
  for (const auto& b : blocks_) write_array(out, "adam_v", b.name, v.subspan(b.offset, b.size));
  return out.str();
}

TrainableModel TrainableModel::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::getline(in, line);
  if (line != "model v1") throw std::invalid_argument("model checkpoint: bad header");
  auto expect = [&](const char* key) {
    std::string k;
    in >> k;
    if (!in || k != key) throw std::invalid_argument(std::string("model checkpoint: expected ") + key);
  };
  auto number = [&]() {
    std::string tok;
    in >> tok;
    if (!in) throw std::invalid_argument("model checkpoint: truncated header");
    return std::stod(tok);
  };
  ModelShape shape;
  expect("shape");
  in >> shape.value_hidden >> shape.stop_hidden >> shape.candidate_hidden;
  TrainableModel model(shape, 0);
  expect("temperature");
  model.temperature = number();
  expect("learning_rate");
  model.learning_rate = number();
  expect("optimizer");
  std::string opt;
  in >> opt;
  model.optimizer = parse_optimizer(opt);
  model.adam_beta1 = number();
  model.adam_beta2 = number();
  model.adam_eps = number();
  expect("steps");
  in >> model.steps_;
  auto fill = [&](const char* tag, std::vector<double>& dst) {
    for (const auto& b : model.blocks_) {
      auto values = read_array(in, tag, b.name);
      if (values.size() != b.size) {
        throw std::invalid_argument("model checkpoint: block " + b.name + " has wrong size");
      }
      std::copy(values.begin(), values.end(), dst.begin() + b.offset);
    }
  };
  fill("param", model.params_);
  fill("adam_m", model.adam_m_);
  fill("adam_v", model.adam_v_);
  return model;
}

void TrainableModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  out << serialize();
  if (!out) throw std::runtime_error("cannot write model checkpoint " + path);
}

TrainableModel TrainableModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

bool TrainableModel::operator==(const TrainableModel& o) const {
  return shape_.value_hidden == o.shape_.value_hidden && shape_.stop_hidden == o.shape_.stop_hidden &&
         shape_.candidate_hidden == o.shape_.candidate_hidden && temperature == o.temperature &&
         learning_rate == o.learning_rate && optimizer == o.optimizer &&
         adam_beta1 == o.adam_beta1 && adam_beta2 == o.adam_beta2 && adam_eps == o.adam_eps &&
         steps_ == o.steps_ && params_ == o.params_ && adam_m_ == o.adam_m_ &&
         adam_v_ == o.adam_v_;
}

}  // namespace dcmcts
