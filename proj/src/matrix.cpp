#include "densea/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace densea {

Mat make_leaf_mat(Tape& t, const double* data, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw DimensionError("make_leaf_mat: empty shape");
  NodeId base = t.leaf_block(data, rows * cols);
  return {base, rows, cols};
}

Mat make_zero_mat(Tape& t, int rows, int cols) {
  std::vector<double> z(static_cast<size_t>(rows) * cols, 0.0);
  return make_leaf_mat(t, z.data(), rows, cols);
}

std::vector<double> read_mat(const Tape& t, const Mat& m) {
  std::vector<double> out(static_cast<size_t>(m.size()));
  for (int i = 0; i < m.size(); ++i) out[i] = t.val(m.id(i));
  return out;
}

Mat row(const Mat& m, int r) {
  if (r < 0 || r >= m.rows) throw IndexError("row: out of range");
  return {m.id(r, 0), 1, m.cols};
}

Mat matmul(Tape& t, const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions disagree");
  Mat c{kNoNode, a.rows, b.cols};
  for (int r = 0; r < a.rows; ++r) {
    for (int j = 0; j < b.cols; ++j) {
      NodeId d = t.dot(a.id(r, 0), 1, b.id(0, j), b.cols, a.cols);
      if (c.base == kNoNode) c.base = d;
    }
  }
  return c;
}

Mat softmax_row(Tape& t, const Mat& v) {
  if (v.rows != 1 || v.cols < 1) throw DimensionError("softmax_row: want a row vector");
  int n = v.cols;
  double m = t.val(v.id(0));
  for (int i = 1; i < n; ++i) m = std::max(m, t.val(v.id(i)));
  // two passes per stage keep each stage's nodes contiguous
  NodeId shifted = kNoNode;
  for (int i = 0; i < n; ++i) {
    NodeId id = t.add_c(v.id(i), -m);
    if (i == 0) shifted = id;
  }
  NodeId exps = kNoNode;
  for (int i = 0; i < n; ++i) {
    NodeId id = t.exp(shifted + i);
    if (i == 0) exps = id;
  }
  NodeId total = t.sum_block(exps, n);
  Mat out{kNoNode, 1, n};
  for (int i = 0; i < n; ++i) {
    NodeId id = t.div(exps + i, total);
    if (i == 0) out.base = id;
  }
  return out;
}

NodeId cross_entropy(Tape& t, const Mat& dist, int target, double floor) {
  if (dist.rows != 1) throw DimensionError("cross_entropy: want a row vector");
  if (target < 0 || target >= dist.cols) throw IndexError("cross_entropy: target class out of range");
  return t.mul_c(t.log_clamp(dist.id(target), floor), -1.0);
}

NodeId soft_cross_entropy(Tape& t, const Mat& dist, const double* q, double floor) {
  if (dist.rows != 1) throw DimensionError("soft_cross_entropy: want a row vector");
  int n = dist.cols;
  NodeId logs = kNoNode;
  for (int i = 0; i < n; ++i) {
    NodeId id = t.log_clamp(dist.id(i), floor);
    if (i == 0) logs = id;
  }
  std::vector<double> w(q, q + n);
  for (double& x : w) x = -x;
  return t.wsum(logs, n, w.data());
}

NodeId mse(Tape& t, NodeId pred, NodeId target) {
  NodeId d = t.sub(pred, target);
  return t.mul(d, d);
}

NodeId mse_c(Tape& t, NodeId pred, double target) {
  NodeId d = t.add_c(pred, -target);
  return t.mul(d, d);
}

Mat concat_rows(Tape& t, const std::vector<Mat>& pieces) {
  int n = 0;
  for (const Mat& p : pieces) {
    if (p.rows != 1) throw DimensionError("concat_rows: want row vectors");
    n += p.cols;
  }
  if (n == 0) throw DimensionError("concat_rows: nothing to concatenate");
  Mat out{kNoNode, 1, n};
  for (const Mat& p : pieces)
    for (int i = 0; i < p.cols; ++i) {
      NodeId id = t.copy(p.id(i));
      if (out.base == kNoNode) out.base = id;
    }
  return out;
}

// ---- parameters -----------------------------------------------------------

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw InternalError("param '" + name + "' added twice");
  if (rows <= 0 || cols <= 0) throw DimensionError("param '" + name + "': empty shape");
  items_.push_back(Param{name, rows, cols, true, {}, {}, {}});
  Param& p = items_.back();
  size_t n = static_cast<size_t>(rows) * cols;
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.momentum.assign(n, 0.0);
  index_[name] = items_.size() - 1;
  return p;
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("param '" + name + "' not found");
  return items_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("param '" + name + "' not found");
  return items_[it->second];
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (Param& p : items_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const Param& p : items_) out.push_back(&p);
  return out;
}

size_t ParamStore::count_trainable() const {
  size_t n = 0;
  for (const Param& p : items_)
    if (p.trainable) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (Param& p : items_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamStore::set_trainable(bool on) {
  for (Param& p : items_) p.trainable = on;
}

uint64_t ParamStore::value_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Param& p : items_) {
    h = fnv1a64(p.name, h);
    h = fnv1a64(p.value, h);
  }
  return h;
}

Mat Binder::bind(Param& p) {
  NodeId base = t_->leaf_block(p.value.data(), p.rows * p.cols);
  bound_.push_back({&p, base});
  return {base, p.rows, p.cols};
}

void Binder::harvest() {
  if (!t_->backward_run()) throw InternalError("binder: harvest before backward");
  for (auto& [p, base] : bound_)
    for (size_t i = 0; i < p->size(); ++i) p->grad[i] += t_->grad(base + static_cast<NodeId>(i));
}

void SgdMomentum::step(const std::vector<ParamStore*>& stores) {
  double sq = 0.0;
  for (ParamStore* s : stores)
    for (Param* p : s->all())
      if (p->trainable)
        for (double g : p->grad) sq += g * g;
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  if (!std::isfinite(sq)) throw NumericError("sgd: non-finite gradient norm");
  for (ParamStore* s : stores) {
    for (Param* p : s->all()) {
      if (p->trainable) {
        for (size_t i = 0; i < p->size(); ++i) {
          double g = p->grad[i] * scale;
          p->momentum[i] = momentum * p->momentum[i] + g;
          p->value[i] -= lr * p->momentum[i];
        }
      }
      std::fill(p->grad.begin(), p->grad.end(), 0.0);
    }
  }
}

}  // namespace densea
