#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "densea/common.hpp"
#include "densea/tape.hpp"

namespace densea {

// Row-major view over a contiguous block of tape nodes.
struct Mat {
  NodeId base = kNoNode;
  int rows = 0;
  int cols = 0;

  bool empty() const { return base == kNoNode; }
  NodeId id(int r, int c) const { return base + r * cols + c; }
  NodeId id(int i) const { return base + i; }
  int size() const { return rows * cols; }
};

Mat make_leaf_mat(Tape& t, const double* data, int rows, int cols);
Mat make_zero_mat(Tape& t, int rows, int cols);
std::vector<double> read_mat(const Tape& t, const Mat& m);
Mat row(const Mat& m, int r);

// C[r][c] = sum_k A[r][k] * B[k][c]
Mat matmul(Tape& t, const Mat& a, const Mat& b);

// Numerically-stable row softmax (max-shift); input must be a row vector.
Mat softmax_row(Tape& t, const Mat& v);

// -log(dist[target]) with the tape's clamped log
NodeId cross_entropy(Tape& t, const Mat& dist, int target, double floor = 1e-12);

// -sum_k q[k] * log(dist[k]) with constant target distribution q
NodeId soft_cross_entropy(Tape& t, const Mat& dist, const double* q, double floor = 1e-12);

NodeId mse(Tape& t, NodeId pred, NodeId target);
NodeId mse_c(Tape& t, NodeId pred, double target);

// Copies rows of several mats into one fresh contiguous row vector.
Mat concat_rows(Tape& t, const std::vector<Mat>& pieces);

// ---- trainable parameters ----------------------------------------------

struct Param {
  std::string name;
  int rows = 0, cols = 0;
  bool trainable = true;
  std::vector<double> value, grad, momentum;
  size_t size() const { return value.size(); }
};

class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  // insertion order
  std::vector<Param*> all();
  std::vector<const Param*> all() const;

  size_t count_trainable() const;  // total trainable scalars
  void zero_grad();
  void set_trainable(bool on);
  uint64_t value_hash() const;  // order- and name-sensitive FNV over values

 private:
  std::deque<Param> items_;  // deque: stable addresses as params are added
  std::map<std::string, size_t> index_;
};

// Binds parameters onto a tape as leaf blocks and pulls gradients back out
// after backward().  One binder per tape generation.
class Binder {
 public:
  explicit Binder(Tape& t) : t_(&t) {}
  Mat bind(Param& p);
  void harvest();  // accumulate tape grads into each bound param's grad

 private:
  Tape* t_;
  std::vector<std::pair<Param*, NodeId>> bound_;
};

// SGD with classical momentum and global-norm gradient clipping across all
// trainable parameters of the stores passed to step().  Grads are zeroed
// after the update.
struct SgdMomentum {
  double lr = 1e-3;
  double momentum = 0.9;
  double clip_norm = 5.0;  // <= 0 disables clipping
  void step(const std::vector<ParamStore*>& stores);
  void step(ParamStore& store) { step(std::vector<ParamStore*>{&store}); }
};

}  // namespace densea
