#pragma once

#include <cstdint>
#include <vector>

#include "densea/common.hpp"

namespace densea {

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

// Reverse-mode tape over scalar nodes.  Values are doubles; every recorded
// node is checked finite at creation, so a NaN/Inf surfaces at the op that
// produced it rather than at the loss.  Three fused ops (Dot, Sum, WSum)
// cover the linear-algebra inner loops; their forward and adjoint passes run
// through kernels::active(), which is where the SIMD variants plug in.
//
// A block of nodes created consecutively is contiguous in the value array,
// which is what the fused ops index into: Dot reads two (possibly strided)
// node ranges, Sum/WSum read one contiguous range.
class Tape {
 public:
  enum class Op : uint8_t {
    Leaf, Add, Sub, Mul, Div, Exp, LogClamp, Tanh, Sigmoid, Softplus,
    AddC, MulC, Copy, Dot, Sum, WSum,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId leaf(double v);
  NodeId leaf_block(const double* v, int n);
  NodeId leaf_block(const std::vector<double>& v) {
    return leaf_block(v.data(), static_cast<int>(v.size()));
  }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId exp(NodeId a);
  // log(max(x, floor)); gradient is zero in the clamped region (subgradient
  // convention); clamp events are counted for diagnostics.
  NodeId log_clamp(NodeId a, double floor = 1e-12);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId add_c(NodeId a, double c);
  NodeId mul_c(NodeId a, double c);
  NodeId copy(NodeId a);

  // sum_i value(a0 + i*sa) * value(b0 + i*sb)
  NodeId dot(NodeId a0, int sa, NodeId b0, int sb, int n);
  // sum over the contiguous block [a0, a0+n)
  NodeId sum_block(NodeId a0, int n);
  // sum_i w[i] * value(a0 + i) with constant weights
  NodeId wsum(NodeId a0, int n, const double* w);

  double val(NodeId id) const { return val_[check(id)]; }
  const double* val_ptr(NodeId id) const { return &val_[check(id)]; }
  double grad(NodeId id) const;

  // Accumulates d(root)/d(node) into the gradient array.  One backward per
  // tape generation: call reset() (or use a fresh tape) before the next one.
  void backward(NodeId root);
  bool backward_run() const { return backward_run_; }

  void reset();

  size_t size() const { return nodes_.size(); }
  long clamp_events() const { return clamp_events_; }

 private:
  struct Node {
    Op op;
    NodeId a;
    NodeId b;
    double c;
  };
  struct DotRec {
    NodeId a0, b0;
    int32_t n, sa, sb;
  };
  struct WSumRec {
    NodeId a0;
    int32_t n;
    size_t w_off;
  };

  NodeId push(Op op, NodeId a, NodeId b, double c, double v);
  NodeId check(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw IndexError("tape: node id out of range");
    return id;
  }
  void check_block(NodeId a0, int n, int stride) const;

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> grad_;
  std::vector<DotRec> dots_;
  std::vector<WSumRec> wsums_;
  std::vector<double> weights_;
  bool backward_run_ = false;
  long clamp_events_ = 0;
};

}  // namespace densea
