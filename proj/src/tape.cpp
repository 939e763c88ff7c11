#include "densea/tape.hpp"

#include <cmath>

#include "densea/kernels.hpp"

namespace densea {

namespace {

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::Leaf: return "leaf";
    case Tape::Op::Add: return "add";
    case Tape::Op::Sub: return "sub";
    case Tape::Op::Mul: return "mul";
    case Tape::Op::Div: return "div";
    case Tape::Op::Exp: return "exp";
    case Tape::Op::LogClamp: return "log_clamp";
    case Tape::Op::Tanh: return "tanh";
    case Tape::Op::Sigmoid: return "sigmoid";
    case Tape::Op::Softplus: return "softplus";
    case Tape::Op::AddC: return "add_c";
    case Tape::Op::MulC: return "mul_c";
    case Tape::Op::Copy: return "copy";
    case Tape::Op::Dot: return "dot";
    case Tape::Op::Sum: return "sum";
    case Tape::Op::WSum: return "wsum";
  }
  return "?";
}

inline double stable_softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodeId Tape::push(Op op, NodeId a, NodeId b, double c, double v) {
  if (!std::isfinite(v))
    throw NumericError(std::string("tape: non-finite value from op ") + op_name(op));
  nodes_.push_back({op, a, b, c});
  val_.push_back(v);
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::leaf(double v) { return push(Op::Leaf, kNoNode, kNoNode, 0.0, v); }

NodeId Tape::leaf_block(const double* v, int n) {
  if (n <= 0) throw DimensionError("tape: leaf_block needs n > 0");
  NodeId first = leaf(v[0]);
  for (int i = 1; i < n; ++i) leaf(v[i]);
  return first;
}

NodeId Tape::add(NodeId a, NodeId b) { return push(Op::Add, check(a), check(b), 0.0, val_[a] + val_[b]); }
NodeId Tape::sub(NodeId a, NodeId b) { return push(Op::Sub, check(a), check(b), 0.0, val_[a] - val_[b]); }
NodeId Tape::mul(NodeId a, NodeId b) { return push(Op::Mul, check(a), check(b), 0.0, val_[a] * val_[b]); }
NodeId Tape::div(NodeId a, NodeId b) { return push(Op::Div, check(a), check(b), 0.0, val_[a] / val_[b]); }
NodeId Tape::exp(NodeId a) { return push(Op::Exp, check(a), kNoNode, 0.0, std::exp(val_[a])); }

NodeId Tape::log_clamp(NodeId a, double floor) {
  check(a);
  double x = val_[a];
  if (x < floor) ++clamp_events_;
  return push(Op::LogClamp, a, kNoNode, floor, std::log(x < floor ? floor : x));
}

NodeId Tape::tanh(NodeId a) { return push(Op::Tanh, check(a), kNoNode, 0.0, std::tanh(val_[a])); }
NodeId Tape::sigmoid(NodeId a) { return push(Op::Sigmoid, check(a), kNoNode, 0.0, stable_sigmoid(val_[a])); }
NodeId Tape::softplus(NodeId a) { return push(Op::Softplus, check(a), kNoNode, 0.0, stable_softplus(val_[a])); }
NodeId Tape::add_c(NodeId a, double c) { return push(Op::AddC, check(a), kNoNode, c, val_[a] + c); }
NodeId Tape::mul_c(NodeId a, double c) { return push(Op::MulC, check(a), kNoNode, c, val_[a] * c); }
NodeId Tape::copy(NodeId a) { return push(Op::Copy, check(a), kNoNode, 0.0, val_[a]); }

void Tape::check_block(NodeId a0, int n, int stride) const {
  if (n <= 0) throw DimensionError("tape: fused op needs n > 0");
  check(a0);
  check(a0 + static_cast<NodeId>(static_cast<long>(n - 1) * stride));
}

NodeId Tape::dot(NodeId a0, int sa, NodeId b0, int sb, int n) {
  check_block(a0, n, sa);
  check_block(b0, n, sb);
  double v = kernels::active().dot(&val_[a0], sa, &val_[b0], sb, static_cast<size_t>(n));
  dots_.push_back({a0, b0, n, sa, sb});
  return push(Op::Dot, static_cast<NodeId>(dots_.size()) - 1, kNoNode, 0.0, v);
}

NodeId Tape::sum_block(NodeId a0, int n) {
  check_block(a0, n, 1);
  double v = kernels::active().sum(&val_[a0], static_cast<size_t>(n));
  return push(Op::Sum, a0, static_cast<NodeId>(n), 0.0, v);
}

NodeId Tape::wsum(NodeId a0, int n, const double* w) {
  check_block(a0, n, 1);
  double v = kernels::active().wsum(w, &val_[a0], static_cast<size_t>(n));
  size_t off = weights_.size();
  weights_.insert(weights_.end(), w, w + n);
  wsums_.push_back({a0, n, off});
  return push(Op::WSum, static_cast<NodeId>(wsums_.size()) - 1, kNoNode, 0.0, v);
}

double Tape::grad(NodeId id) const {
  check(id);
  if (!backward_run_) throw InternalError("tape: grad read before backward");
  return grad_[id];
}

void Tape::backward(NodeId root) {
  check(root);
  if (backward_run_)
    throw InternalError("tape: repeated backward without reset");
  backward_run_ = true;
  grad_.assign(nodes_.size(), 0.0);
  grad_[root] = 1.0;
  const kernels::Ops& k = kernels::active();
  for (NodeId i = root; i >= 0; --i) {
    double g = grad_[i];
    if (g == 0.0) continue;
    const Node& nd = nodes_[i];
    switch (nd.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        grad_[nd.a] += g;
        grad_[nd.b] += g;
        break;
      case Op::Sub:
        grad_[nd.a] += g;
        grad_[nd.b] -= g;
        break;
      case Op::Mul:
        grad_[nd.a] += g * val_[nd.b];
        grad_[nd.b] += g * val_[nd.a];
        break;
      case Op::Div:
        grad_[nd.a] += g / val_[nd.b];
        grad_[nd.b] -= g * val_[i] / val_[nd.b];
        break;
      case Op::Exp:
        grad_[nd.a] += g * val_[i];
        break;
      case Op::LogClamp:
        if (val_[nd.a] >= nd.c) grad_[nd.a] += g / val_[nd.a];
        break;
      case Op::Tanh:
        grad_[nd.a] += g * (1.0 - val_[i] * val_[i]);
        break;
      case Op::Sigmoid:
        grad_[nd.a] += g * val_[i] * (1.0 - val_[i]);
        break;
      case Op::Softplus:
        grad_[nd.a] += g * stable_sigmoid(val_[nd.a]);
        break;
      case Op::AddC:
      case Op::Copy:
        grad_[nd.a] += g;
        break;
      case Op::MulC:
        grad_[nd.a] += g * nd.c;
        break;
      case Op::Dot: {
        const DotRec& r = dots_[nd.a];
        k.axpy(g, &val_[r.b0], r.sb, &grad_[r.a0], r.sa, static_cast<size_t>(r.n));
        k.axpy(g, &val_[r.a0], r.sa, &grad_[r.b0], r.sb, static_cast<size_t>(r.n));
        break;
      }
      case Op::Sum:
        k.addc(g, &grad_[nd.a], static_cast<size_t>(nd.b));
        break;
      case Op::WSum: {
        const WSumRec& r = wsums_[nd.a];
        k.waxpy(g, &weights_[r.w_off], &grad_[r.a0], static_cast<size_t>(r.n));
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  val_.clear();
  grad_.clear();
  dots_.clear();
  wsums_.clear();
  weights_.clear();
  backward_run_ = false;
  clamp_events_ = 0;
}

}  // namespace densea
