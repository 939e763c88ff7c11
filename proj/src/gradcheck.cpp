#include "densea/gradcheck.hpp"

#include <cmath>

namespace densea {

namespace {

double eval_once(ParamStore& /*ps*/, const std::function<NodeId(Tape&, Binder&)>& build) {
  Tape t;
  Binder b(t);
  NodeId root = build(t, b);
  return t.val(root);
}

}  // namespace

GradCheckReport grad_check(ParamStore& ps,
                           const std::function<NodeId(Tape&, Binder&)>& build,
                           double h, int stride) {
  if (h <= 0.0) throw ConfigError("grad_check: step must be positive");
  if (stride < 1) stride = 1;

  ps.zero_grad();
  Tape t;
  Binder b(t);
  NodeId root = build(t, b);
  t.backward(root);
  b.harvest();

  // snapshot analytic grads; the fd loop below reuses ps.grad storage
  std::vector<std::vector<double>> analytic;
  for (Param* p : ps.all()) analytic.push_back(p->grad);
  ps.zero_grad();

  GradCheckReport rep;
  size_t pi = 0;
  for (Param* p : ps.all()) {
    const std::vector<double>& a = analytic[pi++];
    if (!p->trainable) continue;
    for (size_t i = 0; i < p->size(); i += stride) {
      double keep = p->value[i];
      p->value[i] = keep + h;
      double fp = eval_once(ps, build);
      p->value[i] = keep - h;
      double fm = eval_once(ps, build);
      p->value[i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double abs_err = std::fabs(a[i] - fd);
      double rel = abs_err / std::max(1.0, std::fabs(a[i]));
      ++rep.n_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.max_abs_err = abs_err;
        rep.worst_param = p->name;
        rep.worst_index = static_cast<int>(i);
      }
    }
  }
  return rep;
}

}  // namespace densea
