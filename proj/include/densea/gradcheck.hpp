#pragma once

#include <functional>
#include <string>

#include "densea/matrix.hpp"

namespace densea {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  size_t n_checked = 0;
};

// Central-difference check of d(root)/d(theta) for every trainable scalar in
// the store (every stride-th one if stride > 1).  `build` must be a
// deterministic function of the store's current values: it binds params via
// the binder and returns the scalar root.  Relative error is
// |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check(ParamStore& ps,
                           const std::function<NodeId(Tape&, Binder&)>& build,
                           double h = 1e-5, int stride = 1);

}  // namespace densea
