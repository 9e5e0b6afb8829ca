#pragma once

#include <functional>
#include <string>

#include "avwm/param_store.hpp"

namespace avwm::ndgrad {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t checked = 0;
};

// Compares analytic gradients against central finite differences with the
// given step. loss_fn must rebuild the graph and return the scalar loss for
// the current parameter values (deterministically: any noise must be frozen
// by the caller). The error metric is |a - n| / max(1, |a|, |n|), i.e.
// relative above unit magnitude with an absolute floor below it.
GradCheckResult finite_difference_check(ParamStore& params,
                                        const std::function<Tensor()>& loss_fn,
                                        double step = 1e-5);

}  // namespace avwm::ndgrad
