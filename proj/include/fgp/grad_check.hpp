#pragma once

#include <functional>

#include "fgp/tape.hpp"

namespace fgp::ad {

// Max relative disagreement between the reverse-mode gradient of f at x and
// central finite differences with the given step:
//   max_i |analytic_i - fd_i| / max(1, |fd_i|).
// f must return a scalar tensor and be evaluable at x +- step*e_i.
double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double step);

}  // namespace fgp::ad
