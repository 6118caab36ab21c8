#include "fgp/grad_check.hpp"

#include <cmath>

namespace fgp::ad {

double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double step) {
  Tape tape;
  const Tensor xl = tape.leaf(x, true);
  const Tensor y = f(xl);
  if (!y.shape().is_scalar())
    throw Error("check_gradient: f returned " + y.shape().str() + ", expected scalar");
  if (!std::isfinite(y.item())) throw Error("check_gradient: f(x) is not finite");
  tape.backward(y);
  const Tensor g = tape.grad(xl);

  double max_err = 0.0;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vp = base, vm = base;
    vp[i] += step;
    vm[i] -= step;
    const double fp = f(make_tensor(x.shape(), std::move(vp))).item();
    const double fm = f(make_tensor(x.shape(), std::move(vm))).item();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("check_gradient: non-finite value at perturbed point");
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::fabs(g[i] - fd) / std::max(1.0, std::fabs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace fgp::ad
