// SPDX-License-Identifier: Apache-2.0
#include "gear/gradcheck.hpp"

#include <cmath>

#include "gear/errors.hpp"

namespace gear {

GradCheckResult finite_diff_check(const ScalarFn& fn, const Tensor& x0,
                                  double h, double eps_denom) {
  Tensor grad;
  {
    Tape tape;
    Tensor x = tape.leaf(x0.clone());
    Tensor y = fn(tape, x);
    if (y.size() != 1)
      throw ContractError("finite_diff_check: fn must return a scalar");
    tape.backward(y);
    grad = tape.grad_or_zeros(x);
  }

  GradCheckResult res;
  Tensor probe = x0.clone();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    double f_plus, f_minus;
    {
      probe.data_mut()[i] = orig + h;
      Tape tape;
      f_plus = fn(tape, tape.leaf(probe)).item();
    }
    {
      probe.data_mut()[i] = orig - h;
      Tape tape;
      f_minus = fn(tape, tape.leaf(probe)).item();
    }
    probe.data_mut()[i] = orig;
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic = grad.data()[i];
    const double rel =
        std::fabs(analytic - numeric) / (std::fabs(analytic) + eps_denom);
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic = analytic;
      res.numeric = numeric;
    }
  }
  return res;
}

}  // namespace gear
