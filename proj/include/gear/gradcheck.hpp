// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "gear/tensor.hpp"

namespace gear {

/// Builds a scalar from one differentiable input. The function must register
/// `x` on the tape itself (via the leaf handed to it) and may add constants.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of d(fn)/dx at `x0`. Relative error per element
/// is |analytic - numeric| / (|analytic| + eps_denom).
GradCheckResult finite_diff_check(const ScalarFn& fn, const Tensor& x0,
                                  double h = 1e-5, double eps_denom = 1e-8);

}  // namespace gear
