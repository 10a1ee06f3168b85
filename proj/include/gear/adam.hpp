// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "gear/tensor.hpp"

namespace gear {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. One slot pair (m, v) per parameter index;
/// the caller owns the parameter tensors and passes matching gradients.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Registers a parameter and returns its slot index.
  std::size_t add_param(const Tensor& param);

  /// Applies one update to every registered parameter, in slot order.
  /// `grads[i]` must match the shape of parameter i; the step counter is
  /// shared across parameters and increments once per call.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace gear
