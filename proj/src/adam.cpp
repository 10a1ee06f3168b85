// SPDX-License-Identifier: Apache-2.0
#include "gear/adam.hpp"

#include <cmath>

#include "gear/errors.hpp"

namespace gear {

std::size_t Adam::add_param(const Tensor& param) {
  m_.emplace_back(param.size(), 0.0);
  v_.emplace_back(param.size(), 0.0);
  return m_.size() - 1;
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ContractError("Adam::step: expected " + std::to_string(m_.size()) +
                        " params and grads, got " +
                        std::to_string(params.size()) + " / " +
                        std::to_string(grads.size()));
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != m_[p].size() || grads[p].size() != m_[p].size())
      throw ContractError("Adam::step: slot " + std::to_string(p) +
                          " size mismatch");
    auto w = params[p].data_mut();
    auto g = grads[p].data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace gear
