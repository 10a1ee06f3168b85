// SPDX-License-Identifier: Apache-2.0
#include "gear/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gear/errors.hpp"

namespace gear::losses {

double mae(double y, double y_hat) { return std::fabs(y - y_hat); }

double gmae_from_error(double e) { return -2.0 * std::log1p(std::exp(-e)); }

double gmae(double y, double y_b) { return gmae_from_error(std::fabs(y - y_b)); }

double gmae_grad_weight(double e) {
  if (e < 0.0)
    throw ContractError("gmae_grad_weight: negative error " + std::to_string(e));
  // 2 * sigmoid(-e); exp(-e) <= 1 so this never overflows
  const double t = std::exp(-e);
  return 2.0 * t / (1.0 + t);
}

double bias_weight(const std::vector<double>& errs,
                   const BiasWeightStrategy& strategy) {
  if (errs.empty()) throw ContractError("bias_weight: no errors to aggregate");
  for (double e : errs)
    if (e < 0.0)
      throw ContractError("bias_weight: negative error " + std::to_string(e));
  double basis;
  if (strategy.kind == BiasWeightKind::Min) {
    basis = *std::min_element(errs.begin(), errs.end());
  } else {
    basis = 0.0;
    for (double e : errs) basis += e;
    basis /= static_cast<double>(errs.size());
  }
  return 1.0 / (basis + strategy.eps);
}

double bias_weight(const std::array<double, 3>& errs,
                   const BiasWeightStrategy& strategy) {
  return bias_weight(std::vector<double>(errs.begin(), errs.end()), strategy);
}

double ipw_factor(double psi, double err, double c) {
  if (c <= 0.0)
    throw ConfigError("ipw_factor: proportionality constant must be positive, got " +
                      std::to_string(c));
  return 1.0 / (c * psi * err + 1.0);
}

namespace {

Tensor label_tensor(const Tensor& pred, const std::vector<double>& labels,
                    const char* op) {
  if (pred.size() != labels.size())
    throw DimensionError(std::string(op) + ": " + std::to_string(pred.size()) +
                         " predictions vs " + std::to_string(labels.size()) +
                         " labels");
  return Tensor::from(pred.shape(), labels);
}

}  // namespace

Tensor mae_loss(const Tensor& pred, const std::vector<double>& labels) {
  return mean(gear::abs(sub(pred, label_tensor(pred, labels, "mae_loss"))));
}

Tensor gmae_error_graph(const Tensor& e) {
  return scale(softplus(scale(e, -1.0)), -2.0);
}

Tensor gmae_loss(const Tensor& pred, const std::vector<double>& labels) {
  Tensor e = gear::abs(sub(pred, label_tensor(pred, labels, "gmae_loss")));
  return mean(gmae_error_graph(e));
}

IpwLoss ipw_mae_loss(const Tensor& pred, const std::vector<double>& labels,
                     const std::vector<double>& psi, double c) {
  if (psi.size() != labels.size())
    throw DimensionError("ipw_mae_loss: " + std::to_string(psi.size()) +
                         " weights vs " + std::to_string(labels.size()) +
                         " labels");
  Tensor err = gear::abs(sub(pred, label_tensor(pred, labels, "ipw_mae_loss")));
  IpwLoss out;
  out.factors.reserve(psi.size());
  auto vals = err.data();
  for (std::size_t i = 0; i < psi.size(); ++i)
    out.factors.push_back(ipw_factor(psi[i], vals[i], c));
  // factors enter as constants, so the reweighting carries no gradient
  out.loss = mean(mul(err, Tensor::from(err.shape(), out.factors)));
  return out;
}

Tensor weighted_mae_loss(const Tensor& pred, const std::vector<double>& labels,
                         const std::vector<double>& weights) {
  if (weights.size() != labels.size())
    throw DimensionError("weighted_mae_loss: " + std::to_string(weights.size()) +
                         " weights vs " + std::to_string(labels.size()) +
                         " labels");
  Tensor err =
      gear::abs(sub(pred, label_tensor(pred, labels, "weighted_mae_loss")));
  return mean(mul(err, Tensor::from(err.shape(), weights)));
}

LossBreakdown total_loss(const Tensor& ipw,
                         const std::array<Tensor, 3>& gmae_terms,
                         const Tensor& ipw_hat,
                         const std::array<Tensor, 3>& gmae_hat_terms,
                         double lambda, double beta,
                         std::vector<double> bias_weights,
                         std::vector<double> ipw_factors) {
  LossBreakdown bd;
  bd.lambda = lambda;
  bd.beta = beta;
  bd.bias_weights = std::move(bias_weights);
  bd.ipw_factors = std::move(ipw_factors);
  bd.l_ipw = ipw.item();
  bd.lhat_ipw = ipw_hat.item();
  for (int m = 0; m < 3; ++m) {
    bd.l_gmae[m] = gmae_terms[m].item();
    bd.lhat_gmae[m] = gmae_hat_terms[m].item();
  }
  Tensor gsum = add(add(gmae_terms[0], gmae_terms[1]), gmae_terms[2]);
  Tensor gsum_hat = add(add(gmae_hat_terms[0], gmae_hat_terms[1]), gmae_hat_terms[2]);
  Tensor plain = add(ipw, scale(gsum, lambda));
  Tensor swapped = add(ipw_hat, scale(gsum_hat, lambda));
  bd.total_node = add(plain, scale(swapped, beta));
  bd.total = bd.total_node.item();
  return bd;
}

}  // namespace gear::losses
