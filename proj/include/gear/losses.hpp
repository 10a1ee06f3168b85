// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "gear/tensor.hpp"

namespace gear::losses {

enum class BiasWeightKind { Min, Avg };

/// How per-modality bias-prediction errors collapse into one sample weight.
/// eps guards the division when every modality predicts perfectly.
struct BiasWeightStrategy {
  BiasWeightKind kind = BiasWeightKind::Min;
  double eps = 1e-3;
};

// --- scalar forms (no tape; used for weights and as test oracles) -----------

double mae(double y, double y_hat);

/// -2 ln(e^|y-y_b| + 1) + 2|y-y_b|, evaluated as -2 ln(1 + exp(-e)).
/// Negative everywhere, increasing in the error, tends to 0 from below.
double gmae(double y, double y_b);
double gmae_from_error(double e);

/// 2/(1+exp(e)): the factor by which this loss scales the MAE gradient.
/// Throws ContractError for negative e.
double gmae_grad_weight(double e);

/// Collapses the three per-modality errors |Y - Y_B^m| into psi.
/// Min: 1/(min + eps). Avg: 1/(mean + eps). Errors must be >= 0.
double bias_weight(const std::array<double, 3>& errs,
                   const BiasWeightStrategy& strategy);

/// Same collapse over any nonempty error subset (modality masking).
double bias_weight(const std::vector<double>& errs,
                   const BiasWeightStrategy& strategy);

/// 1/(c * psi * err + 1), always in (0, 1]. Throws ConfigError for c <= 0.
double ipw_factor(double psi, double err, double c);

// --- graph forms (mean-reduced over the batch) -------------------------------

/// mean_i |pred_i - label_i|
Tensor mae_loss(const Tensor& pred, const std::vector<double>& labels);

/// mean_i gmae(pred_i, label_i)
Tensor gmae_loss(const Tensor& pred, const std::vector<double>& labels);

/// Elementwise -2 ln(1 + exp(-e)) on a tensor of nonnegative errors, kept as
/// a graph op so the gradient identity against MAE can be checked directly.
Tensor gmae_error_graph(const Tensor& e);

struct IpwLoss {
  Tensor loss;                  // scalar graph node
  std::vector<double> factors;  // per-sample 1/(P+1), constants by design
};

/// mean_i factor_i * |pred_i - label_i|, with factor_i computed from the
/// detached error so no gradient flows through the weighting itself.
IpwLoss ipw_mae_loss(const Tensor& pred, const std::vector<double>& labels,
                     const std::vector<double>& psi, double c);

/// mean_i w_i * |pred_i - label_i| with caller-supplied constant weights.
/// The swap branch reuses the plain branch's factors through this.
Tensor weighted_mae_loss(const Tensor& pred, const std::vector<double>& labels,
                         const std::vector<double>& weights);

/// Every component of one training objective, as plain values, plus the graph
/// node the optimizer differentiates.
struct LossBreakdown {
  double l_ipw = 0.0;
  std::array<double, 3> l_gmae{};
  double lhat_ipw = 0.0;
  std::array<double, 3> lhat_gmae{};
  double lambda = 0.0;
  double beta = 0.0;
  double total = 0.0;
  std::vector<double> bias_weights;  // psi per sample
  std::vector<double> ipw_factors;   // shared by the plain and swap branches
  Tensor total_node;
};

/// total = ipw + lambda * sum_m gmae_m + beta * (ipw_hat + lambda * sum_m gmae_hat_m)
LossBreakdown total_loss(const Tensor& ipw,
                         const std::array<Tensor, 3>& gmae_terms,
                         const Tensor& ipw_hat,
                         const std::array<Tensor, 3>& gmae_hat_terms,
                         double lambda, double beta,
                         std::vector<double> bias_weights,
                         std::vector<double> ipw_factors);

}  // namespace gear::losses
