// SPDX-License-Identifier: Apache-2.0
#include "gear/metrics.hpp"

#include <string>

#include "gear/errors.hpp"

namespace gear::metrics {

namespace {

struct BinaryScore {
  double acc = 0.0;
  double weighted_f1 = 0.0;
};

double f1_component(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

// Classes are booleans: true = negative. Weighted F1 uses label support.
BinaryScore score(const std::vector<bool>& pred_neg,
                  const std::vector<bool>& label_neg) {
  std::size_t correct = 0;
  std::size_t tp_n = 0, fp_n = 0, fn_n = 0;  // negative as the positive class
  std::size_t tp_p = 0, fp_p = 0, fn_p = 0;  // the complement class
  for (std::size_t i = 0; i < pred_neg.size(); ++i) {
    const bool p = pred_neg[i], l = label_neg[i];
    if (p == l) ++correct;
    if (p && l) ++tp_n;
    if (p && !l) ++fp_n;
    if (!p && l) ++fn_n;
    if (!p && !l) ++tp_p;
    if (!p && l) ++fp_p;
    if (p && !l) ++fn_p;
  }
  const auto n = static_cast<double>(pred_neg.size());
  std::size_t support_n = 0;
  for (bool l : label_neg) support_n += l ? 1 : 0;
  const std::size_t support_p = pred_neg.size() - support_n;
  BinaryScore out;
  out.acc = 100.0 * static_cast<double>(correct) / n;
  out.weighted_f1 = 100.0 * (static_cast<double>(support_n) / n * f1_component(tp_n, fp_n, fn_n) +
                             static_cast<double>(support_p) / n * f1_component(tp_p, fp_p, fn_p));
  return out;
}

}  // namespace

SplitMetrics compute_metrics(const std::vector<double>& preds,
                             const std::vector<double>& labels) {
  if (preds.size() != labels.size())
    throw ContractError("compute_metrics: " + std::to_string(preds.size()) +
                        " predictions vs " + std::to_string(labels.size()) +
                        " labels");
  SplitMetrics out;
  out.n_total = preds.size();
  if (preds.empty())
    throw UndefinedMetricError("compute_metrics: empty sample set");

  std::vector<bool> pn, ln;
  pn.reserve(preds.size());
  ln.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pn.push_back(preds[i] < 0.0);
    ln.push_back(labels[i] < 0.0);
  }
  const BinaryScore nonneg = score(pn, ln);
  out.acc2_nonneg = nonneg.acc;
  out.f1_nonneg = nonneg.weighted_f1;

  pn.clear();
  ln.clear();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0.0) {
      ++out.n_excluded_zero;
      continue;
    }
    pn.push_back(preds[i] < 0.0);
    ln.push_back(labels[i] < 0.0);
  }
  if (pn.empty())
    throw UndefinedMetricError(
        "compute_metrics: no samples left after dropping zero labels");
  const BinaryScore pos = score(pn, ln);
  out.acc2_pos = pos.acc;
  out.f1_pos = pos.weighted_f1;
  return out;
}

}  // namespace gear::metrics
