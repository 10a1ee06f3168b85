// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace gear::metrics {

/// Classification metrics for one prediction/label set, as percentages.
/// The nonneg pair classes every sample (negative vs the rest); the pos pair
/// first drops samples whose label is exactly 0.
struct SplitMetrics {
  double acc2_nonneg = 0.0;
  double f1_nonneg = 0.0;
  double acc2_pos = 0.0;
  double f1_pos = 0.0;
  std::size_t n_total = 0;
  std::size_t n_excluded_zero = 0;
};

/// Thresholds real-valued predictions at 0 (0.0 counts as the nonneg/pos
/// class, same rule as labels) and scores both two-class formulations with
/// accuracy and support-weighted F1. Throws ContractError on length mismatch
/// and UndefinedMetricError when a formulation has no samples left.
SplitMetrics compute_metrics(const std::vector<double>& preds,
                             const std::vector<double>& labels);

}  // namespace gear::metrics
