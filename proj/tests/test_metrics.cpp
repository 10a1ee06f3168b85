// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vector>

#include "gear/errors.hpp"
#include "gear/metrics.hpp"
#include "gear/rng.hpp"

using namespace gear;
using metrics::compute_metrics;

namespace {

// Independent confusion-matrix oracle, organized by explicit counts.
struct Oracle {
  double acc, f1;
};

Oracle oracle_binary(const std::vector<int>& pred, const std::vector<int>& label) {
  double correct = 0;
  double counts[2][2] = {{0, 0}, {0, 0}};  // [label][pred]
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == label[i]) correct += 1;
    counts[label[i]][pred[i]] += 1;
  }
  const double n = static_cast<double>(pred.size());
  double wf1 = 0;
  for (int c = 0; c < 2; ++c) {
    const double tp = counts[c][c];
    const double fp = counts[1 - c][c];
    const double fn = counts[c][1 - c];
    const double support = counts[c][0] + counts[c][1];
    const double f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    wf1 += support / n * f1;
  }
  return {100.0 * correct / n, 100.0 * wf1};
}

}  // namespace

TEST_CASE("hand-computed four-sample fixture") {
  auto m = compute_metrics({-1.0, 0.5, 0.0, 2.0}, {-2.0, 1.0, 0.0, -1.0});
  CHECK(m.acc2_nonneg == doctest::Approx(75.0).epsilon(1e-12));
  CHECK(m.acc2_pos == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(m.f1_nonneg == doctest::Approx(2200.0 / 30.0).epsilon(1e-12));
  CHECK(m.f1_pos == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(m.n_total == 4);
  CHECK(m.n_excluded_zero == 1);
}

TEST_CASE("perfect predictions score 100 everywhere") {
  std::vector<double> v{-2.0, -0.5, 0.25, 1.0, 3.0};
  auto m = compute_metrics(v, v);
  CHECK(m.acc2_nonneg == 100.0);
  CHECK(m.f1_nonneg == 100.0);
  CHECK(m.acc2_pos == 100.0);
  CHECK(m.f1_pos == 100.0);
  CHECK(m.n_excluded_zero == 0);
}

TEST_CASE("prediction 0.0 classes as nonneg and pos") {
  auto m = compute_metrics({0.0, 0.0}, {1.0, -1.0});
  CHECK(m.acc2_nonneg == 50.0);
  CHECK(m.acc2_pos == 50.0);
}

TEST_CASE("error handling") {
  CHECK_THROWS_AS(compute_metrics({1.0}, {1.0, 2.0}), ContractError);
  CHECK_THROWS_AS(compute_metrics({}, {}), UndefinedMetricError);
  // all labels zero: nonneg formulation would be fine, pos has nothing left
  CHECK_THROWS_AS(compute_metrics({1.0, -1.0}, {0.0, 0.0}), UndefinedMetricError);
}

TEST_CASE("matches a brute-force confusion-matrix oracle on random fixtures") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> preds, labels;
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(rng.uniform(-3.0, 3.0));
      // mix in exact zeros and exact ties
      const auto kind = rng.below(4);
      if (kind == 0)
        labels.push_back(0.0);
      else if (kind == 1)
        labels.push_back(preds[i]);
      else
        labels.push_back(rng.uniform(-3.0, 3.0));
    }

    std::vector<int> pn, ln, pp, lp;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pn.push_back(preds[i] < 0 ? 1 : 0);
      ln.push_back(labels[i] < 0 ? 1 : 0);
      if (labels[i] == 0.0) {
        ++zeros;
        continue;
      }
      pp.push_back(preds[i] < 0 ? 1 : 0);
      lp.push_back(labels[i] < 0 ? 1 : 0);
    }
    if (pp.empty()) {
      CHECK_THROWS_AS(compute_metrics(preds, labels), UndefinedMetricError);
      continue;
    }
    auto m = compute_metrics(preds, labels);
    auto on = oracle_binary(pn, ln);
    auto op = oracle_binary(pp, lp);
    CHECK(m.acc2_nonneg == doctest::Approx(on.acc).epsilon(1e-12));
    CHECK(m.f1_nonneg == doctest::Approx(on.f1).epsilon(1e-12));
    CHECK(m.acc2_pos == doctest::Approx(op.acc).epsilon(1e-12));
    CHECK(m.f1_pos == doctest::Approx(op.f1).epsilon(1e-12));
    CHECK(m.n_excluded_zero == zeros);
    CHECK(m.acc2_nonneg >= 0.0);
    CHECK(m.acc2_nonneg <= 100.0);
    CHECK(m.f1_nonneg >= 0.0);
    CHECK(m.f1_nonneg <= 100.0);
  }
}
