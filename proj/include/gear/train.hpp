// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gear/data.hpp"
#include "gear/losses.hpp"
#include "gear/model.hpp"

namespace gear::train {

/// One full training recipe. Ablation flags select the reduced variants:
/// use_ipw=false swaps the reweighted sentiment loss for plain MAE,
/// use_gmae=false trains bias heads with plain MAE, use_swap=false never
/// activates augmentation. modality_mask limits which bias heads train and
/// which errors feed the sample weights; at least one must stay on.
struct TrainConfig {
  model::ModelConfig model;
  std::size_t batch_size = 32;
  double lambda = 10.0;
  double beta = 0.3;
  std::size_t swap_epoch = 8;  // first 0-based epoch with swap active
  double lr = 1e-3;
  std::size_t max_epochs = 30;
  std::size_t patience = 8;
  losses::BiasWeightStrategy strategy;
  double ipw_c = 1.0;
  std::uint64_t seed = 1;
  bool use_ipw = true;
  bool use_gmae = true;
  bool use_swap = true;
  bool independent_swap = false;  // one permutation per modality instead of shared
  std::array<bool, 3> modality_mask{true, true, true};

  void validate() const;  // throws ConfigError
};

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;
  double l_ipw = 0.0;
  std::array<double, 3> l_gmae{};
  double lhat_ipw = 0.0;
  std::array<double, 3> lhat_gmae{};
  double val_acc = 0.0;  // neg/nonneg accuracy on the validation split
  double wall_seconds = 0.0;
  bool swap_active = false;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  bool stopped_early = false;
};

/// True when validation accuracy has not strictly improved for `patience`
/// consecutive epochs. Recomputes the best epoch from the history, so a flat
/// stretch counts from the first epoch that reached the plateau value.
bool early_stop_check(const TrainHistory& history, std::size_t patience);

/// Loss assembly for one forward pass: per-modality bias errors, sample
/// weights over the modality mask, the reweighted (or plain) sentiment term,
/// bias-head terms, and the beta-scaled swap branch sharing the plain
/// branch's sample factors and the original sentiment labels.
struct ObjectiveOptions {
  double lambda = 10.0;
  double beta = 0.3;
  bool swap_active = true;  // false zeroes the swap branch for this batch
  bool use_ipw = true;
  bool use_gmae = true;
  losses::BiasWeightStrategy strategy;
  double ipw_c = 1.0;
  std::array<bool, 3> modality_mask{true, true, true};
};

losses::LossBreakdown build_objective(const model::Forward& fw,
                                      const ObjectiveOptions& opt);

/// Per-batch hook for instrumentation and tests. The breakdown's graph node
/// must not be differentiated after the callback returns.
struct BatchEvent {
  std::size_t epoch = 0;
  std::size_t batch_index = 0;
  std::vector<std::size_t> indices;  // positions in the training split
  std::array<std::vector<std::size_t>, 3> swap_perm;
  bool swap_active = false;
  losses::LossBreakdown breakdown;
};
using BatchObserver = std::function<void(const BatchEvent&)>;

struct TrainResult {
  model::GearModel model;  // holds the best-validation parameters
  TrainHistory history;
};

/// Full loop: shuffled batches, swap activation at swap_epoch, Adam updates,
/// per-epoch validation, early stopping, best-checkpoint retention. When
/// checkpoint_path is nonempty the best parameters are also saved there.
/// Throws TrainingError (with the offending batch's record ids) if a loss
/// turns non-finite.
TrainResult train(const TrainConfig& config,
                  const std::vector<data::MultimodalRecord>& train_records,
                  const std::vector<data::MultimodalRecord>& val_records,
                  const BatchObserver& observer = {},
                  const std::string& checkpoint_path = "");

/// Deterministic predictions with swap disabled; chunked internally.
std::vector<double> evaluate_split(
    const model::GearModel& m,
    const std::vector<data::MultimodalRecord>& records);

/// Seeded carve-out of a validation set: returns (train part, val part).
/// The split permutes record positions, so both parts keep disjoint copies.
std::pair<std::vector<data::MultimodalRecord>, std::vector<data::MultimodalRecord>>
split_train_val(const std::vector<data::MultimodalRecord>& records,
                double val_fraction, std::uint64_t seed);

}  // namespace gear::train
