// SPDX-License-Identifier: Apache-2.0
#include "gear/train.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "gear/adam.hpp"
#include "gear/errors.hpp"
#include "gear/metrics.hpp"
#include "gear/rng.hpp"

namespace gear::train {

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
  if (beta < 0.0) throw ConfigError("train: beta must be >= 0");
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (ipw_c <= 0.0) throw ConfigError("train: ipw_c must be positive");
  if (strategy.eps <= 0.0)
    throw ConfigError("train: bias-weight eps must be positive");
  if (!modality_mask[0] && !modality_mask[1] && !modality_mask[2])
    throw ConfigError("train: modality_mask must keep at least one modality");
}

bool early_stop_check(const TrainHistory& history, std::size_t patience) {
  if (history.epochs.empty())
    throw ContractError("early_stop_check: empty history");
  if (patience < 1) throw ContractError("early_stop_check: patience must be >= 1");
  std::size_t best = 0;
  double best_acc = history.epochs[0].val_acc;
  for (std::size_t i = 1; i < history.epochs.size(); ++i) {
    if (history.epochs[i].val_acc > best_acc) {
      best_acc = history.epochs[i].val_acc;
      best = i;
    }
  }
  return history.epochs.size() - 1 - best >= patience;
}

losses::LossBreakdown build_objective(const model::Forward& fw,
                                      const ObjectiveOptions& opt) {
  const std::size_t n = fw.labels.size();
  if (n == 0) throw ContractError("build_objective: empty forward batch");
  if (!opt.modality_mask[0] && !opt.modality_mask[1] && !opt.modality_mask[2])
    throw ContractError("build_objective: empty modality mask");

  // detached per-sample bias errors over the masked modalities -> psi
  std::vector<double> psi(n);
  std::vector<double> masked;
  for (std::size_t i = 0; i < n; ++i) {
    masked.clear();
    for (int m = 0; m < 3; ++m)
      if (opt.modality_mask[m])
        masked.push_back(losses::mae(fw.y_b[m].at(i, 0), fw.labels[i]));
    psi[i] = losses::bias_weight(masked, opt.strategy);
  }

  Tensor plain_ipw;
  std::vector<double> factors;
  if (opt.use_ipw) {
    auto ipw = losses::ipw_mae_loss(fw.y, fw.labels, psi, opt.ipw_c);
    plain_ipw = ipw.loss;
    factors = std::move(ipw.factors);
  } else {
    factors.assign(n, 1.0);
    plain_ipw = losses::mae_loss(fw.y, fw.labels);
  }
  // the swap branch keeps the plain branch's factors and the original labels
  Tensor hat_ipw = losses::weighted_mae_loss(fw.y_hat, fw.labels, factors);

  std::array<Tensor, 3> gmae_terms;
  std::array<Tensor, 3> gmae_hat_terms;
  for (int m = 0; m < 3; ++m) {
    if (!opt.modality_mask[m]) {
      gmae_terms[m] = Tensor::scalar(0.0);
      gmae_hat_terms[m] = Tensor::scalar(0.0);
      continue;
    }
    if (opt.use_gmae) {
      gmae_terms[m] = losses::gmae_loss(fw.y_b[m], fw.labels);
      gmae_hat_terms[m] = losses::gmae_loss(fw.y_b_hat[m], fw.labels_hat[m]);
    } else {
      gmae_terms[m] = losses::mae_loss(fw.y_b[m], fw.labels);
      gmae_hat_terms[m] = losses::mae_loss(fw.y_b_hat[m], fw.labels_hat[m]);
    }
  }

  const double beta = opt.swap_active ? opt.beta : 0.0;
  return losses::total_loss(plain_ipw, gmae_terms, hat_ipw, gmae_hat_terms,
                            opt.lambda, beta, std::move(psi),
                            std::move(factors));
}

std::vector<double> evaluate_split(
    const model::GearModel& m,
    const std::vector<data::MultimodalRecord>& records) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += kChunk) {
    const std::size_t stop = std::min(records.size(), start + kChunk);
    std::vector<const data::MultimodalRecord*> batch;
    batch.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&records[i]);
    for (double y : m.predict(batch)) out.push_back(y);
  }
  return out;
}

std::pair<std::vector<data::MultimodalRecord>, std::vector<data::MultimodalRecord>>
split_train_val(const std::vector<data::MultimodalRecord>& records,
                double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("split_train_val: fraction must be in [0, 1)");
  std::pair<std::vector<data::MultimodalRecord>, std::vector<data::MultimodalRecord>>
      out;
  if (records.empty()) return out;
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(records.size())));
  if (n_val == 0 && val_fraction > 0.0 && records.size() > 1) n_val = 1;
  Rng rng(seed);
  auto order = rng.permutation(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    (i < n_val ? out.second : out.first).push_back(records[order[i]]);
  }
  return out;
}

namespace {

std::string batch_diagnostic(const std::vector<const data::MultimodalRecord*>& batch,
                             std::size_t epoch, std::size_t batch_index) {
  std::string ids;
  for (std::size_t i = 0; i < batch.size() && i < 8; ++i) {
    if (!ids.empty()) ids += ", ";
    ids += batch[i]->id;
  }
  if (batch.size() > 8) ids += ", ...";
  return "epoch " + std::to_string(epoch) + " batch " +
         std::to_string(batch_index) + " [" + ids + "]";
}

}  // namespace

TrainResult train(const TrainConfig& config,
                  const std::vector<data::MultimodalRecord>& train_records,
                  const std::vector<data::MultimodalRecord>& val_records,
                  const BatchObserver& observer,
                  const std::string& checkpoint_path) {
  config.validate();
  if (train_records.empty()) throw ContractError("train: empty training split");
  if (val_records.empty()) throw ContractError("train: empty validation split");

  TrainResult result{model::GearModel(config.model), {}};
  model::GearModel& m = result.model;
  TrainHistory& history = result.history;

  Adam opt(AdamConfig{config.lr, 0.9, 0.999, 1e-8});
  std::vector<Tensor> param_view;  // shares buffers with the model
  for (auto& p : m.params_mut()) {
    opt.add_param(p.value);
    param_view.push_back(p.value);
  }

  std::vector<double> val_labels;
  val_labels.reserve(val_records.size());
  for (const auto& r : val_records) val_labels.push_back(r.label);

  ObjectiveOptions opts;
  opts.lambda = config.lambda;
  opts.beta = config.beta;
  opts.use_ipw = config.use_ipw;
  opts.use_gmae = config.use_gmae;
  opts.strategy = config.strategy;
  opts.ipw_c = config.ipw_c;
  opts.modality_mask = config.modality_mask;

  // stream 1 of the run seed drives swap permutations; batch order derives
  // its own stream inside batch_indices
  Rng swap_rng = Rng(config.seed).fork(1);
  std::vector<std::vector<double>> best_params;
  double best_acc = -1.0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool swap_active = config.use_swap && epoch >= config.swap_epoch;
    opts.swap_active = swap_active;

    EpochStats stats;
    stats.epoch = epoch;
    stats.swap_active = swap_active;

    const auto batches = data::batch_indices(
        train_records.size(), config.batch_size, config.seed, epoch, true);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      std::vector<const data::MultimodalRecord*> batch;
      batch.reserve(idx.size());
      for (auto i : idx) batch.push_back(&train_records[i]);

      std::array<std::vector<std::size_t>, 3> perms;
      if (config.independent_swap) {
        for (int mm = 0; mm < 3; ++mm)
          perms[mm] = model::swap_permutation(batch.size(), swap_rng, swap_active);
      } else {
        perms[0] = model::swap_permutation(batch.size(), swap_rng, swap_active);
        perms[1] = perms[0];
        perms[2] = perms[0];
      }

      Tape tape;
      auto fw = m.forward(&tape, batch, perms);
      auto bd = build_objective(fw, opts);
      if (!std::isfinite(bd.total))
        throw TrainingError("train: non-finite loss at " +
                            batch_diagnostic(batch, epoch, bi));
      tape.backward(bd.total_node);

      std::vector<Tensor> grads;
      grads.reserve(param_view.size());
      for (const auto& leaf : fw.param_leaves)
        grads.push_back(tape.grad_or_zeros(leaf));
      opt.step(param_view, grads);

      stats.total += bd.total;
      stats.l_ipw += bd.l_ipw;
      stats.lhat_ipw += bd.lhat_ipw;
      for (int mm = 0; mm < 3; ++mm) {
        stats.l_gmae[mm] += bd.l_gmae[mm];
        stats.lhat_gmae[mm] += bd.lhat_gmae[mm];
      }

      if (observer) {
        BatchEvent ev;
        ev.epoch = epoch;
        ev.batch_index = bi;
        ev.indices = idx;
        ev.swap_perm = perms;
        ev.swap_active = swap_active;
        ev.breakdown = bd;
        observer(ev);
      }
    }

    const auto nb = static_cast<double>(batches.size());
    stats.total /= nb;
    stats.l_ipw /= nb;
    stats.lhat_ipw /= nb;
    for (int mm = 0; mm < 3; ++mm) {
      stats.l_gmae[mm] /= nb;
      stats.lhat_gmae[mm] /= nb;
    }

    const auto preds = evaluate_split(m, val_records);
    stats.val_acc = metrics::compute_metrics(preds, val_labels).acc2_nonneg;
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    history.epochs.push_back(stats);

    if (stats.val_acc > best_acc) {
      best_acc = stats.val_acc;
      history.best_epoch = epoch;
      history.best_val_acc = best_acc;
      best_params.clear();
      for (const auto& p : m.params()) {
        auto d = p.value.data();
        best_params.emplace_back(d.begin(), d.end());
      }
      if (!checkpoint_path.empty()) model::save_checkpoint(checkpoint_path, m);
    }

    if (early_stop_check(history, config.patience)) {
      history.stopped_early = true;
      break;
    }
  }

  // leave the model at its best-validation parameters
  auto& params = m.params_mut();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].value.data_mut();
    std::copy(best_params[i].begin(), best_params[i].end(), dst.begin());
  }
  return result;
}

}  // namespace gear::train
