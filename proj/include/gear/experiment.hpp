// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gear/data.hpp"
#include "gear/metrics.hpp"
#include "gear/ood.hpp"
#include "gear/train.hpp"

namespace gear::experiment {

/// Report order of the evaluation splits: the untouched test set first,
/// then the four decorrelated subsets.
inline constexpr std::array<const char*, 5> kSplitNames = {
    "iid", "ood_text", "ood_audio", "ood_video", "ood_tav"};

struct ExperimentConfig {
  // Exactly one data source: the generator, or two saved dataset dirs.
  bool synthetic = true;
  data::SyntheticSpec synth;
  std::string train_dir;
  std::string test_dir;

  train::TrainConfig trainer;  // vocab/d_a/d_v/init_seed filled per run
  ood::OodConfig ood;
  std::vector<std::uint64_t> seeds{1};
  double val_fraction = 0.1;
  std::string out_dir = "out";

  void validate() const;  // throws ConfigError
};

/// Parses the experiment JSON. Unknown keys raise ConfigError so typos
/// cannot silently fall back to defaults; malformed JSON raises ParseError.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Canonical serialization of the config (architecture and recipe only, no
/// output paths), and the FNV-1a hash of it that reports carry.
std::string experiment_config_canonical(const ExperimentConfig& cfg);
std::string config_fingerprint(const ExperimentConfig& cfg);

/// Scores for one evaluation split. `defined` is false when the split was
/// empty (metrics are meaningless and reported as null).
struct SplitScores {
  std::string split;
  bool defined = false;
  metrics::SplitMetrics scores;
};

struct SeedResult {
  std::uint64_t seed = 0;
  train::TrainHistory history;
  std::vector<SplitScores> splits;  // kSplitNames order
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedResult> per_seed;
  std::vector<SplitScores> mean;  // percentage fields averaged over seeds
  ood::OodSuite suite;            // positions into the test split
  std::size_t test_size = 0;
};

/// Deterministic run report: identical configs and seeds reproduce it byte
/// for byte (no wall-clock content).
std::string report_json(const ExperimentResult& result);

/// Table mirroring the report: one row per seed plus the mean, and per
/// split a "nonneg/pos" accuracy pair and F1 pair, two decimals.
std::string report_csv(const ExperimentResult& result);

/// Per-epoch training curves including wall-clock timing; this is the only
/// run artifact that is not reproducible byte for byte.
std::string history_json(const ExperimentResult& result);

/// Mean agreement between each planted modality bias sign and the sign of
/// the latent sentiment; 1.0 when every bias attribute matches (rho = 1).
/// Records without generator metadata are skipped; returns -1 if none has.
double measured_bias_agreement(const std::vector<data::MultimodalRecord>& records);

/// Trains and scores every seed on data already in memory: one OOD suite is
/// built from the test split, then each seed trains a freshly initialized
/// model (weights, batch order, swap draws, and the train/validation split
/// all keyed by that seed) and is scored on the five splits. When out_dir is
/// nonempty, per-seed checkpoints land in out_dir/seed-<seed>/ckpt-best.bin.
ExperimentResult run_experiment_on(
    const ExperimentConfig& cfg,
    const std::vector<data::MultimodalRecord>& train_records,
    const std::vector<data::MultimodalRecord>& test_records,
    std::size_t vocab_size, std::size_t d_a, std::size_t d_v,
    const std::string& out_dir);

/// Full pipeline: acquire data (generate or load), run every seed, and
/// write report.json, report.csv, history.json, the OOD subset files, and
/// per-seed checkpoints under cfg.out_dir. Nothing is written until the
/// data source has loaded successfully.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes the four OOD subsets as jsonl plus one <name>.report.json audit
/// each (counts, kept fraction, anneal energies or per-cluster tallies).
void write_ood_outputs(const std::string& dir,
                       const std::vector<data::MultimodalRecord>& iid,
                       const ood::OodSuite& suite);

}  // namespace gear::experiment
