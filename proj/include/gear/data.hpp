// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gear::data {

/// Ground truth planted by the synthetic generator; absent on real data.
struct RecordMeta {
  double latent = 0.0;                 // sentiment s before label noise
  std::array<int, 3> bias_sign{0, 0, 0};  // text, audio, video: +1 or -1
};

struct MultimodalRecord {
  std::string id;
  std::vector<int> text;                    // token ids
  std::vector<std::vector<double>> audio;   // l_a rows of width d_a
  std::vector<std::vector<double>> video;   // l_v rows of width d_v
  double label = 0.0;                       // in [-3, 3]
  std::optional<RecordMeta> meta;
};

struct DatasetManifest {
  std::string format = "gear-v1";
  std::string split;
  std::size_t vocab_size = 0;
  std::size_t d_a = 0;
  std::size_t d_v = 0;
  std::size_t max_text_len = 0;
  std::size_t max_audio_len = 0;
  std::size_t max_video_len = 0;
  std::size_t record_count = 0;
};

/// Controls for the synthetic biased generator. Every sample draws a latent
/// sentiment s ~ U[-3,3]; the label is s plus Gaussian noise, clamped. Robust
/// attributes encode s in all three modalities; each modality also carries a
/// bias attribute whose sign agrees with sign(s) with probability rho,
/// decided independently per modality.
struct SyntheticSpec {
  std::size_t n_train = 4000;
  std::size_t n_test = 1000;
  double rho = 0.9;
  double noise_sigma = 0.5;      // label noise
  double text_flip_prob = 0.1;   // chance the sentiment word is scrambled
  std::size_t d_a = 8;
  std::size_t d_v = 8;
  std::size_t len_text = 6;
  std::size_t len_audio = 4;
  std::size_t len_video = 4;
  std::size_t n_filler = 8;      // filler vocabulary size
  double robust_strength_audio = 0.4;
  double robust_strength_video = 0.4;
  double bias_strength_audio = 2.0;
  double bias_strength_video = 2.0;
  double feature_noise = 0.3;    // per-element Gaussian in audio/video rows
  std::uint64_t seed = 1;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;

  /// Token-id layout: 6 sentiment words (negative then positive, each in
  /// three |s| buckets), 2 bias words (negative, positive), then fillers.
  std::size_t vocab_size() const { return 8 + n_filler; }
  static constexpr int kBiasWordNeg = 6;
  static constexpr int kBiasWordPos = 7;
  static constexpr int kFirstFiller = 8;
};

struct SyntheticDataset {
  std::vector<MultimodalRecord> train;
  std::vector<MultimodalRecord> test;
  // unit robust/bias directions per modality, exposed for diagnostics
  std::vector<double> audio_robust_dir, audio_bias_dir;
  std::vector<double> video_robust_dir, video_bias_dir;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Builds the manifest for a record list (max lengths, count, dims).
DatasetManifest make_manifest(const std::string& split,
                              const std::vector<MultimodalRecord>& records,
                              std::size_t vocab_size, std::size_t d_a,
                              std::size_t d_v);

/// Writes dir/manifest.json and dir/<split>.jsonl; creates dir if needed.
void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<MultimodalRecord>& records);

/// Writes one record per line to path (no manifest); creates parent dirs.
void save_records_jsonl(const std::string& path,
                        const std::vector<MultimodalRecord>& records);

/// Reads dir/manifest.json, then the records file the manifest names.
/// Malformed JSON raises ParseError with the line number; records that
/// contradict the manifest raise IngestionError naming the record id.
std::pair<DatasetManifest, std::vector<MultimodalRecord>> load_dataset(
    const std::string& dir);

/// Index batches for one epoch: a seeded permutation when shuffling, file
/// order otherwise. The final short batch is kept. Reproducible per
/// (seed, epoch).
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch,
                                                    bool shuffle);

}  // namespace gear::data
