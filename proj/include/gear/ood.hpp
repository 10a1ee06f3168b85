// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "gear/data.hpp"

namespace gear::ood {

/// Binary sentiment categorization used for balancing: negative (label < 0)
/// versus nonnegative.
struct CategoryScheme {
  static constexpr std::size_t kCategories = 2;
  std::size_t of(double label) const { return label < 0.0 ? 0 : 1; }
};

struct ClusterModel {
  std::size_t k = 0;
  std::vector<std::vector<double>> centroids;  // k x d
  std::vector<std::size_t> assignments;        // one cluster id per record
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per assignment pass
};

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// assignment fixpoint or max_iters. A cluster that empties is reseeded to
/// the point farthest from its assigned centroid, so inertia still only
/// decreases. Throws ConfigError when n < k or k < 1, DimensionError on
/// ragged rows.
ClusterModel kmeans_fit(const std::vector<std::vector<double>>& features,
                        std::size_t k, std::size_t max_iters,
                        std::uint64_t seed);

/// Per cluster, keeps all records of the smaller category plus a seeded
/// uniform sample of the same size from the larger one; every cluster ends
/// with exactly equal category counts. Returns ascending record positions.
std::vector<std::size_t> balance_clusters(const ClusterModel& model,
                                          const std::vector<double>& labels,
                                          const CategoryScheme& scheme,
                                          std::uint64_t seed);

struct AnnealSchedule {
  double t0 = 1.0;
  double alpha = 0.999;        // geometric cooling per step
  std::size_t steps = 50000;
  double min_keep_fraction = 0.5;  // hard floor on the subset size
};

struct AnnealState {
  std::vector<bool> selected;
  double energy = 0.0;
  double temperature = 0.0;
  std::size_t step = 0;
  std::vector<bool> best_selected;
  double best_energy = 0.0;
};

struct AnnealResult {
  std::vector<std::size_t> kept;  // ascending positions of the best subset
  double initial_energy = 0.0;
  double best_energy = 0.0;
  AnnealState final_state;
};

/// Simulated annealing over record subsets. Energy is the L1 category
/// imbalance summed over attributes: E(S) = sum_w |count_neg(w, S) -
/// count_nonneg(w, S)| with multiset counts. Moves toggle one uniformly
/// chosen record; a move that would shrink the subset below the size floor
/// is rejected. Downhill and equal-energy moves are always accepted, uphill
/// ones with probability exp(-dE/T); T cools by alpha every step. Starts
/// from the full set and returns the best subset seen.
AnnealResult anneal_balance(const std::vector<std::vector<int>>& attributes,
                            const std::vector<double>& labels,
                            const CategoryScheme& scheme,
                            const AnnealSchedule& schedule,
                            std::uint64_t seed);

struct OodConfig {
  std::size_t kmeans_k = 100;
  std::size_t kmeans_iters = 50;
  AnnealSchedule schedule;
  std::uint64_t seed = 1;
  CategoryScheme scheme;

  void validate() const;  // throws ConfigError
};

// Attribute id spaces for the combined anneal: token ids stay below
// kAudioAttrBase; cluster ids are shifted into disjoint ranges.
inline constexpr int kAudioAttrBase = 1 << 20;
inline constexpr int kVideoAttrBase = 1 << 21;

struct OodSuite {
  std::vector<std::size_t> ood_text, ood_audio, ood_video, ood_tav;
  AnnealResult text_anneal, tav_anneal;
  ClusterModel audio_clusters, video_clusters;
};

/// The four OOD subsets of one IID test split: text by annealing word-type
/// multisets, audio and video by k-means plus per-cluster category
/// balancing of mean-pooled features, and the combined set by annealing the
/// union of word types and both modalities' cluster ids. Index lists refer
/// to positions in `iid`. An empty input yields four empty sets.
OodSuite build_ood_suite(const std::vector<data::MultimodalRecord>& iid,
                         const OodConfig& config);

}  // namespace gear::ood
