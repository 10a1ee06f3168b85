// SPDX-License-Identifier: Apache-2.0
#include "gear/ood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>

#include "gear/errors.hpp"
#include "gear/rng.hpp"

namespace gear::ood {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

ClusterModel kmeans_fit(const std::vector<std::vector<double>>& features,
                        std::size_t k, std::size_t max_iters,
                        std::uint64_t seed) {
  const std::size_t n = features.size();
  if (k < 1) throw ConfigError("kmeans_fit: k must be >= 1");
  if (n < k)
    throw ConfigError("kmeans_fit: " + std::to_string(n) + " points for k=" +
                      std::to_string(k));
  const std::size_t d = features[0].size();
  if (d < 1) throw DimensionError("kmeans_fit: zero-width features");
  for (const auto& row : features)
    if (row.size() != d)
      throw DimensionError("kmeans_fit: ragged feature rows");

  Rng rng(seed);
  ClusterModel model;
  model.k = k;

  // k-means++: first centroid uniform, the rest sampled proportional to the
  // squared distance to the nearest chosen centroid
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  model.centroids.push_back(features[rng.below(n)]);
  while (model.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(features[i], model.centroids.back()));
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      const double target = rng.uniform(0.0, total);
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);  // all points already covered exactly
    }
    model.centroids.push_back(features[pick]);
  }

  model.assignments.assign(n, 0);
  std::vector<std::size_t> prev(n, k);  // impossible id forces one pass
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // assign
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = sq_dist(features[i], model.centroids[c]);
        if (dist < best) {
          best = dist;
          arg = c;
        }
      }
      model.assignments[i] = arg;
      inertia += best;
    }
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);
    if (model.assignments == prev) break;
    prev = model.assignments;

    // update; an empty cluster grabs the farthest point instead
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[model.assignments[i]] += 1;
      for (std::size_t j = 0; j < d; ++j)
        sums[model.assignments[i]][j] += features[i][j];
    }
    std::set<std::size_t> taken;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j)
          model.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        continue;
      }
      double far_dist = -1.0;
      std::size_t far = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken.count(i)) continue;
        const double dist =
            sq_dist(features[i], model.centroids[model.assignments[i]]);
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      taken.insert(far);
      model.centroids[c] = features[far];
    }
  }
  return model;
}

std::vector<std::size_t> balance_clusters(const ClusterModel& model,
                                          const std::vector<double>& labels,
                                          const CategoryScheme& scheme,
                                          std::uint64_t seed) {
  if (labels.size() != model.assignments.size())
    throw ContractError("balance_clusters: " + std::to_string(labels.size()) +
                        " labels vs " + std::to_string(model.assignments.size()) +
                        " assignments");
  std::vector<std::array<std::vector<std::size_t>, CategoryScheme::kCategories>>
      groups(model.k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = model.assignments[i];
    if (c >= model.k)
      throw ContractError("balance_clusters: assignment out of range");
    groups[c][scheme.of(labels[i])].push_back(i);
  }

  Rng rng(seed);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < model.k; ++c) {
    std::size_t c_min = groups[c][0].size();
    for (const auto& g : groups[c]) c_min = std::min(c_min, g.size());
    for (auto& g : groups[c]) {
      if (g.size() == c_min) {
        kept.insert(kept.end(), g.begin(), g.end());
        continue;
      }
      auto order = rng.permutation(g.size());
      for (std::size_t j = 0; j < c_min; ++j) kept.push_back(g[order[j]]);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace {

void validate_schedule(const AnnealSchedule& s) {
  if (s.t0 <= 0.0) throw ConfigError("anneal: t0 must be positive");
  if (s.alpha <= 0.0 || s.alpha >= 1.0)
    throw ConfigError("anneal: alpha must be in (0, 1)");
  if (s.min_keep_fraction < 0.0 || s.min_keep_fraction > 1.0)
    throw ConfigError("anneal: size floor fraction must be in [0, 1]");
}

}  // namespace

AnnealResult anneal_balance(const std::vector<std::vector<int>>& attributes,
                            const std::vector<double>& labels,
                            const CategoryScheme& scheme,
                            const AnnealSchedule& schedule,
                            std::uint64_t seed) {
  validate_schedule(schedule);
  const std::size_t n = attributes.size();
  if (labels.size() != n)
    throw ContractError("anneal_balance: " + std::to_string(labels.size()) +
                        " labels vs " + std::to_string(n) + " attribute sets");
  AnnealResult result;
  if (n == 0) {
    result.final_state.temperature = schedule.t0;
    return result;
  }
  const auto floor_count = static_cast<std::size_t>(
      std::ceil(schedule.min_keep_fraction * static_cast<double>(n)));

  // collapse each record's attribute multiset to (attribute, multiplicity)
  std::vector<std::vector<std::pair<int, long>>> collapsed(n);
  std::vector<std::size_t> category(n);
  for (std::size_t i = 0; i < n; ++i) {
    category[i] = scheme.of(labels[i]);
    auto sorted = attributes[i];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j < sorted.size();) {
      std::size_t j2 = j;
      while (j2 < sorted.size() && sorted[j2] == sorted[j]) ++j2;
      collapsed[i].emplace_back(sorted[j], static_cast<long>(j2 - j));
      j = j2;
    }
  }

  // per-attribute category counts for the current subset (initially full)
  std::unordered_map<int, std::array<long, 2>> counts;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [attr, mult] : collapsed[i])
      counts[attr][category[i]] += mult;
  long energy = 0;
  for (const auto& [attr, c] : counts) energy += std::labs(c[0] - c[1]);

  AnnealState st;
  st.selected.assign(n, true);
  st.energy = static_cast<double>(energy);
  st.temperature = schedule.t0;
  st.best_selected = st.selected;
  st.best_energy = st.energy;
  result.initial_energy = st.energy;

  Rng rng(seed);
  std::size_t kept_count = n;
  long current = energy;
  long best = energy;

  for (std::size_t step = 0; step < schedule.steps; ++step) {
    const std::size_t i = rng.below(n);
    const bool removing = st.selected[i];
    if (!(removing && kept_count <= floor_count)) {
      const long sign = removing ? -1 : 1;
      long delta = 0;
      for (const auto& [attr, mult] : collapsed[i]) {
        auto& c = counts[attr];
        const long before = std::labs(c[0] - c[1]);
        long c0 = c[0], c1 = c[1];
        (category[i] == 0 ? c0 : c1) += sign * mult;
        delta += std::labs(c0 - c1) - before;
      }
      const bool accept =
          delta <= 0 ||
          rng.uniform() < std::exp(-static_cast<double>(delta) / st.temperature);
      if (accept) {
        for (const auto& [attr, mult] : collapsed[i])
          counts[attr][category[i]] += sign * mult;
        current += delta;
        st.selected[i] = !removing;
        if (removing)
          --kept_count;
        else
          ++kept_count;
        if (current < best) {
          best = current;
          st.best_selected = st.selected;
        }
      }
    }
    st.temperature *= schedule.alpha;
    st.step = step + 1;
  }

  st.energy = static_cast<double>(current);
  st.best_energy = static_cast<double>(best);
  result.best_energy = st.best_energy;
  for (std::size_t i = 0; i < n; ++i)
    if (st.best_selected[i]) result.kept.push_back(i);
  result.final_state = std::move(st);
  return result;
}

void OodConfig::validate() const {
  if (kmeans_k < 1) throw ConfigError("ood: kmeans_k must be >= 1");
  if (kmeans_iters < 1) throw ConfigError("ood: kmeans_iters must be >= 1");
  validate_schedule(schedule);
}

namespace {

std::vector<double> pooled(const std::vector<std::vector<double>>& rows,
                           std::size_t width) {
  std::vector<double> out(width, 0.0);
  if (rows.empty()) return out;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < width; ++j) out[j] += r[j];
  for (auto& v : out) v /= static_cast<double>(rows.size());
  return out;
}

std::vector<int> word_types(const std::vector<int>& tokens) {
  std::set<int> uniq(tokens.begin(), tokens.end());
  return {uniq.begin(), uniq.end()};
}

}  // namespace

OodSuite build_ood_suite(const std::vector<data::MultimodalRecord>& iid,
                         const OodConfig& config) {
  config.validate();
  OodSuite suite;
  if (iid.empty()) return suite;

  const std::size_t n = iid.size();
  std::vector<double> labels;
  labels.reserve(n);
  for (const auto& r : iid) labels.push_back(r.label);

  std::vector<std::vector<int>> text_attrs(n);
  for (std::size_t i = 0; i < n; ++i) text_attrs[i] = word_types(iid[i].text);

  const std::size_t d_a = iid[0].audio.empty() ? 0 : iid[0].audio[0].size();
  const std::size_t d_v = iid[0].video.empty() ? 0 : iid[0].video[0].size();
  std::vector<std::vector<double>> audio_feats(n), video_feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    audio_feats[i] = pooled(iid[i].audio, d_a);
    video_feats[i] = pooled(iid[i].video, d_v);
  }

  Rng root(config.seed);
  suite.text_anneal = anneal_balance(text_attrs, labels, config.scheme,
                                     config.schedule, root.fork(1).next_u64());
  suite.ood_text = suite.text_anneal.kept;

  suite.audio_clusters = kmeans_fit(audio_feats, config.kmeans_k,
                                    config.kmeans_iters, root.fork(2).next_u64());
  suite.ood_audio = balance_clusters(suite.audio_clusters, labels, config.scheme,
                                     root.fork(3).next_u64());

  suite.video_clusters = kmeans_fit(video_feats, config.kmeans_k,
                                    config.kmeans_iters, root.fork(4).next_u64());
  suite.ood_video = balance_clusters(suite.video_clusters, labels, config.scheme,
                                     root.fork(5).next_u64());

  std::vector<std::vector<int>> tav_attrs = text_attrs;
  for (std::size_t i = 0; i < n; ++i) {
    tav_attrs[i].push_back(kAudioAttrBase +
                           static_cast<int>(suite.audio_clusters.assignments[i]));
    tav_attrs[i].push_back(kVideoAttrBase +
                           static_cast<int>(suite.video_clusters.assignments[i]));
  }
  suite.tav_anneal = anneal_balance(tav_attrs, labels, config.scheme,
                                    config.schedule, root.fork(6).next_u64());
  suite.ood_tav = suite.tav_anneal.kept;
  return suite;
}

}  // namespace gear::ood
