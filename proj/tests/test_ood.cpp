// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "gear/data.hpp"
#include "gear/errors.hpp"
#include "gear/ood.hpp"
#include "gear/rng.hpp"

using namespace gear;
using namespace gear::ood;

namespace {

// Brute-force energy of one subset, recomputed from scratch.
long subset_energy(const std::vector<std::vector<int>>& attrs,
                   const std::vector<double>& labels,
                   const std::vector<bool>& sel) {
  std::map<int, std::array<long, 2>> counts;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (!sel[i]) continue;
    for (int a : attrs[i]) counts[a][labels[i] < 0 ? 0 : 1] += 1;
  }
  long e = 0;
  for (const auto& [a, c] : counts) e += std::labs(c[0] - c[1]);
  return e;
}

// Exhaustive optimum over all subsets at or above the size floor.
long brute_force_best(const std::vector<std::vector<int>>& attrs,
                      const std::vector<double>& labels,
                      std::size_t floor_count) {
  const std::size_t n = attrs.size();
  long best = std::numeric_limits<long>::max();
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<bool> sel(n);
    std::size_t size = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sel[i] = (mask >> i) & 1;
      size += sel[i] ? 1 : 0;
    }
    if (size < floor_count) continue;
    best = std::min(best, subset_energy(attrs, labels, sel));
  }
  return best;
}

std::vector<std::vector<double>> blob_data(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 12; ++i)
    pts.push_back({10.0 + rng.normal(0.0, 0.5), rng.normal(0.0, 0.5)});
  for (int i = 0; i < 12; ++i)
    pts.push_back({-10.0 + rng.normal(0.0, 0.5), rng.normal(0.0, 0.5)});
  return pts;
}

}  // namespace

TEST_CASE("k=1 recovers the global mean and total squared deviation") {
  std::vector<std::vector<double>> pts{{1.0, 0.0}, {3.0, 2.0}, {5.0, 4.0}};
  auto m = kmeans_fit(pts, 1, 20, 3);
  REQUIRE(m.centroids.size() == 1);
  CHECK(m.centroids[0][0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m.centroids[0][1] == doctest::Approx(2.0).epsilon(1e-12));
  // squared deviations: (4+4) + (0+0) + (4+4)
  CHECK(m.inertia == doctest::Approx(16.0).epsilon(1e-12));
  for (auto a : m.assignments) CHECK(a == 0);
}

TEST_CASE("two separated blobs split cleanly at k=2") {
  auto pts = blob_data(17);
  auto m = kmeans_fit(pts, 2, 50, 5);
  // all of the first 12 share one id, all of the rest share the other
  for (std::size_t i = 1; i < 12; ++i) CHECK(m.assignments[i] == m.assignments[0]);
  for (std::size_t i = 13; i < 24; ++i)
    CHECK(m.assignments[i] == m.assignments[12]);
  CHECK(m.assignments[0] != m.assignments[12]);
}

TEST_CASE("lloyd iterations keep every invariant on random data") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> pts;
    const std::size_t n = 20 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i)
      pts.push_back({rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                     rng.uniform(-5.0, 5.0)});
    auto m = kmeans_fit(pts, 4, 40, rng.next_u64());

    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-9);

    std::set<std::size_t> used;
    for (std::size_t i = 0; i < n; ++i) {
      used.insert(m.assignments[i]);
      double assigned = 0.0, best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < 4; ++c) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          const double d = pts[i][j] - m.centroids[c][j];
          d2 += d * d;
        }
        if (c == m.assignments[i]) assigned = d2;
        best = std::min(best, d2);
      }
      CHECK(assigned == doctest::Approx(best).epsilon(1e-12));
    }
    CHECK(used.size() == 4);  // reseeding keeps clusters populated
  }
}

TEST_CASE("kmeans input validation") {
  std::vector<std::vector<double>> pts{{1.0}, {2.0}};
  CHECK_THROWS_AS(kmeans_fit(pts, 3, 10, 1), ConfigError);
  CHECK_THROWS_AS(kmeans_fit(pts, 0, 10, 1), ConfigError);
  CHECK_THROWS_AS(kmeans_fit({}, 1, 10, 1), ConfigError);
  std::vector<std::vector<double>> ragged{{1.0, 2.0}, {3.0}};
  CHECK_THROWS_AS(kmeans_fit(ragged, 1, 10, 1), DimensionError);
}

TEST_CASE("cluster balancing keeps equal category counts") {
  // cluster 0: 4 nonneg, 6 neg; cluster 1: 0 nonneg, 5 neg; cluster 2: 3 and 3
  ClusterModel m;
  m.k = 3;
  std::vector<double> labels;
  for (int i = 0; i < 4; ++i) {
    m.assignments.push_back(0);
    labels.push_back(1.0);
  }
  for (int i = 0; i < 6; ++i) {
    m.assignments.push_back(0);
    labels.push_back(-1.0);
  }
  for (int i = 0; i < 5; ++i) {
    m.assignments.push_back(1);
    labels.push_back(-2.0);
  }
  for (int i = 0; i < 3; ++i) {
    m.assignments.push_back(2);
    labels.push_back(0.0);  // zero label counts as nonnegative
  }
  for (int i = 0; i < 3; ++i) {
    m.assignments.push_back(2);
    labels.push_back(-0.5);
  }

  CategoryScheme scheme;
  auto kept = balance_clusters(m, labels, scheme, 11);
  CHECK(std::is_sorted(kept.begin(), kept.end()));

  std::array<std::array<int, 2>, 3> counts{};
  for (auto i : kept) counts[m.assignments[i]][labels[i] < 0 ? 0 : 1] += 1;
  CHECK(counts[0][0] == 4);  // 4 of the 6 negatives survive
  CHECK(counts[0][1] == 4);
  CHECK(counts[1][0] == 0);  // no nonneg partner, the cluster empties
  CHECK(counts[1][1] == 0);
  CHECK(counts[2][0] == 3);  // already balanced, all kept
  CHECK(counts[2][1] == 3);
  CHECK(kept.size() == 14);

  // all four nonnegative records of cluster 0 must be present
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::find(kept.begin(), kept.end(), i) != kept.end());

  // the negative sample is seeded
  auto again = balance_clusters(m, labels, scheme, 11);
  CHECK(again == kept);
  bool any_diff = false;
  for (std::uint64_t s = 12; s < 20 && !any_diff; ++s)
    any_diff = balance_clusters(m, labels, scheme, s) != kept;
  CHECK(any_diff);

  CHECK_THROWS_AS(balance_clusters(m, {1.0}, scheme, 1), ContractError);
}

TEST_CASE("anneal on already balanced attributes returns the full set") {
  // every word appears once per category
  std::vector<std::vector<int>> attrs{{1, 2}, {1, 2}, {3}, {3}};
  std::vector<double> labels{-1.0, 1.0, -0.5, 0.5};
  AnnealSchedule sched;
  sched.steps = 2000;
  auto r = anneal_balance(attrs, labels, CategoryScheme{}, sched, 9);
  CHECK(r.initial_energy == 0.0);
  CHECK(r.best_energy == 0.0);
  CHECK(r.kept.size() == 4);
}

TEST_CASE("anneal drops a same-category pair when the floor allows") {
  std::vector<std::vector<int>> attrs{{7}, {7}};
  std::vector<double> labels{-1.0, -2.0};
  AnnealSchedule sched;
  sched.steps = 2000;
  sched.min_keep_fraction = 0.0;
  auto r = anneal_balance(attrs, labels, CategoryScheme{}, sched, 13);
  CHECK(r.initial_energy == 2.0);
  CHECK(r.best_energy == 0.0);  // exhaustive: only the empty set reaches 0
  CHECK(r.kept.empty());

  // with the default 50% floor the best reachable energy is 1
  AnnealSchedule floored;
  floored.steps = 2000;
  auto r2 = anneal_balance(attrs, labels, CategoryScheme{}, floored, 13);
  CHECK(r2.best_energy == 1.0);
  CHECK(r2.kept.size() == 1);
}

TEST_CASE("anneal state bookkeeping and validation") {
  std::vector<std::vector<int>> attrs{{1}, {1, 2}, {2, 3}, {3}};
  std::vector<double> labels{-1.0, 1.0, -1.0, 1.0};
  AnnealSchedule sched;
  sched.steps = 500;
  auto r = anneal_balance(attrs, labels, CategoryScheme{}, sched, 21);
  CHECK(r.best_energy <= r.initial_energy);
  CHECK(r.best_energy <= r.final_state.energy);
  CHECK(r.final_state.step == 500);
  CHECK(r.final_state.temperature ==
        doctest::Approx(std::pow(0.999, 500)).epsilon(1e-9));
  CHECK(r.best_energy ==
        static_cast<double>(subset_energy(attrs, labels, r.final_state.best_selected)));

  auto empty = anneal_balance({}, {}, CategoryScheme{}, sched, 1);
  CHECK(empty.kept.empty());
  CHECK(empty.initial_energy == 0.0);

  AnnealSchedule bad;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(anneal_balance(attrs, labels, CategoryScheme{}, bad, 1),
                  ConfigError);
  bad = AnnealSchedule{};
  bad.t0 = 0.0;
  CHECK_THROWS_AS(anneal_balance(attrs, labels, CategoryScheme{}, bad, 1),
                  ConfigError);
  bad = AnnealSchedule{};
  bad.min_keep_fraction = 1.5;
  CHECK_THROWS_AS(anneal_balance(attrs, labels, CategoryScheme{}, bad, 1),
                  ConfigError);
  CHECK_THROWS_AS(
      anneal_balance(attrs, {1.0}, CategoryScheme{}, AnnealSchedule{}, 1),
      ContractError);
}

TEST_CASE("anneal finds the exhaustive optimum on a 12-record fixture") {
  // fixed fixture: word pool of 5, one to three words per record
  Rng fix(7);
  std::vector<std::vector<int>> attrs;
  std::vector<double> labels;
  for (int i = 0; i < 12; ++i) {
    std::vector<int> a;
    const std::size_t cnt = 1 + fix.below(3);
    for (std::size_t j = 0; j < cnt; ++j) a.push_back(static_cast<int>(fix.below(5)));
    attrs.push_back(a);
    labels.push_back(fix.uniform(-2.0, 2.0));
  }
  AnnealSchedule sched;
  sched.steps = 10000;
  const std::size_t floor_count = 6;  // ceil(0.5 * 12)
  const long optimum = brute_force_best(attrs, labels, floor_count);

  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto r = anneal_balance(attrs, labels, CategoryScheme{}, sched, seed);
    REQUIRE(r.kept.size() >= floor_count);
    CHECK(r.best_energy >= static_cast<double>(optimum));
    if (r.best_energy == static_cast<double>(optimum)) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("ood suite on synthetic data") {
  data::SyntheticSpec spec;
  spec.n_train = 1;
  spec.n_test = 300;
  spec.rho = 0.5;
  spec.seed = 77;
  auto ds = data::generate_synthetic(spec);
  const auto& iid = ds.test;

  OodConfig cfg;
  cfg.kmeans_k = 6;
  cfg.schedule.steps = 8000;
  cfg.seed = 3;
  auto suite = build_ood_suite(iid, cfg);

  // every set is a strict subset by construction: sorted unique positions
  for (const auto* s : {&suite.ood_text, &suite.ood_audio, &suite.ood_video,
                        &suite.ood_tav}) {
    CHECK(!s->empty());
    CHECK(std::is_sorted(s->begin(), s->end()));
    CHECK(std::adjacent_find(s->begin(), s->end()) == s->end());
    CHECK(s->back() < iid.size());
  }

  // audio/video: per-cluster category counts exactly equal after balancing
  for (const auto& [clusters, kept] :
       {std::pair{&suite.audio_clusters, &suite.ood_audio},
        std::pair{&suite.video_clusters, &suite.ood_video}}) {
    std::map<std::size_t, std::array<long, 2>> counts;
    for (auto i : *kept)
      counts[clusters->assignments[i]][iid[i].label < 0 ? 0 : 1] += 1;
    for (const auto& [c, cc] : counts) CHECK(cc[0] == cc[1]);
  }

  // anneal audits: balancing never worsens the full-set energy
  CHECK(suite.text_anneal.best_energy <= suite.text_anneal.initial_energy);
  CHECK(suite.tav_anneal.best_energy <= suite.tav_anneal.initial_energy);
  CHECK(suite.ood_text.size() >= 150);  // floor at 50% of 300

  // determinism
  auto again = build_ood_suite(iid, cfg);
  CHECK(again.ood_text == suite.ood_text);
  CHECK(again.ood_audio == suite.ood_audio);
  CHECK(again.ood_video == suite.ood_video);
  CHECK(again.ood_tav == suite.ood_tav);

  // Features with no label-correlated structure cluster into category-
  // balanced groups, so balancing keeps nearly everything. (Any sentiment
  // component in the features lets k-means isolate it and lowers the kept
  // fraction; text always anneals toward the floor because its sentiment
  // words are category-pure by construction.)
  data::SyntheticSpec big = spec;
  big.n_test = 1000;
  big.robust_strength_audio = 0.0;
  big.robust_strength_video = 0.0;
  auto ds2 = data::generate_synthetic(big);
  OodConfig cfg2;
  cfg2.kmeans_k = 10;
  cfg2.schedule.steps = 20000;
  auto suite2 = build_ood_suite(ds2.test, cfg2);
  CHECK(static_cast<double>(suite2.ood_audio.size()) / 1000.0 > 0.9);
  CHECK(static_cast<double>(suite2.ood_video.size()) / 1000.0 > 0.9);
  CHECK(suite2.ood_text.size() >= 500);
  CHECK(suite2.ood_text.size() < 600);

  // empty input: empty outputs, zero-energy audits
  auto none = build_ood_suite({}, cfg);
  CHECK(none.ood_text.empty());
  CHECK(none.ood_audio.empty());
  CHECK(none.ood_video.empty());
  CHECK(none.ood_tav.empty());
  CHECK(none.text_anneal.initial_energy == 0.0);
}

TEST_CASE("fully biased data empties the cluster-balanced sets") {
  // at rho=1 the bias component separates the two categories, clusters are
  // category-pure, and the per-cluster minority is empty
  data::SyntheticSpec spec;
  spec.n_train = 1;
  spec.n_test = 200;
  spec.rho = 1.0;
  spec.noise_sigma = 0.0;
  spec.seed = 78;
  auto ds = data::generate_synthetic(spec);

  OodConfig cfg;
  cfg.kmeans_k = 8;
  cfg.schedule.steps = 5000;
  auto suite = build_ood_suite(ds.test, cfg);
  const double kept_audio =
      static_cast<double>(suite.ood_audio.size()) / 200.0;
  CHECK(kept_audio < 0.25);
}
