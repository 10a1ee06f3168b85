// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "gear/data.hpp"
#include "gear/errors.hpp"

using namespace gear;
using namespace gear::data;

namespace {

std::string temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("gear_data_test_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_train = 60;
  s.n_test = 20;
  s.seed = 7;
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d;
}

}  // namespace

TEST_CASE("spec validation") {
  SyntheticSpec s;
  s.rho = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.bias_strength_audio = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("generator is deterministic and well-formed") {
  auto spec = small_spec();
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  REQUIRE(a.train.size() == 60);
  REQUIRE(a.test.size() == 20);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].label == b.train[i].label);
    CHECK(a.train[i].text == b.train[i].text);
    CHECK(a.train[i].audio == b.train[i].audio);
    CHECK(a.train[i].video == b.train[i].video);
    REQUIRE(a.train[i].meta.has_value());
    CHECK(a.train[i].meta->bias_sign == b.train[i].meta->bias_sign);
    CHECK(a.train[i].label >= -3.0);
    CHECK(a.train[i].label <= 3.0);
    CHECK(a.train[i].text.size() == spec.len_text);
    CHECK(a.train[i].audio.size() == spec.len_audio);
    CHECK(a.train[i].audio[0].size() == spec.d_a);
  }
  // different seeds give different data
  spec.seed = 8;
  auto c = generate_synthetic(spec);
  CHECK(c.train[0].label != a.train[0].label);
}

TEST_CASE("robust and bias directions are orthonormal") {
  auto d = generate_synthetic(small_spec());
  CHECK(std::fabs(dot(d.audio_robust_dir, d.audio_robust_dir) - 1.0) < 1e-12);
  CHECK(std::fabs(dot(d.audio_bias_dir, d.audio_bias_dir) - 1.0) < 1e-12);
  CHECK(std::fabs(dot(d.audio_robust_dir, d.audio_bias_dir)) < 1e-12);
  CHECK(std::fabs(dot(d.video_robust_dir, d.video_bias_dir)) < 1e-12);
}

TEST_CASE("zero label noise passes the latent through exactly") {
  auto spec = small_spec();
  spec.noise_sigma = 0.0;
  auto d = generate_synthetic(spec);
  for (const auto& r : d.train) CHECK(r.label == r.meta->latent);
}

TEST_CASE("rho=1 with zero noise aligns every bias attribute with the label") {
  auto spec = small_spec();
  spec.n_train = 300;
  spec.rho = 1.0;
  spec.noise_sigma = 0.0;
  auto d = generate_synthetic(spec);
  for (const auto& r : d.train) {
    const int label_sign = r.label < 0.0 ? -1 : 1;
    for (int m = 0; m < 3; ++m) CHECK(r.meta->bias_sign[m] == label_sign);

    // the planted attributes are linearly recoverable: a probe on the bias
    // word / bias direction alone reproduces sign(Y) on every sample
    const bool has_pos = std::count(r.text.begin(), r.text.end(),
                                    SyntheticSpec::kBiasWordPos) > 0;
    CHECK((has_pos ? 1 : -1) == label_sign);
    std::vector<double> pooled(spec.d_a, 0.0);
    for (const auto& row : r.audio)
      for (std::size_t j = 0; j < spec.d_a; ++j) pooled[j] += row[j];
    CHECK((dot(pooled, d.audio_bias_dir) > 0.0 ? 1 : -1) == label_sign);
  }
}

TEST_CASE("rho=0.5 decouples bias from the label") {
  auto spec = small_spec();
  spec.n_train = 2000;
  spec.rho = 0.5;
  spec.seed = 12;
  auto d = generate_synthetic(spec);
  // 2x2 chi-square of bias sign vs label category, df=1; independence means
  // the statistic stays under the 0.01 critical value 6.635
  for (int m = 0; m < 3; ++m) {
    double n[2][2] = {{0, 0}, {0, 0}};
    for (const auto& r : d.train)
      n[r.meta->bias_sign[m] > 0 ? 1 : 0][r.label >= 0.0 ? 1 : 0] += 1.0;
    const double total = spec.n_train;
    double stat = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double row = n[i][0] + n[i][1];
        const double col = n[0][j] + n[1][j];
        const double expect = row * col / total;
        stat += (n[i][j] - expect) * (n[i][j] - expect) / expect;
      }
    CHECK(stat < 6.635);
  }
}

TEST_CASE("dataset round-trips through the on-disk format") {
  auto dir = temp_dir("roundtrip");
  auto spec = small_spec();
  auto d = generate_synthetic(spec);
  auto manifest = make_manifest("train", d.train, spec.vocab_size(), spec.d_a,
                                spec.d_v);
  save_dataset(dir, manifest, d.train);
  auto [m2, recs] = load_dataset(dir);
  CHECK(m2.split == "train");
  CHECK(m2.record_count == d.train.size());
  CHECK(m2.vocab_size == spec.vocab_size());
  REQUIRE(recs.size() == d.train.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].id == d.train[i].id);
    CHECK(recs[i].label == d.train[i].label);
    CHECK(recs[i].text == d.train[i].text);
    CHECK(recs[i].audio == d.train[i].audio);
    CHECK(recs[i].video == d.train[i].video);
    REQUIRE(recs[i].meta.has_value());
    CHECK(recs[i].meta->latent == d.train[i].meta->latent);
    CHECK(recs[i].meta->bias_sign == d.train[i].meta->bias_sign);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty dataset is valid") {
  auto dir = temp_dir("empty");
  DatasetManifest m;
  m.split = "test";
  m.vocab_size = 16;
  m.d_a = 8;
  m.d_v = 8;
  m.record_count = 0;
  save_dataset(dir, m, {});
  auto [m2, recs] = load_dataset(dir);
  CHECK(recs.empty());
  CHECK(m2.record_count == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed and contradictory files are rejected") {
  auto dir = temp_dir("bad");
  auto spec = small_spec();
  spec.n_train = 3;
  auto d = generate_synthetic(spec);
  auto manifest = make_manifest("train", d.train, spec.vocab_size(), spec.d_a,
                                spec.d_v);
  save_dataset(dir, manifest, d.train);

  SUBCASE("broken json line carries the line number") {
    std::ofstream app(dir + "/train.jsonl", std::ios::app);
    app << "{not json\n";
    app.close();
    try {
      load_dataset(dir);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }

  SUBCASE("audio width contradicting the manifest names the record") {
    auto bad = d.train;
    bad[1].audio[0].pop_back();
    save_dataset(dir, manifest, bad);
    try {
      load_dataset(dir);
      FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find(bad[1].id) != std::string::npos);
    }
  }

  SUBCASE("record count mismatch is caught") {
    std::ofstream app(dir + "/train.jsonl", std::ios::app);
    app << R"({"id":"x","text":[0],"audio":[],"video":[],"label":0.0})" << "\n";
    app.close();
    CHECK_THROWS_AS(load_dataset(dir), IngestionError);
  }

  SUBCASE("unknown format version") {
    std::ofstream mf(dir + "/manifest.json");
    mf << R"({"format":"gear-v0","split":"train"})";
    mf.close();
    CHECK_THROWS_AS(load_dataset(dir), IngestionError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("batching partitions the dataset") {
  auto check_partition = [](std::size_t count, std::size_t bs, bool shuffle) {
    auto batches = batch_indices(count, bs, 5, 2, shuffle);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& b : batches) {
      total += b.size();
      for (auto i : b) seen.insert(i);
      CHECK(b.size() <= bs);
    }
    CHECK(total == count);
    CHECK(seen.size() == count);
  };
  check_partition(10, 4, false);
  check_partition(10, 4, true);
  check_partition(32, 32, true);
  check_partition(0, 4, true);

  auto b = batch_indices(10, 4, 5, 0, false);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[2].size() == 2);
  CHECK(b[0][0] == 0);  // file order without shuffle
  CHECK(b[2][1] == 9);

  // reproducible per (seed, epoch); different across epochs
  CHECK(batch_indices(100, 16, 9, 3, true) == batch_indices(100, 16, 9, 3, true));
  CHECK(batch_indices(100, 16, 9, 3, true) != batch_indices(100, 16, 9, 4, true));
  CHECK_THROWS_AS(batch_indices(10, 0, 1, 0, false), ContractError);
}
