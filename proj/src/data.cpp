// SPDX-License-Identifier: Apache-2.0
#include "gear/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gear/errors.hpp"
#include "gear/rng.hpp"

namespace gear::data {

using nlohmann::ordered_json;

void SyntheticSpec::validate() const {
  if (rho < 0.0 || rho > 1.0)
    throw ConfigError("synthetic: rho must lie in [0,1], got " + std::to_string(rho));
  if (noise_sigma < 0.0 || feature_noise < 0.0)
    throw ConfigError("synthetic: noise levels must be >= 0");
  if (text_flip_prob < 0.0 || text_flip_prob > 1.0)
    throw ConfigError("synthetic: text_flip_prob must lie in [0,1]");
  if (robust_strength_audio < 0.0 || robust_strength_video < 0.0 ||
      bias_strength_audio < 0.0 || bias_strength_video < 0.0)
    throw ConfigError("synthetic: signal strengths must be >= 0");
  if (d_a < 2 || d_v < 2)
    throw ConfigError("synthetic: d_a and d_v must be >= 2 to hold two directions");
  if (len_text < 2 || len_audio < 1 || len_video < 1)
    throw ConfigError("synthetic: sequence lengths too small");
  if (n_filler < 1) throw ConfigError("synthetic: need at least one filler word");
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// Second direction orthogonal to `first`, so the bias axis never aliases the
// robust axis.
std::vector<double> random_unit_orthogonal(Rng& rng, const std::vector<double>& first) {
  const std::size_t d = first.size();
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    v = random_unit(rng, d);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += v[i] * first[i];
    norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      v[i] -= dot * first[i];
      norm += v[i] * v[i];
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

int sentiment_word(double s) {
  const double m = std::fabs(s);
  const int bucket = m < 1.0 ? 0 : (m < 2.0 ? 1 : 2);
  return (s < 0.0 ? 0 : 3) + bucket;
}

std::vector<std::vector<double>> modality_rows(Rng& rng, std::size_t len,
                                               std::size_t d, double robust_coef,
                                               double bias_coef,
                                               const std::vector<double>& rdir,
                                               const std::vector<double>& bdir,
                                               double noise) {
  std::vector<std::vector<double>> rows(len, std::vector<double>(d));
  for (auto& row : rows)
    for (std::size_t j = 0; j < d; ++j)
      row[j] = robust_coef * rdir[j] + bias_coef * bdir[j] + noise * rng.normal();
  return rows;
}

MultimodalRecord make_record(const SyntheticSpec& spec, Rng& rng,
                             const SyntheticDataset& dirs, const std::string& id) {
  MultimodalRecord rec;
  rec.id = id;

  const double s = rng.uniform(-3.0, 3.0);
  double y = s + (spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0);
  rec.label = std::clamp(y, -3.0, 3.0);

  RecordMeta meta;
  meta.latent = s;
  const int true_sign = s < 0.0 ? -1 : 1;
  for (int m = 0; m < 3; ++m)
    meta.bias_sign[m] = rng.uniform() < spec.rho ? true_sign : -true_sign;
  rec.meta = meta;

  // text: one sentiment word (sometimes scrambled), one bias word, fillers
  int sword = sentiment_word(s);
  if (spec.text_flip_prob > 0.0 && rng.uniform() < spec.text_flip_prob)
    sword = static_cast<int>(rng.below(6));
  const int bword = meta.bias_sign[0] > 0 ? SyntheticSpec::kBiasWordPos
                                          : SyntheticSpec::kBiasWordNeg;
  std::vector<int> tokens{sword, bword};
  while (tokens.size() < spec.len_text)
    tokens.push_back(SyntheticSpec::kFirstFiller +
                     static_cast<int>(rng.below(spec.n_filler)));
  auto perm = rng.permutation(tokens.size());
  rec.text.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) rec.text[i] = tokens[perm[i]];

  rec.audio = modality_rows(rng, spec.len_audio, spec.d_a,
                            spec.robust_strength_audio * (s / 3.0),
                            spec.bias_strength_audio * meta.bias_sign[1],
                            dirs.audio_robust_dir, dirs.audio_bias_dir,
                            spec.feature_noise);
  rec.video = modality_rows(rng, spec.len_video, spec.d_v,
                            spec.robust_strength_video * (s / 3.0),
                            spec.bias_strength_video * meta.bias_sign[2],
                            dirs.video_robust_dir, dirs.video_bias_dir,
                            spec.feature_noise);
  return rec;
}

std::string zero_pad(std::size_t n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  SyntheticDataset out;

  Rng dir_rng = root.fork(3);
  out.audio_robust_dir = random_unit(dir_rng, spec.d_a);
  out.audio_bias_dir = random_unit_orthogonal(dir_rng, out.audio_robust_dir);
  out.video_robust_dir = random_unit(dir_rng, spec.d_v);
  out.video_bias_dir = random_unit_orthogonal(dir_rng, out.video_robust_dir);

  Rng train_rng = root.fork(1);
  out.train.reserve(spec.n_train);
  for (std::size_t i = 0; i < spec.n_train; ++i)
    out.train.push_back(make_record(spec, train_rng, out, "train-" + zero_pad(i, 6)));

  Rng test_rng = root.fork(2);
  out.test.reserve(spec.n_test);
  for (std::size_t i = 0; i < spec.n_test; ++i)
    out.test.push_back(make_record(spec, test_rng, out, "test-" + zero_pad(i, 6)));

  return out;
}

DatasetManifest make_manifest(const std::string& split,
                              const std::vector<MultimodalRecord>& records,
                              std::size_t vocab_size, std::size_t d_a,
                              std::size_t d_v) {
  DatasetManifest m;
  m.split = split;
  m.vocab_size = vocab_size;
  m.d_a = d_a;
  m.d_v = d_v;
  m.record_count = records.size();
  for (const auto& r : records) {
    m.max_text_len = std::max(m.max_text_len, r.text.size());
    m.max_audio_len = std::max(m.max_audio_len, r.audio.size());
    m.max_video_len = std::max(m.max_video_len, r.video.size());
  }
  return m;
}

namespace {

ordered_json record_to_json(const MultimodalRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["audio"] = r.audio;
  j["video"] = r.video;
  j["label"] = r.label;
  if (r.meta) {
    j["meta"] = {{"latent", r.meta->latent}, {"bias_sign", r.meta->bias_sign}};
  }
  return j;
}

MultimodalRecord record_from_json(const nlohmann::json& j) {
  MultimodalRecord r;
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::vector<int>>();
  r.audio = j.at("audio").get<std::vector<std::vector<double>>>();
  r.video = j.at("video").get<std::vector<std::vector<double>>>();
  r.label = j.at("label").get<double>();
  if (j.contains("meta")) {
    RecordMeta m;
    m.latent = j["meta"].at("latent").get<double>();
    auto bs = j["meta"].at("bias_sign").get<std::vector<int>>();
    if (bs.size() != 3)
      throw IngestionError("record " + r.id + ": bias_sign must have 3 entries");
    std::copy(bs.begin(), bs.end(), m.bias_sign.begin());
    r.meta = m;
  }
  return r;
}

void check_record(const MultimodalRecord& r, const DatasetManifest& m) {
  if (r.label < -3.0 || r.label > 3.0)
    throw IngestionError("record " + r.id + ": label " + std::to_string(r.label) +
                         " outside [-3, 3]");
  for (int t : r.text)
    if (t < 0 || static_cast<std::size_t>(t) >= m.vocab_size)
      throw IngestionError("record " + r.id + ": token id " + std::to_string(t) +
                           " outside vocab of " + std::to_string(m.vocab_size));
  for (const auto& row : r.audio)
    if (row.size() != m.d_a)
      throw IngestionError("record " + r.id + ": audio row width " +
                           std::to_string(row.size()) + " vs manifest d_a " +
                           std::to_string(m.d_a));
  for (const auto& row : r.video)
    if (row.size() != m.d_v)
      throw IngestionError("record " + r.id + ": video row width " +
                           std::to_string(row.size()) + " vs manifest d_v " +
                           std::to_string(m.d_v));
}

}  // namespace

void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<MultimodalRecord>& records) {
  if (manifest.record_count != records.size())
    throw ContractError("save_dataset: manifest count " +
                        std::to_string(manifest.record_count) + " vs " +
                        std::to_string(records.size()) + " records");
  std::filesystem::create_directories(dir);
  {
    ordered_json j;
    j["format"] = manifest.format;
    j["split"] = manifest.split;
    j["vocab_size"] = manifest.vocab_size;
    j["d_a"] = manifest.d_a;
    j["d_v"] = manifest.d_v;
    j["max_text_len"] = manifest.max_text_len;
    j["max_audio_len"] = manifest.max_audio_len;
    j["max_video_len"] = manifest.max_video_len;
    j["record_count"] = manifest.record_count;
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IngestionError("save_dataset: cannot write to " + dir);
    out << j.dump(2) << "\n";
  }
  save_records_jsonl(dir + "/" + manifest.split + ".jsonl", records);
}

void save_records_jsonl(const std::string& path,
                        const std::vector<MultimodalRecord>& records) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("save_records_jsonl: cannot write " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

std::pair<DatasetManifest, std::vector<MultimodalRecord>> load_dataset(
    const std::string& dir) {
  DatasetManifest m;
  {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IngestionError("load_dataset: missing " + dir + "/manifest.json");
    nlohmann::json j;
    try {
      in >> j;
      m.format = j.value("format", "");
      if (m.format != "gear-v1")
        throw IngestionError("load_dataset: unknown format version '" + m.format +
                             "'");
      m.split = j.at("split").get<std::string>();
      m.vocab_size = j.at("vocab_size").get<std::size_t>();
      m.d_a = j.at("d_a").get<std::size_t>();
      m.d_v = j.at("d_v").get<std::size_t>();
      m.max_text_len = j.at("max_text_len").get<std::size_t>();
      m.max_audio_len = j.at("max_audio_len").get<std::size_t>();
      m.max_video_len = j.at("max_video_len").get<std::size_t>();
      m.record_count = j.at("record_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest.json: " + std::string(e.what()));
    }
  }

  const std::string data_path = dir + "/" + m.split + ".jsonl";
  std::ifstream in(data_path);
  if (!in) throw IngestionError("load_dataset: missing " + data_path);
  std::vector<MultimodalRecord> records;
  records.reserve(m.record_count);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      records.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(m.split + ".jsonl line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    check_record(records.back(), m);
  }
  if (records.size() != m.record_count)
    throw IngestionError("load_dataset: manifest claims " +
                         std::to_string(m.record_count) + " records, file has " +
                         std::to_string(records.size()));
  return {std::move(m), std::move(records)};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch,
                                                    bool shuffle) {
  if (batch_size < 1) throw ContractError("batch_indices: batch size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle) order = Rng(seed).fork(epoch).permutation(count);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

}  // namespace gear::data
