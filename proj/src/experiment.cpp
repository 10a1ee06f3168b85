// SPDX-License-Identifier: Apache-2.0
#include "gear/experiment.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gear/errors.hpp"

namespace gear::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& msg) {
  throw ConfigError("experiment config: " + msg);
}

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(ctx + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) bad(ctx + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
void read_field(const json& j, const std::string& ctx, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(ctx + "." + key + ": " + e.what());
  }
}

data::SyntheticSpec parse_synth(const json& j) {
  check_keys(j, "data.synthetic",
             {"n_train", "n_test", "rho", "noise_sigma", "text_flip_prob",
              "d_a", "d_v", "len_text", "len_audio", "len_video", "n_filler",
              "robust_strength_audio", "robust_strength_video",
              "bias_strength_audio", "bias_strength_video", "feature_noise",
              "seed"});
  data::SyntheticSpec s;
  const std::string c = "data.synthetic";
  read_field(j, c, "n_train", s.n_train);
  read_field(j, c, "n_test", s.n_test);
  read_field(j, c, "rho", s.rho);
  read_field(j, c, "noise_sigma", s.noise_sigma);
  read_field(j, c, "text_flip_prob", s.text_flip_prob);
  read_field(j, c, "d_a", s.d_a);
  read_field(j, c, "d_v", s.d_v);
  read_field(j, c, "len_text", s.len_text);
  read_field(j, c, "len_audio", s.len_audio);
  read_field(j, c, "len_video", s.len_video);
  read_field(j, c, "n_filler", s.n_filler);
  read_field(j, c, "robust_strength_audio", s.robust_strength_audio);
  read_field(j, c, "robust_strength_video", s.robust_strength_video);
  read_field(j, c, "bias_strength_audio", s.bias_strength_audio);
  read_field(j, c, "bias_strength_video", s.bias_strength_video);
  read_field(j, c, "feature_noise", s.feature_noise);
  read_field(j, c, "seed", s.seed);
  return s;
}

model::ModelConfig parse_model(const json& j, const model::ModelConfig& base) {
  check_keys(j, "train.model",
             {"d_t", "d_a_hidden", "d_v_hidden", "d_s", "heads", "encoder"});
  model::ModelConfig m = base;
  const std::string c = "train.model";
  read_field(j, c, "d_t", m.d_t);
  read_field(j, c, "d_a_hidden", m.d_a_hidden);
  read_field(j, c, "d_v_hidden", m.d_v_hidden);
  read_field(j, c, "d_s", m.d_s);
  read_field(j, c, "heads", m.heads);
  if (j.contains("encoder")) {
    std::string enc;
    read_field(j, c, "encoder", enc);
    if (enc == "pooling")
      m.encoder = model::EncoderKind::Pooling;
    else if (enc == "recurrent")
      m.encoder = model::EncoderKind::Recurrent;
    else
      bad("train.model.encoder: expected \"pooling\" or \"recurrent\", got \"" +
          enc + "\"");
  }
  return m;
}

losses::BiasWeightStrategy parse_strategy(const json& j) {
  check_keys(j, "train.bias_weight", {"kind", "eps"});
  losses::BiasWeightStrategy s;
  if (j.contains("kind")) {
    std::string kind;
    read_field(j, "train.bias_weight", "kind", kind);
    if (kind == "min")
      s.kind = losses::BiasWeightKind::Min;
    else if (kind == "avg")
      s.kind = losses::BiasWeightKind::Avg;
    else
      bad("train.bias_weight.kind: expected \"min\" or \"avg\", got \"" + kind +
          "\"");
  }
  read_field(j, "train.bias_weight", "eps", s.eps);
  return s;
}

train::TrainConfig parse_trainer(const json& j, const train::TrainConfig& base) {
  check_keys(j, "train",
             {"batch_size", "lambda", "beta", "swap_epoch", "lr", "max_epochs",
              "patience", "ipw_c", "use_ipw", "use_gmae", "use_swap",
              "independent_swap", "modality_mask", "bias_weight", "model"});
  train::TrainConfig t = base;
  const std::string c = "train";
  read_field(j, c, "batch_size", t.batch_size);
  read_field(j, c, "lambda", t.lambda);
  read_field(j, c, "beta", t.beta);
  read_field(j, c, "swap_epoch", t.swap_epoch);
  read_field(j, c, "lr", t.lr);
  read_field(j, c, "max_epochs", t.max_epochs);
  read_field(j, c, "patience", t.patience);
  read_field(j, c, "ipw_c", t.ipw_c);
  read_field(j, c, "use_ipw", t.use_ipw);
  read_field(j, c, "use_gmae", t.use_gmae);
  read_field(j, c, "use_swap", t.use_swap);
  read_field(j, c, "independent_swap", t.independent_swap);
  if (j.contains("modality_mask")) {
    std::vector<bool> mask;
    read_field(j, c, "modality_mask", mask);
    if (mask.size() != 3) bad("train.modality_mask must have 3 entries");
    for (std::size_t m = 0; m < 3; ++m) t.modality_mask[m] = mask[m];
  }
  if (j.contains("bias_weight")) t.strategy = parse_strategy(j.at("bias_weight"));
  if (j.contains("model")) t.model = parse_model(j.at("model"), base.model);
  return t;
}

ood::OodConfig parse_ood(const json& j, const ood::OodConfig& base) {
  check_keys(j, "ood", {"kmeans_k", "kmeans_iters", "seed", "anneal"});
  ood::OodConfig o = base;
  read_field(j, "ood", "kmeans_k", o.kmeans_k);
  read_field(j, "ood", "kmeans_iters", o.kmeans_iters);
  read_field(j, "ood", "seed", o.seed);
  if (j.contains("anneal")) {
    const json& a = j.at("anneal");
    check_keys(a, "ood.anneal", {"t0", "alpha", "steps", "min_keep_fraction"});
    read_field(a, "ood.anneal", "t0", o.schedule.t0);
    read_field(a, "ood.anneal", "alpha", o.schedule.alpha);
    read_field(a, "ood.anneal", "steps", o.schedule.steps);
    read_field(a, "ood.anneal", "min_keep_fraction", o.schedule.min_keep_fraction);
  }
  return o;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ordered_json synth_json(const data::SyntheticSpec& s) {
  ordered_json j;
  j["n_train"] = s.n_train;
  j["n_test"] = s.n_test;
  j["rho"] = s.rho;
  j["noise_sigma"] = s.noise_sigma;
  j["text_flip_prob"] = s.text_flip_prob;
  j["d_a"] = s.d_a;
  j["d_v"] = s.d_v;
  j["len_text"] = s.len_text;
  j["len_audio"] = s.len_audio;
  j["len_video"] = s.len_video;
  j["n_filler"] = s.n_filler;
  j["robust_strength_audio"] = s.robust_strength_audio;
  j["robust_strength_video"] = s.robust_strength_video;
  j["bias_strength_audio"] = s.bias_strength_audio;
  j["bias_strength_video"] = s.bias_strength_video;
  j["feature_noise"] = s.feature_noise;
  j["seed"] = s.seed;
  return j;
}

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  if (cfg.synthetic) {
    j["data"]["synthetic"] = synth_json(cfg.synth);
  } else {
    j["data"]["train_dir"] = cfg.train_dir;
    j["data"]["test_dir"] = cfg.test_dir;
  }
  const train::TrainConfig& t = cfg.trainer;
  ordered_json tj;
  tj["batch_size"] = t.batch_size;
  tj["lambda"] = t.lambda;
  tj["beta"] = t.beta;
  tj["swap_epoch"] = t.swap_epoch;
  tj["lr"] = t.lr;
  tj["max_epochs"] = t.max_epochs;
  tj["patience"] = t.patience;
  tj["ipw_c"] = t.ipw_c;
  tj["use_ipw"] = t.use_ipw;
  tj["use_gmae"] = t.use_gmae;
  tj["use_swap"] = t.use_swap;
  tj["independent_swap"] = t.independent_swap;
  tj["modality_mask"] = {t.modality_mask[0], t.modality_mask[1],
                         t.modality_mask[2]};
  tj["bias_weight"] = {
      {"kind", t.strategy.kind == losses::BiasWeightKind::Min ? "min" : "avg"},
      {"eps", t.strategy.eps}};
  tj["model"] = {
      {"d_t", t.model.d_t},
      {"d_a_hidden", t.model.d_a_hidden},
      {"d_v_hidden", t.model.d_v_hidden},
      {"d_s", t.model.d_s},
      {"heads", t.model.heads},
      {"encoder",
       t.model.encoder == model::EncoderKind::Pooling ? "pooling" : "recurrent"}};
  j["train"] = std::move(tj);
  j["ood"] = {{"kmeans_k", cfg.ood.kmeans_k},
              {"kmeans_iters", cfg.ood.kmeans_iters},
              {"seed", cfg.ood.seed},
              {"anneal",
               {{"t0", cfg.ood.schedule.t0},
                {"alpha", cfg.ood.schedule.alpha},
                {"steps", cfg.ood.schedule.steps},
                {"min_keep_fraction", cfg.ood.schedule.min_keep_fraction}}}};
  j["seeds"] = cfg.seeds;
  j["val_fraction"] = cfg.val_fraction;
  return j;
}

ordered_json metrics_json(const SplitScores& s) {
  if (!s.defined) return nullptr;
  ordered_json j;
  j["acc2_nonneg"] = s.scores.acc2_nonneg;
  j["f1_nonneg"] = s.scores.f1_nonneg;
  j["acc2_pos"] = s.scores.acc2_pos;
  j["f1_pos"] = s.scores.f1_pos;
  j["n_total"] = s.scores.n_total;
  j["n_excluded_zero"] = s.scores.n_excluded_zero;
  return j;
}

SplitScores score_split(const std::string& name, const std::vector<double>& preds,
                        const std::vector<double>& labels) {
  SplitScores s;
  s.split = name;
  if (preds.empty()) return s;
  try {
    s.scores = metrics::compute_metrics(preds, labels);
    s.defined = true;
  } catch (const UndefinedMetricError&) {
    s.defined = false;
  }
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << content;
  if (!out) throw ConfigError("write failed: " + path);
}

std::string two_decimals_pair(double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f/%.2f", a, b);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) bad("seeds must be nonempty");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    bad("val_fraction must be in [0, 1)");
  if (synthetic) {
    synth.validate();
  } else {
    if (train_dir.empty() || test_dir.empty())
      bad("train_dir and test_dir must both be set");
  }
  // Recipe fields are checkable now; the data-dependent model dims are
  // filled per run, so stand-ins satisfy the dimension constraints here.
  train::TrainConfig probe = trainer;
  probe.model.vocab_size = 1;
  probe.model.d_a = 1;
  probe.model.d_v = 1;
  probe.validate();
  ood.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  check_keys(j, "config",
             {"data", "train", "ood", "seeds", "val_fraction", "out_dir"});
  ExperimentConfig cfg;
  if (!j.contains("data")) bad("missing required \"data\" section");
  const json& d = j.at("data");
  check_keys(d, "data", {"synthetic", "train_dir", "test_dir"});
  const bool has_synth = d.contains("synthetic");
  const bool has_dirs = d.contains("train_dir") || d.contains("test_dir");
  if (has_synth && has_dirs)
    bad("data: give either \"synthetic\" or dataset dirs, not both");
  if (!has_synth && !has_dirs)
    bad("data: give \"synthetic\" or \"train_dir\"+\"test_dir\"");
  if (has_synth) {
    cfg.synthetic = true;
    cfg.synth = parse_synth(d.at("synthetic"));
  } else {
    cfg.synthetic = false;
    if (!d.contains("train_dir") || !d.contains("test_dir"))
      bad("data: both \"train_dir\" and \"test_dir\" are required");
    read_field(d, "data", "train_dir", cfg.train_dir);
    read_field(d, "data", "test_dir", cfg.test_dir);
  }
  if (j.contains("train")) cfg.trainer = parse_trainer(j.at("train"), cfg.trainer);
  if (j.contains("ood")) cfg.ood = parse_ood(j.at("ood"), cfg.ood);
  read_field(j, "config", "seeds", cfg.seeds);
  read_field(j, "config", "val_fraction", cfg.val_fraction);
  read_field(j, "config", "out_dir", cfg.out_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open experiment config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string experiment_config_canonical(const ExperimentConfig& cfg) {
  return config_json(cfg).dump();
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(experiment_config_canonical(cfg))));
  return buf;
}

double measured_bias_agreement(const std::vector<data::MultimodalRecord>& records) {
  std::size_t n = 0;
  double agree = 0.0;
  for (const auto& r : records) {
    if (!r.meta) continue;
    const int latent_sign = r.meta->latent < 0.0 ? -1 : 1;
    for (int m = 0; m < 3; ++m)
      agree += r.meta->bias_sign[m] == latent_sign ? 1.0 : 0.0;
    n += 3;
  }
  if (n == 0) return -1.0;
  return agree / static_cast<double>(n);
}

ExperimentResult run_experiment_on(
    const ExperimentConfig& cfg,
    const std::vector<data::MultimodalRecord>& train_records,
    const std::vector<data::MultimodalRecord>& test_records,
    std::size_t vocab_size, std::size_t d_a, std::size_t d_v,
    const std::string& out_dir) {
  cfg.validate();

  ExperimentResult res;
  res.config_hash = config_fingerprint(cfg);
  res.seeds = cfg.seeds;
  res.test_size = test_records.size();
  res.suite = ood::build_ood_suite(test_records, cfg.ood);

  std::vector<double> test_labels;
  test_labels.reserve(test_records.size());
  for (const auto& r : test_records) test_labels.push_back(r.label);

  const std::array<const std::vector<std::size_t>*, 4> subsets = {
      &res.suite.ood_text, &res.suite.ood_audio, &res.suite.ood_video,
      &res.suite.ood_tav};

  for (std::uint64_t seed : cfg.seeds) {
    train::TrainConfig tc = cfg.trainer;
    tc.model.vocab_size = vocab_size;
    tc.model.d_a = d_a;
    tc.model.d_v = d_v;
    tc.model.init_seed = seed;
    tc.seed = seed;

    auto [tr, val] = train::split_train_val(train_records, cfg.val_fraction, seed);

    std::string ckpt;
    if (!out_dir.empty()) {
      const std::string seed_dir = out_dir + "/seed-" + std::to_string(seed);
      fs::create_directories(seed_dir);
      ckpt = seed_dir + "/ckpt-best.bin";
    }

    auto trained = train::train(tc, tr, val, {}, ckpt);
    const auto preds = train::evaluate_split(trained.model, test_records);

    SeedResult sr;
    sr.seed = seed;
    sr.history = std::move(trained.history);
    sr.splits.push_back(score_split(kSplitNames[0], preds, test_labels));
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      std::vector<double> sub_preds, sub_labels;
      sub_preds.reserve(subsets[s]->size());
      sub_labels.reserve(subsets[s]->size());
      for (std::size_t pos : *subsets[s]) {
        sub_preds.push_back(preds[pos]);
        sub_labels.push_back(test_labels[pos]);
      }
      sr.splits.push_back(score_split(kSplitNames[s + 1], sub_preds, sub_labels));
    }
    res.per_seed.push_back(std::move(sr));
  }

  // Percentages average over the seeds where the split was scorable; the
  // counts describe the split itself and are identical across seeds.
  for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
    SplitScores m;
    m.split = kSplitNames[s];
    std::size_t defined = 0;
    for (const auto& sr : res.per_seed) {
      const SplitScores& ss = sr.splits[s];
      if (!ss.defined) continue;
      if (defined == 0) m.scores = ss.scores;
      else {
        m.scores.acc2_nonneg += ss.scores.acc2_nonneg;
        m.scores.f1_nonneg += ss.scores.f1_nonneg;
        m.scores.acc2_pos += ss.scores.acc2_pos;
        m.scores.f1_pos += ss.scores.f1_pos;
      }
      ++defined;
    }
    if (defined > 0) {
      m.defined = true;
      m.scores.acc2_nonneg /= static_cast<double>(defined);
      m.scores.f1_nonneg /= static_cast<double>(defined);
      m.scores.acc2_pos /= static_cast<double>(defined);
      m.scores.f1_pos /= static_cast<double>(defined);
    }
    res.mean.push_back(std::move(m));
  }
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  // Acquire the data before touching the output directory, so a bad data
  // source leaves no partial outputs behind.
  std::vector<data::MultimodalRecord> train_records, test_records;
  std::size_t vocab_size = 0, d_a = 0, d_v = 0;
  if (cfg.synthetic) {
    auto ds = data::generate_synthetic(cfg.synth);
    train_records = std::move(ds.train);
    test_records = std::move(ds.test);
    vocab_size = cfg.synth.vocab_size();
    d_a = cfg.synth.d_a;
    d_v = cfg.synth.d_v;
  } else {
    auto [train_manifest, tr] = data::load_dataset(cfg.train_dir);
    auto [test_manifest, te] = data::load_dataset(cfg.test_dir);
    if (train_manifest.vocab_size != test_manifest.vocab_size ||
        train_manifest.d_a != test_manifest.d_a ||
        train_manifest.d_v != test_manifest.d_v)
      bad("train and test manifests disagree on vocab or feature widths");
    train_records = std::move(tr);
    test_records = std::move(te);
    vocab_size = train_manifest.vocab_size;
    d_a = train_manifest.d_a;
    d_v = train_manifest.d_v;
  }

  fs::create_directories(cfg.out_dir);
  ExperimentResult res = run_experiment_on(cfg, train_records, test_records,
                                           vocab_size, d_a, d_v, cfg.out_dir);
  write_ood_outputs(cfg.out_dir + "/ood", test_records, res.suite);
  write_text_file(cfg.out_dir + "/report.json", report_json(res));
  write_text_file(cfg.out_dir + "/report.csv", report_csv(res));
  write_text_file(cfg.out_dir + "/history.json", history_json(res));
  return res;
}

std::string report_json(const ExperimentResult& result) {
  ordered_json j;
  j["format"] = "gear-report-v1";
  j["config_hash"] = result.config_hash;
  j["seeds"] = result.seeds;
  j["splits"] = kSplitNames;
  ordered_json sizes;
  sizes["iid"] = result.test_size;
  sizes["ood_text"] = result.suite.ood_text.size();
  sizes["ood_audio"] = result.suite.ood_audio.size();
  sizes["ood_video"] = result.suite.ood_video.size();
  sizes["ood_tav"] = result.suite.ood_tav.size();
  j["split_sizes"] = std::move(sizes);
  j["per_seed"] = ordered_json::array();
  for (const auto& sr : result.per_seed) {
    ordered_json e;
    e["seed"] = sr.seed;
    e["epochs_run"] = sr.history.epochs.size();
    e["best_epoch"] = sr.history.best_epoch;
    e["best_val_acc"] = sr.history.best_val_acc;
    e["stopped_early"] = sr.history.stopped_early;
    ordered_json m;
    for (const auto& ss : sr.splits) m[ss.split] = metrics_json(ss);
    e["metrics"] = std::move(m);
    j["per_seed"].push_back(std::move(e));
  }
  ordered_json mean;
  for (const auto& ss : result.mean) mean[ss.split] = metrics_json(ss);
  j["mean"] = std::move(mean);
  return j.dump(2) + "\n";
}

std::string report_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "run";
  for (const char* split : kSplitNames) out << "," << split << "_acc," << split << "_f1";
  out << "\n";
  auto row = [&out](const std::string& name, const std::vector<SplitScores>& splits) {
    out << name;
    for (const auto& ss : splits) {
      if (!ss.defined) {
        out << ",-,-";
        continue;
      }
      out << "," << two_decimals_pair(ss.scores.acc2_nonneg, ss.scores.acc2_pos)
          << "," << two_decimals_pair(ss.scores.f1_nonneg, ss.scores.f1_pos);
    }
    out << "\n";
  };
  for (const auto& sr : result.per_seed)
    row("seed-" + std::to_string(sr.seed), sr.splits);
  row("mean", result.mean);
  return out.str();
}

std::string history_json(const ExperimentResult& result) {
  ordered_json j;
  j["format"] = "gear-history-v1";
  j["per_seed"] = ordered_json::array();
  for (const auto& sr : result.per_seed) {
    ordered_json e;
    e["seed"] = sr.seed;
    e["best_epoch"] = sr.history.best_epoch;
    e["best_val_acc"] = sr.history.best_val_acc;
    e["stopped_early"] = sr.history.stopped_early;
    e["epochs"] = ordered_json::array();
    for (const auto& ep : sr.history.epochs) {
      ordered_json ej;
      ej["epoch"] = ep.epoch;
      ej["total"] = ep.total;
      ej["l_ipw"] = ep.l_ipw;
      ej["l_gmae"] = ep.l_gmae;
      ej["lhat_ipw"] = ep.lhat_ipw;
      ej["lhat_gmae"] = ep.lhat_gmae;
      ej["val_acc"] = ep.val_acc;
      ej["wall_seconds"] = ep.wall_seconds;
      ej["swap_active"] = ep.swap_active;
      e["epochs"].push_back(std::move(ej));
    }
    j["per_seed"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

void write_ood_outputs(const std::string& dir,
                       const std::vector<data::MultimodalRecord>& iid,
                       const ood::OodSuite& suite) {
  fs::create_directories(dir);

  auto gather = [&iid](const std::vector<std::size_t>& positions) {
    std::vector<data::MultimodalRecord> out;
    out.reserve(positions.size());
    for (std::size_t p : positions) out.push_back(iid[p]);
    return out;
  };
  auto fraction = [&iid](std::size_t kept) {
    return iid.empty() ? 1.0
                       : static_cast<double>(kept) / static_cast<double>(iid.size());
  };

  auto anneal_audit = [&](const std::string& name,
                          const std::vector<std::size_t>& kept,
                          const ood::AnnealResult& anneal) {
    ordered_json a;
    a["split"] = name;
    a["method"] = "anneal";
    a["input_count"] = iid.size();
    a["kept_count"] = kept.size();
    a["kept_fraction"] = fraction(kept.size());
    a["initial_energy"] = anneal.initial_energy;
    a["best_energy"] = anneal.best_energy;
    return a;
  };
  auto cluster_audit = [&](const std::string& name,
                           const std::vector<std::size_t>& kept,
                           const ood::ClusterModel& clusters) {
    ordered_json a;
    a["split"] = name;
    a["method"] = "cluster-balance";
    a["input_count"] = iid.size();
    a["kept_count"] = kept.size();
    a["kept_fraction"] = fraction(kept.size());
    a["k"] = clusters.k;
    a["inertia"] = clusters.inertia;
    std::vector<std::array<std::size_t, 3>> tally(clusters.k, {0, 0, 0});
    ood::CategoryScheme scheme;
    for (std::size_t i = 0; i < clusters.assignments.size(); ++i)
      ++tally[clusters.assignments[i]][scheme.of(iid[i].label)];
    for (std::size_t p : kept) ++tally[clusters.assignments[p]][2];
    a["clusters"] = ordered_json::array();
    for (std::size_t c = 0; c < clusters.k; ++c)
      a["clusters"].push_back({{"cluster", c},
                               {"count_neg", tally[c][0]},
                               {"count_nonneg", tally[c][1]},
                               {"kept", tally[c][2]}});
    return a;
  };

  const std::array<std::pair<const char*, const std::vector<std::size_t>*>, 4>
      sets = {{{"ood_text", &suite.ood_text},
               {"ood_audio", &suite.ood_audio},
               {"ood_video", &suite.ood_video},
               {"ood_tav", &suite.ood_tav}}};
  for (const auto& [name, positions] : sets)
    data::save_records_jsonl(dir + "/" + name + ".jsonl", gather(*positions));

  write_text_file(dir + "/ood_text.report.json",
                  anneal_audit("ood_text", suite.ood_text, suite.text_anneal)
                          .dump(2) +
                      "\n");
  write_text_file(dir + "/ood_tav.report.json",
                  anneal_audit("ood_tav", suite.ood_tav, suite.tav_anneal)
                          .dump(2) +
                      "\n");
  write_text_file(
      dir + "/ood_audio.report.json",
      cluster_audit("ood_audio", suite.ood_audio, suite.audio_clusters).dump(2) +
          "\n");
  write_text_file(
      dir + "/ood_video.report.json",
      cluster_audit("ood_video", suite.ood_video, suite.video_clusters).dump(2) +
          "\n");
}

}  // namespace gear::experiment
