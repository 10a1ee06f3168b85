// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthetic data generation, OOD test-set
// construction, training, evaluation, and the full experiment pipeline.
// Exit codes: 0 success, 2 configuration or input problem, 3 runtime or
// training failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gear/data.hpp"
#include "gear/errors.hpp"
#include "gear/experiment.hpp"
#include "gear/metrics.hpp"
#include "gear/model.hpp"
#include "gear/ood.hpp"
#include "gear/train.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gear::ConfigError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// The gen-synth and make-ood configs are small standalone JSON files; both
// reuse the experiment parser by wrapping the payload in a full config.
gear::data::SyntheticSpec parse_synth_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw gear::ParseError(std::string("synthetic spec: ") + e.what());
  }
  ordered_json wrapper;
  wrapper["data"]["synthetic"] = j;
  return gear::experiment::parse_experiment_config(wrapper.dump()).synth;
}

gear::ood::OodConfig parse_ood_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw gear::ParseError(std::string("ood config: ") + e.what());
  }
  ordered_json wrapper;
  wrapper["data"]["synthetic"] = ordered_json::object();
  wrapper["ood"] = j;
  return gear::experiment::parse_experiment_config(wrapper.dump()).ood;
}

int cmd_gen_synth(const std::string& config_path, const std::string& out_dir,
                  bool seed_given, std::uint64_t seed) {
  gear::data::SyntheticSpec spec;
  if (!config_path.empty()) spec = parse_synth_file(config_path);
  if (seed_given) spec.seed = seed;
  spec.validate();

  auto ds = gear::data::generate_synthetic(spec);
  const auto train_manifest = gear::data::make_manifest(
      "train", ds.train, spec.vocab_size(), spec.d_a, spec.d_v);
  const auto test_manifest = gear::data::make_manifest(
      "test", ds.test, spec.vocab_size(), spec.d_a, spec.d_v);
  gear::data::save_dataset(out_dir + "/train", train_manifest, ds.train);
  gear::data::save_dataset(out_dir + "/test", test_manifest, ds.test);

  std::vector<gear::data::MultimodalRecord> all = ds.train;
  all.insert(all.end(), ds.test.begin(), ds.test.end());
  std::printf("wrote %zu train + %zu test records to %s\n", ds.train.size(),
              ds.test.size(), out_dir.c_str());
  std::printf("rho: %g\n", spec.rho);
  std::printf("measured bias-label agreement: %g\n",
              gear::experiment::measured_bias_agreement(all));
  return 0;
}

int cmd_make_ood(const std::string& data_dir, const std::string& out_dir,
                 const std::string& config_path, bool seed_given,
                 std::uint64_t seed) {
  gear::ood::OodConfig cfg;
  if (!config_path.empty()) cfg = parse_ood_file(config_path);
  if (seed_given) cfg.seed = seed;
  cfg.validate();

  auto [manifest, records] = gear::data::load_dataset(data_dir);
  auto suite = gear::ood::build_ood_suite(records, cfg);
  gear::experiment::write_ood_outputs(out_dir, records, suite);

  const double n = records.empty() ? 1.0 : static_cast<double>(records.size());
  std::printf("input records: %zu\n", records.size());
  std::printf("ood_text:  kept %zu (%.3f)\n", suite.ood_text.size(),
              static_cast<double>(suite.ood_text.size()) / n);
  std::printf("ood_audio: kept %zu (%.3f)\n", suite.ood_audio.size(),
              static_cast<double>(suite.ood_audio.size()) / n);
  std::printf("ood_video: kept %zu (%.3f)\n", suite.ood_video.size(),
              static_cast<double>(suite.ood_video.size()) / n);
  std::printf("ood_tav:   kept %zu (%.3f)\n", suite.ood_tav.size(),
              static_cast<double>(suite.ood_tav.size()) / n);
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::uint64_t>& seeds) {
  auto cfg = gear::experiment::load_experiment_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!seeds.empty()) cfg.seeds = seeds;
  cfg.validate();

  auto result = gear::experiment::run_experiment(cfg);
  std::printf("config hash: %s\n", result.config_hash.c_str());
  std::fputs(gear::experiment::report_csv(result).c_str(), stdout);
  std::printf("wrote report.json, report.csv, history.json, ood/ to %s\n",
              cfg.out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed) {
  auto cfg = gear::experiment::load_experiment_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.seeds = {seed_given ? seed : cfg.seeds.front()};
  cfg.validate();

  auto result = gear::experiment::run_experiment(cfg);
  const auto& sr = result.per_seed.front();
  std::printf("seed %llu: best epoch %zu, best val acc %.2f, %s\n",
              static_cast<unsigned long long>(sr.seed), sr.history.best_epoch,
              sr.history.best_val_acc,
              sr.history.stopped_early ? "stopped early" : "ran to max epochs");
  std::printf("checkpoint: %s/seed-%llu/ckpt-best.bin\n", cfg.out_dir.c_str(),
              static_cast<unsigned long long>(sr.seed));
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_dir, bool seed_given, std::uint64_t seed,
             const std::string& out_path) {
  auto cfg = gear::experiment::load_experiment_config(config_path);
  auto [manifest, records] = gear::data::load_dataset(data_dir);

  gear::train::TrainConfig tc = cfg.trainer;
  tc.model.vocab_size = manifest.vocab_size;
  tc.model.d_a = manifest.d_a;
  tc.model.d_v = manifest.d_v;
  tc.model.init_seed = seed_given ? seed : cfg.seeds.front();
  tc.model.validate();

  gear::model::GearModel m(tc.model);
  gear::model::load_checkpoint(ckpt_path, m);

  const auto preds = gear::train::evaluate_split(m, records);
  std::vector<double> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.label);
  const auto scores = gear::metrics::compute_metrics(preds, labels);

  ordered_json j;
  j["split"] = manifest.split;
  j["n_total"] = scores.n_total;
  j["n_excluded_zero"] = scores.n_excluded_zero;
  j["acc2_nonneg"] = scores.acc2_nonneg;
  j["f1_nonneg"] = scores.f1_nonneg;
  j["acc2_pos"] = scores.acc2_pos;
  j["f1_pos"] = scores.f1_pos;
  const std::string text = j.dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw gear::ConfigError("cannot open for writing: " + out_path);
    out << text;
  }
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GEAR: general debiasing for multimodal sentiment regression"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, ckpt_path, out_path;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "Synthetic spec JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Override the spec seed");

  auto* mko = app.add_subcommand("make-ood", "Build the four OOD test subsets");
  mko->add_option("--data", data_dir, "Input dataset directory")->required();
  mko->add_option("--out", out_dir, "Output directory")->required();
  mko->add_option("--config", config_path, "OOD config JSON");
  auto* mko_seed = mko->add_option("--seed", seed, "Override the config seed");

  auto* trn = app.add_subcommand("train", "Train one seed and save a checkpoint");
  trn->add_option("--config", config_path, "Experiment config JSON")->required();
  trn->add_option("--out", out_dir, "Override the config output directory");
  auto* trn_seed = trn->add_option("--seed", seed, "Seed (default: first in config)");

  auto* evl = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  evl->add_option("--config", config_path, "Experiment config JSON")->required();
  evl->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  evl->add_option("--data", data_dir, "Dataset directory to score")->required();
  auto* evl_seed =
      evl->add_option("--seed", seed, "Seed the checkpoint was trained with");
  evl->add_option("--out", out_path, "Also write the metrics JSON here");

  auto* run = app.add_subcommand("run", "Full pipeline: data, OOD, train, report");
  run->add_option("--config", config_path, "Experiment config JSON")->required();
  run->add_option("--out", out_dir, "Override the config output directory");
  run->add_option("--seed", seeds, "Override the config seed list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_synth(config_path, out_dir, !gen_seed->empty(), seed);
    if (mko->parsed())
      return cmd_make_ood(data_dir, out_dir, config_path, !mko_seed->empty(), seed);
    if (trn->parsed())
      return cmd_train(config_path, out_dir, !trn_seed->empty(), seed);
    if (evl->parsed())
      return cmd_eval(config_path, ckpt_path, data_dir, !evl_seed->empty(), seed,
                      out_path);
    if (run->parsed()) return cmd_run(config_path, out_dir, seeds);
  } catch (const gear::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const gear::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const gear::IngestionError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const gear::TrainingError& e) {
    std::fprintf(stderr, "training failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
