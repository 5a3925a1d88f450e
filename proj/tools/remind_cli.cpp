// Command-line front end: run experiments, sweep parameters, inspect replay
// buffer checkpoints, train standalone quantizers, and generate synthetic
// feature datasets.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "remind/experiment.hpp"
#include "remind/synth.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

int fail(const std::string& what) {
  nlohmann::json err;
  err["error"] = what;
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"REMIND streaming continual-learning engine"};
  app.require_subcommand(1);

  std::string config_path, axis, values_csv, checkpoint_path;
  std::string train_path, out_path;
  int q_s = 32, q_c = 256, q_iters = 25;

  auto* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "config file path")->required();

  auto* sweep = app.add_subcommand("sweep", "run one experiment per axis value");
  sweep->add_option("--config", config_path, "config file path")->required();
  sweep->add_option("--axis", axis, "config key to vary")->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();

  auto* inspect = app.add_subcommand("inspect-buffer", "print a buffer snapshot report");
  inspect->add_option("--checkpoint", checkpoint_path, "buffer snapshot path")->required();

  auto* quantize = app.add_subcommand("quantize", "train a product quantizer on a feature file");
  quantize->add_option("--train", train_path, "training feature file")->required();
  quantize->add_option("--s", q_s, "number of sub-codebooks");
  quantize->add_option("--c", q_c, "centroids per sub-codebook");
  quantize->add_option("--iters", q_iters, "k-means iterations");
  quantize->add_option("--out", out_path, "output codebook path")->required();
  uint64_t q_seed = 0;
  quantize->add_option("--seed", q_seed, "rng seed");

  auto* synth = app.add_subcommand("synth", "generate a synthetic feature dataset pair");
  std::string synth_prefix;
  remind::SynthSpec spec;
  uint32_t test_per_class = 100;
  synth->add_option("--out", synth_prefix, "output path prefix (writes <prefix>.train/.test)")
      ->required();
  synth->add_option("--classes", spec.num_classes, "number of classes");
  synth->add_option("--per-class", spec.per_class, "train samples per class");
  synth->add_option("--test-per-class", test_per_class, "test samples per class");
  synth->add_option("--m", spec.m, "spatial side length");
  synth->add_option("--d", spec.d, "channel count");
  synth->add_option("--seed", spec.seed, "rng seed");
  synth->add_option("--separation", spec.separation, "class-mean radius");
  synth->add_option("--noise", spec.noise, "per-element noise std");
  synth->add_option("--confusable-pairs", spec.confusable_pairs,
                    "class pairs that are not linearly separable");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = remind::ExperimentConfig::from_config(remind::Config::parse_file(config_path));
      auto bundle = remind::run_experiment(cfg);
      std::cout << bundle.summary_json;
      return 0;
    }
    if (*sweep) {
      auto base = remind::Config::parse_file(config_path);
      auto bundles = remind::run_sweep(base, axis, split_csv(values_csv));
      for (const auto& b : bundles)
        std::cout << b.summary_json;
      return 0;
    }
    if (*inspect) {
      uint64_t cb_hash = 0;
      auto buf = remind::ReplayBuffer::load(checkpoint_path, &cb_hash);
      auto rep = buf.report();
      nlohmann::json out;
      out["codebook_hash"] = remind::detail::hex64(cb_hash);
      out["bytes_used"] = rep.bytes_used;
      out["budget_bytes"] = rep.budget_bytes;
      out["entries"] = rep.entries;
      nlohmann::json per_class = nlohmann::json::object();
      for (const auto& [cls, count] : rep.per_class_count)
        per_class[std::to_string(cls)] = count;
      out["per_class_count"] = per_class;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*quantize) {
      auto ds = remind::ingest_features(train_path);
      std::vector<remind::FeatureTensor> tensors;
      for (const auto& s : ds.samples) tensors.push_back(s.tensor);
      remind::Pcg32 rng(q_seed);
      auto cb = remind::train_pq(tensors, q_s, q_c, q_iters, rng);
      remind::save_codebook(cb, out_path);
      nlohmann::json out;
      out["s"] = cb.s;
      out["c"] = cb.c;
      out["sub_dim"] = cb.sub_dim;
      out["trained_on_elements"] = cb.trained_on;
      out["codebook_bytes"] = remind::codebook_bytes(cb);
      out["reconstruction_mse"] = remind::reconstruction_mse(cb, tensors);
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*synth) {
      auto train = remind::make_synthetic_train(spec);
      auto test = remind::make_synthetic_test(spec, test_per_class);
      remind::export_features(train, synth_prefix + ".train");
      remind::export_features(test, synth_prefix + ".test");
      nlohmann::json out;
      out["train"] = synth_prefix + ".train";
      out["test"] = synth_prefix + ".test";
      out["train_samples"] = train.size();
      out["test_samples"] = test.size();
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    return fail(ex.what());
  }
  return fail("no subcommand");
}
