#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "remind/config.hpp"
#include "remind/feature_io.hpp"
#include "remind/learners.hpp"
#include "remind/metrics.hpp"
#include "remind/orderings.hpp"
#include "remind/quantizer.hpp"
#include "remind/rng.hpp"

namespace remind {

struct ReportBundle {
  EvalTrace trace;
  double omega = 0.0;
  double mu = 0.0;
  double recon_mse = -1.0;  // REMIND only
  uint64_t config_hash = 0;
  uint64_t peak_buffer_bytes = 0;
  double wall_seconds = 0.0;
  std::string summary_json;
  std::string output_dir;
};

namespace detail {

inline std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::vector<uint64_t> class_counts(const FeatureDataset& ds,
                                          const std::vector<uint32_t>& indices) {
  std::vector<uint64_t> counts(ds.num_classes, 0);
  for (uint32_t i : indices) counts[ds.samples[i].label]++;
  return counts;
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "flatten") return Pooling::kFlatten;
  throw std::invalid_argument("unknown pooling: " + s);
}

}  // namespace detail

// All tunables of one run, read out of a flat config. Validated up front.
struct ExperimentConfig {
  std::string train_path, test_path;
  std::string learner = "remind";
  OrderingSpec ordering;
  uint64_t seed = 0;
  std::string output_dir = "out";
  bool write_outputs = true;
  int topk = 1;
  bool eval_seen_classes_only = true;

  RemindOptions remind;
  FineTuneOptions finetune;
  ExStreamOptions exstream;
  double slda_shrinkage = 1e-4;
  OfflineTrainConfig offline;  // normalizer and "offline" learner
  HeadConfig head;

  Config raw;

  static ExperimentConfig from_config(const Config& cfg) {
    ExperimentConfig e;
    e.raw = cfg;
    e.train_path = cfg.get_string("dataset.train");
    e.test_path = cfg.get_string("dataset.test");
    e.learner = cfg.get_string("learner", "remind");
    e.ordering.kind = parse_ordering(cfg.get_string("ordering.kind", "iid"));
    e.ordering.num_batches = static_cast<int>(cfg.get_int("ordering.num_batches", 5));
    e.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    e.ordering.seed = e.seed;
    e.output_dir = cfg.get_string("output.dir", "out");
    e.write_outputs = cfg.get_bool("output.write", true);
    e.topk = static_cast<int>(cfg.get_int("metrics.topk", 1));
    std::string scope = cfg.get_string("metrics.eval_scope",
                                       e.ordering.kind == OrderingKind::kIid ||
                                               e.ordering.kind == OrderingKind::kInstance
                                           ? "all"
                                           : "seen");
    if (scope != "all" && scope != "seen")
      throw std::invalid_argument("metrics.eval_scope must be all|seen");
    e.eval_seen_classes_only = (scope == "seen");

    e.head.hidden = cfg.get_int_list("learner.hidden", {128});
    e.head.pooling = detail::parse_pooling(cfg.get_string("learner.pooling", "mean"));

    SgdConfig sgd;
    sgd.momentum = cfg.get_double("learner.momentum", 0.9);
    sgd.weight_decay = cfg.get_double("learner.weight_decay", 1e-4);
    sgd.replay_count = static_cast<int>(cfg.get_int("learner.r", 20));

    OfflineTrainConfig base;
    base.epochs = static_cast<int>(cfg.get_int("base_init.epochs", 30));
    base.batch_size = static_cast<int>(cfg.get_int("base_init.batch_size", 32));
    base.lr = cfg.get_double("base_init.lr", 0.05);
    base.momentum = sgd.momentum;
    base.weight_decay = sgd.weight_decay;

    e.offline.epochs = static_cast<int>(cfg.get_int("offline.epochs", 40));
    e.offline.batch_size = static_cast<int>(cfg.get_int("offline.batch_size", 32));
    e.offline.lr = cfg.get_double("offline.lr", 0.05);
    e.offline.momentum = sgd.momentum;
    e.offline.weight_decay = sgd.weight_decay;

    e.remind.s = static_cast<int>(cfg.get_int("quantizer.s", 32));
    e.remind.c = static_cast<int>(cfg.get_int("quantizer.c", 256));
    e.remind.kmeans_iters = static_cast<int>(cfg.get_int("quantizer.iters", 25));
    e.remind.buffer_budget_bytes = static_cast<uint64_t>(cfg.get_int("buffer.budget_bytes", 0));
    e.remind.sgd = sgd;
    e.remind.mixup.alpha = cfg.get_double("augment.mixup.alpha", 0.1);
    e.remind.mixup.enabled = cfg.get_bool("augment.mixup.enabled", true);
    e.remind.crop.scale_min = cfg.get_double("augment.crop.scale_min", 0.6);
    e.remind.crop.scale_max = cfg.get_double("augment.crop.scale_max", 1.0);
    e.remind.crop.aspect_min = cfg.get_double("augment.crop.aspect_min", 3.0 / 4.0);
    e.remind.crop.aspect_max = cfg.get_double("augment.crop.aspect_max", 4.0 / 3.0);
    e.remind.crop.enabled = cfg.get_bool("augment.crop.enabled", true);
    e.remind.crop_current = cfg.get_bool("augment.crop.current", true);
    e.remind.consume_reconstructed = cfg.get_bool("learner.consume_reconstructed", true);
    e.remind.mixup_replaces_replays = cfg.get_bool("learner.mixup_replaces", true);
    e.remind.lr_start = cfg.get_double("learner.lr_start", 0.1);
    e.remind.lr_end = cfg.get_double("learner.lr_end", 0.001);
    e.remind.lr_step_size = static_cast<int>(cfg.get_int("learner.lr_step_size", 100));
    e.remind.base_init = base;
    e.remind.head = e.head;

    e.finetune.sgd = sgd;
    e.finetune.sgd.replay_count = 0;
    e.finetune.lr_start = e.remind.lr_start;
    e.finetune.lr_end = e.remind.lr_end;
    e.finetune.lr_step_size = e.remind.lr_step_size;
    e.finetune.base_init = base;
    e.finetune.head = e.head;

    e.slda_shrinkage = cfg.get_double("slda.shrinkage", 1e-4);

    e.exstream.capacity_per_class = static_cast<int>(cfg.get_int("exstream.capacity", 20));
    e.exstream.lr = cfg.get_double("exstream.lr", 0.01);
    e.exstream.sgd = sgd;
    e.exstream.sgd.replay_count = 0;
    e.exstream.base_init = base;
    // Whole-buffer steps are cheap, and the head starts from scratch: give the
    // prototype learner its own (larger) base-init step count.
    e.exstream.base_init.epochs =
        static_cast<int>(cfg.get_int("exstream.base_epochs", 200));
    e.exstream.hidden = e.head.hidden;

    if (e.learner != "remind" && e.learner != "finetune" && e.learner != "slda" &&
        e.learner != "exstream" && e.learner != "offline")
      throw std::invalid_argument("unknown learner: " + e.learner);
    return e;
  }
};

inline std::unique_ptr<Learner> make_learner(const ExperimentConfig& cfg, int m, int d,
                                             int num_classes,
                                             std::vector<uint64_t> stream_totals) {
  if (cfg.learner == "remind")
    return std::make_unique<RemindLearner>(m, d, num_classes, cfg.remind,
                                           std::move(stream_totals));
  if (cfg.learner == "finetune")
    return std::make_unique<FineTuneLearner>(m, d, num_classes, cfg.finetune,
                                             std::move(stream_totals));
  if (cfg.learner == "slda")
    return std::make_unique<SldaLearner>(m, d, num_classes, cfg.slda_shrinkage);
  if (cfg.learner == "exstream")
    return std::make_unique<ExStreamLearner>(m, d, num_classes, cfg.exstream);
  if (cfg.learner == "offline")
    return std::make_unique<OfflineLearner>(m, d, num_classes, cfg.offline, cfg.head);
  throw std::invalid_argument("unknown learner: " + cfg.learner);
}

namespace detail {

inline double eval_accuracy(const Learner& learner, const FeatureDataset& test,
                            const std::set<uint32_t>& seen, bool seen_only, int topk) {
  std::vector<std::vector<int>> ranked;
  std::vector<uint32_t> labels;
  for (const auto& s : test.samples) {
    if (seen_only && !seen.count(s.label)) continue;
    ranked.push_back(learner.predict_topk(s.tensor, topk));
    labels.push_back(s.label);
  }
  if (ranked.empty()) return 0.0;
  return topk_accuracy(ranked, labels, topk);
}

inline double eval_accuracy_head(const HeadModel& head, const FeatureDataset& test,
                                 const std::set<uint32_t>& seen, bool seen_only,
                                 int topk) {
  std::vector<std::vector<int>> ranked;
  std::vector<uint32_t> labels;
  for (const auto& s : test.samples) {
    if (seen_only && !seen.count(s.label)) continue;
    ranked.push_back(topk_indices(head.forward(s.tensor), topk));
    labels.push_back(s.label);
  }
  if (ranked.empty()) return 0.0;
  return topk_accuracy(ranked, labels, topk);
}

}  // namespace detail

// Orchestrates one run: order the stream, base-initialize on batch 0, stream
// the rest one sample at a time, evaluate at every batch boundary, normalize
// by an offline head trained on the raw full training set.
inline ReportBundle run_experiment(const ExperimentConfig& cfg,
                                   const FeatureDataset& train,
                                   const FeatureDataset& test) {
  auto t0 = std::chrono::steady_clock::now();
  Pcg32 root(cfg.seed);

  StreamOrder order = order_stream(train, cfg.ordering);
  BaseInitSplit split = base_init_split(order);
  std::vector<uint64_t> stream_totals = detail::class_counts(train, split.remainder);

  auto learner = make_learner(cfg, train.m, train.d, train.num_classes, stream_totals);

  std::vector<const LabeledSample*> prefix;
  if (cfg.learner == "offline") {
    // The upper bound trains on everything it will ever see.
    for (const auto& s : train.samples) prefix.push_back(&s);
  } else {
    for (uint32_t i : split.prefix) prefix.push_back(&train.samples[i]);
  }
  Pcg32 base_rng = root.split(10);
  learner->base_initialize(prefix, base_rng);

  // Offline normalizer on raw features of the full training set.
  Pcg32 offline_rng = root.split(12);
  Pcg32 head_rng = offline_rng.split(1);
  HeadModel offline_head(train.m, train.d, cfg.head.hidden, train.num_classes,
                         cfg.head.pooling, head_rng);
  {
    std::vector<const LabeledSample*> all;
    for (const auto& s : train.samples) all.push_back(&s);
    Pcg32 train_rng = offline_rng.split(2);
    offline_train(offline_head, all, cfg.offline, train_rng);
  }

  EvalTrace trace;
  trace.eval_on_seen_classes_only = cfg.eval_seen_classes_only;
  trace.offline_variant = "raw-features full-epoch head";

  std::set<uint32_t> seen;
  for (uint32_t i : split.prefix) seen.insert(train.samples[i].label);

  auto record_event = [&](int batch_index) {
    EvalEvent ev;
    ev.batch_index = batch_index;
    ev.classes_seen.assign(seen.begin(), seen.end());
    ev.alpha = detail::eval_accuracy(*learner, test, seen, cfg.eval_seen_classes_only,
                                     cfg.topk);
    ev.alpha_offline = detail::eval_accuracy_head(offline_head, test, seen,
                                                  cfg.eval_seen_classes_only, cfg.topk);
    trace.events.push_back(std::move(ev));
  };

  record_event(0);

  Pcg32 stream_rng = root.split(11);
  std::set<uint32_t> visited;  // single-pass guard
  for (uint32_t i : order.indices) {
    if (!visited.insert(i).second)
      throw std::logic_error("stream revisited sample " + std::to_string(i));
  }

  uint64_t peak_buffer = 0;
  const auto* remind_learner = dynamic_cast<const RemindLearner*>(learner.get());
  for (size_t b = 1; b < order.num_batches(); ++b) {
    auto [lo, hi] = order.batch(b);
    for (size_t i = lo; i < hi; ++i) {
      const LabeledSample& s = train.samples[order.indices[i]];
      try {
        learner->fit_one(s, stream_rng);
      } catch (const std::exception& ex) {
        throw std::runtime_error("run " + detail::hex64(cfg.raw.hash()) +
                                 " failed at seq_index " + std::to_string(s.seq_index) +
                                 ": " + ex.what());
      }
      seen.insert(s.label);
    }
    if (remind_learner && remind_learner->buffer())
      peak_buffer = std::max(peak_buffer, remind_learner->buffer()->bytes_used());
    record_event(static_cast<int>(b));
  }

  ReportBundle bundle;
  bundle.trace = trace;
  bundle.omega = omega_all(trace);
  bundle.mu = mu_all(trace);
  bundle.config_hash = cfg.raw.hash();
  bundle.peak_buffer_bytes = peak_buffer;
  if (remind_learner) {
    std::vector<FeatureTensor> test_tensors;
    for (const auto& s : test.samples) test_tensors.push_back(s.tensor);
    bundle.recon_mse = reconstruction_mse(remind_learner->codebook(), test_tensors);
  }

  nlohmann::json summary;
  summary["learner"] = cfg.learner;
  summary["ordering"] = ordering_name(cfg.ordering.kind);
  summary["num_batches"] = cfg.ordering.num_batches;
  summary["seed"] = cfg.seed;
  summary["rng"] = Pcg32::kName;
  summary["config_hash"] = detail::hex64(bundle.config_hash);
  summary["topk"] = cfg.topk;
  summary["eval_scope"] = cfg.eval_seen_classes_only ? "seen" : "all";
  summary["omega_all"] = bundle.omega;
  summary["mu_all"] = bundle.mu;
  if (bundle.recon_mse >= 0.0) summary["reconstruction_mse"] = bundle.recon_mse;
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : trace.events) {
    events.push_back({{"batch", e.batch_index},
                      {"classes_seen", e.classes_seen.size()},
                      {"alpha", e.alpha},
                      {"alpha_offline", e.alpha_offline}});
  }
  summary["events"] = events;
  if (remind_learner && remind_learner->buffer()) {
    auto rep = remind_learner->buffer()->report();
    summary["buffer"] = {{"bytes_used", rep.bytes_used},
                         {"budget_bytes", rep.budget_bytes},
                         {"entries", rep.entries}};
  }
  bundle.summary_json = summary.dump(2) + "\n";

  auto t1 = std::chrono::steady_clock::now();
  bundle.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  if (cfg.write_outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    bundle.output_dir = cfg.output_dir;

    std::ofstream js(cfg.output_dir + "/summary.json", std::ios::trunc);
    js << bundle.summary_json;

    std::ofstream csv(cfg.output_dir + "/trace.csv", std::ios::trunc);
    csv << "event,classes_seen,alpha,alpha_offline\n";
    for (const auto& e : trace.events)
      csv << e.batch_index << "," << e.classes_seen.size() << "," << std::setprecision(17)
          << e.alpha << "," << e.alpha_offline << "\n";

    write_ordering_manifest(order, cfg.output_dir + "/ordering_manifest.txt");

    // Wall clock lives outside summary.json so summaries stay reproducible.
    std::ofstream log(cfg.output_dir + "/run_log.txt", std::ios::trunc);
    log << "wall_seconds " << bundle.wall_seconds << "\n"
        << "peak_buffer_bytes " << bundle.peak_buffer_bytes << "\n";

    if (remind_learner) {
      remind_learner->head().save(cfg.output_dir + "/head.ckpt");
      save_codebook(remind_learner->codebook(), cfg.output_dir + "/codebook.rmcb");
      if (remind_learner->buffer())
        remind_learner->buffer()->save(cfg.output_dir + "/buffer.rmbf",
                                       codebook_hash(remind_learner->codebook()));
    }
  }
  return bundle;
}

inline ReportBundle run_experiment(const ExperimentConfig& cfg) {
  if (cfg.train_path.empty() || cfg.test_path.empty())
    throw std::invalid_argument("config must set dataset.train and dataset.test");
  FeatureDataset train = ingest_features(cfg.train_path);
  FeatureDataset test = ingest_features(cfg.test_path);
  return run_experiment(cfg, train, test);
}

// One run per axis value, shared seed, collated into sweep.csv under the base
// output directory.
inline std::vector<ReportBundle> run_sweep(const Config& base, const std::string& axis,
                                           const std::vector<std::string>& values,
                                           const FeatureDataset* train = nullptr,
                                           const FeatureDataset* test = nullptr) {
  {
    // The axis must name a real config field.
    Config probe = base;
    probe.set(axis, values.empty() ? "0" : values.front());
    ExperimentConfig::from_config(probe);
  }
  std::vector<ReportBundle> bundles;
  std::string base_dir = base.get_string("output.dir", "out");
  for (const auto& v : values) {
    Config cfg = base;
    cfg.set(axis, v);
    cfg.set("output.dir", base_dir + "/" + axis + "=" + v);
    ExperimentConfig ec = ExperimentConfig::from_config(cfg);
    bundles.push_back(train && test ? run_experiment(ec, *train, *test)
                                    : run_experiment(ec));
  }
  if (base.get_bool("output.write", true)) {
    std::filesystem::create_directories(base_dir);
    std::ofstream csv(base_dir + "/sweep.csv", std::ios::trunc);
    csv << axis << ",omega_all,mu_all,reconstruction_mse\n";
    for (size_t i = 0; i < values.size(); ++i)
      csv << values[i] << "," << std::setprecision(17) << bundles[i].omega << ","
          << bundles[i].mu << "," << bundles[i].recon_mse << "\n";
  }
  return bundles;
}

}  // namespace remind
