#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <iostream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/augment.hpp"
#include "remind/head.hpp"
#include "remind/quantizer.hpp"
#include "remind/replay_buffer.hpp"
#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

// Streaming learner contract: one sample at a time, single pass, evaluable at
// any point via scores().
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string name() const = 0;
  // Offline phase on the first stream batch before streaming begins.
  virtual void base_initialize(const std::vector<const LabeledSample*>& prefix,
                               Pcg32& rng) = 0;
  virtual void fit_one(const LabeledSample& sample, Pcg32& rng) = 0;
  virtual std::vector<float> scores(const FeatureTensor& t) const = 0;

  std::vector<int> predict_topk(const FeatureTensor& t, int k) const {
    return topk_indices(scores(t), k);
  }
  int predict(const FeatureTensor& t) const { return predict_topk(t, 1)[0]; }
};

struct OfflineTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 0.05;
  double lr_gamma = 0.1;                          // decay factor at milestones
  std::vector<double> milestones = {0.5, 0.75};   // fractions of total epochs
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Multi-epoch shuffled mini-batch training of a head on raw features.
inline void offline_train(HeadModel& head,
                          const std::vector<const LabeledSample*>& samples,
                          const OfflineTrainConfig& cfg, Pcg32& rng) {
  if (samples.empty()) throw std::invalid_argument("offline_train: empty dataset");
  SgdConfig sgd;
  sgd.momentum = cfg.momentum;
  sgd.weight_decay = cfg.weight_decay;
  int K = head.num_classes();
  std::vector<SoftLabel> labels;
  labels.reserve(samples.size());
  for (const auto* s : samples) labels.push_back(SoftLabel::one_hot(s->label, K));

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  double lr = cfg.lr;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (double mfrac : cfg.milestones)
      if (e == static_cast<int>(mfrac * cfg.epochs) && e > 0) lr *= cfg.lr_gamma;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<std::pair<const FeatureTensor*, const SoftLabel*>> batch;
      size_t hi = std::min(order.size(), b + cfg.batch_size);
      for (size_t i = b; i < hi; ++i)
        batch.push_back({&samples[order[i]]->tensor, &labels[order[i]]});
      head.sgd_step(batch, lr, sgd);
    }
  }
}

struct HeadConfig {
  std::vector<int> hidden = {128};
  Pooling pooling = Pooling::kMean;
};

// ---------------------------------------------------------------------------
// REMIND
// ---------------------------------------------------------------------------

struct RemindOptions {
  int s = 32;
  int c = 256;
  int kmeans_iters = 25;
  uint64_t buffer_budget_bytes = 0;  // 0 disables the buffer (degenerate mode)
  SgdConfig sgd;                     // replay_count r lives here
  MixupConfig mixup;
  CropConfig crop;
  bool crop_current = true;
  bool consume_reconstructed = true;  // stream consumes decode(encode(x))
  bool mixup_replaces_replays = true; // set C replaces the plain replays
  double lr_start = 0.1;
  double lr_end = 0.001;
  int lr_step_size = 100;
  OfflineTrainConfig base_init;
  HeadConfig head;
};

class RemindLearner : public Learner {
 public:
  RemindLearner(int m, int d, int num_classes, const RemindOptions& opt,
                std::vector<uint64_t> stream_totals_per_class)
      : m_(m), d_(d), num_classes_(num_classes), opt_(opt),
        stream_totals_(std::move(stream_totals_per_class)) {
    if (d % opt.s != 0) throw std::invalid_argument("remind: d not divisible by s");
  }

  std::string name() const override { return "remind"; }

  // Train the head offline on the raw prefix, train the quantizer on all
  // prefix tensors, fill the buffer with encoded prefix samples, then reset
  // the per-class schedule for the streaming phase.
  void base_initialize(const std::vector<const LabeledSample*>& prefix,
                       Pcg32& rng) override {
    if (prefix.empty()) throw std::invalid_argument("remind: empty base-init prefix");
    Pcg32 head_rng = rng.split(1);
    head_ = HeadModel(m_, d_, opt_.head.hidden, num_classes_, opt_.head.pooling, head_rng);
    Pcg32 train_rng = rng.split(2);
    offline_train(head_, prefix, opt_.base_init, train_rng);

    std::vector<FeatureTensor> tensors;
    tensors.reserve(prefix.size());
    for (const auto* s : prefix) tensors.push_back(s->tensor);
    size_t elements = 0;
    for (const auto& t : tensors) elements += t.spatial_count();
    if (elements < static_cast<size_t>(opt_.c))
      std::cerr << "remind: base-init prefix has fewer tensor-elements (" << elements
                << ") than codebook size " << opt_.c << "; duplicated centroids expected\n";
    Pcg32 pq_rng = rng.split(3);
    cb_ = train_pq(tensors, opt_.s, opt_.c, opt_.kmeans_iters, pq_rng);
    bytes_per_sample_ = sample_bytes(m_, opt_.s, opt_.c);

    if (opt_.buffer_budget_bytes > 0) {
      buffer_ = std::make_unique<ReplayBuffer>(opt_.buffer_budget_bytes);
      Pcg32 fill_rng = rng.split(4);
      for (const auto* s : prefix)
        buffer_->insert(encode(cb_, *s), bytes_per_sample_, fill_rng);
    }

    schedule_ = PerClassLrSchedule(opt_.lr_start, opt_.lr_end, opt_.lr_step_size,
                                   stream_totals_);
    initialized_ = true;
  }

  void fit_one(const LabeledSample& sample, Pcg32& rng) override {
    if (!initialized_) throw std::logic_error("remind: base_initialize not called");
    QuantizedSample q = encode(cb_, sample);

    // Owned storage for the minibatch.
    std::vector<FeatureTensor> tensors;
    std::vector<SoftLabel> labels;
    int r = opt_.sgd.replay_count;
    tensors.reserve(2 * r + 1);
    labels.reserve(2 * r + 1);

    if (buffer_ && !buffer_->empty() && r > 0) {
      auto decode_set = [&](const std::vector<const QuantizedSample*>& drawn) {
        std::vector<std::pair<FeatureTensor, SoftLabel>> set;
        set.reserve(drawn.size());
        for (const auto* dq : drawn) {
          FeatureTensor t = decode(cb_, *dq);
          if (opt_.crop.enabled) t = random_resized_crop(t, opt_.crop, rng);
          set.push_back({std::move(t), SoftLabel::one_hot(dq->label, num_classes_)});
        }
        return set;
      };
      auto set_a = decode_set(buffer_->sample_uniform(r, rng));
      if (opt_.mixup.enabled) {
        auto set_b = decode_set(buffer_->sample_uniform(r, rng));
        auto mixed = mixup_sets(set_a, set_b, opt_.mixup, rng);
        if (opt_.mixup_replaces_replays) {
          set_a = std::move(mixed);
        } else {
          for (auto& p : mixed) set_a.push_back(std::move(p));
        }
      }
      for (auto& [t, y] : set_a) {
        tensors.push_back(std::move(t));
        labels.push_back(std::move(y));
      }
    }

    FeatureTensor current = opt_.consume_reconstructed ? decode(cb_, q) : sample.tensor;
    if (opt_.crop.enabled && opt_.crop_current)
      current = random_resized_crop(current, opt_.crop, rng);
    tensors.push_back(std::move(current));
    labels.push_back(SoftLabel::one_hot(sample.label, num_classes_));

    std::vector<std::pair<const FeatureTensor*, const SoftLabel*>> batch;
    batch.reserve(tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) batch.push_back({&tensors[i], &labels[i]});

    double lr = schedule_.lr_for(sample.label);
    head_.sgd_step(batch, lr, opt_.sgd);
    schedule_.observe(sample.label);

    if (buffer_) buffer_->insert(std::move(q), bytes_per_sample_, rng);
  }

  // Inference quantizes and reconstructs the input, matching training-time
  // input statistics.
  std::vector<float> scores(const FeatureTensor& t) const override {
    return head_.forward(reconstruct(cb_, t));
  }

  const HeadModel& head() const { return head_; }
  const Codebook& codebook() const { return cb_; }
  const ReplayBuffer* buffer() const { return buffer_.get(); }
  const PerClassLrSchedule& schedule() const { return schedule_; }

 private:
  int m_, d_, num_classes_;
  RemindOptions opt_;
  std::vector<uint64_t> stream_totals_;
  HeadModel head_;
  Codebook cb_;
  std::unique_ptr<ReplayBuffer> buffer_;
  PerClassLrSchedule schedule_;
  uint64_t bytes_per_sample_ = 0;
  bool initialized_ = false;
};

// ---------------------------------------------------------------------------
// Fine-Tune: one sgd step per sample, no buffer. The catastrophic-forgetting
// control.
// ---------------------------------------------------------------------------

struct FineTuneOptions {
  SgdConfig sgd;
  double lr_start = 0.1;
  double lr_end = 0.001;
  int lr_step_size = 100;
  OfflineTrainConfig base_init;
  HeadConfig head;
};

class FineTuneLearner : public Learner {
 public:
  FineTuneLearner(int m, int d, int num_classes, const FineTuneOptions& opt,
                  std::vector<uint64_t> stream_totals_per_class)
      : m_(m), d_(d), num_classes_(num_classes), opt_(opt),
        stream_totals_(std::move(stream_totals_per_class)) {}

  std::string name() const override { return "finetune"; }

  void base_initialize(const std::vector<const LabeledSample*>& prefix,
                       Pcg32& rng) override {
    Pcg32 head_rng = rng.split(1);
    head_ = HeadModel(m_, d_, opt_.head.hidden, num_classes_, opt_.head.pooling, head_rng);
    Pcg32 train_rng = rng.split(2);
    offline_train(head_, prefix, opt_.base_init, train_rng);
    schedule_ = PerClassLrSchedule(opt_.lr_start, opt_.lr_end, opt_.lr_step_size,
                                   stream_totals_);
  }

  void fit_one(const LabeledSample& sample, Pcg32&) override {
    SoftLabel y = SoftLabel::one_hot(sample.label, num_classes_);
    std::vector<std::pair<const FeatureTensor*, const SoftLabel*>> batch{
        {&sample.tensor, &y}};
    head_.sgd_step(batch, schedule_.lr_for(sample.label), opt_.sgd);
    schedule_.observe(sample.label);
  }

  std::vector<float> scores(const FeatureTensor& t) const override {
    return head_.forward(t);
  }

  const HeadModel& head() const { return head_; }

 private:
  int m_, d_, num_classes_;
  FineTuneOptions opt_;
  std::vector<uint64_t> stream_totals_;
  HeadModel head_;
  PerClassLrSchedule schedule_;
};

// ---------------------------------------------------------------------------
// SLDA: running class means + tied covariance over pooled feature vectors,
// classifying by the closest Gaussian's linear discriminant.
// ---------------------------------------------------------------------------

class SldaLearner : public Learner {
 public:
  SldaLearner(int m, int d, int num_classes, double shrinkage = 1e-4)
      : d_(d), num_classes_(num_classes), shrinkage_(shrinkage),
        means_(num_classes, std::vector<double>(d, 0.0)), counts_(num_classes, 0),
        scatter_(Eigen::MatrixXd::Zero(d, d)) {
    (void)m;
  }

  std::string name() const override { return "slda"; }

  void base_initialize(const std::vector<const LabeledSample*>& prefix,
                       Pcg32&) override {
    for (const auto* s : prefix) fit_vector(mean_pool(s->tensor), s->label);
  }

  void fit_one(const LabeledSample& sample, Pcg32&) override {
    fit_vector(mean_pool(sample.tensor), sample.label);
  }

  // Welford per class, summed into one tied scatter: the covariance update
  // uses the pre-update mean of the sample's class.
  void fit_vector(const std::vector<float>& x, uint32_t y) {
    Eigen::VectorXd v(d_);
    for (int i = 0; i < d_; ++i) v[i] = x[i];
    auto& mu = means_[y];
    counts_[y]++;
    total_++;
    Eigen::VectorXd delta_pre(d_);
    for (int i = 0; i < d_; ++i) delta_pre[i] = v[i] - mu[i];
    for (int i = 0; i < d_; ++i) mu[i] += delta_pre[i] / counts_[y];
    Eigen::VectorXd delta_post(d_);
    for (int i = 0; i < d_; ++i) delta_post[i] = v[i] - mu[i];
    scatter_.noalias() += delta_pre * delta_post.transpose();
    dirty_ = true;
  }

  std::vector<float> scores(const FeatureTensor& t) const override {
    return scores_vector(mean_pool(t));
  }

  std::vector<float> scores_vector(const std::vector<float>& x) const {
    refresh();
    Eigen::VectorXd v(d_);
    for (int i = 0; i < d_; ++i) v[i] = x[i];
    std::vector<float> out(num_classes_, -std::numeric_limits<float>::infinity());
    for (int k = 0; k < num_classes_; ++k) {
      if (counts_[k] == 0) continue;
      out[k] = static_cast<float>(weights_.col(k).dot(v) + biases_[k]);
    }
    return out;
  }

  const std::vector<double>& class_mean(uint32_t k) const { return means_[k]; }
  uint64_t class_count(uint32_t k) const { return counts_[k]; }
  Eigen::MatrixXd covariance() const {
    return total_ > 0 ? Eigen::MatrixXd(scatter_ / static_cast<double>(total_))
                      : Eigen::MatrixXd::Zero(d_, d_);
  }

 private:
  void refresh() const {
    if (!dirty_) return;
    Eigen::MatrixXd sigma = covariance();
    Eigen::MatrixXd shrunk =
        (1.0 - shrinkage_) * sigma + shrinkage_ * Eigen::MatrixXd::Identity(d_, d_);
    Eigen::LLT<Eigen::MatrixXd> llt(shrunk);
    weights_.resize(d_, num_classes_);
    biases_.assign(num_classes_, 0.0);
    for (int k = 0; k < num_classes_; ++k) {
      Eigen::VectorXd mu(d_);
      for (int i = 0; i < d_; ++i) mu[i] = means_[k][i];
      Eigen::VectorXd w = llt.solve(mu);
      weights_.col(k) = w;
      biases_[k] = -0.5 * mu.dot(w);
    }
    dirty_ = false;
  }

  int d_, num_classes_;
  double shrinkage_;
  std::vector<std::vector<double>> means_;
  std::vector<uint64_t> counts_;
  Eigen::MatrixXd scatter_;
  uint64_t total_ = 0;
  mutable Eigen::MatrixXd weights_;
  mutable std::vector<double> biases_;
  mutable bool dirty_ = true;
};

// ---------------------------------------------------------------------------
// ExStream-style prototype buffer: fixed per-class capacity, merging the two
// nearest prototypes on overflow, head retrained on the whole buffer after
// every update.
// ---------------------------------------------------------------------------

struct ExStreamOptions {
  int capacity_per_class = 20;
  double lr = 0.01;
  SgdConfig sgd;
  OfflineTrainConfig base_init;
  std::vector<int> hidden = {128};
};

class ExStreamLearner : public Learner {
 public:
  struct Prototype {
    std::vector<double> v;
    uint64_t merge_count = 1;
  };

  ExStreamLearner(int m, int d, int num_classes, const ExStreamOptions& opt)
      : d_(d), num_classes_(num_classes), opt_(opt), protos_(num_classes) {
    if (opt.capacity_per_class < 1) throw std::invalid_argument("exstream: capacity < 1");
    (void)m;
  }

  std::string name() const override { return "exstream"; }

  void base_initialize(const std::vector<const LabeledSample*>& prefix,
                       Pcg32& rng) override {
    Pcg32 head_rng = rng.split(1);
    // The head consumes pooled vectors, modeled as 1 x 1 x d tensors.
    head_ = HeadModel(1, d_, opt_.hidden, num_classes_, Pooling::kMean, head_rng);
    for (const auto* s : prefix) insert_prototype(mean_pool(s->tensor), s->label);
    Pcg32 train_rng = rng.split(2);
    train_on_buffer(opt_.base_init.epochs, train_rng);
  }

  void fit_one(const LabeledSample& sample, Pcg32& rng) override {
    insert_prototype(mean_pool(sample.tensor), sample.label);
    train_on_buffer(1, rng);
  }

  std::vector<float> scores(const FeatureTensor& t) const override {
    return head_.forward(as_tensor(mean_pool(t)));
  }

  const std::vector<Prototype>& prototypes(uint32_t cls) const { return protos_[cls]; }
  const HeadModel& head() const { return head_; }

  void insert_prototype(const std::vector<float>& x, uint32_t y) {
    Prototype p;
    p.v.assign(x.begin(), x.end());
    auto& list = protos_[y];
    list.push_back(std::move(p));
    if (static_cast<int>(list.size()) > opt_.capacity_per_class) merge_closest(list);
  }

 private:
  static FeatureTensor as_tensor(const std::vector<float>& v) {
    FeatureTensor t(1, static_cast<int>(v.size()));
    t.data = v;
    return t;
  }

  // Replace the two closest prototypes (Euclidean) with their merge_count-
  // weighted mean, counts summed.
  void merge_closest(std::vector<Prototype>& list) {
    size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < list.size(); ++i) {
      for (size_t j = i + 1; j < list.size(); ++j) {
        double acc = 0.0;
        for (int c = 0; c < d_; ++c) {
          double diff = list[i].v[c] - list[j].v[c];
          acc += diff * diff;
        }
        if (acc < best) {
          best = acc;
          bi = i;
          bj = j;
        }
      }
    }
    Prototype merged;
    merged.merge_count = list[bi].merge_count + list[bj].merge_count;
    merged.v.resize(d_);
    double wi = static_cast<double>(list[bi].merge_count);
    double wj = static_cast<double>(list[bj].merge_count);
    for (int c = 0; c < d_; ++c)
      merged.v[c] = (wi * list[bi].v[c] + wj * list[bj].v[c]) / (wi + wj);
    list.erase(list.begin() + bj);
    list[bi] = std::move(merged);
  }

  // One pass of the head over every stored prototype, whole buffer as one
  // batch per epoch.
  void train_on_buffer(int epochs, Pcg32&) {
    std::vector<FeatureTensor> tensors;
    std::vector<SoftLabel> labels;
    for (uint32_t k = 0; k < protos_.size(); ++k) {
      for (const auto& p : protos_[k]) {
        std::vector<float> v(p.v.begin(), p.v.end());
        tensors.push_back(as_tensor(v));
        labels.push_back(SoftLabel::one_hot(k, num_classes_));
      }
    }
    if (tensors.empty()) return;
    std::vector<std::pair<const FeatureTensor*, const SoftLabel*>> batch;
    for (size_t i = 0; i < tensors.size(); ++i) batch.push_back({&tensors[i], &labels[i]});
    for (int e = 0; e < epochs; ++e) head_.sgd_step(batch, opt_.lr, opt_.sgd);
  }

  int d_, num_classes_;
  ExStreamOptions opt_;
  std::vector<std::vector<Prototype>> protos_;
  HeadModel head_;
};

// ---------------------------------------------------------------------------
// Offline upper bound: trained on the full training set before evaluation;
// streaming updates are no-ops.
// ---------------------------------------------------------------------------

class OfflineLearner : public Learner {
 public:
  OfflineLearner(int m, int d, int num_classes, const OfflineTrainConfig& cfg,
                 const HeadConfig& head_cfg)
      : m_(m), d_(d), num_classes_(num_classes), cfg_(cfg), head_cfg_(head_cfg) {}

  std::string name() const override { return "offline"; }

  void base_initialize(const std::vector<const LabeledSample*>& all,
                       Pcg32& rng) override {
    Pcg32 head_rng = rng.split(1);
    head_ = HeadModel(m_, d_, head_cfg_.hidden, num_classes_, head_cfg_.pooling, head_rng);
    Pcg32 train_rng = rng.split(2);
    offline_train(head_, all, cfg_, train_rng);
  }

  void fit_one(const LabeledSample&, Pcg32&) override {}

  std::vector<float> scores(const FeatureTensor& t) const override {
    return head_.forward(t);
  }

  const HeadModel& head() const { return head_; }

 private:
  int m_, d_, num_classes_;
  OfflineTrainConfig cfg_;
  HeadConfig head_cfg_;
  HeadModel head_;
};

}  // namespace remind
