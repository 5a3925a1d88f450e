#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/feature_io.hpp"
#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

enum class Pooling { kMean, kFlatten };

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int replay_count = 20;  // r
};

// Numerically stable -sum_k target_k * log softmax(logits)_k.
inline double loss_soft_ce(const std::vector<float>& logits, const SoftLabel& target) {
  if (logits.size() != target.p.size())
    throw std::invalid_argument("loss_soft_ce: size mismatch");
  double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (float l : logits) lse += std::exp(l - mx);
  lse = mx + std::log(lse);
  double loss = 0.0;
  for (size_t k = 0; k < logits.size(); ++k)
    loss += static_cast<double>(target.p[k]) * (lse - logits[k]);
  return loss;
}

template <typename T>
inline std::vector<double> softmax(const std::vector<T>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double loss_soft_ce(const std::vector<double>& logits, const SoftLabel& target) {
  if (logits.size() != target.p.size())
    throw std::invalid_argument("loss_soft_ce: size mismatch");
  double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double l : logits) lse += std::exp(l - mx);
  lse = mx + std::log(lse);
  double loss = 0.0;
  for (size_t k = 0; k < logits.size(); ++k)
    loss += static_cast<double>(target.p[k]) * (lse - logits[k]);
  return loss;
}

// Plastic classifier F: pooling over the spatial grid, then dense layers with
// ReLU between them and a linear output. Parameters, gradients and momentum
// buffers share one flat layout (per layer: weights row-major out x in, then
// biases) so the finite-difference oracle can walk every parameter.
class HeadModel {
 public:
  HeadModel() = default;

  HeadModel(int m, int d, const std::vector<int>& hidden, int num_classes,
            Pooling pooling, Pcg32& rng)
      : m_(m), d_(d), num_classes_(num_classes), pooling_(pooling) {
    int in = input_dim();
    for (int h : hidden) {
      dims_.push_back({in, h});
      in = h;
    }
    dims_.push_back({in, num_classes});
    size_t total = 0;
    for (auto [i, o] : dims_) total += static_cast<size_t>(i) * o + o;
    params_.resize(total);
    velocity_.assign(total, 0.0f);
    // He-style init for the ReLU stack.
    size_t off = 0;
    for (auto [i, o] : dims_) {
      float scale = std::sqrt(2.0f / static_cast<float>(i));
      for (int w = 0; w < i * o; ++w) params_[off + w] = scale * static_cast<float>(rng.normal());
      off += static_cast<size_t>(i) * o;
      for (int b = 0; b < o; ++b) params_[off + b] = 0.0f;
      off += o;
    }
  }

  int input_dim() const {
    return pooling_ == Pooling::kMean ? d_ : m_ * m_ * d_;
  }
  int num_classes() const { return num_classes_; }
  int spatial() const { return m_; }
  int channels() const { return d_; }
  size_t num_params() const { return params_.size(); }

  const std::vector<float>& params() const { return params_; }
  void set_params(const std::vector<float>& p) {
    if (p.size() != params_.size()) throw std::invalid_argument("set_params: size mismatch");
    params_ = p;
  }

  std::vector<double> pool(const FeatureTensor& t) const {
    if (t.m != m_ || t.d != d_) throw std::invalid_argument("head: tensor shape mismatch");
    if (pooling_ == Pooling::kMean) {
      std::vector<double> out(d_, 0.0);
      size_t n = t.spatial_count();
      for (size_t e = 0; e < n; ++e) {
        const float* p = t.element(e);
        for (int c = 0; c < d_; ++c) out[c] += p[c];
      }
      for (double& v : out) v /= static_cast<double>(n);
      return out;
    }
    return {t.data.begin(), t.data.end()};
  }

  std::vector<float> forward(const FeatureTensor& t) const {
    std::vector<double> act = pool(t);
    size_t off = 0;
    for (size_t l = 0; l < dims_.size(); ++l) {
      act = dense(act, l, off);
      off += layer_size(l);
      if (l + 1 < dims_.size())
        for (double& v : act) v = std::max(v, 0.0);
    }
    return {act.begin(), act.end()};
  }

  // Mean soft-CE loss and its gradient over the batch, flat layout matching
  // params(). Does not modify the model.
  std::pair<double, std::vector<float>> loss_and_grad(
      const std::vector<std::pair<const FeatureTensor*, const SoftLabel*>>& batch) const {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    std::vector<float> grad(params_.size(), 0.0f);
    double total_loss = 0.0;
    size_t L = dims_.size();

    std::vector<double> gacc(params_.size(), 0.0);
    for (const auto& [tp, yp] : batch) {
      // Forward, keeping pre- and post-activation values per layer.
      std::vector<std::vector<double>> acts(L + 1);
      acts[0] = pool(*tp);
      std::vector<std::vector<double>> pre(L);
      size_t off = 0;
      for (size_t l = 0; l < L; ++l) {
        pre[l] = dense(acts[l], l, off);
        off += layer_size(l);
        acts[l + 1] = pre[l];
        if (l + 1 < L)
          for (double& v : acts[l + 1]) v = std::max(v, 0.0);
      }
      const std::vector<double>& logits = acts[L];
      total_loss += loss_soft_ce(logits, *yp);

      // Backward: d(loss)/d(logits) = softmax - target.
      std::vector<double> p = softmax(logits);
      std::vector<double> delta(p.size());
      for (size_t k = 0; k < p.size(); ++k)
        delta[k] = p[k] - yp->p[k];

      off = params_.size();
      for (size_t l = L; l-- > 0;) {
        off -= layer_size(l);
        auto [in, out] = dims_[l];
        const float* w = params_.data() + off;
        double* gw = gacc.data() + off;
        double* gb = gacc.data() + off + static_cast<size_t>(in) * out;
        const std::vector<double>& x = acts[l];
        std::vector<double> dx(in, 0.0);
        for (int o = 0; o < out; ++o) {
          double dl = delta[o];
          gb[o] += dl;
          const float* wr = w + static_cast<size_t>(o) * in;
          double* gwr = gw + static_cast<size_t>(o) * in;
          for (int i = 0; i < in; ++i) {
            gwr[i] += dl * x[i];
            dx[i] += dl * wr[i];
          }
        }
        if (l > 0) {
          // Through the ReLU of the previous layer.
          for (int i = 0; i < in; ++i)
            if (pre[l - 1][i] <= 0.0) dx[i] = 0.0;
          delta = std::move(dx);
        }
      }
    }

    double inv = 1.0 / static_cast<double>(batch.size());
    for (size_t i = 0; i < grad.size(); ++i) grad[i] = static_cast<float>(gacc[i] * inv);
    return {total_loss / batch.size(), std::move(grad)};
  }

  // Momentum SGD with decoupled L2: v <- mu*v + g; w <- w - lr*(v + wd*w).
  double sgd_step(const std::vector<std::pair<const FeatureTensor*, const SoftLabel*>>& batch,
                  double lr, const SgdConfig& cfg) {
    auto [loss, grad] = loss_and_grad(batch);
    for (float g : grad)
      if (!std::isfinite(g))
        throw std::runtime_error("sgd_step: non-finite gradient (loss=" + std::to_string(loss) + ")");
    float mu = static_cast<float>(cfg.momentum);
    float wd = static_cast<float>(cfg.weight_decay);
    float flr = static_cast<float>(lr);
    for (size_t i = 0; i < params_.size(); ++i) {
      velocity_[i] = mu * velocity_[i] + grad[i];
      params_[i] -= flr * (velocity_[i] + wd * params_[i]);
      if (!std::isfinite(params_[i])) throw std::runtime_error("sgd_step: non-finite parameter");
    }
    return loss;
  }

  // Checkpoint: magic "RMHD", u32 version=1, header, params, momentum buffers.
  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path, 0);
    os.write("RMHD", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<uint32_t>(m_));
    detail::put_u32(os, static_cast<uint32_t>(d_));
    detail::put_u32(os, static_cast<uint32_t>(num_classes_));
    detail::put_u32(os, pooling_ == Pooling::kMean ? 0 : 1);
    detail::put_u32(os, static_cast<uint32_t>(dims_.size()));
    for (auto [i, o] : dims_) {
      detail::put_u32(os, static_cast<uint32_t>(i));
      detail::put_u32(os, static_cast<uint32_t>(o));
    }
    for (float f : params_) detail::put_f32(os, f);
    for (float f : velocity_) detail::put_f32(os, f);
  }

  static HeadModel load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path, 0);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RMHD", 4) != 0) throw IoError("bad magic (expected RMHD)", 0);
    uint64_t off = 4;
    if (detail::get_u32(is, off, "version") != 1) throw IoError("unsupported head version", 4);
    HeadModel h;
    h.m_ = static_cast<int>(detail::get_u32(is, off, "m"));
    h.d_ = static_cast<int>(detail::get_u32(is, off, "d"));
    h.num_classes_ = static_cast<int>(detail::get_u32(is, off, "num_classes"));
    h.pooling_ = detail::get_u32(is, off, "pooling") == 0 ? Pooling::kMean : Pooling::kFlatten;
    uint32_t nl = detail::get_u32(is, off, "layers");
    size_t total = 0;
    for (uint32_t l = 0; l < nl; ++l) {
      int i = static_cast<int>(detail::get_u32(is, off, "in"));
      int o = static_cast<int>(detail::get_u32(is, off, "out"));
      h.dims_.push_back({i, o});
      total += static_cast<size_t>(i) * o + o;
    }
    h.params_.resize(total);
    h.velocity_.resize(total);
    for (float& f : h.params_) f = detail::get_f32(is, off, "param");
    for (float& f : h.velocity_) f = detail::get_f32(is, off, "velocity");
    return h;
  }

 private:
  size_t layer_size(size_t l) const {
    auto [i, o] = dims_[l];
    return static_cast<size_t>(i) * o + o;
  }

  std::vector<double> dense(const std::vector<double>& x, size_t l, size_t off) const {
    auto [in, out] = dims_[l];
    if (static_cast<int>(x.size()) != in) throw std::invalid_argument("dense: input size mismatch");
    const float* w = params_.data() + off;
    const float* b = params_.data() + off + static_cast<size_t>(in) * out;
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
      const float* wr = w + static_cast<size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * x[i];
      y[o] = acc;
    }
    return y;
  }

  int m_ = 0;
  int d_ = 0;
  int num_classes_ = 0;
  Pooling pooling_ = Pooling::kMean;
  std::vector<std::pair<int, int>> dims_;  // (in, out) per layer
  std::vector<float> params_;
  std::vector<float> velocity_;
};

// Per-class learning rate: starts at lr_start and decays geometrically every
// step_size new instances of that class, reaching lr_end exactly once all of
// the class's samples have been seen.
class PerClassLrSchedule {
 public:
  PerClassLrSchedule() = default;
  PerClassLrSchedule(double lr_start, double lr_end, int step_size,
                     std::vector<uint64_t> total_per_class)
      : lr_start_(lr_start), lr_end_(lr_end), step_size_(step_size),
        total_(std::move(total_per_class)), seen_(total_.size(), 0) {
    if (lr_end > lr_start) throw std::invalid_argument("schedule: lr_end > lr_start");
    if (step_size < 1) throw std::invalid_argument("schedule: step_size < 1");
  }

  double lr_for(uint32_t cls) const {
    uint64_t total = total_.at(cls);
    if (total == 0 || seen_[cls] >= total) return lr_end_;
    uint64_t num_steps = (total + step_size_ - 1) / step_size_;
    uint64_t step = std::min<uint64_t>(seen_[cls] / step_size_, num_steps);
    if (step >= num_steps) return lr_end_;
    double frac = static_cast<double>(step) / static_cast<double>(num_steps);
    return lr_start_ * std::pow(lr_end_ / lr_start_, frac);
  }

  void observe(uint32_t cls) { seen_.at(cls)++; }

  void reset_counts() { std::fill(seen_.begin(), seen_.end(), 0); }

  uint64_t seen(uint32_t cls) const { return seen_.at(cls); }

 private:
  double lr_start_ = 0.1;
  double lr_end_ = 0.001;
  int step_size_ = 100;
  std::vector<uint64_t> total_;
  std::vector<uint64_t> seen_;
};

// Indices of the k largest scores, best first. Partial selection; ties break
// to the lower class id.
inline std::vector<int> topk_indices(const std::vector<float>& scores, int k) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  int kk = std::min<int>(k, static_cast<int>(scores.size()));
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(kk);
  return idx;
}

}  // namespace remind
