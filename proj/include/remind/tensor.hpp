#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace remind {

// Dense m x m x d activation map, row-major spatial order, channel innermost.
struct FeatureTensor {
  int m = 0;
  int d = 0;
  std::vector<float> data;  // size m*m*d

  FeatureTensor() = default;
  FeatureTensor(int m_, int d_, float fill = 0.0f)
      : m(m_), d(d_), data(static_cast<size_t>(m_) * m_ * d_, fill) {
    if (m_ < 1 || d_ < 1) throw std::invalid_argument("FeatureTensor: m,d must be >= 1");
  }

  size_t size() const { return data.size(); }
  size_t spatial_count() const { return static_cast<size_t>(m) * m; }

  float& at(int y, int x, int ch) {
    return data[(static_cast<size_t>(y) * m + x) * d + ch];
  }
  float at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * m + x) * d + ch];
  }

  // Pointer to the d-vector at spatial location e in [0, m*m).
  const float* element(size_t e) const { return data.data() + e * d; }
  float* element(size_t e) { return data.data() + e * d; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Spatial mean over the m x m grid -> d-vector.
inline std::vector<float> mean_pool(const FeatureTensor& t) {
  std::vector<float> out(t.d, 0.0f);
  size_t n = t.spatial_count();
  for (size_t e = 0; e < n; ++e) {
    const float* p = t.element(e);
    for (int c = 0; c < t.d; ++c) out[c] += p[c];
  }
  float inv = 1.0f / static_cast<float>(n);
  for (float& v : out) v *= inv;
  return out;
}

// Probability vector over classes. A hard label is a one-hot SoftLabel.
struct SoftLabel {
  std::vector<float> p;

  SoftLabel() = default;
  explicit SoftLabel(std::vector<float> probs) : p(std::move(probs)) {}

  static SoftLabel one_hot(uint32_t k, uint32_t num_classes) {
    SoftLabel s;
    s.p.assign(num_classes, 0.0f);
    if (k >= num_classes) throw std::invalid_argument("one_hot: class out of range");
    s.p[k] = 1.0f;
    return s;
  }

  bool valid(float eps = 1e-6f) const {
    double sum = 0.0;
    for (float v : p) {
      if (v < 0.0f || !std::isfinite(v)) return false;
      sum += v;
    }
    return std::fabs(sum - 1.0) <= eps;
  }
};

struct LabeledSample {
  FeatureTensor tensor;
  uint32_t label = 0;
  uint32_t instance_id = 0;
  uint32_t seq_index = 0;
};

struct FeatureDataset {
  std::vector<LabeledSample> samples;
  uint32_t num_classes = 0;
  int m = 0;
  int d = 0;
  std::string provenance;

  size_t size() const { return samples.size(); }
};

}  // namespace remind
