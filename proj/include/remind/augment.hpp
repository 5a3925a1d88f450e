#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

struct MixupConfig {
  double alpha = 0.1;
  bool enabled = true;
};

struct CropConfig {
  double scale_min = 0.6;
  double scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  bool enabled = true;
};

inline std::pair<FeatureTensor, SoftLabel> mixup_pair(const FeatureTensor& za,
                                                      const SoftLabel& ya,
                                                      const FeatureTensor& zb,
                                                      const SoftLabel& yb,
                                                      double lambda) {
  if (za.m != zb.m || za.d != zb.d) throw std::invalid_argument("mixup_pair: shape mismatch");
  if (ya.p.size() != yb.p.size()) throw std::invalid_argument("mixup_pair: label size mismatch");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mixup_pair: lambda out of [0,1]");
  FeatureTensor z(za.m, za.d);
  float l = static_cast<float>(lambda);
  for (size_t i = 0; i < z.size(); ++i)
    z.data[i] = l * za.data[i] + (1.0f - l) * zb.data[i];
  SoftLabel y;
  y.p.resize(ya.p.size());
  for (size_t i = 0; i < y.p.size(); ++i)
    y.p[i] = l * ya.p[i] + (1.0f - l) * yb.p[i];
  return {std::move(z), std::move(y)};
}

// Positionally combine two equally sized sets, drawing one Beta(alpha, alpha)
// coefficient per pair.
inline std::vector<std::pair<FeatureTensor, SoftLabel>> mixup_sets(
    const std::vector<std::pair<FeatureTensor, SoftLabel>>& a,
    const std::vector<std::pair<FeatureTensor, SoftLabel>>& b,
    const MixupConfig& cfg, Pcg32& rng) {
  if (a.size() != b.size()) throw std::invalid_argument("mixup_sets: size mismatch");
  if (cfg.alpha <= 0.0) throw std::invalid_argument("mixup_sets: alpha <= 0");
  std::vector<std::pair<FeatureTensor, SoftLabel>> out;
  out.reserve(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    double lambda = rng.beta(cfg.alpha, cfg.alpha);
    out.push_back(mixup_pair(a[i].first, a[i].second, b[i].first, b[i].second, lambda));
  }
  return out;
}

namespace detail {

// Bilinear sample of channel ch at fractional source coordinates (sy, sx),
// clamped to the grid.
inline float bilinear_at(const FeatureTensor& t, double sy, double sx, int ch) {
  double cy = std::clamp(sy, 0.0, static_cast<double>(t.m - 1));
  double cx = std::clamp(sx, 0.0, static_cast<double>(t.m - 1));
  int y0 = static_cast<int>(std::floor(cy));
  int x0 = static_cast<int>(std::floor(cx));
  int y1 = std::min(y0 + 1, t.m - 1);
  int x1 = std::min(x0 + 1, t.m - 1);
  double fy = cy - y0;
  double fx = cx - x0;
  double v00 = t.at(y0, x0, ch);
  double v01 = t.at(y0, x1, ch);
  double v10 = t.at(y1, x0, ch);
  double v11 = t.at(y1, x1, ch);
  double top = v00 + (v01 - v00) * fx;
  double bot = v10 + (v11 - v10) * fx;
  return static_cast<float>(top + (bot - top) * fy);
}

}  // namespace detail

// Crop a random area/aspect window and bilinearly resize it back to m x m.
// Degenerate windows are retried up to 10 times, then the transform falls
// back to identity.
inline FeatureTensor random_resized_crop(const FeatureTensor& t, const CropConfig& cfg,
                                         Pcg32& rng) {
  if (!(cfg.scale_min > 0.0 && cfg.scale_min <= cfg.scale_max && cfg.scale_max <= 1.0))
    throw std::invalid_argument("random_resized_crop: bad scale range");
  if (!(cfg.aspect_min > 0.0 && cfg.aspect_min <= cfg.aspect_max))
    throw std::invalid_argument("random_resized_crop: bad aspect range");

  int m = t.m;
  int ch = m, cw = m, y0 = 0, x0 = 0;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    double area = rng.uniform(cfg.scale_min, cfg.scale_max) * m * m;
    double log_aspect = rng.uniform(std::log(cfg.aspect_min), std::log(cfg.aspect_max));
    double aspect = std::exp(log_aspect);
    int w = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    int h = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (w >= 1 && h >= 1 && w <= m && h <= m) {
      cw = w;
      ch = h;
      y0 = static_cast<int>(rng.uniform_index(static_cast<size_t>(m - h + 1)));
      x0 = static_cast<int>(rng.uniform_index(static_cast<size_t>(m - w + 1)));
      found = true;
    }
  }

  if (ch == m && cw == m && y0 == 0 && x0 == 0) return t;  // identity window

  FeatureTensor out(m, t.d);
  double sy_scale = static_cast<double>(ch) / m;
  double sx_scale = static_cast<double>(cw) / m;
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) {
      // Pixel-center mapping; reduces to the identity when the crop covers
      // the full grid.
      double sy = y0 + (y + 0.5) * sy_scale - 0.5;
      double sx = x0 + (x + 0.5) * sx_scale - 0.5;
      for (int c = 0; c < t.d; ++c)
        out.at(y, x, c) = detail::bilinear_at(t, sy, sx, c);
    }
  }
  return out;
}

}  // namespace remind
