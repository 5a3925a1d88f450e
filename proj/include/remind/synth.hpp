#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

// Class-conditional synthetic feature generator for desk-scale runs. Most
// classes are Gaussian blobs around well-separated means; the trailing
// `confusable_pairs` pairs of classes share a pooled mean and differ only in
// a bimodal +/- component, so they are not linearly separable from each
// other in pooled space.
struct SynthSpec {
  uint32_t num_classes = 10;
  uint32_t per_class = 500;
  int m = 4;
  int d = 64;
  double separation = 3.0;       // class-mean radius
  double noise = 1.0;            // per-element noise std
  double instance_jitter = 0.3;  // per-instance mean offset std
  uint32_t confusable_pairs = 1;
  double mode_amplitude = 2.5;   // half-distance between a class's two modes
  double pair_mean_offset = 0.0; // optional +/- mean shift within a pair
  uint32_t samples_per_instance = 10;
  uint64_t seed = 0;
};

inline FeatureDataset make_synthetic(const SynthSpec& spec, uint64_t stream_tag) {
  if (2 * spec.confusable_pairs > spec.num_classes)
    throw std::invalid_argument("make_synthetic: too many confusable pairs");
  Pcg32 root(spec.seed, 0x517eULL);
  Pcg32 structure = root.split(0);  // shared between train/test tags
  Pcg32 draw = root.split(1 + stream_tag);

  int d = spec.d;
  auto unit_vec = [&](Pcg32& r) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& x : v) {
      x = r.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };

  // Class structure (identical for every stream_tag given the same seed).
  uint32_t plain = spec.num_classes - 2 * spec.confusable_pairs;
  std::vector<std::vector<double>> base_mean(spec.num_classes);
  std::vector<std::vector<double>> mode_dir(spec.num_classes);
  for (uint32_t k = 0; k < plain; ++k) {
    base_mean[k] = unit_vec(structure);
    for (double& x : base_mean[k]) x *= spec.separation;
  }
  for (uint32_t p = 0; p < spec.confusable_pairs; ++p) {
    uint32_t a = plain + 2 * p;
    uint32_t b = a + 1;
    std::vector<double> shared = unit_vec(structure);
    for (double& x : shared) x *= spec.separation;
    base_mean[a] = shared;
    base_mean[b] = shared;
    if (spec.pair_mean_offset != 0.0) {
      // A small linear separation on top of the shared mean, so linear models
      // recover part of the pair instead of none of it.
      std::vector<double> sep_dir = unit_vec(structure);
      for (int i = 0; i < d; ++i) {
        base_mean[a][i] += spec.pair_mean_offset * sep_dir[i];
        base_mean[b][i] -= spec.pair_mean_offset * sep_dir[i];
      }
    }
    std::vector<double> va = unit_vec(structure);
    std::vector<double> vb = unit_vec(structure);
    // Orthogonalize vb against va so the two classes' mode axes differ.
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += va[i] * vb[i];
    double norm = 0.0;
    for (int i = 0; i < d; ++i) {
      vb[i] -= dot * va[i];
      norm += vb[i] * vb[i];
    }
    norm = std::sqrt(norm);
    for (double& x : vb) x /= norm;
    for (double& x : va) x *= spec.mode_amplitude;
    for (double& x : vb) x *= spec.mode_amplitude;
    mode_dir[a] = va;
    mode_dir[b] = vb;
  }

  FeatureDataset ds;
  ds.num_classes = spec.num_classes;
  ds.m = spec.m;
  ds.d = d;
  ds.provenance = "synthetic seed=" + std::to_string(spec.seed) +
                  " tag=" + std::to_string(stream_tag);

  uint32_t instance_id = 0;
  uint32_t seq = 0;
  size_t grid = static_cast<size_t>(spec.m) * spec.m;
  for (uint32_t k = 0; k < spec.num_classes; ++k) {
    uint32_t produced = 0;
    while (produced < spec.per_class) {
      uint32_t count = std::min(spec.samples_per_instance, spec.per_class - produced);
      std::vector<double> offset(d);
      for (double& x : offset) x = spec.instance_jitter * draw.normal();
      // One mode per instance keeps instance orderings temporally coherent.
      double mode_sign = (draw.next_double() < 0.5) ? -1.0 : 1.0;
      for (uint32_t t = 0; t < count; ++t) {
        LabeledSample s;
        s.label = k;
        s.instance_id = instance_id;
        s.seq_index = seq++;
        s.tensor = FeatureTensor(spec.m, d);
        for (size_t e = 0; e < grid; ++e) {
          float* v = s.tensor.element(e);
          for (int c = 0; c < d; ++c) {
            double val = base_mean[k][c] + offset[c] + spec.noise * draw.normal();
            if (!mode_dir[k].empty()) val += mode_sign * mode_dir[k][c];
            v[c] = static_cast<float>(val);
          }
        }
        ds.samples.push_back(std::move(s));
        ++produced;
      }
      ++instance_id;
    }
  }
  return ds;
}

inline FeatureDataset make_synthetic_train(const SynthSpec& spec) {
  return make_synthetic(spec, 0);
}

inline FeatureDataset make_synthetic_test(const SynthSpec& spec, uint32_t per_class) {
  SynthSpec t = spec;
  t.per_class = per_class;
  return make_synthetic(t, 1);
}

}  // namespace remind
