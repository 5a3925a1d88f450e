#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "remind/feature_io.hpp"
#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

// Product-quantizer model: s sub-codebooks of c centroids over contiguous
// d/s-channel blocks. Immutable once trained.
struct Codebook {
  int s = 0;
  int c = 0;
  int sub_dim = 0;
  std::vector<float> centroids;  // s * c * sub_dim
  uint64_t trained_on = 0;       // tensor-elements used for training

  int dim() const { return s * sub_dim; }
  const float* centroid(int part, int code) const {
    return centroids.data() + (static_cast<size_t>(part) * c + code) * sub_dim;
  }
};

// m x m x s array of code indices plus identity. Codes are held as u16 in
// memory; on-disk and budget accounting width is 1 byte when c <= 256.
struct QuantizedSample {
  int m = 0;
  int s = 0;
  std::vector<uint16_t> codes;  // m*m*s
  uint32_t label = 0;
  uint32_t instance_id = 0;
  uint32_t seq_index = 0;
};

inline uint64_t sample_bytes(int m, int s, int c) {
  if (c > 65536) throw std::invalid_argument("sample_bytes: c > 65536");
  uint64_t width = (c <= 256) ? 1 : 2;
  return static_cast<uint64_t>(m) * m * s * width;
}

inline uint64_t codebook_bytes(const Codebook& cb) {
  return static_cast<uint64_t>(cb.s) * cb.c * cb.sub_dim * 4;
}

namespace detail {

inline double sq_dist(const float* a, const float* b, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid by squared Euclidean distance; ties break to the lowest
// index (strict < keeps the first best).
inline int nearest_centroid(const float* v, const float* centroids, int k, int dim,
                            double* out_dist = nullptr) {
  int best = 0;
  double best_d = sq_dist(v, centroids, dim);
  for (int j = 1; j < k; ++j) {
    double dj = sq_dist(v, centroids + static_cast<size_t>(j) * dim, dim);
    if (dj < best_d) {
      best_d = dj;
      best = j;
    }
  }
  if (out_dist) *out_dist = best_d;
  return best;
}

}  // namespace detail

struct KmeansResult {
  std::vector<float> centroids;           // k * dim
  std::vector<int> assignment;            // per input vector
  std::vector<double> objective_history;  // sum of squared distances, per iteration
  double objective = 0.0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
// promoting the point farthest from its current centroid. The objective is
// recomputed after every update and must be non-increasing.
inline KmeansResult train_kmeans(const float* vectors, size_t n, int dim, int k,
                                 int iters, Pcg32& rng) {
  if (n == 0) throw std::invalid_argument("train_kmeans: no vectors");
  if (k < 1) throw std::invalid_argument("train_kmeans: k < 1");

  auto vec = [&](size_t i) { return vectors + i * dim; };

  KmeansResult res;
  res.centroids.resize(static_cast<size_t>(k) * dim);

  // k-means++ seeding.
  {
    size_t first = rng.uniform_index(n);
    std::copy(vec(first), vec(first) + dim, res.centroids.begin());
    std::vector<double> d2(n);
    for (size_t i = 0; i < n; ++i) d2[i] = detail::sq_dist(vec(i), res.centroids.data(), dim);
    for (int j = 1; j < k; ++j) {
      double total = 0.0;
      for (double v : d2) total += v;
      size_t pick;
      if (total <= 0.0) {
        pick = rng.uniform_index(n);  // all points already covered; duplicate
      } else {
        double target = rng.next_double() * total;
        double acc = 0.0;
        pick = n - 1;
        for (size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      }
      float* cj = res.centroids.data() + static_cast<size_t>(j) * dim;
      std::copy(vec(pick), vec(pick) + dim, cj);
      for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::sq_dist(vec(i), cj, dim));
    }
  }

  res.assignment.assign(n, 0);
  std::vector<double> sums(static_cast<size_t>(k) * dim);
  std::vector<size_t> counts(k);
  std::vector<double> dists(n);

  auto assign_all = [&]() {
    double obj = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double d;
      res.assignment[i] = detail::nearest_centroid(vec(i), res.centroids.data(), k, dim, &d);
      dists[i] = d;
      obj += d;
    }
    return obj;
  };

  double obj = assign_all();
  res.objective_history.push_back(obj);

  for (int it = 0; it < iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (size_t i = 0; i < n; ++i) {
      int a = res.assignment[i];
      const float* p = vec(i);
      double* sp = sums.data() + static_cast<size_t>(a) * dim;
      for (int c = 0; c < dim; ++c) sp[c] += p[c];
      counts[a]++;
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      float* cj = res.centroids.data() + static_cast<size_t>(j) * dim;
      const double* sp = sums.data() + static_cast<size_t>(j) * dim;
      for (int c = 0; c < dim; ++c) cj[c] = static_cast<float>(sp[c] / counts[j]);
    }

    obj = assign_all();

    // Empty-cluster repair: promote the farthest point to the empty slot.
    bool repaired = false;
    for (int j = 0; j < k; ++j) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int a : res.assignment) counts[a]++;
      if (counts[j] > 0) continue;
      size_t worst = 0;
      double worst_d = -1.0;
      for (size_t i = 0; i < n; ++i) {
        if (dists[i] > worst_d && counts[res.assignment[i]] > 1) {
          worst_d = dists[i];
          worst = i;
        }
      }
      if (worst_d < 0.0) break;  // only singleton clusters left; duplicates allowed
      float* cj = res.centroids.data() + static_cast<size_t>(j) * dim;
      std::copy(vec(worst), vec(worst) + dim, cj);
      repaired = true;
    }
    if (repaired) obj = assign_all();

    if (!res.objective_history.empty() && obj > res.objective_history.back() + 1e-9)
      throw std::logic_error("train_kmeans: objective increased");
    res.objective_history.push_back(obj);
    if (obj == res.objective_history[res.objective_history.size() - 2]) break;
  }

  res.objective = res.objective_history.back();
  return res;
}

// Pool every spatial element of every training tensor and run an independent
// k-means per contiguous channel partition.
inline Codebook train_pq(const std::vector<FeatureTensor>& tensors, int s, int c,
                         int iters, Pcg32& rng) {
  if (tensors.empty()) throw std::invalid_argument("train_pq: no tensors");
  int d = tensors.front().d;
  for (const auto& t : tensors)
    if (t.d != d) throw std::invalid_argument("train_pq: mixed channel counts");
  if (d % s != 0) throw std::invalid_argument("train_pq: d not divisible by s");

  Codebook cb;
  cb.s = s;
  cb.c = c;
  cb.sub_dim = d / s;
  cb.centroids.resize(static_cast<size_t>(s) * c * cb.sub_dim);

  size_t total = 0;
  for (const auto& t : tensors) total += t.spatial_count();
  cb.trained_on = total;

  std::vector<float> part(total * cb.sub_dim);
  for (int p = 0; p < s; ++p) {
    size_t row = 0;
    for (const auto& t : tensors) {
      size_t sc = t.spatial_count();
      for (size_t e = 0; e < sc; ++e) {
        const float* src = t.element(e) + p * cb.sub_dim;
        std::copy(src, src + cb.sub_dim, part.data() + (row++) * cb.sub_dim);
      }
    }
    Pcg32 part_rng = rng.split(static_cast<uint64_t>(p));
    KmeansResult km = train_kmeans(part.data(), total, cb.sub_dim, c, iters, part_rng);
    std::copy(km.centroids.begin(), km.centroids.end(),
              cb.centroids.begin() + (static_cast<size_t>(p) * c) * cb.sub_dim);
  }
  return cb;
}

inline QuantizedSample encode(const Codebook& cb, const FeatureTensor& t) {
  if (t.d != cb.dim()) throw std::invalid_argument("encode: channel count mismatch");
  QuantizedSample q;
  q.m = t.m;
  q.s = cb.s;
  q.codes.resize(t.spatial_count() * cb.s);
  size_t n = t.spatial_count();
  for (size_t e = 0; e < n; ++e) {
    const float* v = t.element(e);
    for (int p = 0; p < cb.s; ++p) {
      int code = detail::nearest_centroid(v + p * cb.sub_dim, cb.centroid(p, 0), cb.c,
                                          cb.sub_dim);
      q.codes[e * cb.s + p] = static_cast<uint16_t>(code);
    }
  }
  return q;
}

inline QuantizedSample encode(const Codebook& cb, const LabeledSample& s) {
  QuantizedSample q = encode(cb, s.tensor);
  q.label = s.label;
  q.instance_id = s.instance_id;
  q.seq_index = s.seq_index;
  return q;
}

inline FeatureTensor decode(const Codebook& cb, const QuantizedSample& q) {
  FeatureTensor t(q.m, cb.dim());
  size_t n = t.spatial_count();
  for (size_t e = 0; e < n; ++e) {
    float* v = t.element(e);
    for (int p = 0; p < cb.s; ++p) {
      uint16_t code = q.codes[e * cb.s + p];
      if (code >= cb.c) throw std::out_of_range("decode: code out of range");
      const float* cen = cb.centroid(p, code);
      std::copy(cen, cen + cb.sub_dim, v + p * cb.sub_dim);
    }
  }
  return t;
}

inline FeatureTensor reconstruct(const Codebook& cb, const FeatureTensor& t) {
  return decode(cb, encode(cb, t));
}

inline double reconstruction_mse(const Codebook& cb,
                                 const std::vector<FeatureTensor>& tensors) {
  if (tensors.empty()) throw std::invalid_argument("reconstruction_mse: empty input");
  double acc = 0.0;
  size_t count = 0;
  for (const auto& t : tensors) {
    FeatureTensor r = reconstruct(cb, t);
    for (size_t i = 0; i < t.size(); ++i) {
      double diff = static_cast<double>(t.data[i]) - static_cast<double>(r.data[i]);
      acc += diff * diff;
    }
    count += t.size();
  }
  return acc / static_cast<double>(count);
}

// Codebook file: magic "RMCB", u32 version=1, u32 s, u32 c, u32 sub_dim,
// then s*c*sub_dim f32 little-endian.
inline void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path, 0);
  os.write("RMCB", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(cb.s));
  detail::put_u32(os, static_cast<uint32_t>(cb.c));
  detail::put_u32(os, static_cast<uint32_t>(cb.sub_dim));
  for (float f : cb.centroids) detail::put_f32(os, f);
}

inline Codebook load_codebook(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path, 0);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RMCB", 4) != 0) throw IoError("bad magic (expected RMCB)", 0);
  uint64_t off = 4;
  uint32_t version = detail::get_u32(is, off, "version");
  if (version != 1) throw IoError("unsupported codebook version", 4);
  Codebook cb;
  cb.s = static_cast<int>(detail::get_u32(is, off, "s"));
  cb.c = static_cast<int>(detail::get_u32(is, off, "c"));
  cb.sub_dim = static_cast<int>(detail::get_u32(is, off, "sub_dim"));
  cb.centroids.resize(static_cast<size_t>(cb.s) * cb.c * cb.sub_dim);
  for (float& f : cb.centroids) f = detail::get_f32(is, off, "centroid");
  return cb;
}

// FNV-1a over the serialized centroid bytes; ties a buffer checkpoint to the
// codebook that produced its codes.
inline uint64_t codebook_hash(const Codebook& cb) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  uint32_t hdr[3] = {static_cast<uint32_t>(cb.s), static_cast<uint32_t>(cb.c),
                     static_cast<uint32_t>(cb.sub_dim)};
  mix(hdr, sizeof(hdr));
  mix(cb.centroids.data(), cb.centroids.size() * sizeof(float));
  return h;
}

}  // namespace remind
