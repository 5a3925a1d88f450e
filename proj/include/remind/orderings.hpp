#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/rng.hpp"
#include "remind/tensor.hpp"

namespace remind {

enum class OrderingKind { kIid, kClassIid, kInstance, kClassInstance };

inline OrderingKind parse_ordering(const std::string& s) {
  if (s == "iid") return OrderingKind::kIid;
  if (s == "class_iid") return OrderingKind::kClassIid;
  if (s == "instance") return OrderingKind::kInstance;
  if (s == "class_instance") return OrderingKind::kClassInstance;
  throw std::invalid_argument("unknown ordering: " + s);
}

inline std::string ordering_name(OrderingKind k) {
  switch (k) {
    case OrderingKind::kIid: return "iid";
    case OrderingKind::kClassIid: return "class_iid";
    case OrderingKind::kInstance: return "instance";
    case OrderingKind::kClassInstance: return "class_instance";
  }
  return "?";
}

struct OrderingSpec {
  OrderingKind kind = OrderingKind::kIid;
  int num_batches = 1;
  uint64_t seed = 0;
};

struct StreamOrder {
  std::vector<uint32_t> indices;      // permutation of [0, n)
  std::vector<size_t> batch_starts;   // num_batches + 1 boundaries into indices
  size_t num_batches() const { return batch_starts.size() - 1; }
  std::pair<size_t, size_t> batch(size_t b) const {
    return {batch_starts[b], batch_starts[b + 1]};
  }
};

namespace detail {

template <typename T>
inline void shuffle(std::vector<T>& v, Pcg32& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

// Chunk `groups` (each a run of sample indices) into nb contiguous batches
// with group counts as equal as possible.
inline StreamOrder chunk_groups(const std::vector<std::vector<uint32_t>>& groups, int nb) {
  StreamOrder out;
  size_t g = groups.size();
  out.batch_starts.push_back(0);
  size_t gi = 0;
  for (int b = 0; b < nb; ++b) {
    size_t take = g / nb + (static_cast<size_t>(b) < g % nb ? 1 : 0);
    for (size_t t = 0; t < take; ++t, ++gi)
      out.indices.insert(out.indices.end(), groups[gi].begin(), groups[gi].end());
    out.batch_starts.push_back(out.indices.size());
  }
  return out;
}

}  // namespace detail

// The four evaluation stream orders. Deterministic in (dataset, spec).
inline StreamOrder order_stream(const FeatureDataset& ds, const OrderingSpec& spec) {
  size_t n = ds.size();
  if (spec.num_batches < 1 || static_cast<size_t>(spec.num_batches) > n)
    throw std::invalid_argument("order_stream: bad num_batches");
  Pcg32 rng(spec.seed, 0x5eedULL);

  if (spec.kind == OrderingKind::kIid) {
    StreamOrder out;
    out.indices.resize(n);
    std::iota(out.indices.begin(), out.indices.end(), 0u);
    detail::shuffle(out.indices, rng);
    out.batch_starts.push_back(0);
    for (int b = 0; b < spec.num_batches; ++b) {
      size_t take = n / spec.num_batches +
                    (static_cast<size_t>(b) < n % spec.num_batches ? 1 : 0);
      out.batch_starts.push_back(out.batch_starts.back() + take);
    }
    return out;
  }

  if (spec.kind == OrderingKind::kClassIid || spec.kind == OrderingKind::kClassInstance) {
    if (ds.num_classes % spec.num_batches != 0)
      throw std::invalid_argument("order_stream: classes not divisible into batches");
    std::vector<uint32_t> class_order(ds.num_classes);
    std::iota(class_order.begin(), class_order.end(), 0u);
    detail::shuffle(class_order, rng);

    size_t per_batch = ds.num_classes / spec.num_batches;
    std::vector<std::vector<uint32_t>> groups;
    for (size_t b = 0; b < static_cast<size_t>(spec.num_batches); ++b) {
      // Samples of this batch's classes.
      std::vector<uint32_t> members;
      std::vector<bool> in_batch(ds.num_classes, false);
      for (size_t j = 0; j < per_batch; ++j) in_batch[class_order[b * per_batch + j]] = true;
      for (uint32_t i = 0; i < n; ++i)
        if (in_batch[ds.samples[i].label]) members.push_back(i);

      if (spec.kind == OrderingKind::kClassIid) {
        detail::shuffle(members, rng);
      } else {
        // Whole instances in shuffled order, each instance temporally sorted.
        std::map<std::pair<uint32_t, uint32_t>, std::vector<uint32_t>> by_instance;
        for (uint32_t i : members)
          by_instance[{ds.samples[i].label, ds.samples[i].instance_id}].push_back(i);
        std::vector<std::vector<uint32_t>> insts;
        for (auto& [key, v] : by_instance) {
          std::sort(v.begin(), v.end(), [&](uint32_t a, uint32_t b2) {
            return ds.samples[a].seq_index < ds.samples[b2].seq_index;
          });
          insts.push_back(std::move(v));
        }
        detail::shuffle(insts, rng);
        members.clear();
        for (const auto& v : insts) members.insert(members.end(), v.begin(), v.end());
      }
      groups.push_back(std::move(members));
    }
    return detail::chunk_groups(groups, spec.num_batches);
  }

  // instance: batches of whole instances, each instance's samples in
  // temporal order, instance-to-batch assignment a seeded shuffle.
  std::map<std::pair<uint32_t, uint32_t>, std::vector<uint32_t>> by_instance;
  for (uint32_t i = 0; i < n; ++i)
    by_instance[{ds.samples[i].label, ds.samples[i].instance_id}].push_back(i);
  std::vector<std::vector<uint32_t>> insts;
  for (auto& [key, v] : by_instance) {
    std::sort(v.begin(), v.end(), [&](uint32_t a, uint32_t b) {
      return ds.samples[a].seq_index < ds.samples[b].seq_index;
    });
    insts.push_back(std::move(v));
  }
  if (insts.size() < static_cast<size_t>(spec.num_batches))
    throw std::invalid_argument("order_stream: fewer instances than batches");
  detail::shuffle(insts, rng);
  return detail::chunk_groups(insts, spec.num_batches);
}

struct BaseInitSplit {
  std::vector<uint32_t> prefix;     // batch 0
  std::vector<uint32_t> remainder;  // batches 1..
};

inline BaseInitSplit base_init_split(const StreamOrder& order) {
  BaseInitSplit s;
  auto [b0, e0] = order.batch(0);
  s.prefix.assign(order.indices.begin() + b0, order.indices.begin() + e0);
  s.remainder.assign(order.indices.begin() + e0, order.indices.end());
  return s;
}

// Audit manifest: one sample index per line, "# batch k" separators.
inline void write_ordering_manifest(const StreamOrder& order, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  for (size_t b = 0; b < order.num_batches(); ++b) {
    os << "# batch " << b << "\n";
    auto [lo, hi] = order.batch(b);
    for (size_t i = lo; i < hi; ++i) os << order.indices[i] << "\n";
  }
}

}  // namespace remind
