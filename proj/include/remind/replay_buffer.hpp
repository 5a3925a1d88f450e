#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/quantizer.hpp"
#include "remind/rng.hpp"

namespace remind {

struct CapacityReport {
  uint64_t bytes_used = 0;
  uint64_t budget_bytes = 0;
  size_t entries = 0;
  std::map<uint32_t, size_t> per_class_count;
};

// Byte-budgeted store of quantized samples. When an insert would exceed the
// budget, a class with the maximal count is chosen (ties broken uniformly)
// and one of its members is removed uniformly at random; the sample being
// inserted participates in that draw like any other member.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(uint64_t budget_bytes) : budget_(budget_bytes) {
    if (budget_bytes == 0) throw std::invalid_argument("ReplayBuffer: zero budget");
  }

  void insert(QuantizedSample q, uint64_t bytes, Pcg32& rng) {
    if (bytes > budget_)
      throw std::invalid_argument("ReplayBuffer: sample larger than whole budget");
    push(std::move(q), bytes);
    while (bytes_used_ > budget_) evict_one(rng);
  }

  // r draws uniform over entries: without replacement when r <= size, with
  // replacement otherwise. The buffer itself is unchanged.
  std::vector<const QuantizedSample*> sample_uniform(size_t r, Pcg32& rng) const {
    if (entries_.empty()) throw std::logic_error("sample_uniform: empty buffer");
    std::vector<const QuantizedSample*> out;
    out.reserve(r);
    if (r <= entries_.size()) {
      std::vector<size_t> idx(entries_.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (size_t i = 0; i < r; ++i) {
        size_t j = i + rng.uniform_index(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(&entries_[idx[i]].q);
      }
    } else {
      for (size_t i = 0; i < r; ++i)
        out.push_back(&entries_[rng.uniform_index(entries_.size())].q);
    }
    return out;
  }

  CapacityReport report() const {
    CapacityReport r;
    r.bytes_used = bytes_used_;
    r.budget_bytes = budget_;
    r.entries = entries_.size();
    for (const auto& [cls, list] : class_index_)
      if (!list.empty()) r.per_class_count[cls] = list.size();
    return r;
  }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  uint64_t bytes_used() const { return bytes_used_; }
  uint64_t budget_bytes() const { return budget_; }

  const QuantizedSample& entry(size_t i) const { return entries_[i].q; }

  // Snapshot format: magic "RMBF", u32 version=1, u64 codebook hash,
  // u64 budget, u32 entry count, then per entry: u32 m, u32 s, u32 label,
  // u32 instance_id, u32 seq_index, u64 bytes, m*m*s u16 codes.
  void save(const std::string& path, uint64_t cb_hash) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path, 0);
    os.write("RMBF", 4);
    detail::put_u32(os, 1);
    put_u64(os, cb_hash);
    put_u64(os, budget_);
    detail::put_u32(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      detail::put_u32(os, static_cast<uint32_t>(e.q.m));
      detail::put_u32(os, static_cast<uint32_t>(e.q.s));
      detail::put_u32(os, e.q.label);
      detail::put_u32(os, e.q.instance_id);
      detail::put_u32(os, e.q.seq_index);
      put_u64(os, e.bytes);
      for (uint16_t code : e.q.codes) {
        unsigned char b[2] = {static_cast<unsigned char>(code & 0xff),
                              static_cast<unsigned char>(code >> 8)};
        os.write(reinterpret_cast<const char*>(b), 2);
      }
    }
  }

  static ReplayBuffer load(const std::string& path, uint64_t* out_cb_hash = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path, 0);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RMBF", 4) != 0) throw IoError("bad magic (expected RMBF)", 0);
    uint64_t off = 4;
    if (detail::get_u32(is, off, "version") != 1) throw IoError("unsupported buffer version", 4);
    uint64_t cb_hash = get_u64(is, off);
    if (out_cb_hash) *out_cb_hash = cb_hash;
    uint64_t budget = get_u64(is, off);
    uint32_t count = detail::get_u32(is, off, "count");
    ReplayBuffer buf(budget);
    for (uint32_t i = 0; i < count; ++i) {
      QuantizedSample q;
      q.m = static_cast<int>(detail::get_u32(is, off, "m"));
      q.s = static_cast<int>(detail::get_u32(is, off, "s"));
      q.label = detail::get_u32(is, off, "label");
      q.instance_id = detail::get_u32(is, off, "instance_id");
      q.seq_index = detail::get_u32(is, off, "seq_index");
      uint64_t bytes = get_u64(is, off);
      size_t ncodes = static_cast<size_t>(q.m) * q.m * q.s;
      q.codes.resize(ncodes);
      for (size_t v = 0; v < ncodes; ++v) {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        if (!is) throw IoError("truncated codes", off);
        off += 2;
        q.codes[v] = static_cast<uint16_t>(b[0] | (b[1] << 8));
      }
      buf.push(std::move(q), bytes);
      if (buf.bytes_used_ > budget) throw IoError("snapshot exceeds its own budget", off);
    }
    return buf;
  }

 private:
  struct Entry {
    QuantizedSample q;
    uint64_t bytes = 0;
    size_t pos_in_class = 0;
  };

  void push(QuantizedSample q, uint64_t bytes) {
    Entry e;
    e.q = std::move(q);
    e.bytes = bytes;
    auto& list = class_index_[e.q.label];
    e.pos_in_class = list.size();
    list.push_back(entries_.size());
    bytes_used_ += bytes;
    entries_.push_back(std::move(e));
  }

  void evict_one(Pcg32& rng) {
    // Maximal-count classes, scanned in ascending class id for determinism.
    size_t max_count = 0;
    for (const auto& [cls, list] : class_index_)
      max_count = std::max(max_count, list.size());
    std::vector<uint32_t> tied;
    for (const auto& [cls, list] : class_index_)
      if (list.size() == max_count && max_count > 0) tied.push_back(cls);
    uint32_t victim_class = tied[rng.uniform_index(tied.size())];
    auto& list = class_index_[victim_class];
    size_t pos = rng.uniform_index(list.size());
    remove_entry(list[pos]);
  }

  void remove_entry(size_t idx) {
    // Swap-pop in both the entry vector and the per-class index list.
    Entry& e = entries_[idx];
    auto& list = class_index_[e.q.label];
    size_t pos = e.pos_in_class;
    list[pos] = list.back();
    entries_[list[pos]].pos_in_class = pos;
    list.pop_back();
    if (list.empty()) class_index_.erase(e.q.label);
    bytes_used_ -= e.bytes;

    size_t last = entries_.size() - 1;
    if (idx != last) {
      entries_[idx] = std::move(entries_[last]);
      class_index_[entries_[idx].q.label][entries_[idx].pos_in_class] = idx;
    }
    entries_.pop_back();
  }

  static void put_u64(std::ostream& os, uint64_t v) {
    detail::put_u32(os, static_cast<uint32_t>(v & 0xffffffffULL));
    detail::put_u32(os, static_cast<uint32_t>(v >> 32));
  }
  static uint64_t get_u64(std::istream& is, uint64_t& off) {
    uint64_t lo = detail::get_u32(is, off, "u64");
    uint64_t hi = detail::get_u32(is, off, "u64");
    return lo | (hi << 32);
  }

  uint64_t budget_;
  uint64_t bytes_used_ = 0;
  std::vector<Entry> entries_;
  std::map<uint32_t, std::vector<size_t>> class_index_;
};

}  // namespace remind
