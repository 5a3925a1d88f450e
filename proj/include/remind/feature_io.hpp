#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "remind/tensor.hpp"

namespace remind {

// Raised on any malformed feature file; carries the byte offset of the
// first violation.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& msg, uint64_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  uint64_t offset;
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline uint32_t get_u32(std::istream& is, uint64_t& off, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError(std::string("truncated file reading ") + what, off);
  off += 4;
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, uint64_t& off, const char* what) {
  uint32_t v = get_u32(is, off, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace detail

// Binary feature file, little-endian:
//   magic "RMND", u32 version=1, u32 n, u32 num_classes, u32 m, u32 d,
//   then n records of (u32 label, u32 instance_id, u32 seq_index, m*m*d f32).
// seq_index must equal the record position; ingestion validates and re-derives
// it from record order. A ".meta" sidecar holds the provenance line.
inline FeatureDataset ingest_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path, 0);

  uint64_t off = 0;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RMND", 4) != 0)
    throw IoError("bad magic (expected RMND)", 0);
  off = 4;

  uint32_t version = detail::get_u32(is, off, "version");
  if (version != 1) throw IoError("unsupported version " + std::to_string(version), 4);
  uint32_t n = detail::get_u32(is, off, "n");
  uint32_t num_classes = detail::get_u32(is, off, "num_classes");
  uint32_t m = detail::get_u32(is, off, "m");
  uint32_t d = detail::get_u32(is, off, "d");
  if (n > 0 && (m < 1 || d < 1))
    throw IoError("header shape invalid (m=" + std::to_string(m) + ", d=" + std::to_string(d) + ")", 16);

  FeatureDataset ds;
  ds.num_classes = num_classes;
  ds.m = static_cast<int>(m);
  ds.d = static_cast<int>(d);
  ds.samples.reserve(n);

  size_t vals = static_cast<size_t>(m) * m * d;
  for (uint32_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.label = detail::get_u32(is, off, "label");
    if (s.label >= num_classes)
      throw IoError("label " + std::to_string(s.label) + " out of range", off - 4);
    s.instance_id = detail::get_u32(is, off, "instance_id");
    uint32_t stored_seq = detail::get_u32(is, off, "seq_index");
    if (stored_seq != i)
      throw IoError("seq_index " + std::to_string(stored_seq) +
                        " does not match record order " + std::to_string(i),
                    off - 4);
    s.seq_index = i;
    s.tensor.m = ds.m;
    s.tensor.d = ds.d;
    s.tensor.data.resize(vals);
    for (size_t v = 0; v < vals; ++v) {
      float f = detail::get_f32(is, off, "value");
      if (!std::isfinite(f)) throw IoError("non-finite value", off - 4);
      s.tensor.data[v] = f;
    }
    ds.samples.push_back(std::move(s));
  }

  // Trailing garbage means the header lied about n.
  is.peek();
  if (!is.eof()) throw IoError("trailing bytes after last record", off);

  std::ifstream meta(path + ".meta");
  if (meta) std::getline(meta, ds.provenance);
  return ds;
}

inline void export_features(const FeatureDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path, 0);
  os.write("RMND", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(ds.samples.size()));
  detail::put_u32(os, ds.num_classes);
  detail::put_u32(os, static_cast<uint32_t>(ds.m));
  detail::put_u32(os, static_cast<uint32_t>(ds.d));
  uint32_t seq = 0;
  for (const auto& s : ds.samples) {
    detail::put_u32(os, s.label);
    detail::put_u32(os, s.instance_id);
    detail::put_u32(os, seq++);
    for (float f : s.tensor.data) detail::put_f32(os, f);
  }
  if (!os) throw IoError("write failure on " + path, 0);
  os.close();

  std::ofstream meta(path + ".meta", std::ios::trunc);
  meta << ds.provenance << "\n";
}

}  // namespace remind
