#pragma once

// Unbiased random-sparsification compressors and the coordinate-stream view
// of a message sequence. Coordinate indices inside SparseMessage are 1-based,
// matching the on-wire layout.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "lbopt/error.hpp"
#include "lbopt/rng.hpp"

namespace lbopt {

struct SparseMessage {
  std::vector<std::pair<uint32_t, double>> entries;  // (index 1..d, raw value), distinct indices
  double scale = 1.0;                                // decoded value = scale * raw value

  size_t payload_size() const { return entries.size(); }

  void decode_into(std::vector<double>& x) const {
    for (const auto& [idx, val] : entries) x[idx - 1] = scale * val;
  }
  std::vector<double> decode(int d) const {
    std::vector<double> x(d, 0.0);
    decode_into(x);
    return x;
  }

  // Canonical binary layout (little-endian):
  //   u32 count, count x (u32 index, f64 value), f64 scale
  std::vector<uint8_t> to_bytes() const {
    std::vector<uint8_t> b;
    b.reserve(4 + entries.size() * 12 + 8);
    auto put_u32 = [&](uint32_t v) {
      for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
    };
    auto put_f64 = [&](double d) {
      uint64_t v;
      std::memcpy(&v, &d, 8);
      for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
    };
    put_u32(static_cast<uint32_t>(entries.size()));
    for (const auto& [idx, val] : entries) {
      put_u32(idx);
      put_f64(val);
    }
    put_f64(scale);
    return b;
  }

  static SparseMessage from_bytes(std::span<const uint8_t> b) {
    size_t pos = 0;
    auto get_u32 = [&]() {
      if (pos + 4 > b.size()) throw Error("DECODE", "sparse message truncated");
      uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
      pos += 4;
      return v;
    };
    auto get_f64 = [&]() {
      if (pos + 8 > b.size()) throw Error("DECODE", "sparse message truncated");
      uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
      pos += 8;
      double d;
      std::memcpy(&d, &v, 8);
      return d;
    };
    SparseMessage m;
    uint32_t count = get_u32();
    m.entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t idx = get_u32();
      double val = get_f64();
      if (idx == 0) throw Error("DECODE", "sparse message has a zero index");
      m.entries.emplace_back(idx, val);
    }
    m.scale = get_f64();
    if (pos != b.size()) throw Error("DECODE", "sparse message has trailing bytes");
    std::vector<uint32_t> seen;
    seen.reserve(m.entries.size());
    for (const auto& [idx, val] : m.entries) seen.push_back(idx);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      throw Error("DECODE", "sparse message has duplicate indices");
    }
    return m;
  }
};

// RandK: K uniformly random distinct coordinates (without replacement, order
// preserved as sampled), scaled by d/K so the decode is unbiased.
inline SparseMessage rand_k(std::span<const double> x, int K, RngStream& rng,
                            double scale_override = 0.0) {
  int d = static_cast<int>(x.size());
  if (K < 1 || K > d) throw Error("CONFIG", "rand_k: K out of range");
  SparseMessage m;
  m.scale = scale_override > 0.0 ? scale_override : static_cast<double>(d) / K;
  auto idx = rng.sample_without_replacement(static_cast<uint32_t>(d), static_cast<uint32_t>(K));
  m.entries.reserve(K);
  for (uint32_t i : idx) m.entries.emplace_back(i + 1, x[i]);
  return m;
}

// Identity: every coordinate retained, scale 1, payload d.
inline SparseMessage identity_compress(std::span<const double> x) {
  SparseMessage m;
  m.scale = 1.0;
  m.entries.reserve(x.size());
  for (uint32_t i = 0; i < x.size(); ++i) m.entries.emplace_back(i + 1, x[i]);
  return m;
}

// PermK: disjoint blocks of a shared permutation, one block per worker,
// scale n. All workers of one round must be called with identically seeded
// streams so they see the same permutation. When n does not divide d the
// last block absorbs the remainder.
inline SparseMessage perm_k(std::span<const double> x, int part, int n, RngStream& rng) {
  int d = static_cast<int>(x.size());
  if (part < 0 || part >= n) throw Error("CONFIG", "perm_k: part out of range");
  std::vector<uint32_t> perm(d);
  for (int i = 0; i < d; ++i) perm[i] = static_cast<uint32_t>(i);
  rng.shuffle(perm);
  int base = d / n;
  int lo = part * base;
  int hi = (part == n - 1) ? d : lo + base;
  SparseMessage m;
  m.scale = static_cast<double>(n);
  for (int i = lo; i < hi; ++i) m.entries.emplace_back(perm[i] + 1, x[perm[i]]);
  return m;
}

// Per-coordinate arrival schedule of a FIFO message sequence: coordinate m of
// a message lands m*tau after the message starts, messages back to back.
struct StreamItem {
  uint32_t index;
  double arrival_offset;
};

inline std::vector<StreamItem> stream_view(std::span<const SparseMessage> messages, double tau) {
  std::vector<StreamItem> out;
  double t = 0.0;
  for (const auto& m : messages) {
    for (const auto& [idx, val] : m.entries) {
      (void)val;
      t += tau;
      out.push_back({idx, t});
    }
  }
  return out;
}

}  // namespace lbopt
