#pragma once

// Counter-based splittable RNG. Every stream is a (key, counter) pair; the
// output at position c is a fixed mix of (key, c), so streams can be split
// per (worker, draw-index) and replayed independently of evaluation order.
// All arithmetic is fixed-width, so sequences are bit-identical across
// platforms and thread counts.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lbopt {

namespace detail {

// splitmix64 finalizer (Stafford mix13)
inline constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr uint64_t combine(uint64_t key, uint64_t v) {
  return mix64(key ^ (v + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2)));
}

}  // namespace detail

class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(uint64_t seed) : key_(detail::mix64(seed ^ 0x5bf03635d0c51a93ULL)) {}

  // Derive an independent stream. Typical paths:
  //   root.sub("oracle").sub(worker).sub(draw_index)
  RngStream sub(uint64_t id) const {
    RngStream s;
    s.key_ = detail::combine(key_, id);
    return s;
  }
  RngStream sub(std::string_view tag) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    return sub(h);
  }

  uint64_t next_u64() { return detail::mix64(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL); }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // unbiased integer in [0, n) (Lemire with rejection)
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    while (true) {
      uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      uint64_t lo = static_cast<uint64_t>(m);
      if (lo >= n || lo >= (0 - n) % n) return static_cast<uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Geometric on {1, 2, ...} with success probability p: number of Bernoulli(p)
  // trials up to and including the first success.
  int64_t geometric(double p) {
    if (p >= 1.0) return 1;
    double u = next_double();
    double g = std::floor(std::log1p(-u) / std::log1p(-p)) + 1.0;
    if (g < 1.0) g = 1.0;
    if (g > 9.0e18) g = 9.0e18;  // p ~ 0 degenerate
    return static_cast<int64_t>(g);
  }

  // Ordered sample of k distinct values from {0, ..., n-1}; the order is the
  // order in which a without-replacement stream would emit them.
  std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k) {
    std::vector<uint32_t> pool(n);
    for (uint32_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    std::vector<uint32_t> out(k);
    for (uint32_t i = 0; i < k; ++i) {
      uint64_t j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return ctr_; }

 private:
  uint64_t key_ = 0;
  uint64_t ctr_ = 0;
};

}  // namespace lbopt
