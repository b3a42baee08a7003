#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lbopt/rng.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  double scale = std::max(std::fabs(want), 1e-300);
  return std::fabs(got - want) / scale;
}

// central difference d/dx of a scalar function
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double one_sided_diff(const std::function<double(double)>& f, double x, double h) {
  // forward if h > 0, backward if h < 0
  return (f(x + h) - f(x)) / h;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

// random point with coordinates uniform in [lo, hi]
inline std::vector<double> random_vec(lbopt::RngStream& rng, int T, double lo, double hi) {
  std::vector<double> x(T);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

// random point where each coordinate is zero with probability p_zero
inline std::vector<double> random_sparse_vec(lbopt::RngStream& rng, int T, double p_zero,
                                             double lo = -2.0, double hi = 2.0) {
  std::vector<double> x(T);
  for (auto& v : x) v = rng.bernoulli(p_zero) ? 0.0 : rng.uniform(lo, hi);
  return x;
}

}  // namespace testutil
