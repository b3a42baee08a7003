#pragma once

// Statistical reduction of the lower bound: exact samplers for the
// discovery-time random variables, the random sums t_B and y_T, their
// closed-form concentration thresholds, and a Monte-Carlo verifier that the
// tail bounds hold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbopt/error.hpp"
#include "lbopt/parallel.hpp"
#include "lbopt/rng.hpp"
#include "lbopt/stats.hpp"
#include "lbopt/worstcase.hpp"

namespace lbopt {

struct ConcParams {
  int n = 1;
  int d = 1;
  int K = 1;       // window (even in the t_B model; odd tolerated, ceil(K/2) terms)
  int B = 0;       // blocks for t_B
  int T = 0;       // chain length for y_T
  double p_sigma = 1.0;
  double p_K = 0.0;  // 2K/d
  double p_d = 0.0;  // 2/d
  double h = 1.0;
  double tau_s = 0.0;
  double tau_w = 0.0;
  double delta = 0.5;
};

inline void to_json(nlohmann::json& j, const ConcParams& p) {
  j = nlohmann::json{{"n", p.n},       {"d", p.d},         {"K", p.K},
                     {"B", p.B},       {"T", p.T},         {"p_sigma", p.p_sigma},
                     {"p_K", p.p_K},   {"p_d", p.p_d},     {"h", p.h},
                     {"tau_s", p.tau_s}, {"tau_w", p.tau_w}, {"delta", p.delta}};
}

// Number of stochastic-gradient computations up to and including the first
// un-zeroed draw: exact Geometric(p_sigma) on {1, 2, ...}.
inline int64_t sample_eta(double p_sigma, RngStream& rng) {
  if (!(p_sigma > 0.0) || p_sigma > 1.0) throw Error("CONFIG", "sample_eta: need 0 < p <= 1");
  return rng.geometric(p_sigma);
}

// Gaps between successive hits of the K-coordinate target window in a
// uniform without-replacement stream over [d]. The hit positions of a
// uniform permutation form a uniform K-subset of {1..d}, so the first
// `count` gaps are differences of its order statistics.
inline std::vector<int64_t> sample_mu_block(int d, int K, int count, RngStream& rng) {
  if (K > d || K < 1) throw Error("CONFIG", "sample_mu_block: need 1 <= K <= d");
  auto hits = rng.sample_without_replacement(static_cast<uint32_t>(d), static_cast<uint32_t>(K));
  std::sort(hits.begin(), hits.end());
  if (count > K) count = K;
  std::vector<int64_t> gaps(count);
  int64_t prev = 0;
  for (int k = 0; k < count; ++k) {
    int64_t pos = static_cast<int64_t>(hits[k]) + 1;  // 1-based position
    gaps[k] = pos - prev;
    prev = pos;
  }
  return gaps;
}

// One sample of t_B = sum_b min_i min{h sum_k eta, tau_s sum_k mu}.
inline double t_B(const ConcParams& p, RngStream& rng) {
  int cnt = (p.K + 1) / 2;
  double total = 0.0;
  for (int b = 0; b < p.B; ++b) {
    double block = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.n; ++i) {
      int64_t eta_sum = 0;
      for (int k = 0; k < cnt; ++k) eta_sum += sample_eta(p.p_sigma, rng);
      auto gaps = sample_mu_block(p.d, p.K, cnt, rng);
      int64_t mu_sum = 0;
      for (int64_t g : gaps) mu_sum += g;
      block = std::min(block, std::min(p.h * static_cast<double>(eta_sum),
                                       p.tau_s * static_cast<double>(mu_sum)));
    }
    total += block;
  }
  return total;
}

inline double t_bar_lemma6(const ConcParams& p) {
  double num = static_cast<double>(p.B) * p.K + std::log(p.delta);
  if (!(num > 0.0)) {
    throw Error("NONPOSITIVE_NUMERATOR", "t_bar_lemma6: B*K + log(delta) must be positive");
  }
  double n2 = 2.0 * p.n;
  double den = std::exp(4.0) * std::pow(n2, 2.0 / p.K) * (4.0 + 2.0 / p.K * std::log(n2));
  return num / den * std::min(p.h / p.p_sigma, p.tau_s / p.p_K);
}

// One sample of y_T via the recursion
//   y_{k,i} = min_j { h eta_{k,j} + [i != j] tau_w mu_{k,j} + y_{k-1,j} }.
// mu is the first-hit position of one target coordinate in a fresh
// without-replacement stream over [d]: uniform on {1..d}.
inline double y_T(const ConcParams& p, RngStream& rng) {
  std::vector<double> y(p.n, 0.0), ynext(p.n), own(p.n);
  for (int k = 0; k < p.T; ++k) {
    double min_a1 = std::numeric_limits<double>::infinity();  // best relayed term
    double min_a2 = std::numeric_limits<double>::infinity();  // runner-up
    int arg1 = -1;
    for (int j = 0; j < p.n; ++j) {
      double eta = static_cast<double>(sample_eta(p.p_sigma, rng));
      double mu = static_cast<double>(rng.uniform_int(static_cast<uint64_t>(p.d)) + 1);
      double a = p.h * eta + p.tau_w * mu + y[j];
      own[j] = p.h * eta + y[j];
      if (a < min_a1) {
        min_a2 = min_a1;
        min_a1 = a;
        arg1 = j;
      } else if (a < min_a2) {
        min_a2 = a;
      }
    }
    for (int i = 0; i < p.n; ++i) {
      double relayed = (arg1 == i) ? min_a2 : min_a1;  // min over j != i
      ynext[i] = std::min(own[i], relayed);
    }
    y.swap(ynext);
  }
  double best = y[0];
  for (double v : y) best = std::min(best, v);
  return best;
}

inline double t_bar_lemma8(const ConcParams& p) {
  double num = static_cast<double>(p.T) - std::log(static_cast<double>(p.n)) + std::log(p.delta);
  if (!(num > 0.0)) {
    throw Error("NONPOSITIVE_NUMERATOR", "t_bar_lemma8: T - log(n) + log(delta) must be positive");
  }
  double den = 32.0 * std::log(8.0 * p.n);
  double inner = std::max({p.h / (p.p_sigma * p.n), p.tau_w / (p.p_d * p.n),
                           std::sqrt(p.h * p.tau_w) / std::sqrt(p.p_sigma * p.p_d * p.n), p.h,
                           p.tau_w});
  return num / den * std::min(inner, p.h / p.p_sigma);
}

enum class Bound { lemma6, lemma8 };
inline std::string to_string(Bound b) { return b == Bound::lemma6 ? "lemma6" : "lemma8"; }

struct McReport {
  ConcParams params;
  std::string bound;
  double t_bar = 0.0;
  int64_t trials = 0;
  int64_t hits = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool pass = false;

  nlohmann::json to_json() const {
    return nlohmann::json{{"params", params}, {"bound", bound},   {"t_bar", t_bar},
                          {"trials", trials}, {"hits", hits},     {"p_hat", p_hat},
                          {"ci_low", ci_low}, {"ci_high", ci_high}, {"pass", pass}};
  }
  static std::string csv_header() {
    return "bound,n,d,K,B,T,p_sigma,p_K,p_d,h,tau_s,tau_w,delta,t_bar,trials,p_hat,ci_low,ci_high,pass";
  }
  std::string csv_row() const;
};

// Estimate P(sum <= t_bar) and check the Wilson-99% upper edge against delta.
inline McReport mc_verify(Bound bound, const ConcParams& p, int64_t trials, uint64_t seed,
                          int threads = 0) {
  if (trials < 1000) throw Error("CONFIG", "mc_verify: need at least 1000 trials");
  McReport rep;
  rep.params = p;
  rep.bound = to_string(bound);
  rep.t_bar = bound == Bound::lemma6 ? t_bar_lemma6(p) : t_bar_lemma8(p);
  rep.trials = trials;
  RngStream root(seed);
  std::atomic<int64_t> hits{0};
  parallel_for(
      trials,
      [&](int64_t i) {
        auto rng = root.sub("trial").sub(static_cast<uint64_t>(i));
        double v = bound == Bound::lemma6 ? t_B(p, rng) : y_T(p, rng);
        if (v <= rep.t_bar) hits.fetch_add(1, std::memory_order_relaxed);
      },
      threads);
  rep.hits = hits.load();
  rep.p_hat = static_cast<double>(rep.hits) / static_cast<double>(trials);
  auto iv = stats::wilson(rep.hits, trials);
  rep.ci_low = iv.lo;
  rep.ci_high = iv.hi;
  rep.pass = rep.ci_high <= p.delta;
  return rep;
}

inline std::string McReport::csv_row() const {
  auto f = [](double v) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  const ConcParams& p = params;
  return bound + "," + std::to_string(p.n) + "," + std::to_string(p.d) + "," +
         std::to_string(p.K) + "," + std::to_string(p.B) + "," + std::to_string(p.T) + "," +
         f(p.p_sigma) + "," + f(p.p_K) + "," + f(p.p_d) + "," + f(p.h) + "," + f(p.tau_s) + "," +
         f(p.tau_w) + "," + f(p.delta) + "," + f(t_bar) + "," + std::to_string(trials) + "," +
         f(p_hat) + "," + f(ci_low) + "," + f(ci_high) + "," + (pass ? "1" : "0");
}

// Operating points used by the verification suites: parameters of the scaled
// construction for a given instance.
inline ConcParams conc_params_lemma6(const ObjectiveInstance& inst, double h, double tau_s,
                                     double delta) {
  ConcParams p;
  p.n = inst.n;
  p.d = inst.d;
  p.K = inst.fn.K;
  p.B = inst.fn.T / inst.fn.K;
  p.p_sigma = inst.p_sigma;
  p.p_K = inst.p_K;
  p.h = h;
  p.tau_s = tau_s;
  p.delta = delta;
  return p;
}

inline ConcParams conc_params_lemma8(const ObjectiveInstance& inst, double h, double tau_w,
                                     double delta) {
  ConcParams p;
  p.n = inst.n;
  p.d = inst.d;
  p.K = 1;
  p.T = inst.fn.T;
  p.p_sigma = inst.p_sigma;
  p.p_d = 2.0 / inst.d;
  p.h = h;
  p.tau_w = tau_w;
  p.delta = delta;
  return p;
}

}  // namespace lbopt
