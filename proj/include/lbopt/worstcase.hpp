#pragma once

// Worst-case chain functions and scaled problem instances.
//
// Two variants:
//   classic  - the +/- chain with a single predecessor gate (K = 1, a = e)
//   windowed - the product-gated chain: a coordinate contributes only when
//              the K preceding coordinates are all nonzero ("new" in
//              serialized form)
//
// Both use virtual prefix coordinates x_0 = ... = x_{1-K} = 1, never stored.
// Vectors are 0-based in memory; coordinate labels in serialized formats are
// 1-based.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lbopt/error.hpp"
#include "lbopt/kernels.hpp"

namespace lbopt {

enum class Variant { classic, windowed };

inline std::string to_string(Variant v) { return v == Variant::classic ? "classic" : "new"; }
inline Variant variant_from_string(const std::string& s) {
  if (s == "classic") return Variant::classic;
  if (s == "new") return Variant::windowed;
  throw Error("CONFIG", "unknown variant '" + s + "'");
}

struct LemmaConstants {
  double delta0;     // F(0) - inf F <= delta0 * T
  double ell1;       // smoothness bound
  double gamma_inf;  // sup-norm bound on the gradient
};

inline LemmaConstants constants(int K, double a, Variant variant) {
  if (variant == Variant::classic) return {12.0, 152.0, 23.0};
  double la = std::log(a);
  double aK = std::pow(a, K);
  double sqrt2pi = std::sqrt(2.0 * M_PI);
  return {kSqrt2PiE * aK,
          12.0 * sqrt2pi * std::exp(2.5) * K * K * aK / la,
          6.0 * sqrt2pi * std::exp(1.5) * K * aK / std::sqrt(la)};
}

struct WorstCaseFn {
  int T;
  int K;
  KernelParam a;
  Variant variant;

  WorstCaseFn(int T_, int K_, double a_, Variant v) : T(T_), K(K_), a(a_), variant(v) {
    if (T_ < 1 || K_ < 1 || K_ > T_) throw std::invalid_argument("WorstCaseFn: require 1 <= K <= T");
    if (v == Variant::classic && (K_ != 1 || std::fabs(a_ - kE) > 1e-12)) {
      throw std::invalid_argument("WorstCaseFn: classic variant requires K=1, a=e");
    }
  }

  LemmaConstants lemma_constants() const { return constants(K, a.a, variant); }
};

// prog^K(x): largest i >= 0 with x_i, ..., x_{i-K+1} all nonzero, under the
// implied all-ones prefix. Zero test is exact.
inline int prog(std::span<const double> x, int K) {
  int T = static_cast<int>(x.size());
  int best = 0;
  int run = 0;  // consecutive nonzero real coordinates ending at i
  for (int i = 1; i <= T; ++i) {
    run = (x[i - 1] != 0.0) ? run + 1 : 0;
    if (run >= K || run == i) best = i;
  }
  return best;
}

namespace detail {

// Psi values over window positions m in [1-K, T]; positions <= 0 are the
// prefix ones, where Psi_a(1) = 1 exactly.
inline void psi_table(const WorstCaseFn& f, std::span<const double> x, std::vector<double>& psiv) {
  psiv.assign(f.T + 1, 1.0);
  for (int m = 1; m <= f.T; ++m) psiv[m] = psi(f.a, x[m - 1]);
}

// Per-window zero count and product of the nonzero factors over [i-K, i-1].
// Keeping zeros out of the product makes exclusion products O(1), so the
// gradient stays O(T*K) while the exact-zero support semantics survive.
struct WindowProducts {
  std::vector<int> zeros;      // per i in [1, T]
  std::vector<double> nzprod;  // per i in [1, T]

  WindowProducts(const std::vector<double>& psiv, int T, int K) : zeros(T + 1), nzprod(T + 1) {
    for (int i = 1; i <= T; ++i) {
      int zc = 0;
      double pr = 1.0;  // prefix positions m <= 0 contribute the factor 1
      for (int m = std::max(1, i - K); m <= i - 1; ++m) {
        double v = psiv[m];
        if (v == 0.0) ++zc;
        else pr *= v;
      }
      zeros[i] = zc;
      nzprod[i] = pr;
    }
  }

  double full(int i) const { return zeros[i] ? 0.0 : nzprod[i]; }
  // product over the window of i excluding position j (psij = psi at j)
  double excluding(int i, double psij) const {
    if (psij == 0.0) return zeros[i] == 1 ? nzprod[i] : 0.0;
    return zeros[i] ? 0.0 : nzprod[i] / psij;
  }
};

}  // namespace detail

inline double eval(const WorstCaseFn& f, std::span<const double> x) {
  if (static_cast<int>(x.size()) != f.T) throw std::invalid_argument("eval: dimension mismatch");
  if (f.variant == Variant::classic) {
    double s = 0.0;
    double prev = 1.0;  // x_0
    for (int i = 1; i <= f.T; ++i) {
      double xi = x[i - 1];
      s += psi(f.a, -prev) * phi(-xi) - psi(f.a, prev) * phi(xi);
      prev = xi;
    }
    return s;
  }
  std::vector<double> psiv;
  detail::psi_table(f, x, psiv);
  detail::WindowProducts wp(psiv, f.T, f.K);
  double s = 0.0;
  for (int i = 1; i <= f.T; ++i) {
    double w = wp.full(i);
    if (w != 0.0) s -= w * phi(x[i - 1]);
    s += gamma_fn(x[i - 1]);
  }
  return s;
}

// Analytic gradient from the product-rule expansion. Terms vanish exactly
// (0.0 products) wherever a window kernel is zero, which is what makes the
// progress-support checks exact rather than threshold-based.
inline void grad(const WorstCaseFn& f, std::span<const double> x, std::vector<double>& g) {
  if (static_cast<int>(x.size()) != f.T) throw std::invalid_argument("grad: dimension mismatch");
  g.assign(f.T, 0.0);
  if (f.variant == Variant::classic) {
    for (int j = 1; j <= f.T; ++j) {
      double xjm1 = (j >= 2) ? x[j - 2] : 1.0;
      double xj = x[j - 1];
      double v = -phi_d1(xj) * (psi(f.a, -xjm1) + psi(f.a, xjm1));
      if (j < f.T) {
        double xjp1 = x[j];
        v -= psi_d1(f.a, -xj) * phi(-xjp1) + psi_d1(f.a, xj) * phi(xjp1);
      }
      g[j - 1] = v;
    }
    return;
  }
  std::vector<double> psiv;
  detail::psi_table(f, x, psiv);
  detail::WindowProducts wp(psiv, f.T, f.K);
  for (int j = 1; j <= f.T; ++j) {
    double xj = x[j - 1];
    double v = 0.0;
    double w = wp.full(j);
    if (w != 0.0) v -= w * phi_d1(xj);
    double dj = psi_d1(f.a, xj);
    if (dj != 0.0) {
      int hi = std::min(j + f.K, f.T);
      for (int i = j + 1; i <= hi; ++i) {
        double p = wp.excluding(i, psiv[j]);
        if (p != 0.0) v -= dj * p * phi(x[i - 1]);
      }
    }
    v += gamma_d1(xj);
    g[j - 1] = v;
  }
}

inline std::vector<double> grad(const WorstCaseFn& f, std::span<const double> x) {
  std::vector<double> g;
  grad(f, x, g);
  return g;
}

// ---------------------------------------------------------------------------
// Hessian band (test-side tool): central differences of the analytic gradient.

struct HessianBand {
  int T;
  int K;                        // half bandwidth; full bandwidth 2K+1
  std::vector<double> data;     // (2K+1) x T, diagonal offset-major
  double max_abs_outside_band;  // largest |entry| seen at |i-j| > K (exact 0 expected)

  double at(int i, int j) const {  // 1-based
    int off = i - j;
    if (off < -K || off > K) return 0.0;
    return data[static_cast<size_t>(j - 1) * (2 * K + 1) + (off + K)];
  }
  double& at_mut(int i, int j) {
    return data[static_cast<size_t>(j - 1) * (2 * K + 1) + (i - j + K)];
  }

  // Spectral norm of the symmetrized band: dense eigensolve for T <= 200,
  // Gershgorin-shifted power iteration above.
  double spectral_norm() const {
    if (T <= 200) {
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(T, T);
      for (int j = 1; j <= T; ++j) {
        for (int i = std::max(1, j - K); i <= std::min(T, j + K); ++i) {
          H(i - 1, j - 1) = 0.5 * (at(i, j) + at(j, i));
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
      double lo = es.eigenvalues()(0), hi = es.eigenvalues()(T - 1);
      return std::max(std::fabs(lo), std::fabs(hi));
    }
    return power_norm();
  }

 private:
  void matvec(const std::vector<double>& v, std::vector<double>& out, double shift,
              double sign) const {
    out.assign(T, 0.0);
    for (int j = 1; j <= T; ++j) {
      double acc = shift * v[j - 1];
      for (int i = std::max(1, j - K); i <= std::min(T, j + K); ++i) {
        acc += sign * 0.5 * (at(j, i) + at(i, j)) * v[i - 1];
      }
      out[j - 1] = acc;
    }
  }
  double power_norm() const {
    double c = 0.0;  // Gershgorin radius bound
    for (int i = 1; i <= T; ++i) {
      double row = 0.0;
      for (int j = std::max(1, i - K); j <= std::min(T, i + K); ++j) {
        row += std::fabs(0.5 * (at(i, j) + at(j, i)));
      }
      c = std::max(c, row);
    }
    if (c == 0.0) return 0.0;
    double best = 0.0;
    for (double sign : {1.0, -1.0}) {  // c*I + H and c*I - H are both PSD
      std::vector<double> v(T), w;
      for (int i = 0; i < T; ++i) v[i] = 1.0 + 0.37 * std::sin(0.83 * (i + 1));
      double lam = 0.0;
      for (int it = 0; it < 300; ++it) {
        matvec(v, w, c, sign);
        double nrm = 0.0;
        for (double z : w) nrm += z * z;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) break;
        for (int i = 0; i < T; ++i) v[i] = w[i] / nrm;
        lam = nrm;
      }
      best = std::max(best, lam - c);
    }
    return best;
  }
};

inline HessianBand hessian_band(const WorstCaseFn& f, std::span<const double> x,
                                double step = 1e-5) {
  if (f.T > 2000) throw Error("GUARD", "hessian_band: T > 2000");
  HessianBand hb{f.T, f.K, std::vector<double>(static_cast<size_t>(f.T) * (2 * f.K + 1), 0.0),
                 0.0};
  std::vector<double> xp(x.begin(), x.end()), gp, gm;
  for (int j = 1; j <= f.T; ++j) {
    double orig = xp[j - 1];
    xp[j - 1] = orig + step;
    grad(f, xp, gp);
    xp[j - 1] = orig - step;
    grad(f, xp, gm);
    xp[j - 1] = orig;
    for (int i = 1; i <= f.T; ++i) {
      double v = (gp[i - 1] - gm[i - 1]) / (2.0 * step);
      if (std::abs(i - j) <= f.K) {
        hb.at_mut(i, j) = v;
      } else {
        hb.max_abs_outside_band = std::max(hb.max_abs_outside_band, std::fabs(v));
      }
    }
  }
  return hb;
}

// ---------------------------------------------------------------------------
// Scaled problem instance (construction of the lower-bound proof, Step 1).

struct ObjectiveInstance {
  WorstCaseFn fn;
  int d;          // ambient dimension, d >= T
  double lambda;  // coordinate scale
  double L, Delta, eps, sigma2;
  int n;
  double p_sigma;
  double p_K;
  LemmaConstants consts;

  // f(x) = (L lambda^2 / ell1) F(x_{[T]} / lambda); the last d-T coordinates
  // are ignored entirely and the gradient there is exactly 0.
  double eval_scaled(std::span<const double> x) const {
    check_dim(x);
    std::vector<double> y(fn.T);
    for (int i = 0; i < fn.T; ++i) y[i] = x[i] / lambda;
    return L * lambda * lambda / consts.ell1 * eval(fn, y);
  }

  // First T components of the gradient of the scaled objective; components
  // T..d-1 are identically zero.
  std::vector<double> grad_chain(std::span<const double> x) const {
    check_dim(x);
    std::vector<double> y(fn.T);
    for (int i = 0; i < fn.T; ++i) y[i] = x[i] / lambda;
    std::vector<double> g = grad(fn, y);
    double s = L * lambda / consts.ell1;
    for (double& v : g) v *= s;
    return g;
  }

  std::vector<double> grad_scaled(std::span<const double> x) const {
    std::vector<double> g = grad_chain(x);
    g.resize(d, 0.0);
    return g;
  }

  double grad_norm_sq(std::span<const double> x) const {
    std::vector<double> g = grad_chain(x);
    double s = 0.0;
    for (double v : g) s += v * v;
    return s;
  }

  // prog^1 over the full ambient vector (implied x_0 = 1)
  int prog1(std::span<const double> x) const {
    for (int i = static_cast<int>(x.size()); i >= 1; --i) {
      if (x[i - 1] != 0.0) return i;
    }
    return 0;
  }

 private:
  void check_dim(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != d) {
      throw std::invalid_argument("instance: expected ambient dimension d");
    }
  }
};

// Window size used by the scaled construction: K = 2*ceil(2*log(2n)), even by
// construction; a = 1 + 1/K.
inline int window_for_workers(int n) {
  return 2 * static_cast<int>(std::ceil(2.0 * std::log(2.0 * static_cast<double>(n))));
}

inline ObjectiveInstance build_instance(double L, double Delta, double eps, int n, double sigma2,
                                        int d, Variant variant) {
  if (!(L > 0.0) || !(Delta > 0.0) || !(eps > 0.0) || sigma2 < 0.0 || n < 1 || d < 1) {
    throw Error("CONFIG", "build_instance: invalid parameters");
  }
  int K = 1;
  double a = kE;
  if (variant == Variant::windowed) {
    K = window_for_workers(n);
    a = 1.0 + 1.0 / K;
  }
  LemmaConstants c = constants(K, a, variant);
  double Traw = L * Delta / (2.0 * c.delta0 * c.ell1 * eps);
  int T = static_cast<int>(std::floor(Traw));
  if (T < 1) throw Error("T_ZERO", "L*Delta too small relative to eps: T = floor(" +
                                        std::to_string(Traw) + ")");
  if (T < K) throw Error("T_ZERO", "chain length T=" + std::to_string(T) +
                                       " shorter than window K=" + std::to_string(K));
  if (d < T) throw Error("DIM_TOO_SMALL", "d=" + std::to_string(d) + " < T=" + std::to_string(T));
  double lambda = std::sqrt(2.0 * eps) * c.ell1 / L;
  double p_sigma = (sigma2 == 0.0) ? 1.0 : std::min(2.0 * eps * c.gamma_inf * c.gamma_inf / sigma2, 1.0);
  double p_K = 2.0 * static_cast<double>(K) / static_cast<double>(d);
  return ObjectiveInstance{WorstCaseFn(T, K, a, variant), d,      lambda, L, Delta,
                           eps,                           sigma2, n,      p_sigma, p_K, c};
}

inline void to_json(nlohmann::json& j, const ObjectiveInstance& inst) {
  j = nlohmann::json{{"variant", to_string(inst.fn.variant)},
                     {"T", inst.fn.T},
                     {"K", inst.fn.K},
                     {"a", inst.fn.a.a},
                     {"d", inst.d},
                     {"lambda", inst.lambda},
                     {"L", inst.L},
                     {"Delta", inst.Delta},
                     {"eps", inst.eps},
                     {"sigma2", inst.sigma2},
                     {"n", inst.n},
                     {"p_sigma", inst.p_sigma},
                     {"p_K", inst.p_K},
                     {"constants",
                      {{"delta0", inst.consts.delta0},
                       {"ell1", inst.consts.ell1},
                       {"gamma_inf", inst.consts.gamma_inf}}}};
}

inline ObjectiveInstance instance_from_json(const nlohmann::json& j) {
  Variant v = variant_from_string(j.at("variant").get<std::string>());
  WorstCaseFn fn(j.at("T").get<int>(), j.at("K").get<int>(), j.at("a").get<double>(), v);
  LemmaConstants c{j.at("constants").at("delta0").get<double>(),
                   j.at("constants").at("ell1").get<double>(),
                   j.at("constants").at("gamma_inf").get<double>()};
  return ObjectiveInstance{fn,
                           j.at("d").get<int>(),
                           j.at("lambda").get<double>(),
                           j.at("L").get<double>(),
                           j.at("Delta").get<double>(),
                           j.at("eps").get<double>(),
                           j.at("sigma2").get<double>(),
                           j.at("n").get<int>(),
                           j.at("p_sigma").get<double>(),
                           j.at("p_K").get<double>(),
                           c};
}

}  // namespace lbopt
