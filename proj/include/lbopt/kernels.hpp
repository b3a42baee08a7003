#pragma once

// Scalar building blocks of the worst-case chain functions: the soft step
// Psi_a, the bounded ramp Phi (Gaussian integral), and the negative-side
// barrier Gamma, together with their first two derivatives and the bounds
// used by the invariant suites. All functions are total over double and
// pure; branch points are x = 1/2 (Psi) and x = 0 (Gamma).

#include <cmath>
#include <stdexcept>

namespace lbopt {

inline constexpr double kSqrtE = 1.6487212707001281468;       // sqrt(e)
inline constexpr double kSqrt2PiE = 4.1327313541224929385;    // sqrt(2*pi*e)
inline constexpr double kE = 2.7182818284590452354;

// Shape parameter of Psi_a, restricted to 1 < a <= e.
struct KernelParam {
  double a;
  double log_a;  // natural log

  explicit KernelParam(double a_) : a(a_), log_a(std::log(a_)) {
    if (!(a_ > 1.0) || !(a_ <= kE + 1e-15)) {
      throw std::invalid_argument("KernelParam: require 1 < a <= e");
    }
  }
};

// exponent of the smooth branch; <= 0 always, -inf as x -> 1/2+
namespace detail {
inline double psi_exponent(double log_a, double s) {
  return log_a * (1.0 - 1.0 / (s * s));
}
// below this the exp factor underflows any polynomial prefactor
inline constexpr double kExpFloor = -690.0;
}  // namespace detail

inline double psi(const KernelParam& p, double x) {
  if (x <= 0.5) return 0.0;
  double s = 2.0 * x - 1.0;
  double e = detail::psi_exponent(p.log_a, s);
  if (e < detail::kExpFloor) return 0.0;
  return std::exp(e);
}

inline double psi_d1(const KernelParam& p, double x) {
  if (x <= 0.5) return 0.0;
  double s = 2.0 * x - 1.0;
  double e = detail::psi_exponent(p.log_a, s);
  if (e < detail::kExpFloor) return 0.0;
  return 4.0 * p.log_a / (s * s * s) * std::exp(e);
}

inline double psi_d2(const KernelParam& p, double x) {
  if (x <= 0.5) return 0.0;
  double s = 2.0 * x - 1.0;
  double e = detail::psi_exponent(p.log_a, s);
  if (e < detail::kExpFloor) return 0.0;
  double s2 = s * s;
  return -8.0 * p.log_a * (3.0 * s2 - 2.0 * p.log_a) / (s2 * s2 * s2) * std::exp(e);
}

// Phi(x) = sqrt(e) * Integral_{-inf}^{x} exp(-t^2/2) dt, via erfc so the
// negative tail keeps full relative precision.
inline double phi(double x) {
  return 0.5 * kSqrt2PiE * std::erfc(-x * 0.70710678118654752440);
}

inline double phi_d1(double x) { return kSqrtE * std::exp(-0.5 * x * x); }

inline double phi_d2(double x) { return -x * kSqrtE * std::exp(-0.5 * x * x); }

// Gamma(x) = -x * exp(1/x + 1) for x < 0, else 0.
inline double gamma_fn(double x) {
  if (x >= 0.0) return 0.0;
  return -x * std::exp(1.0 / x + 1.0);
}

inline double gamma_d1(double x) {
  if (x >= 0.0) return 0.0;
  double e = 1.0 / x + 1.0;
  if (e < detail::kExpFloor) return 0.0;
  return std::exp(e) * (1.0 / x - 1.0);
}

inline double gamma_d2(double x) {
  if (x >= 0.0) return 0.0;
  double e = 1.0 / x + 1.0;
  if (e < detail::kExpFloor) return 0.0;
  return -std::exp(e) / (x * x * x);
}

// Bounds proved for the kernels; the verification suites assert against these.
inline double psi_max(const KernelParam& p) { return p.a; }
inline double psi_d1_bound(const KernelParam& p) { return 2.0 * kE / std::sqrt(p.log_a); }
inline double psi_d2_bound(const KernelParam& p) { return 56.0 * kE / p.log_a; }
inline constexpr double kPhiMax = kSqrt2PiE;
inline constexpr double kPhiD1Max = kSqrtE;
inline constexpr double kPhiD2Bound = 27.0;
inline constexpr double kGammaD1Low = -kE;  // open bound: Gamma' > -e
inline const double kGammaD2Max = 27.0 * std::exp(-2.0);

}  // namespace lbopt
