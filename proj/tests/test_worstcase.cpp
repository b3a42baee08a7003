#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lbopt/worstcase.hpp"

using namespace lbopt;
using testutil::rel_err;

// ---------------------------------------------------------------------------
// Independent brute-force oracles, written directly from the defining sums
// with no shared code with the library kernels.

namespace oracle {

double psi_raw(double a, double x) {
  if (x <= 0.5) return 0.0;
  double s = 2.0 * x - 1.0;
  double e = std::log(a) * (1.0 - 1.0 / (s * s));
  return e < -700.0 ? 0.0 : std::exp(e);
}
double phi_raw(double x) {
  return std::sqrt(M_E) * std::sqrt(2.0 * M_PI) * 0.5 * std::erfc(-x / std::sqrt(2.0));
}
double gamma_raw(double x) { return x < 0.0 ? -x * std::exp(1.0 / x + 1.0) : 0.0; }

double eval_windowed(int T, int K, double a, const std::vector<double>& x) {
  auto xat = [&](int i) { return i <= 0 ? 1.0 : x[i - 1]; };
  double s = 0.0;
  for (int i = 1; i <= T; ++i) {
    double prod = 1.0;
    for (int m = i - K; m <= i - 1; ++m) prod *= psi_raw(a, xat(m));
    s -= prod * phi_raw(xat(i));
    s += gamma_raw(xat(i));
  }
  return s;
}

double eval_classic(int T, const std::vector<double>& x) {
  auto xat = [&](int i) { return i <= 0 ? 1.0 : x[i - 1]; };
  double s = 0.0;
  for (int i = 1; i <= T; ++i) {
    s += psi_raw(M_E, -xat(i - 1)) * phi_raw(-xat(i)) - psi_raw(M_E, xat(i - 1)) * phi_raw(xat(i));
  }
  return s;
}

// brute-force prog^K straight from the definition
int prog_bf(const std::vector<double>& x, int K) {
  auto xat = [&](int i) { return i <= 0 ? 1.0 : x[i - 1]; };
  int best = 0;
  for (int i = 0; i <= static_cast<int>(x.size()); ++i) {
    bool ok = true;
    for (int m = i - K + 1; m <= i; ++m) {
      if (xat(m) == 0.0) { ok = false; break; }
    }
    if (ok) best = i;
  }
  return best;
}

std::vector<double> grad_fd(const WorstCaseFn& f, const std::vector<double>& x) {
  std::vector<double> g(f.T), xp = x;
  for (int j = 0; j < f.T; ++j) {
    double h = 1e-6 * std::max(1.0, std::fabs(x[j]));
    double orig = xp[j];
    xp[j] = orig + h;
    double fp = eval(f, xp);
    xp[j] = orig - h;
    double fm = eval(f, xp);
    xp[j] = orig;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle

namespace {
int prog1(const std::vector<double>& v) { return prog(v, 1); }
double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double z : v) s += z * z;
  return std::sqrt(s);
}
double norm_inf(const std::vector<double>& v) {
  double s = 0.0;
  for (double z : v) s = std::max(s, std::fabs(z));
  return s;
}
}  // namespace

TEST_CASE("prog matches the definition") {
  REQUIRE(prog(std::vector<double>{0, 0, 0, 0}, 1) == 0);
  REQUIRE(prog(std::vector<double>{0, 0, 0, 0}, 3) == 0);
  REQUIRE(prog(std::vector<double>{1, 1, 0, 1}, 1) == 4);
  REQUIRE(prog(std::vector<double>{1, 1, 0, 1}, 2) == 2);
  RngStream rng(17);
  for (int it = 0; it < 300; ++it) {
    int T = 1 + static_cast<int>(rng.uniform_int(12));
    int K = 1 + static_cast<int>(rng.uniform_int(5));
    auto x = testutil::random_sparse_vec(rng, T, 0.5);
    REQUIRE(prog(x, K) == oracle::prog_bf(x, K));
    REQUIRE(prog(x, K) <= prog(x, 1));
  }
}

TEST_CASE("eval spot values at zero") {
  // K=1, a=e, T=3: only the i=1 term survives, F(0) = -Phi(0)
  WorstCaseFn f1(3, 1, kE, Variant::windowed);
  std::vector<double> z3(3, 0.0);
  REQUIRE(rel_err(eval(f1, z3), -2.0663656770612464692) < 1e-14);
  // K=2, T=2: i=1 keeps the all-prefix window, i=2 has Psi(x_1)=0
  WorstCaseFn f2(2, 2, 1.5, Variant::windowed);
  std::vector<double> z2(2, 0.0);
  REQUIRE(rel_err(eval(f2, z2), -2.0663656770612464692) < 1e-14);
  REQUIRE_THROWS(eval(f2, z3));
}

TEST_CASE("eval agrees with the brute-force oracle") {
  RngStream rng(23);
  for (auto [T, K, a] : std::vector<std::tuple<int, int, double>>{
           {12, 1, kE}, {15, 4, 1.25}, {20, 6, 7.0 / 6.0}, {9, 2, 1.5}}) {
    WorstCaseFn f(T, K, a, Variant::windowed);
    for (int it = 0; it < 50; ++it) {
      auto x = testutil::random_sparse_vec(rng, T, 0.25);
      REQUIRE(rel_err(eval(f, x), oracle::eval_windowed(T, K, a, x)) < 1e-12);
    }
  }
}

TEST_CASE("classic eval equals the naive Eq-2 summation") {
  RngStream rng(29);
  WorstCaseFn f(25, 1, kE, Variant::classic);
  for (int it = 0; it < 100; ++it) {
    auto x = testutil::random_sparse_vec(rng, 25, 0.3);
    double got = eval(f, x);
    double want = oracle::eval_classic(25, x);
    REQUIRE(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
  }
}

TEST_CASE("gradient support at zero is contained in the first coordinate") {
  for (Variant v : {Variant::windowed, Variant::classic}) {
    WorstCaseFn f(10, v == Variant::classic ? 1 : 3, v == Variant::classic ? kE : 1.3, v);
    std::vector<double> z(10, 0.0);
    auto g = grad(f, z);
    REQUIRE(g[0] != 0.0);
    for (int j = 1; j < 10; ++j) REQUIRE(g[j] == 0.0);
  }
}

TEST_CASE("gradient matches central finite differences") {
  RngStream rng(31);
  for (auto [T, K, a, v] : std::vector<std::tuple<int, int, double, Variant>>{
           {14, 1, kE, Variant::windowed},
           {16, 4, 1.25, Variant::windowed},
           {12, 2, 1.5, Variant::windowed},
           {14, 1, kE, Variant::classic}}) {
    WorstCaseFn f(T, K, a, v);
    for (int it = 0; it < 40; ++it) {
      auto x = testutil::random_sparse_vec(rng, T, it % 2 ? 0.3 : 0.0);
      auto g = grad(f, x);
      auto gfd = oracle::grad_fd(f, x);
      for (int j = 0; j < T; ++j) {
        REQUIRE(std::fabs(g[j] - gfd[j]) <= 1e-5 * std::max(1.0, std::fabs(g[j])));
      }
    }
  }
}

TEST_CASE("progress lemma: gradient support containment is exact") {
  RngStream rng(37);
  int T = 30;
  for (auto [K, a] : std::vector<std::pair<int, double>>{{1, kE}, {3, 1.3}, {6, 7.0 / 6.0}}) {
    WorstCaseFn f(T, K, a, Variant::windowed);
    for (int it = 0; it < 200; ++it) {
      int m = static_cast<int>(rng.uniform_int(T - 1));
      std::vector<double> x(T, 0.0);
      for (int j = 0; j < m; ++j) x[j] = rng.uniform(0.8, 2.0);
      // beyond m+1: nonzero runs strictly shorter than K
      int pos = m + 2, run = 0;
      while (pos <= T) {
        if (run < K - 1 && rng.bernoulli(0.4)) {
          x[pos - 1] = rng.uniform(-2.0, 2.0);
          if (x[pos - 1] == 0.0) x[pos - 1] = 1.0;
          ++run;
        } else {
          run = 0;
        }
        ++pos;
      }
      REQUIRE(prog(x, K) == m);
      auto g = grad(f, x);
      int got = prog1(g);
      REQUIRE(got <= std::max(m + 1, prog(x, 1)));
      // prog^K(x) < T forces a unit gradient norm
      REQUIRE(norm2(g) > 1.0);
    }
  }
}

TEST_CASE("large gradient at adversarial points") {
  int T = 20;
  WorstCaseFn f(T, 4, 1.25, Variant::windowed);
  RngStream rng(41);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> x(T);
    for (auto& xv : x) {
      switch (rng.uniform_int(4)) {
        case 0: xv = rng.uniform(0.9, 1.1); break;     // near 1
        case 1: xv = rng.uniform(0.45, 0.55); break;   // near the Psi break
        case 2: xv = rng.uniform(-8.0, -1.0); break;   // large negatives
        default: xv = 0.0;
      }
    }
    if (prog(x, 4) < T) {
      auto g = grad(f, x);
      REQUIRE(norm2(g) > 1.0);
    }
  }
}

TEST_CASE("gradient and value bounds from the lemma constants") {
  RngStream rng(43);
  for (auto [T, K, a] : std::vector<std::tuple<int, int, double>>{{20, 1, kE}, {24, 4, 1.25}}) {
    WorstCaseFn f(T, K, a, Variant::windowed);
    auto c = f.lemma_constants();
    for (int it = 0; it < 300; ++it) {
      auto x = testutil::random_sparse_vec(rng, T, 0.2, -4.0, 4.0);
      REQUIRE(eval(f, x) >= -c.delta0 * T);
      REQUIRE(norm_inf(grad(f, x)) <= c.gamma_inf);
    }
  }
  // value floor alone is cheap enough for a large sample
  WorstCaseFn f(30, 4, 1.25, Variant::windowed);
  auto c = f.lemma_constants();
  for (int it = 0; it < 10000; ++it) {
    auto x = testutil::random_sparse_vec(rng, 30, 0.3, -5.0, 5.0);
    REQUIRE(eval(f, x) >= -c.delta0 * 30);
  }
}

TEST_CASE("lemma constants closed forms") {
  auto c = constants(1, kE, Variant::classic);
  REQUIRE(c.delta0 == 12.0);
  REQUIRE(c.ell1 == 152.0);
  REQUIRE(c.gamma_inf == 23.0);

  auto c1 = constants(1, kE, Variant::windowed);
  REQUIRE(rel_err(c1.delta0, 11.233928541814116078) < 1e-13);
  REQUIRE(rel_err(c1.ell1, 996.09753848211240645) < 1e-13);

  auto c4 = constants(4, 1.25, Variant::windowed);
  REQUIRE(rel_err(c4.gamma_inf, 1393.44804469343617) < 1e-13);
  REQUIRE(rel_err(c4.delta0, 10.0896761575) < 1e-10);
}

TEST_CASE("hessian band structure and norm") {
  RngStream rng(47);
  for (auto [T, K, a] : std::vector<std::tuple<int, int, double>>{
           {50, 1, kE}, {60, 3, 1.3}, {80, 6, 7.0 / 6.0}}) {
    WorstCaseFn f(T, K, a, Variant::windowed);
    auto c = f.lemma_constants();
    for (int it = 0; it < 8; ++it) {
      auto x = testutil::random_sparse_vec(rng, T, 0.2);
      auto hb = hessian_band(f, x);
      REQUIRE(hb.max_abs_outside_band == 0.0);  // bandwidth exactly 2K+1
      REQUIRE(hb.spectral_norm() <= c.ell1);
    }
    // at x = 0 everything outside the leading (K+1) block vanishes exactly
    std::vector<double> z(T, 0.0);
    auto hb0 = hessian_band(f, z);
    REQUIRE(hb0.max_abs_outside_band == 0.0);
    for (int j = 1; j <= T; ++j) {
      for (int i = std::max(1, j - K); i <= std::min(T, j + K); ++i) {
        if (std::max(i, j) > K + 1) REQUIRE(hb0.at(i, j) == 0.0);
      }
    }
  }
  REQUIRE_THROWS_AS(hessian_band(WorstCaseFn(2001, 1, kE, Variant::windowed),
                                 std::vector<double>(2001, 0.0)),
                    Error);
}

TEST_CASE("power-iteration norm agrees with the dense eigensolve") {
  // same band evaluated through both paths
  WorstCaseFn f(60, 3, 1.3, Variant::windowed);
  RngStream rng(53);
  auto x = testutil::random_sparse_vec(rng, 60, 0.1);
  auto hb = hessian_band(f, x);
  double dense = hb.spectral_norm();  // T <= 200: dense path
  HessianBand big = hb;
  big.T = 60;
  // force the iterative path by copying into a wrapper with T > 200 is not
  // possible without padding; instead compare against Eigen directly here
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(60, 60);
  for (int j = 1; j <= 60; ++j) {
    for (int i = std::max(1, j - 3); i <= std::min(60, j + 3); ++i) {
      H(i - 1, j - 1) = 0.5 * (hb.at(i, j) + hb.at(j, i));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  double want = std::max(std::fabs(es.eigenvalues()(0)), std::fabs(es.eigenvalues()(59)));
  REQUIRE(rel_err(dense, want) < 1e-12);
}

TEST_CASE("build_instance derived quantities") {
  // sigma^2 = 0 collapses the oracle to deterministic
  double D0 = 2.0 * 12.0 * 152.0 * 1e-3 * 30.5;  // classic, eps = 1e-3, T = 30
  auto inst0 = build_instance(1.0, D0, 1e-3, 4, 0.0, 64, Variant::classic);
  REQUIRE(inst0.p_sigma == 1.0);
  REQUIRE(inst0.fn.K == 1);
  REQUIRE(inst0.fn.T == 30);
  REQUIRE(rel_err(inst0.lambda, std::sqrt(2e-3) * 152.0) < 1e-14);
  REQUIRE(inst0.p_K == 2.0 / 64.0);

  // n = 2 windowed: K = 2*ceil(2 log 4) = 6, a = 1 + 1/6
  REQUIRE(window_for_workers(2) == 6);
  REQUIRE(window_for_workers(1) == 4);
  REQUIRE(window_for_workers(8) == 12);
  REQUIRE(window_for_workers(32) == 18);
  auto c6 = constants(6, 1.0 + 1.0 / 6.0, Variant::windowed);
  double eps = 1e-3, L = 1.0;
  double Delta = 2.0 * c6.delta0 * c6.ell1 * eps * 20.5;  // T = 20
  auto inst = build_instance(L, Delta, eps, 2, 5e5, 128, Variant::windowed);
  REQUIRE(inst.fn.K == 6);
  REQUIRE(rel_err(inst.fn.a.a, 7.0 / 6.0) < 1e-15);
  REQUIRE(inst.fn.T == 20);
  REQUIRE(inst.p_K == 12.0 / 128.0);
  REQUIRE(inst.p_sigma == std::min(2.0 * eps * c6.gamma_inf * c6.gamma_inf / 5e5, 1.0));

  REQUIRE_THROWS_AS(build_instance(1.0, 1e-3, 1e-3, 4, 0.0, 64, Variant::classic), Error);
  try {
    build_instance(1.0, 1e-3, 1e-3, 4, 0.0, 64, Variant::classic);
  } catch (const Error& e) {
    REQUIRE(e.code() == "T_ZERO");
  }
  try {
    build_instance(1.0, D0, 1e-3, 4, 0.0, 2, Variant::classic);
  } catch (const Error& e) {
    REQUIRE(e.code() == "DIM_TOO_SMALL");
  }
}

TEST_CASE("scaled objective: smoothness, range, and the 2-eps gap") {
  double eps = 1e-3, L = 2.0;
  auto c = constants(1, kE, Variant::classic);
  double Delta = 2.0 * c.delta0 * c.ell1 * eps * 10.7 / L;  // T = 10
  auto inst = build_instance(L, Delta, eps, 1, 0.0, 16, Variant::classic);
  int T = inst.fn.T;
  REQUIRE(T == 10);
  RngStream rng(59);

  // value never below f(0) - Delta
  std::vector<double> zero(inst.d, 0.0);
  double f0 = inst.eval_scaled(zero);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> x(inst.d, 0.0);
    for (int j = 0; j < inst.d; ++j) {
      x[j] = rng.bernoulli(0.3) ? 0.0 : rng.uniform(-3.0, 3.0) * inst.lambda;
    }
    REQUIRE(inst.eval_scaled(x) >= f0 - inst.Delta * (1.0 + 1e-12));

    // gradient gap and the artificial coordinates
    auto g = inst.grad_scaled(x);
    double gsq = 0.0;
    for (double v : g) gsq += v * v;
    for (int j = T; j < inst.d; ++j) REQUIRE(g[j] == 0.0);
    std::vector<double> y(x.begin(), x.begin() + T);
    for (auto& v : y) v /= inst.lambda;
    if (prog(y, inst.fn.K) < T) REQUIRE(gsq > 2.0 * inst.eps);
    REQUIRE(rel_err(gsq, inst.grad_norm_sq(x)) < 1e-12);
  }

  // empirical Lipschitz estimates stay below L
  for (int it = 0; it < 200; ++it) {
    std::vector<double> x(inst.d, 0.0), y(inst.d, 0.0);
    for (int j = 0; j < inst.d; ++j) {
      x[j] = rng.uniform(-2.0, 2.0) * inst.lambda;
      y[j] = x[j] + rng.uniform(-0.5, 0.5) * inst.lambda;
    }
    auto gx = inst.grad_scaled(x);
    auto gy = inst.grad_scaled(y);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < inst.d; ++j) {
      num += (gx[j] - gy[j]) * (gx[j] - gy[j]);
      den += (x[j] - y[j]) * (x[j] - y[j]);
    }
    REQUIRE(std::sqrt(num) <= inst.L * std::sqrt(den) * (1.0 + 1e-9));
  }
}

TEST_CASE("instance JSON round trip") {
  auto inst = build_instance(1.0, 2.0 * 12.0 * 152.0 * 1e-3 * 25.5, 1e-3, 4, 123.0, 64, Variant::classic);
  nlohmann::json j = inst;
  auto back = instance_from_json(j);
  REQUIRE(back.fn.T == inst.fn.T);
  REQUIRE(back.fn.K == inst.fn.K);
  REQUIRE(back.lambda == inst.lambda);
  REQUIRE(back.p_sigma == inst.p_sigma);
  REQUIRE(back.consts.ell1 == inst.consts.ell1);
  REQUIRE(to_string(back.fn.variant) == "classic");
}

TEST_CASE("artificial coordinates never influence the scaled objective") {
  auto inst = build_instance(1.0, 2.0 * 12.0 * 152.0 * 1e-3 * 10.5, 1e-3, 1, 0.0, 30,
                             Variant::classic);
  REQUIRE(inst.fn.T == 10);
  RngStream rng(61);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> x(inst.d, 0.0);
    for (int j = 0; j < inst.fn.T; ++j) x[j] = rng.uniform(-2.0, 2.0) * inst.lambda;
    double base = inst.eval_scaled(x);
    auto gbase = inst.grad_scaled(x);
    for (int j = inst.fn.T; j < inst.d; ++j) x[j] = rng.uniform(-5.0, 5.0);
    REQUIRE(inst.eval_scaled(x) == base);
    REQUIRE(inst.grad_scaled(x) == gbase);
  }
}
