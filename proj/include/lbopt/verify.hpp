#pragma once

// Named invariant suites over the kernels, the chain functions, the
// stochastic oracle, and the compressors. The CLI verify-* subcommands and
// the acceptance harness both run these; each check aggregates one invariant
// family and reports a pass flag plus a short detail string.

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbopt/compressors.hpp"
#include "lbopt/oracle.hpp"
#include "lbopt/stats.hpp"
#include "lbopt/worstcase.hpp"

namespace lbopt::verify {

struct Check {
  std::string name;
  bool pass;
  std::string details;
};

struct Report {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"pass", c.pass}, {"details", c.details}});
    }
    return nlohmann::json{{"suite", suite}, {"pass", all_pass()}, {"seconds", seconds},
                          {"checks", arr}};
  }
};

namespace detail {

class Timer {
 public:
  Timer() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

struct Collector {
  Report& rep;
  std::string name;
  int64_t failures = 0;
  int64_t total = 0;
  double worst = 0.0;  // worst margin seen (implementation-defined per check)
  std::string note;

  Collector(Report& r, std::string n) : rep(r), name(std::move(n)) {}

  void count(bool ok, double margin = 0.0) {
    ++total;
    if (!ok) ++failures;
    if (margin > worst) worst = margin;
  }
  ~Collector() {
    std::ostringstream os;
    os << failures << "/" << total << " failures";
    if (worst != 0.0) os << ", worst=" << worst;
    if (!note.empty()) os << ", " << note;
    rep.checks.push_back({name, failures == 0, os.str()});
  }
};

// independent naive summation oracles (no shared kernel code)
inline double naive_psi(double a, double x) {
  if (x <= 0.5) return 0.0;
  double s = 2.0 * x - 1.0;
  double e = std::log(a) * (1.0 - 1.0 / (s * s));
  return e < -700.0 ? 0.0 : std::exp(e);
}
inline double naive_phi(double x) {
  return std::sqrt(M_E) * std::sqrt(2.0 * M_PI) * 0.5 * std::erfc(-x / std::sqrt(2.0));
}
inline double naive_gamma(double x) { return x < 0.0 ? -x * std::exp(1.0 / x + 1.0) : 0.0; }

inline double naive_eval(const WorstCaseFn& f, const std::vector<double>& x) {
  auto xat = [&](int i) { return i <= 0 ? 1.0 : x[i - 1]; };
  double s = 0.0;
  if (f.variant == Variant::classic) {
    for (int i = 1; i <= f.T; ++i) {
      s += naive_psi(M_E, -xat(i - 1)) * naive_phi(-xat(i)) -
           naive_psi(M_E, xat(i - 1)) * naive_phi(xat(i));
    }
    return s;
  }
  for (int i = 1; i <= f.T; ++i) {
    double prod = 1.0;
    for (int m = i - f.K; m <= i - 1; ++m) prod *= naive_psi(f.a.a, xat(m));
    s -= prod * naive_phi(xat(i));
    s += naive_gamma(xat(i));
  }
  return s;
}

inline std::vector<double> mixed_random_point(RngStream& rng, int T) {
  std::vector<double> x(T);
  switch (rng.uniform_int(4)) {
    case 0:  // dense
      for (auto& v : x) v = rng.uniform(-2.0, 2.0);
      break;
    case 1:  // sparse
      for (auto& v : x) v = rng.bernoulli(0.4) ? 0.0 : rng.uniform(-2.0, 2.0);
      break;
    case 2: {  // partial chain of near-ones
      int m = static_cast<int>(rng.uniform_int(T + 1));
      for (int j = 0; j < T; ++j) x[j] = j < m ? rng.uniform(0.9, 1.4) : 0.0;
      break;
    }
    default:  // adversarial: near 1, near the break, large negatives
      for (auto& v : x) {
        switch (rng.uniform_int(4)) {
          case 0: v = rng.uniform(0.9, 1.1); break;
          case 1: v = rng.uniform(0.45, 0.55); break;
          case 2: v = rng.uniform(-8.0, -1.0); break;
          default: v = 0.0;
        }
      }
  }
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel bounds on a dense grid (closed-form tolerance 1e-9, break-point
// smoothness 1e-3 with one-sided steps of 1e-5).

inline Report kernel_suite(int grid_points = 10000) {
  detail::Timer timer;
  Report rep{"kernels", {}, 0.0};
  std::vector<double> as = {1.1, 1.25, 1.5, 2.0, kE};
  std::vector<double> grid(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    grid[i] = -10.0 + 20.0 * i / (grid_points - 1);
  }
  const double tol = 1e-9;

  {
    detail::Collector c{rep, "psi_bounds_grid"};
    for (double av : as) {
      KernelParam a(av);
      double prev = -1.0;
      for (double x : grid) {
        double p = psi(a, x), p1 = psi_d1(a, x), p2 = psi_d2(a, x);
        bool ok = p >= 0.0 && p < a.a && p >= prev && p1 >= 0.0 &&
                  p1 <= psi_d1_bound(a) + tol && std::fabs(p2) <= psi_d2_bound(a) + tol &&
                  (x < 1.0 || p >= 1.0);
        c.count(ok);
        prev = p;
      }
    }
  }
  {
    detail::Collector c{rep, "phi_bounds_grid"};
    for (double x : grid) {
      bool ok = phi(x) >= 0.0 && phi(x) <= kPhiMax + tol && phi_d1(x) >= 0.0 &&
                phi_d1(x) <= kPhiD1Max + tol && std::fabs(phi_d2(x)) <= kPhiD2Bound + tol;
      if (std::fabs(x) <= 0.99) ok = ok && phi_d1(x) >= 1.0 + 1e-3;
      c.count(ok);
    }
  }
  {
    detail::Collector c{rep, "gamma_bounds_grid"};
    for (double x : grid) {
      bool ok = gamma_fn(x) >= 0.0 && gamma_d1(x) <= 0.0 && gamma_d1(x) > -kE &&
                gamma_d2(x) >= 0.0 && gamma_d2(x) <= kGammaD2Max + 1e-12;
      if (x <= -1.0) ok = ok && gamma_d1(x) <= -2.0;
      c.count(ok);
    }
  }
  {
    detail::Collector c{rep, "derivative_consistency_grid"};
    auto hyb = [](double got, double want) {
      return std::fabs(got - want) <= 1e-6 * std::max(1.0, std::fabs(want));
    };
    for (double av : as) {
      KernelParam a(av);
      for (double x : grid) {
        if (std::fabs(x - 0.5) < 1e-4 || std::fabs(x) < 1e-4) continue;
        double h = 1e-6;
        c.count(hyb((psi(a, x + h) - psi(a, x - h)) / (2 * h), psi_d1(a, x)));
        c.count(hyb((psi_d1(a, x + h) - psi_d1(a, x - h)) / (2 * h), psi_d2(a, x)));
      }
    }
    for (double x : grid) {
      if (std::fabs(x) < 1e-4) continue;
      double h = 1e-6;
      c.count(hyb((phi(x + h) - phi(x - h)) / (2 * h), phi_d1(x)));
      c.count(hyb((phi_d1(x + h) - phi_d1(x - h)) / (2 * h), phi_d2(x)));
      c.count(hyb((gamma_fn(x + h) - gamma_fn(x - h)) / (2 * h), gamma_d1(x)));
      c.count(hyb((gamma_d1(x + h) - gamma_d1(x - h)) / (2 * h), gamma_d2(x)));
    }
  }
  {
    detail::Collector c{rep, "breakpoint_smoothness"};
    double h = 1e-5, btol = 1e-3;
    for (double av : as) {
      KernelParam a(av);
      c.count(std::fabs((psi(a, 0.5 + h) - psi(a, 0.5)) / h - psi_d1(a, 0.5)) < btol);
      c.count(std::fabs((psi(a, 0.5) - psi(a, 0.5 - h)) / h - psi_d1(a, 0.5)) < btol);
      c.count(std::fabs((psi_d1(a, 0.5 + h) - psi_d1(a, 0.5)) / h - psi_d2(a, 0.5)) < btol);
      c.count(std::fabs((psi_d1(a, 0.5) - psi_d1(a, 0.5 - h)) / h - psi_d2(a, 0.5)) < btol);
    }
    c.count(std::fabs((gamma_fn(h) - gamma_fn(0.0)) / h - gamma_d1(0.0)) < btol);
    c.count(std::fabs((gamma_fn(0.0) - gamma_fn(-h)) / h - gamma_d1(0.0)) < btol);
    c.count(std::fabs((gamma_d1(h) - gamma_d1(0.0)) / h - gamma_d2(0.0)) < btol);
    c.count(std::fabs((gamma_d1(0.0) - gamma_d1(-h)) / h - gamma_d2(0.0)) < btol);
  }
  {
    detail::Collector c{rep, "limit_clamps"};
    KernelParam e(kE);
    c.count(std::fabs(psi(e, 1e12) - kE) < 1e-9);
    c.count(std::isfinite(psi(e, 1e300)) && std::isfinite(psi_d1(e, 1e300)));
    c.count(std::fabs(gamma_d1(-1e12) + kE) < 1e-9);
    c.count(psi_d1(e, 0.5 + 1e-200) == 0.0);
    c.count(gamma_d2(-1e-300) == 0.0);
  }
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Chain-function suite over a set of (T, K, a) combos.

struct FnCombo {
  int T;
  int K;
  double a;
  Variant variant = Variant::windowed;
};

inline std::vector<FnCombo> default_fn_combos() {
  return {{50, 1, kE, Variant::windowed},
          {60, 4, 1.25, Variant::windowed},
          {80, 6, 7.0 / 6.0, Variant::windowed},
          {100, 2, 1.5, Variant::windowed},
          {40, 1, kE, Variant::classic}};
}

struct FunctionSuiteOpts {
  int points = 120;          // random points per combo
  int hessian_points = 100;  // hessian checks per combo
  int progress_points = 200;
  uint64_t seed = 1;
  bool inject_grad_bug = false;  // planted fault: perturbs the analytic gradient
};

inline Report function_suite(const std::vector<FnCombo>& combos, const FunctionSuiteOpts& opt) {
  detail::Timer timer;
  Report rep{"function", {}, 0.0};
  RngStream root(opt.seed);

  for (const auto& combo : combos) {
    WorstCaseFn f(combo.T, combo.K, combo.a, combo.variant);
    auto lc = f.lemma_constants();
    std::ostringstream tag_s;
    tag_s << to_string(combo.variant)[0] << "_T" << combo.T << "_K" << combo.K;
    std::string tag = tag_s.str();
    auto rng = root.sub(tag);

    auto grad_checked = [&](const std::vector<double>& x) {
      std::vector<double> g = grad(f, x);
      if (opt.inject_grad_bug) g[0] += 1e-3;
      return g;
    };

    std::vector<std::vector<double>> pts(opt.points);
    for (auto& x : pts) x = detail::mixed_random_point(rng, f.T);

    {
      detail::Collector c{rep, "grad_vs_central_diff_" + tag};
      for (const auto& x : pts) {
        auto g = grad_checked(x);
        std::vector<double> xp = x;
        for (int j = 0; j < f.T; ++j) {
          double h = 1e-6 * std::max(1.0, std::fabs(x[j]));
          double orig = xp[j];
          xp[j] = orig + h;
          double fp = eval(f, xp);
          xp[j] = orig - h;
          double fm = eval(f, xp);
          xp[j] = orig;
          double fd = (fp - fm) / (2.0 * h);
          double err = std::fabs(g[j] - fd) / std::max(1.0, std::fabs(g[j]));
          c.count(err <= 1e-5, err);
        }
      }
    }
    {
      detail::Collector c{rep, "large_gradient_" + tag};
      for (const auto& x : pts) {
        if (prog(x, f.K) >= f.T) continue;
        auto g = grad_checked(x);
        double n2 = 0.0;
        for (double v : g) n2 += v * v;
        c.count(std::sqrt(n2) > 1.0);
      }
    }
    {
      detail::Collector c{rep, "grad_sup_norm_" + tag};
      detail::Collector v{rep, "value_lower_bound_" + tag};
      for (const auto& x : pts) {
        auto g = grad_checked(x);
        double ninf = 0.0;
        for (double z : g) ninf = std::max(ninf, std::fabs(z));
        c.count(ninf <= lc.gamma_inf);
        v.count(eval(f, x) >= -lc.delta0 * f.T);
      }
    }
    {
      detail::Collector c{rep, "progress_support_exact_" + tag};
      for (int it = 0; it < opt.progress_points; ++it) {
        int m = static_cast<int>(rng.uniform_int(f.T - 1));
        std::vector<double> x(f.T, 0.0);
        for (int j = 0; j < m; ++j) x[j] = rng.uniform(0.8, 2.0);
        int pos = m + 2, run = 0;
        while (pos <= f.T) {
          if (run < f.K - 1 && rng.bernoulli(0.4)) {
            x[pos - 1] = rng.uniform(0.5, 2.0);
            ++run;
          } else {
            run = 0;
          }
          ++pos;
        }
        if (prog(x, f.K) != m) continue;
        auto g = grad_checked(x);
        int got = prog(g, 1);
        c.count(got <= std::max(m + 1, prog(x, 1)));
      }
    }
    {
      detail::Collector c{rep, "hessian_band_and_norm_" + tag};
      for (int it = 0; it < opt.hessian_points; ++it) {
        const auto& x = pts[it % pts.size()];
        auto hb = hessian_band(f, x);
        double norm = hb.spectral_norm();
        bool ok = hb.max_abs_outside_band == 0.0 && norm <= lc.ell1;
        c.count(ok, norm / lc.ell1);
      }
    }
    {
      detail::Collector c{rep, "eval_vs_naive_oracle_" + tag};
      for (const auto& x : pts) {
        double got = eval(f, x);
        double want = detail::naive_eval(f, x);
        double err = std::fabs(got - want) / std::max(1.0, std::fabs(want));
        c.count(err <= 1e-12, err);
      }
    }
  }
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Oracle suite: exact variance bound, MC unbiasedness, exact masked law.

inline Report oracle_suite(uint64_t seed = 1, int64_t mc_draws = 100000, int var_points = 1000) {
  detail::Timer timer;
  Report rep{"oracle", {}, 0.0};
  RngStream root(seed);
  double eps = 1e-3;

  std::vector<ObjectiveInstance> insts;
  insts.push_back(build_instance(1.0, 2.0 * 12 * 152 * eps * 12.5, eps, 2,
                                 2.0 * eps * 529.0 / 0.25, 20, Variant::classic));
  {
    int K = window_for_workers(2);
    auto c = constants(K, 1.0 + 1.0 / K, Variant::windowed);
    insts.push_back(build_instance(1.0, 2.0 * c.delta0 * c.ell1 * eps * (2 * K + 0.5), eps, 2,
                                   2.0 * eps * c.gamma_inf * c.gamma_inf / 0.3, 2 * 4 * K,
                                   Variant::windowed));
  }

  for (size_t ii = 0; ii < insts.size(); ++ii) {
    const auto& inst = insts[ii];
    std::string tag = to_string(inst.fn.variant);
    auto rng = root.sub(tag);
    {
      detail::Collector c{rep, "exact_variance_bound_" + tag};
      for (int it = 0; it < var_points; ++it) {
        std::vector<double> x(inst.d, 0.0);
        int m = static_cast<int>(rng.uniform_int(inst.d + 1));
        for (int j = 0; j < m; ++j) {
          x[j] = rng.bernoulli(0.2) ? 0.0 : rng.uniform(-2.0, 2.0) * inst.lambda;
        }
        double v = exact_variance(inst, x);
        c.count(v <= inst.sigma2 * (1.0 + 1e-12), v / inst.sigma2);
      }
    }
    {
      // frontier point: coordinates 1..5 set, so coordinate 6 is masked
      std::vector<double> x(inst.d, 0.0);
      for (int j = 0; j < 5; ++j) x[j] = inst.lambda;
      auto g = inst.grad_scaled(x);
      int p1 = inst.prog1(x);
      std::vector<stats::Accumulator> acc(inst.d);
      int64_t lucky = 0;
      detail::Collector law{rep, "masked_two_point_law_" + tag};
      for (int64_t i = 0; i < mc_draws; ++i) {
        auto r = root.sub("mc").sub(ii).sub(static_cast<uint64_t>(i));
        auto dr = draw_with_grad(inst, x, std::span<const double>(g.data(), inst.fn.T), r);
        lucky += dr.xi;
        bool ok = true;
        for (int j = 0; j < inst.d; ++j) {
          acc[j].add(dr.result[j]);
          if (j + 1 > p1) {
            ok = ok && (dr.result[j] == 0.0 || dr.result[j] == g[j] / inst.p_sigma);
          } else {
            ok = ok && dr.result[j] == g[j];
          }
        }
        law.count(ok);
      }
      detail::Collector unb{rep, "mc_unbiasedness_" + tag};
      for (int j = 0; j < inst.d; ++j) {
        unb.count(std::fabs(acc[j].mean - g[j]) <= acc[j].sigma_band(4.0) + 1e-15);
      }
      detail::Collector bin{rep, "bernoulli_count_band_" + tag};
      double sd = std::sqrt(inst.p_sigma * (1.0 - inst.p_sigma) * mc_draws);
      bin.count(std::fabs(lucky - inst.p_sigma * mc_draws) <= 4.0 * sd + 1e-9);
    }
  }
  rep.seconds = timer.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Compressor suite: unbiasedness, variance factor, subset uniformity.

inline Report compressor_suite(uint64_t seed = 1, int64_t mc_draws = 100000) {
  detail::Timer timer;
  Report rep{"compressors", {}, 0.0};
  RngStream root(seed);

  for (auto [d, K] : std::vector<std::pair<int, int>>{{16, 1}, {16, 4}}) {
    auto rng = root.sub("u").sub(d).sub(K);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    double xsq = 0.0;
    for (double v : x) xsq += v * v;
    std::vector<stats::Accumulator> acc(d);
    stats::Accumulator dist;
    for (int64_t i = 0; i < mc_draws; ++i) {
      auto r = root.sub("mc").sub(d * 100 + K).sub(static_cast<uint64_t>(i));
      auto dec = rand_k(x, K, r).decode(d);
      double e2 = 0.0;
      for (int j = 0; j < d; ++j) {
        acc[j].add(dec[j]);
        e2 += (dec[j] - x[j]) * (dec[j] - x[j]);
      }
      dist.add(e2);
    }
    std::string tag = "rand" + std::to_string(K) + "_d" + std::to_string(d);
    detail::Collector unb{rep, "unbiasedness_" + tag};
    for (int j = 0; j < d; ++j) {
      unb.count(std::fabs(acc[j].mean - x[j]) <= acc[j].sigma_band(4.0) + 1e-14);
    }
    detail::Collector var{rep, "variance_factor_" + tag};
    double omega = static_cast<double>(d) / K - 1.0;
    var.count(dist.mean <= omega * xsq + dist.sigma_band(4.0) + 1e-12,
              dist.mean / (omega * xsq));
  }

  {
    detail::Collector c{rep, "subset_uniformity_chi2"};
    for (auto [d, K] : std::vector<std::pair<int, int>>{{4, 2}, {5, 3}, {6, 3}}) {
      std::vector<double> x(d, 1.0);
      std::map<std::vector<uint32_t>, int64_t> counts;
      for (int64_t i = 0; i < mc_draws; ++i) {
        auto r = root.sub("chi").sub(d * 10 + K).sub(static_cast<uint64_t>(i));
        auto m = rand_k(x, K, r);
        std::vector<uint32_t> subset;
        for (auto& [idx, v] : m.entries) subset.push_back(idx);
        std::sort(subset.begin(), subset.end());
        counts[subset]++;
      }
      long long cells = 1;
      for (int i = 1; i <= K; ++i) cells = cells * (d - K + i) / i;
      double expected = static_cast<double>(mc_draws) / cells;
      double chi2 = 0.0;
      for (auto& [subset, cnt] : counts) chi2 += (cnt - expected) * (cnt - expected) / expected;
      double pval = stats::chi2_sf(chi2, static_cast<double>(cells - 1));
      c.count(static_cast<long long>(counts.size()) == cells && pval > 1e-3, pval);
    }
  }
  rep.seconds = timer.seconds();
  return rep;
}

}  // namespace lbopt::verify
