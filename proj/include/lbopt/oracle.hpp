#pragma once

// Adversarial stochastic-gradient oracle: one Bernoulli(p_sigma) draw per
// call, shared across all coordinates past prog^1 of the query point. A
// failed draw zeroes those coordinates; a successful one inflates them by
// 1/p_sigma, which keeps the oracle unbiased.

#include <cassert>
#include <span>
#include <vector>

#include "lbopt/rng.hpp"
#include "lbopt/worstcase.hpp"

namespace lbopt {

struct OracleDraw {
  bool xi;                     // the shared Bernoulli outcome
  int prog1;                   // prog^1 of the query point
  std::vector<double> result;  // d-dimensional stochastic gradient
};

// Draw with a precomputed true gradient (first T chain components). The
// simulator caches gradients per constructed point, so the per-draw cost is
// just the masking.
inline OracleDraw draw_with_grad(const ObjectiveInstance& inst, std::span<const double> x,
                                 std::span<const double> grad_chain, RngStream& rng) {
  OracleDraw out;
  out.prog1 = inst.prog1(x);
  out.xi = rng.bernoulli(inst.p_sigma);
  out.result.assign(inst.d, 0.0);
  double boost = out.xi ? 1.0 / inst.p_sigma : 0.0;
  for (int j = 0; j < static_cast<int>(grad_chain.size()); ++j) {
    double g = grad_chain[j];
    out.result[j] = (j + 1 <= out.prog1) ? g : g * boost;
    // zero-respecting compatibility: never fabricate support
    assert(out.result[j] == 0.0 || g != 0.0);
  }
  return out;
}

inline OracleDraw draw(const ObjectiveInstance& inst, std::span<const double> x, RngStream& rng) {
  return draw_with_grad(inst, x, inst.grad_chain(x), rng);
}

// Exact per-point oracle variance: sum over masked coordinates of
// grad_j^2 (1 - p_sigma)/p_sigma. By the progress lemma at most one masked
// coordinate carries a nonzero gradient, but the sum form is the definition.
inline double exact_variance(const ObjectiveInstance& inst, std::span<const double> x) {
  if (!(inst.p_sigma > 0.0)) throw Error("CONFIG", "exact_variance: p_sigma must be positive");
  if (inst.p_sigma >= 1.0) return 0.0;
  int p1 = inst.prog1(x);
  std::vector<double> g = inst.grad_chain(x);
  double s = 0.0;
  for (int j = p1; j < static_cast<int>(g.size()); ++j) s += g[j] * g[j];
  return s * (1.0 - inst.p_sigma) / inst.p_sigma;
}

}  // namespace lbopt
