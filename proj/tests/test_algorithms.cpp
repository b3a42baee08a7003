#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lbopt/algorithms.hpp"
#include "lbopt/stats.hpp"

using namespace lbopt;

namespace {

ObjectiveInstance classic_inst(int T_target, int d, double sigma2 = 0.0, int n = 1,
                               double eps = 1e-3, double L = 1.0) {
  double Delta = 2.0 * 12.0 * 152.0 * eps * (T_target + 0.5) / L;
  return build_instance(L, Delta, eps, n, sigma2, d, Variant::classic);
}

}  // namespace

TEST_CASE("batch size clamps to 1 when sigma2 = 0") {
  auto inst = classic_inst(5, 8);
  BatchSyncSgd alg(inst, {1.0, 0.0, 0.0});
  REQUIRE(alg.batch_size() == 1);
  auto inst2 = classic_inst(5, 8, 6.4e-3, 2);  // sigma2/(eps n) = 3.2
  BatchSyncSgd alg2(inst2, {1.0, 0.0, 0.0});
  REQUIRE(alg2.batch_size() == 4);
}

TEST_CASE("qsgd parameter formulas") {
  // frozen example: h=1, tau_w=0.01, d=1000, n=10, sigma2/eps=100 -> t*=10
  auto inst = classic_inst(10, 1000, 100.0 * 1e-3, 10);
  REQUIRE(inst.sigma2 / inst.eps == 100.0);
  auto p = qsgd_params(inst, {1.0, 0.0, 0.01});
  REQUIRE(p.t_star == 10.0);
  REQUIRE(p.b == 10);
  REQUIRE(p.m == 1000);
  REQUIRE(p.gamma == 0.5);

  // tau_w = 0 forces m = 1
  auto p0 = qsgd_params(inst, {1.0, 0.0, 0.0});
  REQUIRE(p0.m == 1);
}

TEST_CASE("P2 steady-state iteration wall time is b*h + d*tau_w + d*tau_s") {
  int d = 8, n = 1;
  auto inst = classic_inst(6, d, 2.0 * 1e-3 * n, n);  // b = 2
  BatchSyncSgd alg(inst, {1.0, 0.5, 0.25});
  REQUIRE(alg.batch_size() == 2);
  RunOptions opts;
  opts.keep_trace = true;
  opts.budget = 100.0;
  SimEngine eng(Protocol::P2, inst, {1.0, 0.5, 0.25}, alg, 1, opts);
  eng.run();
  std::vector<double> updates;
  for (const auto& ev : eng.trace()) {
    if (ev.at("kind") == "point" && ev.at("node") == 0) updates.push_back(ev.at("t"));
  }
  REQUIRE(updates.size() >= 3);
  double wall = 2.0 * 1.0 + d * 0.25 + d * 0.5;  // b*h + d*tau_w + d*tau_s
  for (size_t i = 1; i < updates.size(); ++i) {
    REQUIRE(updates[i] - updates[i - 1] == wall);
  }
}

TEST_CASE("noiseless batch sync equals plain gradient descent exactly") {
  auto inst = classic_inst(8, 10);
  BatchSyncSgd alg(inst, {1.0, 0.0, 0.0});
  SimEngine eng(Protocol::P1, inst, {1.0, 0.0, 0.0}, alg, 9);
  auto rec = eng.run();
  REQUIRE(rec.time_to_eps.has_value());

  // standalone descent oracle
  double gamma = 1.0 / (2.0 * inst.L);
  std::vector<double> x(inst.d, 0.0);
  long k = 0;
  double gsq = 0.0;
  while (true) {
    auto g = inst.grad_scaled(x);
    gsq = 0.0;
    for (double v : g) gsq += v * v;
    if (gsq <= inst.eps) break;
    for (int j = 0; j < inst.d; ++j) x[j] -= gamma * g[j];
    ++k;
  }
  REQUIRE(*rec.time_to_eps == static_cast<double>(k));  // h = 1
  REQUIRE(rec.best_grad_sq == gsq);                     // bitwise trajectory match
}

TEST_CASE("local sgd runs alone and matches descent when noiseless") {
  auto inst = classic_inst(8, 10, 0.0, 3);  // three workers available, one used
  LocalSgd alg(inst, {1.0, 1.0, 1.0});
  SimEngine eng(Protocol::P2, inst, {1.0, 1.0, 1.0}, alg, 2);
  auto rec = eng.run();
  REQUIRE(rec.coords_s2w == 0);
  REQUIRE(rec.coords_w2s == 0);
  REQUIRE(rec.time_to_eps.has_value());

  double gamma = 1.0 / (2.0 * inst.L);
  std::vector<double> x(inst.d, 0.0);
  long k = 0;
  while (true) {
    auto g = inst.grad_scaled(x);
    double gsq = 0.0;
    for (double v : g) gsq += v * v;
    if (gsq <= inst.eps) break;
    for (int j = 0; j < inst.d; ++j) x[j] -= gamma * g[j];
    ++k;
  }
  REQUIRE(*rec.time_to_eps == static_cast<double>(k));

  // step-size rule with noise
  auto noisy = classic_inst(8, 10, 8.0 * 1e-3);
  LocalSgd fine(noisy, {});
  REQUIRE(fine.gamma() == std::min(0.5, noisy.eps / (2.0 * noisy.sigma2)));
}

TEST_CASE("qsgd aggregation is unbiased around the batched step") {
  RngStream root(5);
  int d = 12, n = 3, m = 7;
  std::vector<std::vector<double>> sums(n);
  std::vector<double> want(d, 0.0);
  for (int i = 0; i < n; ++i) {
    sums[i] = testutil::random_vec(root, d, -3.0, 3.0);
    for (int j = 0; j < d; ++j) want[j] += sums[i][j] / n;
  }
  const int N = 40000;
  std::vector<stats::Accumulator> acc(d);
  for (int t = 0; t < N; ++t) {
    std::vector<double> agg(d, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) {
        auto rng = root.sub("mc").sub((static_cast<uint64_t>(t) * n + i) * m + k);
        auto dec = rand_k(sums[i], 1, rng).decode(d);
        for (int j = 0; j < d; ++j) agg[j] += dec[j] / (n * m);
      }
    }
    for (int j = 0; j < d; ++j) acc[j].add(agg[j]);
  }
  for (int j = 0; j < d; ++j) {
    REQUIRE(std::fabs(acc[j].mean - want[j]) <= acc[j].sigma_band(4.0) + 1e-14);
  }
}

TEST_CASE("qsgd degenerate d=1 sigma=0 finds the epsilon point") {
  auto inst = classic_inst(1, 1);
  BatchQsgd alg(inst, {1.0, 0.0, 0.5});
  REQUIRE(alg.params().m >= 1);
  SimEngine eng(Protocol::P2, inst, {1.0, 0.0, 0.5}, alg, 4);
  auto rec = eng.run();
  REQUIRE(rec.time_to_eps.has_value());
  REQUIRE(*rec.time_to_eps <= 10.0 * inst.L * inst.Delta / inst.eps);
}

TEST_CASE("every bundled algorithm audits zero-respecting") {
  auto inst = classic_inst(4, 12, 4.0 * 1e-3, 2);  // b = 2
  for (std::string name : {"batch_sync_sgd", "batch_qsgd", "local_sgd"}) {
    auto alg = make_algorithm(name, inst, {1.0, 0.1, 0.1});
    RunOptions opts;
    opts.keep_trace = true;
    opts.budget = 2000.0;
    SimEngine eng(Protocol::P2, inst, {1.0, 0.1, 0.1}, *alg, 21, opts);
    eng.run();
    INFO(name);
    REQUIRE(audit_zero_respecting(eng.trace()).ok);
  }
}

TEST_CASE("greedy chaser discovers the whole chain in order") {
  double eps = 1e-3;
  auto c = constants(6, 7.0 / 6.0, Variant::windowed);
  double Delta = 2.0 * c.delta0 * c.ell1 * eps * 12.5;
  double sigma2 = 2.0 * eps * c.gamma_inf * c.gamma_inf / 0.3;  // p_sigma = 0.3
  auto inst = build_instance(1.0, Delta, eps, 2, sigma2, 48, Variant::windowed);
  REQUIRE(inst.fn.T == 12);
  REQUIRE(inst.fn.K == 6);

  GreedyChaser alg(inst, {});
  RunOptions opts;
  opts.stop_on_eps = false;
  opts.stop_after_last_discovery = true;
  opts.budget = 1e9;
  opts.keep_trace = true;
  SimEngine eng(Protocol::P1, inst, {1.0, 1.0, 0.0}, alg, 11, opts);
  auto rec = eng.run();
  REQUIRE(rec.coords_w2s == 0);
  for (int c2 = 0; c2 < inst.fn.T; ++c2) {
    REQUIRE(std::isfinite(rec.discovery_times[c2]));
    if (c2 > 0) REQUIRE(rec.discovery_times[c2] >= rec.discovery_times[c2 - 1]);
  }
  REQUIRE(audit_zero_respecting(eng.trace()).ok);
  // the chaser is not an optimizer: it never reaches epsilon-stationarity
  REQUIRE(!rec.time_to_eps.has_value());
}
