#pragma once

// Reference methods as simulator plugins: Batch Synchronized SGD, Batch QSGD
// with Rand1 uploads, single-node local SGD, and the greedy coordinate
// chaser used by the lower-bound harness.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "lbopt/simulator.hpp"

namespace lbopt {

struct AlgMultipliers {
  double gamma = 1.0;
  double b = 1.0;
  double m = 1.0;
};

struct QsgdParams {
  int64_t b;
  int64_t m;
  double gamma;
  double t_star;
};

inline QsgdParams qsgd_params(const ObjectiveInstance& inst, const TimingModel& tm,
                              const AlgMultipliers& mult = {}) {
  double h = tm.h, tw = tm.tau_w;
  double d = inst.d, n = inst.n;
  double s_over_eps = inst.sigma2 / inst.eps;
  double t_star = std::max({h, tw, tw * d / n, h * s_over_eps / n,
                            std::sqrt(d * tw * h * s_over_eps / n)});
  int64_t b = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(mult.b * t_star / h)));
  int64_t m = 1;
  if (tw > 0.0) m = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(mult.m * t_star / tw)));
  return {b, m, mult.gamma / (2.0 * inst.L), t_star};
}

namespace detail {

// shared structure of the two batch methods: workers grind b gradients at the
// current iterate, results are pooled at the server, which then broadcasts
// the next full iterate to everyone
class BatchBase : public Algorithm {
 public:
  BatchBase(const ObjectiveInstance& inst, int64_t b, double gamma)
      : inst_(inst), b_(b), gamma_(gamma) {}

  PointRef worker_compute(SimEngine& eng, int worker) override {
    WorkerState& ws = state(eng, worker);
    if (ws.grads_done >= b_) return nullptr;  // batch finished, wait
    if (!ws.iterate) ws.iterate = eng.zero_point();
    return ws.iterate;
  }

  void on_gradient(SimEngine& eng, int worker, const PointRef&,
                   const std::vector<double>& g) override {
    WorkerState& ws = state(eng, worker);
    ++ws.grads_done;
    if (eng.protocol() == Protocol::P1) {
      // free sharing: the server pools raw gradients
      for (int j = 0; j < inst_.d; ++j) srv_sum_[j] += g[j];
      ++srv_parts_;
      if (srv_parts_ == static_cast<int64_t>(inst_.n) * b_) {
        server_update(eng, gamma_ / (static_cast<double>(inst_.n) * b_));
      }
    } else {
      if (ws.batch_sum.empty()) ws.batch_sum.assign(inst_.d, 0.0);
      for (int j = 0; j < inst_.d; ++j) ws.batch_sum[j] += g[j];
    }
  }

  std::optional<Outgoing> server_send(SimEngine& eng, int worker) override {
    WorkerState& ws = state(eng, worker);
    if (!ws.broadcast_pending || !cur_) return std::nullopt;
    ws.broadcast_pending = false;
    return Outgoing{cur_, {CompressorSpec::Kind::identity, 1}};
  }

  void on_message(SimEngine& eng, Dir dir, int worker, const SparseMessage& msg) override {
    if (dir == Dir::s2w) {
      WorkerState& ws = state(eng, worker);
      ws.iterate = eng.make_point(worker, msg.decode(inst_.d));
      ws.grads_done = 0;
      ws.batch_sum.clear();
      ws.msgs_sent = 0;
      ws.upload_started = false;
    } else {
      on_upload(eng, worker, msg);
    }
  }

 protected:
  struct WorkerState {
    PointRef iterate;
    PointRef sum_point;
    int64_t grads_done = 0;
    std::vector<double> batch_sum;
    int64_t msgs_sent = 0;
    bool upload_started = false;
    bool broadcast_pending = false;
  };

  WorkerState& state(SimEngine& eng, int w) {
    if (workers_.empty()) {
      workers_.resize(inst_.n + 1);
      srv_sum_.assign(inst_.d, 0.0);
      cur_ = eng.zero_point();
    }
    return workers_[w];
  }

  void server_update(SimEngine& eng, double step_over_parts) {
    std::vector<double> x = cur_->x;
    for (int j = 0; j < inst_.d; ++j) x[j] -= step_over_parts * srv_sum_[j];
    cur_ = eng.make_point(0, std::move(x));
    std::fill(srv_sum_.begin(), srv_sum_.end(), 0.0);
    srv_parts_ = 0;
    for (int w = 1; w <= inst_.n; ++w) workers_[w].broadcast_pending = true;
  }

  virtual void on_upload(SimEngine& eng, int worker, const SparseMessage& msg) = 0;

  const ObjectiveInstance& inst_;
  int64_t b_;
  double gamma_;
  PointRef cur_;
  std::vector<WorkerState> workers_;
  std::vector<double> srv_sum_;
  int64_t srv_parts_ = 0;
};

}  // namespace detail

// Batch Synchronized SGD: b = ceil(sigma^2/(eps n)) clamped to >= 1,
// gamma = 1/(2L), full-vector messages in both directions.
class BatchSyncSgd : public detail::BatchBase {
 public:
  BatchSyncSgd(const ObjectiveInstance& inst, const TimingModel&, const AlgMultipliers& mult = {})
      : BatchBase(inst,
                  std::max<int64_t>(1, static_cast<int64_t>(std::ceil(
                                           mult.b * inst.sigma2 / (inst.eps * inst.n)))),
                  mult.gamma / (2.0 * inst.L)) {}

  std::string name() const override { return "batch_sync_sgd"; }
  int64_t batch_size() const { return b_; }

  std::optional<Outgoing> worker_send(SimEngine& eng, int worker) override {
    WorkerState& ws = state(eng, worker);
    if (ws.grads_done < b_ || ws.upload_started || ws.batch_sum.empty()) return std::nullopt;
    ws.upload_started = true;
    std::vector<double> mean = ws.batch_sum;
    for (double& v : mean) v /= static_cast<double>(b_);
    return Outgoing{eng.make_point(worker, std::move(mean)), {CompressorSpec::Kind::identity, 1}};
  }

 protected:
  void on_upload(SimEngine& eng, int, const SparseMessage& msg) override {
    auto dec = msg.decode(inst_.d);
    for (int j = 0; j < inst_.d; ++j) srv_sum_[j] += dec[j];
    ++srv_parts_;
    if (srv_parts_ == inst_.n) server_update(eng, gamma_ / inst_.n);
  }
};

// Batch QSGD: b and m from t*, Rand1 uploads of the batch sum, full-iterate
// broadcasts.
class BatchQsgd : public detail::BatchBase {
 public:
  BatchQsgd(const ObjectiveInstance& inst, const TimingModel& tm, const AlgMultipliers& mult = {})
      : BatchBase(inst, 1, 0.0), params_(qsgd_params(inst, tm, mult)) {
    b_ = params_.b;
    gamma_ = params_.gamma;
  }

  std::string name() const override { return "batch_qsgd"; }
  const QsgdParams& params() const { return params_; }

  std::optional<Outgoing> worker_send(SimEngine& eng, int worker) override {
    WorkerState& ws = state(eng, worker);
    if (ws.grads_done < b_ || ws.msgs_sent >= params_.m || ws.batch_sum.empty()) {
      return std::nullopt;
    }
    if (!ws.upload_started) {
      ws.sum_point = eng.make_point(worker, ws.batch_sum);
      ws.upload_started = true;
    }
    ++ws.msgs_sent;
    CompressorSpec comp{CompressorSpec::Kind::rand_k, 1};
    if (params_.m == 1 && eng.timing().tau_w == 0.0) {
      comp.kind = CompressorSpec::Kind::identity;  // free channel: no need to sparsify
    }
    return Outgoing{ws.sum_point, comp};
  }

 protected:
  void on_upload(SimEngine& eng, int, const SparseMessage& msg) override {
    auto dec = msg.decode(inst_.d);
    for (int j = 0; j < inst_.d; ++j) srv_sum_[j] += dec[j];
    ++srv_parts_;
    if (srv_parts_ == static_cast<int64_t>(inst_.n) * params_.m) {
      server_update(eng, gamma_ / (static_cast<double>(inst_.n) * b_ * params_.m));
    }
  }

 private:
  QsgdParams params_;
};

// Single-node SGD without any communication; gamma = min{1/(2L), eps/(2L sigma^2)}.
class LocalSgd : public Algorithm {
 public:
  LocalSgd(const ObjectiveInstance& inst, const TimingModel&, const AlgMultipliers& mult = {})
      : inst_(inst) {
    gamma_ = mult.gamma / (2.0 * inst.L);
    if (inst.sigma2 > 0.0) gamma_ = std::min(gamma_, mult.gamma * inst.eps / (2.0 * inst.L * inst.sigma2));
  }

  std::string name() const override { return "local_sgd"; }
  double gamma() const { return gamma_; }

  PointRef worker_compute(SimEngine& eng, int worker) override {
    if (worker != 1) return nullptr;
    if (!cur_) cur_ = eng.zero_point();
    return cur_;
  }

  void on_gradient(SimEngine& eng, int worker, const PointRef& at,
                   const std::vector<double>& g) override {
    if (worker != 1) return;
    std::vector<double> x = at->x;
    for (int j = 0; j < inst_.d; ++j) x[j] -= gamma_ * g[j];
    cur_ = eng.make_point(1, std::move(x));
  }

  std::optional<Outgoing> server_send(SimEngine&, int) override { return std::nullopt; }
  std::optional<Outgoing> worker_send(SimEngine&, int) override { return std::nullopt; }
  void on_message(SimEngine&, Dir, int, const SparseMessage&) override {}

 private:
  const ObjectiveInstance& inst_;
  double gamma_;
  PointRef cur_;
};

// Greedy coordinate chaser: every worker perpetually evaluates gradients at
// the deepest point its closure supports; the server perpetually streams
// Rand1 slices of its aggregate point. Discovery progress is the payload,
// not optimization.
class GreedyChaser : public Algorithm {
 public:
  GreedyChaser(const ObjectiveInstance& inst, const TimingModel&, const AlgMultipliers& = {})
      : inst_(inst) {}

  std::string name() const override { return "greedy_chaser"; }

  PointRef worker_compute(SimEngine& eng, int worker) override {
    return closure_point(eng, worker);
  }

  std::optional<Outgoing> server_send(SimEngine& eng, int) override {
    return Outgoing{closure_point(eng, 0), {CompressorSpec::Kind::rand_k, 1}};
  }

  void on_gradient(SimEngine&, int, const PointRef&, const std::vector<double>&) override {}
  std::optional<Outgoing> worker_send(SimEngine&, int) override { return std::nullopt; }
  void on_message(SimEngine&, Dir, int, const SparseMessage&) override {}

 private:
  // point with every known coordinate set to lambda (chain value 1); cached
  // until the node's closure grows
  PointRef closure_point(SimEngine& eng, int node) {
    if (cache_.empty()) cache_.resize(inst_.n + 1);
    auto& slot = cache_[node];
    std::vector<uint32_t> idx = eng.closure(node).indices();
    if (!slot.point || idx.size() != slot.known) {
      std::vector<double> x(inst_.d, 0.0);
      for (uint32_t i : idx) x[i - 1] = inst_.lambda;
      slot.point = eng.make_point(node, std::move(x));
      slot.known = idx.size();
    }
    return slot.point;
  }

  struct Slot {
    PointRef point;
    size_t known = 0;
  };
  const ObjectiveInstance& inst_;
  std::vector<Slot> cache_;
};

inline std::unique_ptr<Algorithm> batch_sync_sgd(const ObjectiveInstance& inst,
                                                 const TimingModel& tm,
                                                 const AlgMultipliers& mult = {}) {
  return std::make_unique<BatchSyncSgd>(inst, tm, mult);
}
inline std::unique_ptr<Algorithm> batch_qsgd(const ObjectiveInstance& inst, const TimingModel& tm,
                                             const AlgMultipliers& mult = {}) {
  return std::make_unique<BatchQsgd>(inst, tm, mult);
}
inline std::unique_ptr<Algorithm> local_sgd(const ObjectiveInstance& inst, const TimingModel& tm,
                                            const AlgMultipliers& mult = {}) {
  return std::make_unique<LocalSgd>(inst, tm, mult);
}
inline std::unique_ptr<Algorithm> greedy_chaser(const ObjectiveInstance& inst,
                                                const TimingModel& tm,
                                                const AlgMultipliers& mult = {}) {
  return std::make_unique<GreedyChaser>(inst, tm, mult);
}

inline std::unique_ptr<Algorithm> make_algorithm(const std::string& name,
                                                 const ObjectiveInstance& inst,
                                                 const TimingModel& tm,
                                                 const AlgMultipliers& mult = {}) {
  if (name == "batch_sync_sgd") return batch_sync_sgd(inst, tm, mult);
  if (name == "batch_qsgd") return batch_qsgd(inst, tm, mult);
  if (name == "local_sgd") return local_sgd(inst, tm, mult);
  if (name == "greedy_chaser") return greedy_chaser(inst, tm, mult);
  throw Error("CONFIG", "unknown algorithm '" + name + "'");
}

}  // namespace lbopt
