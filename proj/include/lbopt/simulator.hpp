#pragma once

// Deterministic discrete-event simulator of the two communication protocols.
//
// Protocol P1: workers run gradient loops; finished gradients are shared with
// the server at no cost; the server sends compressed points to each worker at
// tau_s seconds per coordinate.
// Protocol P2: additionally, workers upload compressed points at tau_w
// seconds per coordinate; gradients are NOT auto-shared.
//
// Messages deliver coordinate-by-coordinate: entry m of a message lands
// m*tau after the send starts, and the receiver may act on prefixes. Every
// point an algorithm constructs is validated against the constructing node's
// support closure (zero-respecting) and its true gradient norm is recorded
// for the time-to-epsilon measurement.
//
// Event ordering is total: (time, kind, worker, sequence). Node 0 is the
// server, nodes 1..n are workers.

#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbopt/compressors.hpp"
#include "lbopt/error.hpp"
#include "lbopt/oracle.hpp"
#include "lbopt/rng.hpp"
#include "lbopt/worstcase.hpp"

namespace lbopt {

struct TimingModel {
  double h = 1.0;      // seconds per stochastic gradient
  double tau_s = 0.0;  // seconds per s2w coordinate
  double tau_w = 0.0;  // seconds per w2s coordinate
};

enum class Protocol { P1, P2 };
inline std::string to_string(Protocol p) { return p == Protocol::P1 ? "P1" : "P2"; }

enum class Dir { s2w, w2s };
inline std::string to_string(Dir d) { return d == Dir::s2w ? "s2w" : "w2s"; }

struct Closure {
  int d = 0;
  std::vector<uint64_t> bits;

  void init(int dim) {
    d = dim;
    bits.assign((dim + 63) / 64, 0);
  }
  bool has(uint32_t idx1) const {
    uint32_t i = idx1 - 1;
    return (bits[i >> 6] >> (i & 63)) & 1;
  }
  bool add(uint32_t idx1) {
    uint32_t i = idx1 - 1;
    uint64_t m = 1ULL << (i & 63);
    bool fresh = !(bits[i >> 6] & m);
    bits[i >> 6] |= m;
    return fresh;
  }
  std::vector<uint32_t> indices() const {
    std::vector<uint32_t> out;
    for (int i = 0; i < d; ++i) {
      if ((bits[i >> 6] >> (i & 63)) & 1) out.push_back(static_cast<uint32_t>(i + 1));
    }
    return out;
  }
};

struct Point {
  uint64_t id;
  std::vector<double> x;           // ambient vector
  std::vector<double> grad_chain;  // first T components of the true gradient
  double gnorm2;                   // ||grad f(x)||^2
  std::vector<uint32_t> support;   // sorted, 1-based
};
using PointRef = std::shared_ptr<const Point>;

struct CompressorSpec {
  enum class Kind { identity, rand_k };
  Kind kind = Kind::identity;
  int k = 1;
};

struct Outgoing {
  PointRef point;
  CompressorSpec comp;
};

struct RunRecord {
  std::optional<double> time_to_eps;
  double best_grad_sq = std::numeric_limits<double>::infinity();
  int64_t grads_computed = 0;
  int64_t coords_s2w = 0;
  int64_t coords_w2s = 0;
  std::vector<double> discovery_times;  // 1-based coordinate c at [c-1]; +inf if never
  double end_clock = 0.0;
  bool events_capped = false;

  nlohmann::json to_json() const {
    nlohmann::json dt = nlohmann::json::array();
    for (double t : discovery_times) {
      if (std::isinf(t)) dt.push_back(nullptr);
      else dt.push_back(t);
    }
    nlohmann::json j{{"best_grad_sq", best_grad_sq},
                     {"grads_computed", grads_computed},
                     {"coords_s2w", coords_s2w},
                     {"coords_w2s", coords_w2s},
                     {"discovery_times", dt},
                     {"end_clock", end_clock},
                     {"events_capped", events_capped}};
    if (time_to_eps) j["time_to_eps"] = *time_to_eps;
    else j["time_to_eps"] = nullptr;
    return j;
  }
};

struct RunOptions {
  double budget = std::numeric_limits<double>::infinity();
  bool stop_on_eps = true;
  bool stop_after_last_discovery = false;
  uint64_t max_events = 200'000'000;
  bool keep_trace = false;      // in-memory trace (tests, audits)
  std::ostream* trace_out = nullptr;  // JSONL stream
};

class SimEngine;

class Algorithm {
 public:
  virtual ~Algorithm() = default;
  virtual std::string name() const = 0;
  // Worker compute unit is free; return the point to evaluate or nullptr.
  virtual PointRef worker_compute(SimEngine& eng, int worker) = 0;
  // A stochastic gradient finished at `worker` (in P1 the server sees it too).
  virtual void on_gradient(SimEngine& eng, int worker, const PointRef& at,
                           const std::vector<double>& g) = 0;
  // The s2w channel to `worker` is free; return a message or nullopt.
  virtual std::optional<Outgoing> server_send(SimEngine& eng, int worker) = 0;
  // P2 only: the w2s channel from `worker` is free.
  virtual std::optional<Outgoing> worker_send(SimEngine& eng, int worker) = 0;
  // A message fully arrived (dir = s2w: at worker; dir = w2s: at server).
  virtual void on_message(SimEngine& eng, Dir dir, int worker, const SparseMessage& msg) = 0;
};

class SimEngine {
 public:
  SimEngine(Protocol proto, const ObjectiveInstance& inst, TimingModel timing, Algorithm& alg,
            uint64_t seed, RunOptions opts = {})
      : proto_(proto), inst_(inst), tm_(timing), alg_(alg), opts_(opts), root_(seed) {
    int n = inst_.n;
    closures_.resize(n + 1);
    for (auto& c : closures_) c.init(inst_.d);
    compute_.resize(n + 1);
    s2w_.resize(n + 1);
    w2s_.resize(n + 1);
    grads_per_worker_.assign(n + 1, 0);
    rec_.discovery_times.assign(inst_.fn.T, std::numeric_limits<double>::infinity());
    trace_header();
    zero_ = register_point(std::vector<double>(inst_.d, 0.0));
  }

  RunRecord run() {
    for (int w = 1; w <= inst_.n; ++w) poll_compute(w);
    for (int w = 1; w <= inst_.n; ++w) poll_server_send(w);
    if (proto_ == Protocol::P2) {
      for (int w = 1; w <= inst_.n; ++w) poll_worker_send(w);
    }
    while (!queue_.empty() && !stop_) {
      Event ev = queue_.top();
      if (ev.t > opts_.budget) {
        now_ = opts_.budget;
        break;
      }
      queue_.pop();
      if (ev.t < now_) throw std::logic_error("simulator: event scheduled in the past");
      now_ = ev.t;
      if (++events_ > opts_.max_events) {
        rec_.events_capped = true;
        break;
      }
      dispatch(ev);
      flush_dirty();
    }
    rec_.end_clock = std::min(now_, opts_.budget);
    return rec_;
  }

  // ---- algorithm-facing API -------------------------------------------------
  double now() const { return now_; }
  Protocol protocol() const { return proto_; }
  const ObjectiveInstance& instance() const { return inst_; }
  const TimingModel& timing() const { return tm_; }
  const Closure& closure(int node) const { return closures_[node]; }
  const PointRef& zero_point() const { return zero_; }
  int64_t worker_grads_done(int w) const { return grads_per_worker_[w]; }

  // Construct a point at `node`. Throws ZERO_RESPECT_VIOLATION if the support
  // is not contained in the node's closure. Identical vectors are deduped.
  PointRef make_point(int node, std::vector<double> x) {
    if (static_cast<int>(x.size()) != inst_.d) {
      throw std::invalid_argument("make_point: wrong dimension");
    }
    for (int i = 0; i < inst_.d; ++i) {
      if (x[i] != 0.0 && !closures_[node].has(i + 1)) {
        trace_violation(node, i + 1);
        throw Error("ZERO_RESPECT_VIOLATION",
                    "node " + std::to_string(node) + " assigned coordinate " +
                        std::to_string(i + 1) + " outside its closure at t=" +
                        std::to_string(now_));
      }
    }
    uint64_t h = hash_bytes(x);
    auto it = dedupe_.find(h);
    if (it != dedupe_.end()) {
      if (auto sp = it->second.lock(); sp && sp->x == x) return sp;
    }
    PointRef p = register_point(std::move(x), node);
    return p;
  }

  const std::vector<nlohmann::json>& trace() const { return trace_; }
  const RunRecord& record() const { return rec_; }

 private:
  enum class EvKind : uint8_t { GradDone = 0, CoordS2W = 1, CoordW2S = 2 };
  struct Event {
    double t;
    EvKind kind;
    int worker;
    uint64_t seq;
    bool operator>(const Event& o) const {
      if (t != o.t) return t > o.t;
      if (kind != o.kind) return kind > o.kind;
      if (worker != o.worker) return worker > o.worker;
      return seq > o.seq;
    }
  };
  struct ComputeUnit {
    bool busy = false;
    PointRef at;
  };
  struct Channel {
    bool busy = false;
    SparseMessage msg;
    size_t next_entry = 0;
    uint64_t msg_count = 0;
  };

  void schedule(double t, EvKind k, int w) {
    if (t < now_) throw std::logic_error("simulator: scheduling into the past");
    queue_.push(Event{t, k, w, ++seq_});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EvKind::GradDone: handle_grad_done(ev.worker); break;
      case EvKind::CoordS2W: handle_coord(Dir::s2w, ev.worker); break;
      case EvKind::CoordW2S: handle_coord(Dir::w2s, ev.worker); break;
    }
  }

  void handle_grad_done(int w) {
    ComputeUnit& cu = compute_[w];
    PointRef at = cu.at;
    cu.busy = false;
    cu.at.reset();
    auto rng = root_.sub("oracle").sub(w).sub(static_cast<uint64_t>(grads_per_worker_[w]));
    OracleDraw dr = draw_with_grad(inst_, at->x, at->grad_chain, rng);
    ++grads_per_worker_[w];
    ++rec_.grads_computed;
    std::vector<uint32_t> revealed;
    for (int j = 0; j < inst_.d; ++j) {
      if (dr.result[j] != 0.0) revealed.push_back(static_cast<uint32_t>(j + 1));
    }
    absorb(w, revealed);
    if (proto_ == Protocol::P1) absorb(0, revealed);
    if (opts_.keep_trace || opts_.trace_out) {
      nlohmann::json t{{"t", now_}, {"node", w},          {"kind", "grad"},
                       {"payload_size", 0}, {"point_id", at->id}, {"support", revealed}};
      emit(t);
    }
    alg_.on_gradient(*this, w, at, dr.result);
    mark_dirty(w);
    if (proto_ == Protocol::P1) mark_dirty(0);
  }

  void handle_coord(Dir dir, int w) {
    Channel& ch = (dir == Dir::s2w) ? s2w_[w] : w2s_[w];
    int recv = (dir == Dir::s2w) ? w : 0;
    double tau = (dir == Dir::s2w) ? tm_.tau_s : tm_.tau_w;
    // deliver the current entry; with tau == 0 the whole remainder lands now
    while (true) {
      const auto& [idx, val] = ch.msg.entries[ch.next_entry];
      bool nz = (val * ch.msg.scale) != 0.0;
      if (nz) absorb(recv, {idx});
      if (opts_.keep_trace || opts_.trace_out) {
        emit(nlohmann::json{{"t", now_}, {"node", recv},       {"kind", "coord"},
                            {"payload_size", 1}, {"index", idx}, {"nz", nz}});
      }
      ++ch.next_entry;
      if (ch.next_entry == ch.msg.entries.size()) {
        // message complete
        if (dir == Dir::s2w) rec_.coords_s2w += static_cast<int64_t>(ch.msg.entries.size());
        else rec_.coords_w2s += static_cast<int64_t>(ch.msg.entries.size());
        if (opts_.keep_trace || opts_.trace_out) {
          emit(nlohmann::json{{"t", now_},
                              {"node", recv},
                              {"kind", "msg"},
                              {"payload_size", ch.msg.entries.size()},
                              {"dir", to_string(dir)}});
        }
        SparseMessage done = std::move(ch.msg);
        ch.busy = false;
        ch.msg = SparseMessage{};
        ch.next_entry = 0;
        alg_.on_message(*this, dir, w, done);
        mark_dirty(recv);
        if (dir == Dir::s2w) poll_server_send(w);
        else poll_worker_send(w);
        return;
      }
      if (tau > 0.0) {
        schedule(now_ + tau, dir == Dir::s2w ? EvKind::CoordS2W : EvKind::CoordW2S, w);
        mark_dirty(recv);
        return;
      }
    }
  }

  void poll_compute(int w) {
    ComputeUnit& cu = compute_[w];
    if (cu.busy || stop_) return;
    PointRef p = alg_.worker_compute(*this, w);
    if (!p) return;
    cu.busy = true;
    cu.at = std::move(p);
    schedule(now_ + tm_.h, EvKind::GradDone, w);
  }

  void poll_server_send(int w) {
    Channel& ch = s2w_[w];
    if (ch.busy || stop_) return;
    auto out = alg_.server_send(*this, w);
    if (!out) return;
    start_message(Dir::s2w, w, *out);
  }

  void poll_worker_send(int w) {
    if (proto_ != Protocol::P2) return;
    Channel& ch = w2s_[w];
    if (ch.busy || stop_) return;
    auto out = alg_.worker_send(*this, w);
    if (!out) return;
    start_message(Dir::w2s, w, *out);
  }

  void start_message(Dir dir, int w, const Outgoing& out) {
    Channel& ch = (dir == Dir::s2w) ? s2w_[w] : w2s_[w];
    double tau = (dir == Dir::s2w) ? tm_.tau_s : tm_.tau_w;
    auto rng = root_.sub(dir == Dir::s2w ? "s2w" : "w2s").sub(w).sub(ch.msg_count);
    SparseMessage msg;
    switch (out.comp.kind) {
      case CompressorSpec::Kind::identity: msg = identity_compress(out.point->x); break;
      case CompressorSpec::Kind::rand_k: msg = rand_k(out.point->x, out.comp.k, rng); break;
    }
    ++ch.msg_count;
    if (msg.entries.empty()) return;  // nothing to transmit; stay idle
    ch.busy = true;
    ch.msg = std::move(msg);
    ch.next_entry = 0;
    if (opts_.keep_trace || opts_.trace_out) {
      emit(nlohmann::json{{"t", now_},
                          {"node", dir == Dir::s2w ? 0 : w},
                          {"kind", "send"},
                          {"payload_size", ch.msg.entries.size()},
                          {"point_id", out.point->id},
                          {"dir", to_string(dir)}});
    }
    // zero-cost channels deliver at the same timestamp through the queue, so
    // the event cap still bounds degenerate send loops
    schedule(now_ + tau, dir == Dir::s2w ? EvKind::CoordS2W : EvKind::CoordW2S, w);
  }

  // add coordinates to a node's closure, recording discoveries
  void absorb(int node, const std::vector<uint32_t>& idxs) {
    for (uint32_t idx : idxs) {
      if (closures_[node].add(idx) && idx <= static_cast<uint32_t>(inst_.fn.T)) {
        if (std::isinf(rec_.discovery_times[idx - 1])) {
          rec_.discovery_times[idx - 1] = now_;
          if (opts_.stop_after_last_discovery && idx == static_cast<uint32_t>(inst_.fn.T)) {
            stop_ = true;
          }
        }
      }
    }
  }

  void mark_dirty(int node) { dirty_.insert(node); }

  void flush_dirty() {
    // re-poll idle units whose node's information changed; polls may dirty
    // more nodes, so loop to a fixed point
    while (!dirty_.empty() && !stop_) {
      std::set<int> nodes;
      nodes.swap(dirty_);
      for (int node : nodes) {
        if (node == 0) {
          for (int w = 1; w <= inst_.n; ++w) poll_server_send(w);
        } else {
          poll_compute(node);
          poll_worker_send(node);
        }
      }
    }
  }

  PointRef register_point(std::vector<double> x, int node = -1) {
    auto p = std::make_shared<Point>();
    p->id = next_point_id_++;
    p->x = std::move(x);
    p->grad_chain = inst_.grad_chain(p->x);
    double g2 = 0.0;
    for (double v : p->grad_chain) g2 += v * v;
    p->gnorm2 = g2;
    for (int i = 0; i < inst_.d; ++i) {
      if (p->x[i] != 0.0) p->support.push_back(static_cast<uint32_t>(i + 1));
    }
    dedupe_[hash_bytes(p->x)] = p;
    if (g2 < rec_.best_grad_sq) {
      rec_.best_grad_sq = g2;
      if (g2 <= inst_.eps && !rec_.time_to_eps) {
        rec_.time_to_eps = now_;
        if (opts_.stop_on_eps) stop_ = true;
      }
    }
    if (opts_.keep_trace || opts_.trace_out) {
      emit(nlohmann::json{{"t", now_},
                          {"node", node},
                          {"kind", "point"},
                          {"payload_size", 0},
                          {"point_id", p->id},
                          {"support", p->support}});
    }
    return p;
  }

  static uint64_t hash_bytes(const std::vector<double>& x) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (double d : x) {
      uint64_t v;
      std::memcpy(&v, &d, 8);
      for (int i = 0; i < 8; ++i) {
        h = (h ^ ((v >> (8 * i)) & 0xff)) * 0x100000001b3ULL;
      }
    }
    return h;
  }

  void trace_header() {
    if (!(opts_.keep_trace || opts_.trace_out)) return;
    emit(nlohmann::json{{"t", 0.0},
                        {"node", -1},
                        {"kind", "header"},
                        {"payload_size", 0},
                        {"protocol", to_string(proto_)},
                        {"n", inst_.n},
                        {"d", inst_.d},
                        {"T", inst_.fn.T}});
  }

  void trace_violation(int node, uint32_t idx) {
    if (!(opts_.keep_trace || opts_.trace_out)) return;
    emit(nlohmann::json{{"t", now_},
                        {"node", node},
                        {"kind", "violation"},
                        {"payload_size", 0},
                        {"index", idx}});
  }

  void emit(const nlohmann::json& j) {
    if (opts_.keep_trace) trace_.push_back(j);
    if (opts_.trace_out) (*opts_.trace_out) << j.dump() << "\n";
  }

  Protocol proto_;
  const ObjectiveInstance& inst_;
  TimingModel tm_;
  Algorithm& alg_;
  RunOptions opts_;
  RngStream root_;

  double now_ = 0.0;
  bool stop_ = false;
  uint64_t seq_ = 0;
  uint64_t events_ = 0;
  uint64_t next_point_id_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  std::vector<Closure> closures_;
  std::vector<ComputeUnit> compute_;
  std::vector<Channel> s2w_, w2s_;
  std::vector<int64_t> grads_per_worker_;
  std::set<int> dirty_;
  std::map<uint64_t, std::weak_ptr<const Point>> dedupe_;
  PointRef zero_;
  RunRecord rec_;
  std::vector<nlohmann::json> trace_;
};

// ---------------------------------------------------------------------------
// Trace replay audit: rebuild closures from the event stream and re-check
// every constructed point. Mirrors the online check exactly.

struct AuditResult {
  bool ok = true;
  double t = 0.0;
  int node = -1;
  uint64_t point_id = 0;
  uint32_t index = 0;
  std::string detail;
};

inline AuditResult audit_zero_respecting(const std::vector<nlohmann::json>& trace) {
  AuditResult res;
  Protocol proto = Protocol::P1;
  int n = 0, d = 0;
  std::vector<Closure> closures;
  for (const auto& ev : trace) {
    std::string kind = ev.at("kind").get<std::string>();
    if (kind == "header") {
      proto = ev.at("protocol").get<std::string>() == "P1" ? Protocol::P1 : Protocol::P2;
      n = ev.at("n").get<int>();
      d = ev.at("d").get<int>();
      closures.resize(n + 1);
      for (auto& c : closures) c.init(d);
      continue;
    }
    if (closures.empty()) throw Error("AUDIT", "trace missing header");
    if (kind == "point") {
      int node = ev.at("node").get<int>();
      if (node < 0) continue;  // engine-internal (zero point)
      for (uint32_t idx : ev.at("support").get<std::vector<uint32_t>>()) {
        if (!closures[node].has(idx)) {
          res.ok = false;
          res.t = ev.at("t").get<double>();
          res.node = node;
          res.point_id = ev.at("point_id").get<uint64_t>();
          res.index = idx;
          res.detail = "point assigns coordinate outside closure";
          return res;
        }
      }
    } else if (kind == "grad") {
      int w = ev.at("node").get<int>();
      for (uint32_t idx : ev.at("support").get<std::vector<uint32_t>>()) {
        closures[w].add(idx);
        if (proto == Protocol::P1) closures[0].add(idx);
      }
    } else if (kind == "coord") {
      if (ev.at("nz").get<bool>()) {
        closures[ev.at("node").get<int>()].add(ev.at("index").get<uint32_t>());
      }
    } else if (kind == "violation") {
      res.ok = false;
      res.t = ev.at("t").get<double>();
      res.node = ev.at("node").get<int>();
      res.index = ev.at("index").get<uint32_t>();
      res.detail = "online violation marker";
      return res;
    }
  }
  return res;
}

// Closed-form predicted runtimes of the reference methods (all constants 1).
enum class TheoryModel { eq3, eq4, eq5, eq8_min };

inline double theory_time(TheoryModel m, double L, double Delta, double eps, double sigma2,
                          double n, double d, double h, double tau_s, double tau_w) {
  double R = L * Delta / eps;
  double eq3 = h * (R + sigma2 * R / (n * eps)) + tau_w * d * R;
  double eq4 = h * (1.0 + sigma2 / (n * eps)) * R + tau_w * (d / n + 1.0) * R +
               std::sqrt(d * tau_w * h * sigma2 / (n * eps)) * R;
  double eq5 = eq4 + tau_s * d * R;
  double local = h * R + h * sigma2 * R / eps;
  switch (m) {
    case TheoryModel::eq3: return eq3;
    case TheoryModel::eq4: return eq4;
    case TheoryModel::eq5: return eq5;
    case TheoryModel::eq8_min: return std::min(eq5, local);
  }
  return 0.0;
}

}  // namespace lbopt
