#pragma once

// Experiment configuration: one JSON document per run, schema-validated with
// unknown keys rejected. Command-line flags override the corresponding keys.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbopt/algorithms.hpp"
#include "lbopt/error.hpp"
#include "lbopt/lowerbound.hpp"
#include "lbopt/simulator.hpp"
#include "lbopt/verify.hpp"
#include "lbopt/worstcase.hpp"

namespace lbopt::config {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed,
                       const std::set<std::string>& required) {
  if (!j.is_object()) throw Error("CONFIG", where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw Error("CONFIG", where + ": unknown key '" + it.key() + "'");
    }
  }
  for (const auto& k : required) {
    if (!j.contains(k)) throw Error("CONFIG", where + ": missing key '" + k + "'");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

struct InstanceCfg {
  double L = 1.0;
  double Delta = 1.0;
  double eps = 1e-3;
  double sigma2 = 0.0;
  int n = 1;
  int d = 1;
  Variant variant = Variant::classic;

  json to_json() const {
    return json{{"L", L},     {"Delta", Delta}, {"eps", eps},
                {"sigma2", sigma2}, {"n", n},   {"d", d},
                {"variant", to_string(variant)}};
  }
  ObjectiveInstance build() const { return build_instance(L, Delta, eps, n, sigma2, d, variant); }
};

inline InstanceCfg parse_instance(const json& j) {
  check_keys(j, "instance", {"L", "Delta", "eps", "sigma2", "n", "d", "variant"},
             {"L", "Delta", "eps", "d"});
  InstanceCfg c;
  c.L = j.at("L").get<double>();
  c.Delta = j.at("Delta").get<double>();
  c.eps = j.at("eps").get<double>();
  c.sigma2 = get_or(j, "sigma2", 0.0);
  c.n = get_or(j, "n", 1);
  c.d = j.at("d").get<int>();
  c.variant = variant_from_string(get_or<std::string>(j, "variant", "classic"));
  return c;
}

inline TimingModel parse_timing(const json& j) {
  check_keys(j, "timing", {"h", "tau_s", "tau_w"}, {"h"});
  TimingModel t;
  t.h = j.at("h").get<double>();
  t.tau_s = get_or(j, "tau_s", 0.0);
  t.tau_w = get_or(j, "tau_w", 0.0);
  if (t.h < 0 || t.tau_s < 0 || t.tau_w < 0) throw Error("CONFIG", "timing: negative cost");
  return t;
}

inline json timing_to_json(const TimingModel& t) {
  return json{{"h", t.h}, {"tau_s", t.tau_s}, {"tau_w", t.tau_w}};
}

struct AlgorithmCfg {
  std::string name = "batch_sync_sgd";
  AlgMultipliers mult;

  json to_json() const {
    return json{{"name", name},
                {"gamma_mult", mult.gamma},
                {"b_mult", mult.b},
                {"m_mult", mult.m}};
  }
};

inline AlgorithmCfg parse_algorithm(const json& j) {
  check_keys(j, "algorithm", {"name", "gamma_mult", "b_mult", "m_mult"}, {"name"});
  AlgorithmCfg c;
  c.name = j.at("name").get<std::string>();
  c.mult.gamma = get_or(j, "gamma_mult", 1.0);
  c.mult.b = get_or(j, "b_mult", 1.0);
  c.mult.m = get_or(j, "m_mult", 1.0);
  if (c.name != "batch_sync_sgd" && c.name != "batch_qsgd" && c.name != "local_sgd" &&
      c.name != "greedy_chaser") {
    throw Error("CONFIG", "algorithm: unknown name '" + c.name + "'");
  }
  return c;
}

struct SweepCfg {
  std::string param;
  std::vector<double> values;
};

struct SimulateCfg {
  InstanceCfg instance;
  TimingModel timing;
  Protocol protocol = Protocol::P2;
  AlgorithmCfg algorithm;
  double budget = 1e15;
  uint64_t max_events = 200'000'000;
  std::vector<uint64_t> seeds = {1};
  std::string out;
  std::optional<SweepCfg> sweep;

  json resolved() const {
    json j{{"instance", instance.to_json()},
           {"timing", timing_to_json(timing)},
           {"protocol", to_string(protocol)},
           {"algorithm", algorithm.to_json()},
           {"budget", budget},
           {"max_events", max_events},
           {"seeds", seeds}};
    if (sweep) j["sweep"] = json{{"param", sweep->param}, {"values", sweep->values}};
    return j;
  }
};

inline SimulateCfg parse_simulate(const json& j, bool allow_sweep) {
  std::set<std::string> allowed = {"instance", "timing", "protocol", "algorithm",
                                   "budget",   "seeds",  "out",       "max_events"};
  if (allow_sweep) allowed.insert("sweep");
  check_keys(j, "simulate", allowed, {"instance", "timing", "algorithm"});
  SimulateCfg c;
  c.instance = parse_instance(j.at("instance"));
  c.timing = parse_timing(j.at("timing"));
  std::string proto = get_or<std::string>(j, "protocol", "P2");
  if (proto != "P1" && proto != "P2") throw Error("CONFIG", "protocol must be P1 or P2");
  c.protocol = proto == "P1" ? Protocol::P1 : Protocol::P2;
  c.algorithm = parse_algorithm(j.at("algorithm"));
  c.budget = get_or(j, "budget", 1e15);
  if (!(c.budget > 0.0)) throw Error("CONFIG", "budget must be positive");
  c.max_events = get_or<uint64_t>(j, "max_events", 200'000'000);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  if (c.seeds.empty()) throw Error("CONFIG", "seeds must be non-empty");
  c.out = get_or<std::string>(j, "out", "");
  if (j.contains("sweep")) {
    check_keys(j.at("sweep"), "sweep", {"param", "values"}, {"param", "values"});
    SweepCfg s;
    s.param = j.at("sweep").at("param").get<std::string>();
    s.values = j.at("sweep").at("values").get<std::vector<double>>();
    static const std::set<std::string> sweepable = {"n",   "d",     "sigma2", "L", "Delta",
                                                    "eps", "h",     "tau_s",  "tau_w"};
    if (!sweepable.count(s.param)) throw Error("CONFIG", "sweep: cannot sweep '" + s.param + "'");
    if (s.values.empty()) throw Error("CONFIG", "sweep: empty values");
    c.sweep = s;
  }
  return c;
}

// apply one sweep value to a copy of the config
inline SimulateCfg with_param(const SimulateCfg& base, const std::string& param, double v) {
  SimulateCfg c = base;
  c.sweep.reset();
  if (param == "n") c.instance.n = static_cast<int>(v);
  else if (param == "d") c.instance.d = static_cast<int>(v);
  else if (param == "sigma2") c.instance.sigma2 = v;
  else if (param == "L") c.instance.L = v;
  else if (param == "Delta") c.instance.Delta = v;
  else if (param == "eps") c.instance.eps = v;
  else if (param == "h") c.timing.h = v;
  else if (param == "tau_s") c.timing.tau_s = v;
  else if (param == "tau_w") c.timing.tau_w = v;
  else throw Error("CONFIG", "sweep: cannot sweep '" + param + "'");
  return c;
}

struct LowerboundCfg {
  std::string mode = "mc";  // "mc" or "chaser"
  Bound bound = Bound::lemma6;
  double delta = 0.5;
  int64_t trials = 10000;
  uint64_t seed = 1;
  InstanceCfg instance;
  TimingModel timing;
  int runs = 200;              // chaser mode
  double min_fraction = 0.45;  // chaser mode pass threshold
  double budget = 1e15;
  std::string out;

  json resolved() const {
    return json{{"mode", mode},       {"bound", to_string(bound)},
                {"delta", delta},     {"trials", trials},
                {"seed", seed},       {"instance", instance.to_json()},
                {"timing", timing_to_json(timing)}, {"runs", runs},
                {"min_fraction", min_fraction},     {"budget", budget}};
  }
};

inline LowerboundCfg parse_lowerbound(const json& j) {
  check_keys(j, "lowerbound",
             {"mode", "bound", "delta", "trials", "seed", "instance", "timing", "runs",
              "min_fraction", "budget", "out"},
             {"instance", "timing"});
  LowerboundCfg c;
  c.mode = get_or<std::string>(j, "mode", "mc");
  if (c.mode != "mc" && c.mode != "chaser") throw Error("CONFIG", "mode must be mc or chaser");
  std::string b = get_or<std::string>(j, "bound", "lemma6");
  if (b == "lemma6") c.bound = Bound::lemma6;
  else if (b == "lemma8") c.bound = Bound::lemma8;
  else throw Error("CONFIG", "bound must be lemma6 or lemma8");
  c.delta = get_or(j, "delta", 0.5);
  if (!(c.delta > 0.0) || c.delta >= 1.0) throw Error("CONFIG", "delta must be in (0,1)");
  c.trials = get_or<int64_t>(j, "trials", 10000);
  c.seed = get_or<uint64_t>(j, "seed", 1);
  c.instance = parse_instance(j.at("instance"));
  c.timing = parse_timing(j.at("timing"));
  c.runs = get_or(j, "runs", 200);
  c.min_fraction = get_or(j, "min_fraction", 0.45);
  c.budget = get_or(j, "budget", 1e15);
  if (!(c.budget > 0.0)) throw Error("CONFIG", "budget must be positive");
  c.out = get_or<std::string>(j, "out", "");
  return c;
}

struct VerifyCfg {
  std::vector<verify::FnCombo> combos;  // empty = defaults
  int points = 120;
  int hessian_points = 100;
  int grid_points = 10000;
  uint64_t seed = 1;
  int64_t trials = 100000;

  json resolved() const {
    json combos_j = json::array();
    for (const auto& c : combos) {
      combos_j.push_back({{"T", c.T}, {"K", c.K}, {"a", c.a}, {"variant", to_string(c.variant)}});
    }
    return json{{"combos", combos_j}, {"points", points},       {"hessian_points", hessian_points},
                {"grid_points", grid_points}, {"seed", seed},   {"trials", trials}};
  }
};

inline VerifyCfg parse_verify(const json& j) {
  check_keys(j, "verify", {"combos", "points", "hessian_points", "grid_points", "seed", "trials"},
             {});
  VerifyCfg c;
  if (j.contains("combos")) {
    for (const auto& cj : j.at("combos")) {
      check_keys(cj, "combo", {"T", "K", "a", "variant"}, {"T", "K", "a"});
      verify::FnCombo fc{cj.at("T").get<int>(), cj.at("K").get<int>(), cj.at("a").get<double>(),
                         variant_from_string(get_or<std::string>(cj, "variant", "new"))};
      c.combos.push_back(fc);
    }
  }
  c.points = get_or(j, "points", 120);
  c.hessian_points = get_or(j, "hessian_points", 100);
  c.grid_points = get_or(j, "grid_points", 10000);
  c.seed = get_or<uint64_t>(j, "seed", 1);
  c.trials = get_or<int64_t>(j, "trials", 100000);
  return c;
}

}  // namespace lbopt::config
