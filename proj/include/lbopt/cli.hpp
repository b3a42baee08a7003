#pragma once

// Experiment runner behind the lbopt binary. Subcommands: verify-function,
// verify-oracle, verify-compressors, simulate, lowerbound, sweep. Exit codes:
// 0 pass, 1 invariant/run failure, 2 config error. LBOPT_THREADS caps
// trial/seed parallelism.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lbopt/config.hpp"
#include "lbopt/parallel.hpp"

namespace lbopt::cli {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double theory_for(const std::string& alg, const ObjectiveInstance& inst,
                         const TimingModel& tm) {
  using TM = TheoryModel;
  if (alg == "batch_sync_sgd") {
    return theory_time(TM::eq3, inst.L, inst.Delta, inst.eps, inst.sigma2, inst.n, inst.d, tm.h,
                       tm.tau_s, tm.tau_w);
  }
  if (alg == "batch_qsgd") {
    return theory_time(tm.tau_s > 0.0 ? TM::eq5 : TM::eq4, inst.L, inst.Delta, inst.eps,
                       inst.sigma2, inst.n, inst.d, tm.h, tm.tau_s, tm.tau_w);
  }
  if (alg == "local_sgd") {
    // solo branch: h (L Delta/eps + sigma^2 L Delta / eps^2)
    return tm.h * (inst.L * inst.Delta / inst.eps) * (1.0 + inst.sigma2 / inst.eps);
  }
  // greedy_chaser: the lemma-6 threshold at delta = 1/2
  try {
    return t_bar_lemma6(conc_params_lemma6(inst, tm.h, tm.tau_s, 0.5));
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline const char* kSimulateColumns =
    "alg,n,d,h,tau_s,tau_w,seed,time_to_eps,grads,coords_s2w,coords_w2s,theory_time";

struct SimRow {
  std::string csv;
  nlohmann::json record;
};

inline SimRow run_one(const config::SimulateCfg& cfg, uint64_t seed,
                      std::ostream* trace_out = nullptr) {
  ObjectiveInstance inst = cfg.instance.build();
  auto alg = make_algorithm(cfg.algorithm.name, inst, cfg.timing, cfg.algorithm.mult);
  RunOptions opts;
  opts.budget = cfg.budget;
  opts.max_events = cfg.max_events;
  opts.trace_out = trace_out;
  if (cfg.algorithm.name == "greedy_chaser") {
    opts.stop_after_last_discovery = true;
    opts.stop_on_eps = false;
  }
  SimEngine eng(cfg.protocol, inst, cfg.timing, *alg, seed, opts);
  RunRecord rec = eng.run();
  double theory = theory_for(cfg.algorithm.name, inst, cfg.timing);
  std::ostringstream row;
  row << cfg.algorithm.name << ',' << inst.n << ',' << inst.d << ',' << fmt_double(cfg.timing.h)
      << ',' << fmt_double(cfg.timing.tau_s) << ',' << fmt_double(cfg.timing.tau_w) << ',' << seed
      << ',' << (rec.time_to_eps ? fmt_double(*rec.time_to_eps) : std::string("none")) << ','
      << rec.grads_computed << ',' << rec.coords_s2w << ',' << rec.coords_w2s << ','
      << fmt_double(theory);
  nlohmann::json j = rec.to_json();
  j["alg"] = cfg.algorithm.name;
  j["seed"] = seed;
  j["theory_time"] = theory;
  return {row.str(), j};
}

// Full CSV document for a simulate/sweep config: reproducibility header with
// the resolved config, fixed column order, one row per (point, seed).
inline std::string simulate_csv(const config::SimulateCfg& cfg, nlohmann::json* records = nullptr) {
  std::vector<config::SimulateCfg> points;
  if (cfg.sweep) {
    for (double v : cfg.sweep->values) points.push_back(config::with_param(cfg, cfg.sweep->param, v));
  } else {
    points.push_back(cfg);
  }
  struct Job {
    const config::SimulateCfg* point;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& p : points) {
    for (uint64_t s : cfg.seeds) jobs.push_back({&p, s});
  }
  std::vector<SimRow> rows(jobs.size());
  parallel_for(static_cast<int64_t>(jobs.size()), [&](int64_t i) {
    rows[i] = run_one(*jobs[i].point, jobs[i].seed);
  });
  std::ostringstream out;
  out << "# lbopt simulate\n";
  out << "# config: " << cfg.resolved().dump() << "\n";
  out << kSimulateColumns << "\n";
  if (records) *records = nlohmann::json::array();
  for (auto& r : rows) {
    out << r.csv << "\n";
    if (records) records->push_back(std::move(r.record));
  }
  return out.str();
}

struct ChaserReport {
  double t_bar = 0.0;
  int runs = 0;
  int slow_enough = 0;   // discovery_times[T] >= t_bar/2
  int eps_before = 0;    // runs that found an eps-point before discovering T
  double fraction = 0.0;
  bool pass = false;
  nlohmann::json per_run = nlohmann::json::array();
};

inline ChaserReport chaser_experiment(const config::LowerboundCfg& cfg) {
  ObjectiveInstance inst = cfg.instance.build();
  ChaserReport rep;
  rep.t_bar = t_bar_lemma6(conc_params_lemma6(inst, cfg.timing.h, cfg.timing.tau_s, cfg.delta));
  rep.runs = cfg.runs;
  struct Out {
    double disc_T = 0.0;
    bool slow = false;
    bool eps_before = false;
    nlohmann::json j;
  };
  std::vector<Out> outs(cfg.runs);
  parallel_for(cfg.runs, [&](int64_t i) {
    GreedyChaser alg(inst, cfg.timing);
    RunOptions opts;
    opts.stop_on_eps = false;
    opts.stop_after_last_discovery = true;
    opts.budget = cfg.budget;
    SimEngine eng(Protocol::P1, inst, cfg.timing, alg, cfg.seed + static_cast<uint64_t>(i), opts);
    RunRecord rec = eng.run();
    Out& o = outs[i];
    o.disc_T = rec.discovery_times[inst.fn.T - 1];
    o.slow = o.disc_T >= rep.t_bar / 2.0;
    o.eps_before = rec.time_to_eps.has_value() && *rec.time_to_eps < o.disc_T;
    o.j = nlohmann::json{{"seed", cfg.seed + static_cast<uint64_t>(i)},
                         {"discovery_T", std::isinf(o.disc_T) ? nlohmann::json(nullptr)
                                                              : nlohmann::json(o.disc_T)},
                         {"time_to_eps", rec.time_to_eps ? nlohmann::json(*rec.time_to_eps)
                                                         : nlohmann::json(nullptr)}};
  });
  for (auto& o : outs) {
    rep.slow_enough += o.slow;
    rep.eps_before += o.eps_before;
    rep.per_run.push_back(std::move(o.j));
  }
  rep.fraction = static_cast<double>(rep.slow_enough) / cfg.runs;
  rep.pass = rep.fraction >= cfg.min_fraction && rep.eps_before == 0;
  return rep;
}

inline nlohmann::json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("CONFIG", "cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("CONFIG", std::string("config parse error: ") + e.what());
  }
}

inline void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("CONFIG", "cannot open output file '" + path + "'");
  f << content;
}

inline void print_report(const verify::Report& rep, std::ostream& os) {
  for (const auto& c : rep.checks) {
    os << (c.pass ? "  ok   " : "  FAIL ") << rep.suite << "." << c.name << "  (" << c.details
       << ")\n";
  }
  os << (rep.all_pass() ? "PASS" : "FAIL") << " suite " << rep.suite << " ["
     << static_cast<int>(rep.seconds * 1000) << " ms]\n";
}

inline int run(std::vector<std::string> args) {
  CLI::App app{"timed distributed-optimization lower-bound toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, check_path;
  uint64_t seed = 0;
  bool seed_set = false, json_out = false, inject_bug = false;
  int64_t trials = 0;

  auto add_common = [&](CLI::App* sub, bool with_config_required) {
    auto* c = sub->add_option("--config", config_path, "JSON config file");
    if (with_config_required) c->required();
    sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--trials", trials, "trial-count override");
    sub->add_option("--out", out_path, "output path (default stdout)");
    sub->add_flag("--json", json_out, "machine-readable JSON output");
  };

  auto* vf = app.add_subcommand("verify-function", "chain-function and kernel invariant suites");
  add_common(vf, false);
  vf->add_flag("--inject-grad-bug", inject_bug, "plant a gradient fault (self-test)");
  auto* vo = app.add_subcommand("verify-oracle", "stochastic-oracle invariant suite");
  add_common(vo, false);
  auto* vc = app.add_subcommand("verify-compressors", "compressor invariant suite");
  add_common(vc, false);
  auto* sim = app.add_subcommand("simulate", "run algorithms through the event simulator");
  add_common(sim, true);
  sim->add_option("--check", check_path, "re-verify a previous output bit-exactly");
  std::string trace_path;
  sim->add_option("--trace", trace_path, "write a JSONL event trace (single point+seed runs)");
  auto* lb = app.add_subcommand("lowerbound", "concentration bounds and chaser experiments");
  add_common(lb, true);
  auto* sw = app.add_subcommand("sweep", "parameter sweep through the simulator");
  add_common(sw, true);

  std::vector<const char*> argv;
  argv.push_back("lbopt");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (vf->parsed() || vo->parsed() || vc->parsed()) {
      config::VerifyCfg vcfg;
      if (!config_path.empty()) vcfg = config::parse_verify(load_config_file(config_path));
      if (seed_set) vcfg.seed = seed;
      if (trials > 0) vcfg.trials = trials;
      std::vector<verify::Report> reports;
      if (vf->parsed()) {
        reports.push_back(verify::kernel_suite(vcfg.grid_points));
        verify::FunctionSuiteOpts fo;
        fo.points = vcfg.points;
        fo.hessian_points = vcfg.hessian_points;
        fo.seed = vcfg.seed;
        fo.inject_grad_bug = inject_bug;
        auto combos = vcfg.combos.empty() ? verify::default_fn_combos() : vcfg.combos;
        reports.push_back(verify::function_suite(combos, fo));
      } else if (vo->parsed()) {
        reports.push_back(verify::oracle_suite(vcfg.seed, vcfg.trials));
      } else {
        reports.push_back(verify::compressor_suite(vcfg.seed, vcfg.trials));
      }
      bool pass = true;
      for (const auto& r : reports) pass = pass && r.all_pass();
      if (json_out) {
        nlohmann::json j{{"config", vcfg.resolved()}, {"pass", pass},
                         {"suites", nlohmann::json::array()}};
        for (const auto& r : reports) j["suites"].push_back(r.to_json());
        write_output(out_path, j.dump(2) + "\n");
      } else {
        std::ostringstream os;
        os << "# config: " << vcfg.resolved().dump() << "\n";
        for (const auto& r : reports) print_report(r, os);
        write_output(out_path, os.str());
      }
      return pass ? 0 : 1;
    }

    if (sim->parsed() || sw->parsed()) {
      auto cfg = config::parse_simulate(load_config_file(config_path), sw->parsed());
      if (sw->parsed() && !cfg.sweep) throw Error("CONFIG", "sweep: missing 'sweep' section");
      if (seed_set) cfg.seeds = {seed};
      if (!out_path.empty()) cfg.out = out_path;
      if (!trace_path.empty()) {
        if (cfg.sweep || cfg.seeds.size() != 1) {
          throw Error("CONFIG", "--trace requires a single seed and no sweep");
        }
        std::ofstream tf(trace_path, std::ios::binary);
        if (!tf) throw Error("CONFIG", "cannot open trace file '" + trace_path + "'");
        run_one(cfg, cfg.seeds[0], &tf);
      }
      nlohmann::json records;
      std::string csv = simulate_csv(cfg, json_out ? &records : nullptr);
      if (!check_path.empty()) {
        std::ifstream f(check_path, std::ios::binary);
        if (!f) throw Error("CONFIG", "cannot open check file '" + check_path + "'");
        std::stringstream prev;
        prev << f.rdbuf();
        if (prev.str() == csv) {
          std::cout << "check ok: output is bit-identical\n";
          return 0;
        }
        std::cerr << "check FAILED: outputs differ\n";
        return 1;
      }
      if (json_out) {
        nlohmann::json j{{"config", cfg.resolved()}, {"rows", records}};
        write_output(cfg.out, j.dump(2) + "\n");
      } else {
        write_output(cfg.out, csv);
      }
      return 0;
    }

    if (lb->parsed()) {
      auto cfg = config::parse_lowerbound(load_config_file(config_path));
      if (seed_set) cfg.seed = seed;
      if (trials > 0) cfg.trials = trials;
      if (!out_path.empty()) cfg.out = out_path;
      if (cfg.mode == "mc") {
        ObjectiveInstance inst = cfg.instance.build();
        ConcParams p = cfg.bound == Bound::lemma6
                           ? conc_params_lemma6(inst, cfg.timing.h, cfg.timing.tau_s, cfg.delta)
                           : conc_params_lemma8(inst, cfg.timing.h, cfg.timing.tau_w, cfg.delta);
        McReport rep = mc_verify(cfg.bound, p, cfg.trials, cfg.seed);
        if (json_out) {
          nlohmann::json j{{"config", cfg.resolved()}, {"report", rep.to_json()}};
          write_output(cfg.out, j.dump(2) + "\n");
        } else {
          std::ostringstream os;
          os << "# config: " << cfg.resolved().dump() << "\n";
          os << McReport::csv_header() << "\n" << rep.csv_row() << "\n";
          write_output(cfg.out, os.str());
        }
        return rep.pass ? 0 : 1;
      }
      ChaserReport rep = chaser_experiment(cfg);
      nlohmann::json j{{"config", cfg.resolved()},
                       {"t_bar", rep.t_bar},
                       {"runs", rep.runs},
                       {"slow_enough", rep.slow_enough},
                       {"fraction", rep.fraction},
                       {"eps_before_discovery", rep.eps_before},
                       {"pass", rep.pass}};
      if (json_out) j["per_run"] = rep.per_run;
      write_output(cfg.out, j.dump(2) + "\n");
      return rep.pass ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    // instance-construction failures triggered by config values are config errors
    bool config_class = e.code() == "CONFIG" || e.code() == "T_ZERO" || e.code() == "DIM_TOO_SMALL";
    return config_class ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lbopt::cli
