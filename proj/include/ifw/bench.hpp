#pragma once

// Trace/report serialization and a paired-instance benchmark harness.  Cells
// are deterministic in content for a fixed base seed (timing fields aside), so
// methods can be compared sample-by-sample across processes.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ifw/solver.hpp"

namespace ifw {

inline std::string fmt_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string gamma_token(double g) {
  if (std::isinf(g)) return "inf";
  if (g == static_cast<long long>(g) && std::abs(g) < 1e15)
    return std::to_string(static_cast<long long>(g));
  return fmt_g17(g);
}

// ---------------------------------------------------------------------------
// trace CSV: one row per iteration plus the stop record, then a key=value
// summary block in '#' comments.  Doubles round-trip exactly.

inline void write_trace_csv(std::ostream& out, const SolveResult& r,
                            const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  out << "k,seconds,f,B,gap,rank,step,alpha,Na,Nb,Nc,Nd\n";
  for (const TraceRow& row : r.trace) {
    out << row.k << ',' << fmt_g17(row.seconds) << ',' << fmt_g17(row.f) << ','
        << fmt_g17(row.B) << ',' << fmt_g17(relative_gap(row.f, row.B)) << ',' << row.rank << ','
        << row.step << ',' << fmt_g17(row.alpha) << ',' << row.Na << ',' << row.Nb << ','
        << row.Nc << ',' << row.Nd << '\n';
  }
  auto kv = [&out](const std::string& k, const std::string& v) {
    out << "# " << k << '=' << v << '\n';
  };
  kv("method", method_name(r.method));
  kv("step_rule", step_rule_name(r.step_rule));
  kv("stop", stop_reason_name(r.reason));
  kv("delta", fmt_g17(r.delta));
  kv("gamma1", gamma_token(r.gamma1));
  kv("gamma2", gamma_token(r.gamma2));
  kv("lbar", fmt_g17(r.lbar));
  kv("dbar", fmt_g17(r.dbar));
  kv("scale", fmt_g17(r.scale));
  kv("iters", std::to_string(r.iters));
  kv("seconds", fmt_g17(r.seconds));
  kv("f", fmt_g17(r.f));
  kv("B", fmt_g17(r.B));
  kv("rel_gap", fmt_g17(r.rel_gap()));
  kv("rank", std::to_string(r.final_rank()));
  kv("max_rank", std::to_string(r.max_rank));
  kv("max_nuclear", fmt_g17(r.max_nuclear));
  kv("b_init", fmt_g17(r.b_init));
  kv("Na", std::to_string(r.Na));
  kv("Nb", std::to_string(r.Nb));
  kv("Nc", std::to_string(r.Nc));
  kv("Nd", std::to_string(r.Nd));
  kv("rank_switch_k", std::to_string(r.rank_switch_k));
  kv("lmo_failures", std::to_string(r.lmo_failures));
  for (const auto& [k, v] : extra) kv(k, v);
}

inline void write_trace_csv(const std::string& path, const SolveResult& r,
                            const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_trace_csv(out, r, extra);
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

struct CsvRow {
  long long k = 0;
  double seconds = 0, f = 0, B = 0, gap = 0, alpha = 0;
  int rank = 0;
  std::string step;
  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;
};

struct TraceFile {
  std::vector<CsvRow> rows;
  std::map<std::string, std::string> summary;
};

inline TraceFile read_trace_csv(std::istream& in) {
  TraceFile tf;
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,seconds,f,B,gap,rank,step,alpha", 0) != 0)
    throw std::runtime_error("not a trace file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(line.find_first_not_of("# "));
      const size_t eq = body.find('=');
      if (eq != std::string::npos) tf.summary[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    CsvRow r;
    if (!(ss >> r.k >> r.seconds >> r.f >> r.B >> r.gap >> r.rank >> r.step >> r.alpha >> r.Na >>
          r.Nb >> r.Nc >> r.Nd))
      throw std::runtime_error("malformed trace row: " + line);
    tf.rows.push_back(std::move(r));
  }
  return tf;
}

inline TraceFile read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trace_csv(in);
}

// ---------------------------------------------------------------------------
// benchmark harness

struct MethodSpec {
  Method method = Method::FrankWolfe;
  double gamma1 = 0.0, gamma2 = 1.0;
  StepRule step_rule = StepRule::ExactLineSearch;
  std::string label;  // empty -> derived from the method and gammas

  std::string display() const {
    if (!label.empty()) return label;
    std::string s = method_name(method);
    if (method == Method::InFace)
      s += "(" + gamma_token(gamma1) + "," + gamma_token(gamma2) + ")";
    return s;
  }
};

struct BenchOptions {
  GenerateOptions gen;  // gen.seed is the base; sample s uses seed gen.seed + s
  int samples = 5;
  double delta = 0.0;  // 0 -> per-sample holdout selection with loose inner solves
  SolveOptions solve;  // method/gammas/step_rule overridden per MethodSpec
  std::vector<MethodSpec> methods;
  int jobs = 1;
};

struct BenchCell {
  int sample = 0;
  std::string label;
  std::uint64_t hash = 0;
  double delta = 0.0;
  double f = 0, B = 0, rel_gap = 0, seconds = 0;
  long long iters = 0;
  int rank = 0, max_rank = 0;
  StopReason reason = StopReason::MaxIters;
  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;
  std::string error;
};

struct MethodAggregate {
  std::string label;
  int runs = 0, censored = 0, failed = 0;
  double mean_rank = 0, mean_max_rank = 0, mean_iters = 0, mean_rel_gap = 0;
  double mean_seconds = 0;  // censored (hit max-seconds) runs excluded
};

struct BenchReport {
  BenchOptions opt;
  std::vector<std::uint64_t> hashes;  // per sample
  std::vector<double> deltas;         // per sample
  std::vector<BenchCell> cells;       // sample-major, method order as configured
};

inline std::vector<MethodAggregate> aggregate(const BenchReport& rep) {
  std::vector<MethodAggregate> out;
  for (const MethodSpec& ms : rep.opt.methods) {
    MethodAggregate a;
    a.label = ms.display();
    int timed = 0;
    for (const BenchCell& c : rep.cells) {
      if (c.label != a.label) continue;
      if (!c.error.empty()) {
        ++a.failed;
        continue;
      }
      ++a.runs;
      a.mean_rank += c.rank;
      a.mean_max_rank += c.max_rank;
      a.mean_iters += static_cast<double>(c.iters);
      a.mean_rel_gap += c.rel_gap;
      if (c.reason == StopReason::MaxSeconds) {
        ++a.censored;
      } else {
        a.mean_seconds += c.seconds;
        ++timed;
      }
    }
    if (a.runs > 0) {
      a.mean_rank /= a.runs;
      a.mean_max_rank /= a.runs;
      a.mean_iters /= a.runs;
      a.mean_rel_gap /= a.runs;
    }
    a.mean_seconds = timed > 0 ? a.mean_seconds / timed : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

inline BenchReport run_bench(const BenchOptions& opt) {
  BenchReport rep;
  rep.opt = opt;
  const int S = std::max(opt.samples, 1);
  const int M = static_cast<int>(opt.methods.size());

  std::vector<Instance> insts;
  insts.reserve(static_cast<size_t>(S));
  for (int s = 0; s < S; ++s) {
    GenerateOptions g = opt.gen;
    g.seed = opt.gen.seed + static_cast<std::uint64_t>(s);
    insts.push_back(generate_instance(g));
    rep.hashes.push_back(instance_hash(insts.back()));
    double d = opt.delta;
    if (d <= 0.0) {
      SolveOptions inner = opt.solve;
      inner.gap_target = std::max(inner.gap_target, 1e-2);
      inner.max_iters = std::min<long long>(inner.max_iters, 300);
      inner.max_seconds = std::numeric_limits<double>::infinity();
      d = select_delta_fw(insts.back(), inner).delta;
    }
    rep.deltas.push_back(d);
  }

  rep.cells.assign(static_cast<size_t>(S) * M, BenchCell{});
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= S * M) break;
      const int s = t / M, mi = t % M;
      const MethodSpec& ms = opt.methods[static_cast<size_t>(mi)];
      BenchCell& cell = rep.cells[static_cast<size_t>(t)];
      cell.sample = s;
      cell.label = ms.display();
      cell.hash = rep.hashes[static_cast<size_t>(s)];
      cell.delta = rep.deltas[static_cast<size_t>(s)];
      try {
        SolveOptions so = opt.solve;
        so.method = ms.method;
        so.gamma1 = ms.gamma1;
        so.gamma2 = ms.gamma2;
        so.step_rule = ms.step_rule;
        so.delta = cell.delta;
        SolveResult r = solve(insts[static_cast<size_t>(s)], so);
        cell.f = r.f;
        cell.B = r.B;
        cell.rel_gap = r.rel_gap();
        cell.seconds = r.seconds;
        cell.iters = r.iters;
        cell.rank = r.final_rank();
        cell.max_rank = r.max_rank;
        cell.reason = r.reason;
        cell.Na = r.Na;
        cell.Nb = r.Nb;
        cell.Nc = r.Nc;
        cell.Nd = r.Nd;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };

  const int jobs = std::clamp(opt.jobs, 1, S * M);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return rep;
}

inline void write_report(std::ostream& out, const BenchReport& rep) {
  out << "ifw-bench v1\n";
  auto kv = [&out](const std::string& k, const std::string& v) { out << k << '=' << v << '\n'; };
  kv("samples", std::to_string(rep.opt.samples));
  kv("m", std::to_string(rep.opt.gen.m));
  kv("n", std::to_string(rep.opt.gen.n));
  kv("density", fmt_g17(rep.opt.gen.density));
  kv("rank", std::to_string(rep.opt.gen.rank));
  kv("snr", fmt_g17(rep.opt.gen.snr));
  kv("base_seed", std::to_string(rep.opt.gen.seed));
  kv("gap_target", fmt_g17(rep.opt.solve.gap_target));
  kv("delta_policy", rep.opt.delta > 0.0 ? "fixed" : "holdout");
  for (size_t s = 0; s < rep.hashes.size(); ++s) {
    kv("sample." + std::to_string(s) + ".hash", std::to_string(rep.hashes[s]));
    kv("sample." + std::to_string(s) + ".delta", fmt_g17(rep.deltas[s]));
  }
  for (const BenchCell& c : rep.cells) {
    const std::string p = "cell." + std::to_string(c.sample) + "." + c.label + ".";
    if (!c.error.empty()) {
      kv(p + "error", c.error);
      continue;
    }
    kv(p + "f", fmt_g17(c.f));
    kv(p + "B", fmt_g17(c.B));
    kv(p + "rel_gap", fmt_g17(c.rel_gap));
    kv(p + "seconds", fmt_g17(c.seconds));
    kv(p + "iters", std::to_string(c.iters));
    kv(p + "rank", std::to_string(c.rank));
    kv(p + "max_rank", std::to_string(c.max_rank));
    kv(p + "stop", stop_reason_name(c.reason));
  }
  for (const MethodAggregate& a : aggregate(rep)) {
    const std::string p = "agg." + a.label + ".";
    kv(p + "runs", std::to_string(a.runs));
    kv(p + "censored", std::to_string(a.censored));
    kv(p + "failed", std::to_string(a.failed));
    kv(p + "mean_rank", fmt_g17(a.mean_rank));
    kv(p + "mean_max_rank", fmt_g17(a.mean_max_rank));
    kv(p + "mean_iters", fmt_g17(a.mean_iters));
    kv(p + "mean_rel_gap", fmt_g17(a.mean_rel_gap));
    kv(p + "mean_seconds_uncensored", fmt_g17(a.mean_seconds));
  }
}

inline void write_report(const std::string& path, const BenchReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_report(out, rep);
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace ifw
