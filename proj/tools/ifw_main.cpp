// Command-line front end: instance generation, single solves with trace
// output, radius selection, and multi-method benchmarks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ifw/ifw.hpp"

namespace {

bool parse_gamma(const std::string& s, double& out) {
  if (s == "inf" || s == "Inf" || s == "INF") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !(v >= 0.0)) return false;
    out = v;
    return true;
  } catch (...) {
    return false;
  }
}

const CLI::Validator GammaValidator(
    [](std::string& s) -> std::string {
      double g;
      return parse_gamma(s, g) ? std::string{} : "expected a nonnegative number or 'inf'";
    },
    "GAMMA");

struct SolverFlags {
  std::string method = "fw";
  std::string gamma1 = "0", gamma2 = "1";
  std::string step = "exact";
  double gap_target = 1e-3;
  long long max_iters = 100000;
  double max_seconds = 0.0;  // 0 -> unlimited
  double power_tol = 1e-9;
  double trunc_tol = 1e-6;
  int rank_window = 5;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, bool with_method) {
  if (with_method) {
    cmd->add_option("--method", f.method, "fw|if|if-opt|if-rank|away|away-atomic")
        ->check(CLI::IsMember({"fw", "if", "if-opt", "if-rank", "away", "away-atomic"}))
        ->capture_default_str();
    cmd->add_option("--gamma1", f.gamma1, "full in-face acceptance strength (number or 'inf')")
        ->check(GammaValidator)
        ->capture_default_str();
    cmd->add_option("--gamma2", f.gamma2, "partial in-face acceptance strength (number or 'inf')")
        ->check(GammaValidator)
        ->capture_default_str();
  }
  cmd->add_option("--step", f.step, "step-size rule")
      ->check(CLI::IsMember({"exact", "quad"}))
      ->capture_default_str();
  cmd->add_option("--gap-target,--gap", f.gap_target, "stop once (f-B)/B falls below this")
      ->capture_default_str();
  cmd->add_option("--max-iters", f.max_iters)->capture_default_str();
  cmd->add_option("--max-seconds", f.max_seconds, "wall-clock budget, 0 = unlimited")
      ->capture_default_str();
  cmd->add_option("--power-tol", f.power_tol)->capture_default_str();
  cmd->add_option("--trunc-tol", f.trunc_tol)->capture_default_str();
  cmd->add_option("--rank-window", f.rank_window, "if-rank: stalled iterations before the switch")
      ->capture_default_str();
}

ifw::SolveOptions to_solve_options(const SolverFlags& f, const CLI::App*) {
  ifw::SolveOptions o;
  o.method = *ifw::parse_method(f.method);
  o.step_rule = *ifw::parse_step_rule(f.step);
  parse_gamma(f.gamma1, o.gamma1);
  parse_gamma(f.gamma2, o.gamma2);
  if (o.gamma1 > o.gamma2)
    throw std::invalid_argument("gamma1 must not exceed gamma2 (got " + f.gamma1 + " > " +
                                f.gamma2 + ")");
  o.gap_target = f.gap_target;
  o.max_iters = f.max_iters;
  o.max_seconds = f.max_seconds > 0.0 ? f.max_seconds : std::numeric_limits<double>::infinity();
  o.power_tol = f.power_tol;
  o.trunc_tol = f.trunc_tol;
  o.rank_stall_window = f.rank_window;
  return o;
}

void print_kv(const std::string& k, const std::string& v) { std::cout << k << '=' << v << '\n'; }

int run_generate(const ifw::GenerateOptions& gen, const std::string& out) {
  ifw::GroundTruth truth;
  const ifw::Instance inst = ifw::generate_instance(gen, &truth);
  std::string inst_path = out;
  // a directory target gets the instance plus the planted factors
  if (!out.empty() && (out.back() == '/' || std::filesystem::is_directory(out))) {
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    inst_path = (dir / "instance.txt").string();
    ifw::save_truth(truth, (dir / "truth.txt").string());
    print_kv("truth", (dir / "truth.txt").string());
  }
  ifw::save_instance(inst, inst_path);
  print_kv("path", inst_path);
  print_kv("hash", std::to_string(ifw::instance_hash(inst)));
  print_kv("m", std::to_string(inst.m));
  print_kv("n", std::to_string(inst.n));
  print_kv("nnz", std::to_string(inst.nnz()));
  print_kv("density", ifw::fmt_g17(inst.density()));
  return 0;
}

int run_solve(const std::string& in, double delta, const SolverFlags& flags, const CLI::App* cmd,
              const std::string& trace_path) {
  if (cmd->count("--delta") > 0 && delta <= 0.0)
    throw std::invalid_argument("delta must be positive (got " + ifw::fmt_g17(delta) +
                                "); omit --delta to pick it on a holdout set");
  const ifw::Instance inst = ifw::load_instance(in);
  ifw::SolveOptions opt = to_solve_options(flags, cmd);
  std::string delta_policy = "fixed";
  if (delta <= 0.0) {
    ifw::SolveOptions inner = opt;
    inner.method = ifw::Method::FrankWolfe;
    inner.gap_target = std::max(inner.gap_target, 1e-2);
    inner.max_iters = std::min<long long>(inner.max_iters, 300);
    delta = ifw::select_delta_fw(inst, inner).delta;
    delta_policy = "holdout";
    print_kv("delta_selected", ifw::fmt_g17(delta));
  }
  opt.delta = delta;
  const ifw::SolveResult res = ifw::solve(inst, opt);
  if (!trace_path.empty()) {
    ifw::write_trace_csv(trace_path, res,
                         {{"instance_hash", std::to_string(ifw::instance_hash(inst))},
                          {"delta_policy", delta_policy}});
  }
  std::cout << "f=" << ifw::fmt_g17(res.f) << " B=" << ifw::fmt_g17(res.B)
            << " gap=" << ifw::fmt_g17(res.rel_gap()) << " rank=" << res.final_rank()
            << " iters=" << res.iters << " seconds=" << ifw::fmt_g17(res.seconds)
            << " stop=" << ifw::stop_reason_name(res.reason) << '\n';
  return 0;
}

int run_select_delta(const std::string& in, const SolverFlags& flags, const CLI::App* cmd,
                     const ifw::DeltaSelectOptions& sel) {
  const ifw::Instance inst = ifw::load_instance(in);
  ifw::SolveOptions opt = to_solve_options(flags, cmd);
  const ifw::DeltaSelection ds = ifw::select_delta_fw(inst, opt, sel);
  for (size_t i = 0; i < ds.grid.size(); ++i) {
    print_kv("grid." + std::to_string(i) + ".delta", ifw::fmt_g17(ds.grid[i]));
    print_kv("grid." + std::to_string(i) + ".sse", ifw::fmt_g17(ds.holdout_sse[i]));
  }
  print_kv("delta", ifw::fmt_g17(ds.delta));
  return 0;
}

bool parse_method_token(const std::string& tok, ifw::MethodSpec& spec) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (start <= tok.size()) {
    const size_t colon = tok.find(':', start);
    parts.push_back(tok.substr(start, colon == std::string::npos ? colon : colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.empty()) return false;
  const auto m = ifw::parse_method(parts[0]);
  if (!m) return false;
  spec.method = *m;
  spec.gamma1 = 0.0;
  spec.gamma2 = 1.0;
  if (parts.size() > 1 && !parse_gamma(parts[1], spec.gamma1)) return false;
  if (parts.size() > 2 && !parse_gamma(parts[2], spec.gamma2)) return false;
  return parts.size() <= 3;
}

int run_bench(ifw::BenchOptions opt, const std::vector<std::string>& method_tokens,
              const std::string& out_path, bool delta_given) {
  if (delta_given && opt.delta <= 0.0) {
    std::cerr << "delta must be positive (got " << ifw::fmt_g17(opt.delta)
              << "); omit --delta to pick it per sample on a holdout set\n";
    return 1;
  }
  for (const std::string& tok : method_tokens) {
    ifw::MethodSpec spec;
    if (!parse_method_token(tok, spec)) {
      std::cerr << "bad method token: " << tok << " (want name[:gamma1[:gamma2]])\n";
      return 1;
    }
    if (spec.gamma1 > spec.gamma2) {
      std::cerr << "method token " << tok << ": gamma1 must not exceed gamma2\n";
      return 1;
    }
    opt.methods.push_back(spec);
  }
  const ifw::BenchReport rep = ifw::run_bench(opt);
  if (out_path.empty()) {
    ifw::write_report(std::cout, rep);
  } else {
    ifw::write_report(out_path, rep);
    print_kv("report", out_path);
  }
  for (const ifw::BenchCell& c : rep.cells) {
    if (!c.error.empty()) {
      std::cerr << "cell " << c.sample << "/" << c.label << " failed: " << c.error << '\n';
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nuclear-norm matrix completion via Frank-Wolfe and in-face variants"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI file (flags win)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "write a synthetic observed-entry instance");
  ifw::GenerateOptions gen;
  std::string gen_out;
  gen_cmd->add_option("--m", gen.m)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n", gen.n)->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--rho,--density", gen.density, "per-entry observation probability")
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
  gen_cmd->add_option("--r,--rank", gen.rank, "planted rank")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--snr", gen.snr, "signal-to-noise ratio, <=0 for noiseless")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd
      ->add_option("--out", gen_out,
                   "triplet file path (a .meta sidecar is written next to it); "
                   "a directory gets instance.txt + truth.txt")
      ->required();

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "run one method on one instance");
  std::string solve_in, solve_trace;
  double solve_delta = 0.0;
  SolverFlags solve_flags;
  solve_cmd->add_option("--in", solve_in, "instance path")->required();
  solve_cmd->add_option("--delta", solve_delta, "nuclear-norm radius, 0 = holdout selection")
      ->capture_default_str();
  solve_cmd->add_option("--trace", solve_trace, "write the per-iteration trace CSV here");
  add_solver_flags(solve_cmd, solve_flags, true);

  // select-delta
  auto* sel_cmd = app.add_subcommand("select-delta", "pick the radius by holdout error");
  std::string sel_in;
  ifw::DeltaSelectOptions sel;
  SolverFlags sel_flags;
  sel_flags.gap_target = 1e-2;
  sel_flags.max_iters = 500;
  sel_cmd->add_option("--in", sel_in, "instance path")->required();
  sel_cmd->add_option("--grid-points", sel.grid_points)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sel_cmd->add_option("--lo", sel.lo_factor, "grid start as a multiple of the base radius")
      ->capture_default_str();
  sel_cmd->add_option("--hi", sel.hi_factor, "grid end as a multiple of the base radius")
      ->capture_default_str();
  sel_cmd->add_option("--holdout", sel.holdout_fraction)->capture_default_str();
  sel_cmd->add_option("--seed", sel.seed, "holdout split seed")->capture_default_str();
  add_solver_flags(sel_cmd, sel_flags, false);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "paired multi-method benchmark");
  ifw::BenchOptions bench;
  SolverFlags bench_flags;
  std::vector<std::string> bench_methods;
  std::string bench_out;
  bench_cmd->add_option("--m", bench.gen.m)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--n", bench.gen.n)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--rho,--density", bench.gen.density)
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
  bench_cmd->add_option("--r,--rank", bench.gen.rank)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--snr", bench.gen.snr)->capture_default_str();
  bench_cmd->add_option("--seed", bench.gen.seed, "base seed; sample s uses seed+s")
      ->capture_default_str();
  bench_cmd->add_option("--samples", bench.samples)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--delta", bench.delta, "radius for every run, 0 = per-sample holdout")
      ->capture_default_str();
  bench_cmd->add_option("--jobs", bench.jobs, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd
      ->add_option("--run", bench_methods,
                   "method token name[:gamma1[:gamma2]], e.g. if:0:inf (repeatable)")
      ->take_all();
  bench_cmd->add_option("--out", bench_out, "report path (default: stdout)");
  add_solver_flags(bench_cmd, bench_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return run_generate(gen, gen_out);
    if (solve_cmd->parsed()) return run_solve(solve_in, solve_delta, solve_flags, solve_cmd,
                                              solve_trace);
    if (sel_cmd->parsed()) return run_select_delta(sel_in, sel_flags, sel_cmd, sel);
    if (bench_cmd->parsed()) {
      bench.solve = to_solve_options(bench_flags, bench_cmd);
      if (bench_methods.empty()) bench_methods = {"fw", "if:0:1", "if:0:inf"};
      return run_bench(bench, bench_methods, bench_out, bench_cmd->count("--delta") > 0);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
