// Acceptance harness: battery of end-to-end checks over the solver library.
// Each criterion prints exactly one line, "C<i> PASS ..." or "C<i> FAIL ...",
// and the process exits nonzero if any criterion fails.  Tolerances are pinned
// here, next to the check that uses them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ifw/bench.hpp"
#include "ifw/face.hpp"
#include "checks.hpp"

using ifw::Matrix;
using ifw::Vector;
using clk = std::chrono::steady_clock;

namespace {

double secs_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

struct Criterion {
  bool ok = true;
  std::string detail;

  void fail(const std::string& msg) {
    if (ok) {
      ok = false;
      detail = msg;
    }
  }
  void check(const checks::CheckResult& c, const std::string& ctx) {
    if (!c.ok) fail(ctx + ": " + c.detail);
  }
};

bool report(int idx, const Criterion& c, const std::string& summary) {
  std::printf("C%d %s  %s%s%s\n", idx, c.ok ? "PASS" : "FAIL", summary.c_str(),
              c.ok ? "" : " — ", c.ok ? "" : c.detail.c_str());
  std::fflush(stdout);
  return c.ok;
}

std::string fmt(const char* f, double a, double b = 0, double cc = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, cc, d);
  return buf;
}

// every solve the harness performs, for the global lower-bound sweep (C9)
struct TaggedRun {
  std::string tag;
  ifw::SolveResult res;
};
std::vector<TaggedRun> g_runs;

const ifw::SolveResult& remember(std::string tag, ifw::SolveResult res) {
  g_runs.push_back({std::move(tag), std::move(res)});
  return g_runs.back().res;
}

double zero_fill_nuclear(const ifw::Instance& inst) {
  Matrix X = Matrix::Zero(inst.m, inst.n);
  for (int k = 0; k < inst.nnz(); ++k) X(inst.ii[k], inst.jj[k]) = inst.x[k];
  return X.jacobiSvd().singularValues().sum();
}

Matrix random_orthonormal(int n, int r, std::mt19937& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix A(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) A(i, j) = N(rng);
  Eigen::HouseholderQR<Matrix> qr(A);
  return qr.householderQ() * Matrix::Identity(n, r);
}

// smallest alpha >= 0 with lambda_min(diag(sigma) + alpha * delta) = 0,
// located independently by doubling plus bisection on the dense eigenvalue
double bisect_cone_exit(const Vector& sigma, const Matrix& delta) {
  auto lmin = [&](double a) {
    Matrix M = Matrix(sigma.asDiagonal()) + a * delta;
    return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (M + M.transpose())).eigenvalues()[0];
  };
  double hi = 1.0;
  while (lmin(hi) > 0.0 && hi < 1e12) hi *= 2.0;
  if (hi >= 1e12) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (lmin(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// C1-C3: guarantee suite over 20 planted instances, every method, both step
// rules.  C1: harmonic gap rate on plain toward runs, literal composite gap
// bound on finite-strength in-face runs, harmonic rate again on the
// face-optimizing variant; objective monotone on toward runs.  C2: per-step
// reciprocal growth at every toward step under the quadratic step rule.
// C3: rank accounting on every run.  Budget: under 2 minutes.

struct SuiteOutcome {
  Criterion c1, c2, c3;
  int runs = 0;
  double seconds = 0;
};

SuiteOutcome run_guarantee_suite() {
  SuiteOutcome out;
  const auto t0 = clk::now();

  struct Shape { int m, n, r; };
  const std::vector<Shape> shapes = {{40, 60, 2},   {80, 50, 3},  {100, 80, 4}, {60, 120, 3},
                                     {150, 60, 4},  {70, 140, 4}, {50, 50, 2},  {120, 90, 5},
                                     {150, 120, 5}, {90, 70, 3}};
  struct Cfg {
    ifw::Method method;
    double g1, g2;
    ifw::StepRule rule;
  };
  const double inf = std::numeric_limits<double>::infinity();
  const ifw::StepRule ex = ifw::StepRule::ExactLineSearch;
  const ifw::StepRule qd = ifw::StepRule::QuadraticApprox;
  // all six methods, both step rules represented, under the 2-minute budget
  const std::vector<Cfg> cfgs = {
      {ifw::Method::FrankWolfe, 0, 0, ex},     {ifw::Method::FrankWolfe, 0, 0, qd},
      {ifw::Method::InFace, 0, 1, ex},         {ifw::Method::InFace, 0, 1, qd},
      {ifw::Method::InFace, 1, 1, ex},         {ifw::Method::InFace, 0, inf, ex},
      {ifw::Method::InFaceOptimize, 0, 0, ex}, {ifw::Method::InFaceOptimize, 0, 0, qd},
      {ifw::Method::InFaceRank, 0, 0, ex},     {ifw::Method::AwayNatural, 0, 0, ex},
      {ifw::Method::AwayAtomic, 0, 0, qd}};

  for (int i = 0; i < 20; ++i) {
    const Shape& sh = shapes[static_cast<size_t>(i) % shapes.size()];
    ifw::GenerateOptions g;
    g.m = sh.m;
    g.n = sh.n;
    g.rank = sh.r;
    g.density = (i % 2 == 0) ? 0.1 : 0.3;
    g.snr = 5.0;
    g.seed = 300 + static_cast<unsigned>(i);
    ifw::Instance inst = ifw::generate_instance(g);
    const double delta = 0.55 * zero_fill_nuclear(inst);  // keeps the boundary active

    for (const Cfg& cfg : cfgs) {
      ifw::SolveOptions opt;
      opt.method = cfg.method;
      opt.gamma1 = cfg.g1;
      opt.gamma2 = cfg.g2;
      opt.step_rule = cfg.rule;
      opt.delta = delta;
      opt.gap_target = 3e-3;
      opt.max_iters = 100;
      opt.power_tol = 1e-5;
      if (cfg.method == ifw::Method::InFaceOptimize)
        opt.face_opt.max_iters = 8;  // a shallow face pass keeps the suite fast
      std::string tag = std::string("suite:") + ifw::method_name(cfg.method) + "/" +
                        ifw::step_rule_name(cfg.rule) + " inst " + std::to_string(i);
      const ifw::SolveResult& res = remember(tag, ifw::solve(inst, opt));
      ++out.runs;

      if (cfg.method == ifw::Method::FrankWolfe) {
        out.c1.check(checks::fw_harmonic(res), tag);
        out.c1.check(checks::f_monotone(res), tag);
      }
      if (cfg.method == ifw::Method::InFace && std::isfinite(cfg.g1) && std::isfinite(cfg.g2))
        out.c1.check(checks::literal_composite(res), tag);
      if (cfg.method == ifw::Method::InFaceOptimize) out.c1.check(checks::fw_harmonic(res), tag);

      if (cfg.rule == ifw::StepRule::QuadraticApprox)
        out.c2.check(checks::fw_step_reciprocal(res), tag);

      out.c3.check(checks::rank_account(res), tag);
    }
  }

  out.seconds = secs_since(t0);
  if (out.seconds >= 120.0)
    out.c1.fail(fmt("suite exceeded its 120s budget: %.1fs", out.seconds));
  return out;
}

// ---------------------------------------------------------------------------
// C4: dense-shadow parity.  200 iterations of the in-face method (0,1) on a
// 50x40 instance; after every emitted update the materialized thin SVD must
// match a dense replay to 1e-8 relative Frobenius, with orthonormality drift
// at most 1e-8.

Criterion run_shadow_parity(std::string& summary) {
  Criterion c;
  ifw::GenerateOptions g;
  g.m = 50;
  g.n = 40;
  g.density = 0.3;
  g.rank = 4;
  g.snr = 5.0;
  g.seed = 44;
  ifw::Instance inst = ifw::generate_instance(g);

  ifw::SolveOptions opt;
  opt.method = ifw::Method::InFace;
  opt.gamma1 = 0.0;
  opt.gamma2 = 1.0;
  opt.delta = 0.5 * zero_fill_nuclear(inst);
  opt.gap_target = 0.0;  // run the full 200 iterations
  opt.max_iters = 200;
  opt.trunc_tol = 1e-12;

  Matrix D = Matrix::Zero(inst.m, inst.n);
  long long events = 0;
  double worst_rel = 0.0, worst_drift = 0.0;
  ifw::StepObserver obs = [&](const ifw::StepEvent& ev) {
    checks::shadow_apply(D, ev);
    ++events;
    if (!ev.after) {
      c.fail("factored run emitted an event without a materialized iterate");
      return;
    }
    const double rel = (ev.after->dense() - D).norm() / std::max(1.0, D.norm());
    const double drift = ifw::ortho_drift(*ev.after);
    worst_rel = std::max(worst_rel, rel);
    worst_drift = std::max(worst_drift, drift);
    if (rel > 1e-8) c.fail(fmt("shadow mismatch %.3g at event %.0f", rel, double(events)));
    if (drift > 1e-8) c.fail(fmt("orthonormality drift %.3g at event %.0f", drift, double(events)));
  };
  const ifw::SolveResult& res = remember("shadow: if(0,1) 50x40", ifw::solve(inst, opt, obs));
  if (res.iters != 200) c.fail(fmt("expected 200 iterations, ran %.0f", double(res.iters)));
  summary = fmt("200 iterations, worst parity %.2e, worst drift %.2e", worst_rel, worst_drift);
  return c;
}

// ---------------------------------------------------------------------------
// C5: cone-exit agreement.  On 100 random boundary faces (rank <= 6) the
// closed-form away stop, the eigenvalue-based stop, and a bisection oracle on
// lambda_min(diag(sigma) + alpha * delta) agree to 1e-8 relative, and the
// minimum eigenvalue at the stop is within 1e-9 * delta of zero.

Criterion run_cone_exit(std::string& summary) {
  Criterion c;
  std::mt19937 rng(55);
  std::normal_distribution<double> N(0.0, 1.0);
  int accepted = 0, attempts = 0;
  double worst_rel = 0.0, worst_lmin = 0.0;
  while (accepted < 100 && attempts < 2000) {
    ++attempts;
    const int r = 2 + accepted % 5;  // ranks 2..6
    const double delta = 0.5 + 0.35 * (accepted % 7);
    Vector sigma(r);
    for (double& s : sigma) s = 0.05 + std::abs(N(rng));
    sigma *= delta / sigma.sum();  // boundary: singular values sum to delta
    Matrix A(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) A(i, j) = N(rng);
    Matrix ghat = 0.5 * (A + A.transpose());

    ifw::BoundaryAway ba = ifw::boundary_away(sigma, ghat, delta);
    if (!ba.present || ba.alpha_stop >= ifw::kUnboundedStep) continue;
    ++accepted;

    const double a_eig = ifw::alpha_stop_psd(sigma, ba.delta);
    const double a_bis = bisect_cone_exit(sigma, ba.delta);
    const double ref = std::max(1.0, std::abs(a_bis));
    worst_rel = std::max({worst_rel, std::abs(ba.alpha_stop - a_bis) / ref,
                          std::abs(a_eig - a_bis) / ref});
    if (std::abs(ba.alpha_stop - a_bis) > 1e-8 * ref)
      c.fail(fmt("closed form %.12g vs bisection %.12g", ba.alpha_stop, a_bis));
    if (std::abs(a_eig - a_bis) > 1e-8 * ref)
      c.fail(fmt("eigenvalue stop %.12g vs bisection %.12g", a_eig, a_bis));

    Matrix M = Matrix(sigma.asDiagonal()) + ba.alpha_stop * ba.delta;
    const double lmin =
        Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (M + M.transpose())).eigenvalues()[0];
    worst_lmin = std::max(worst_lmin, std::abs(lmin));
    if (std::abs(lmin) > 1e-9 * delta)
      c.fail(fmt("stop leaves lambda_min %.3g (delta %.3g)", lmin, delta));
  }
  if (accepted < 100) c.fail(fmt("only %.0f usable faces in %.0f draws", double(accepted), double(attempts)));
  summary = fmt("100 faces, worst stop deviation %.2e, worst |lambda_min| %.2e", worst_rel,
                worst_lmin);
  return c;
}

// ---------------------------------------------------------------------------
// C6: face image.  For 100 random orthonormal pairs and positive semidefinite
// cores with trace delta, the image U M V^T has nuclear norm exactly delta
// (to 1e-9 * delta).

Criterion run_face_image(std::string& summary) {
  Criterion c;
  std::mt19937 rng(66);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_int_distribution<int> Rdim(10, 25);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int r = 2 + i % 5;
    const int m = Rdim(rng), n = Rdim(rng);
    const double delta = 0.4 + 0.3 * (i % 9);
    Matrix U = random_orthonormal(m, r, rng);
    Matrix V = random_orthonormal(n, r, rng);
    Matrix G(r, r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) G(a, b) = N(rng);
    Matrix M = G * G.transpose();
    M *= delta / M.trace();
    const double nuc = (U * M * V.transpose()).jacobiSvd().singularValues().sum();
    worst = std::max(worst, std::abs(nuc - delta) / delta);
    if (std::abs(nuc - delta) > 1e-9 * delta)
      c.fail(fmt("nuclear norm %.12g vs delta %.12g", nuc, delta));
  }
  summary = fmt("100 samples, worst relative deviation %.2e", worst);
  return c;
}

// ---------------------------------------------------------------------------
// C7: planted 200x400 benchmark, 5 paired samples, gap target 10^-2.5,
// radius 0.8, power tolerance 1e-5 (the shipped benchmark defaults).  Mean
// final rank: in-face (0,inf) <= 30 while plain toward >= 60 and the atomic
// away variant >= 60; the in-face run is faster than plain toward on at
// least 4 of the 5 paired samples.  Budget: 15 minutes.

Criterion run_planted_profile(std::string& summary) {
  Criterion c;
  const auto t0 = clk::now();
  const double inf = std::numeric_limits<double>::infinity();
  struct Ms {
    const char* name;
    ifw::Method method;
    double g1, g2;
  };
  const std::vector<Ms> methods = {{"fw", ifw::Method::FrankWolfe, 0, 0},
                                   {"if", ifw::Method::InFace, 0, inf},
                                   {"away-atomic", ifw::Method::AwayAtomic, 0, 0}};
  double mean_rank[3] = {0, 0, 0};
  double sec[3][5];
  int censored = 0;

  for (int s = 0; s < 5; ++s) {
    ifw::GenerateOptions g;
    g.m = 200;
    g.n = 400;
    g.density = 0.10;
    g.rank = 10;
    g.snr = 5.0;
    g.seed = 100 + static_cast<unsigned>(s);
    ifw::Instance inst = ifw::generate_instance(g);
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      ifw::SolveOptions opt;
      opt.method = methods[mi].method;
      opt.gamma1 = methods[mi].g1;
      opt.gamma2 = methods[mi].g2;
      opt.delta = 0.8;
      opt.gap_target = std::pow(10.0, -2.5);
      opt.power_tol = 1e-5;
      opt.max_seconds = 240.0;
      std::string tag =
          std::string("planted:") + methods[mi].name + " sample " + std::to_string(s);
      const ifw::SolveResult& res = remember(tag, ifw::solve(inst, opt));
      mean_rank[mi] += res.final_rank() / 5.0;
      sec[mi][s] = res.seconds;
      if (res.reason == ifw::StopReason::MaxSeconds) {
        ++censored;
        c.fail(tag + " hit the 240s cap before the gap target");
      }
    }
  }

  int if_wins = 0;
  for (int s = 0; s < 5; ++s)
    if (sec[1][s] < sec[0][s]) ++if_wins;

  if (!(mean_rank[1] <= 30.0)) c.fail(fmt("in-face mean rank %.2f > 30", mean_rank[1]));
  if (!(mean_rank[0] >= 60.0)) c.fail(fmt("plain toward mean rank %.2f < 60", mean_rank[0]));
  if (!(mean_rank[2] >= 60.0)) c.fail(fmt("atomic away mean rank %.2f < 60", mean_rank[2]));
  if (if_wins < 4) c.fail(fmt("in-face faster on only %.0f of 5 samples", double(if_wins)));
  const double took = secs_since(t0);
  if (took >= 900.0) c.fail(fmt("exceeded the 900s budget: %.1fs", took));

  summary = fmt("mean rank fw=%.1f if=%.1f atomic=%.1f", mean_rank[0], mean_rank[1],
                mean_rank[2]) +
            fmt(", if faster %.0f/5, %.0fs", double(if_wins), took);
  return c;
}

// ---------------------------------------------------------------------------
// C8: rank profile at 500x625 (density 0.04, rank 10, snr 4), radius chosen
// by holdout selection.  The rank-triggered variant builds rank up and prunes
// it (max rank >= 2x final rank); in-face (0,inf) never overshoots
// (max rank <= 1.3x final rank).

Criterion run_rank_profile(std::string& summary) {
  Criterion c;
  ifw::GenerateOptions g;
  g.m = 500;
  g.n = 625;
  g.density = 0.04;
  g.rank = 10;
  g.snr = 4.0;
  g.seed = 500;
  ifw::Instance inst = ifw::generate_instance(g);

  ifw::SolveOptions base;
  base.power_tol = 1e-5;
  base.gap_target = 1e-2;  // loose inner solves for the radius sweep
  base.max_iters = 300;
  const double delta = ifw::select_delta_fw(inst, base).delta;

  const double inf = std::numeric_limits<double>::infinity();
  double ratio[2] = {0, 0};
  int final_rank[2] = {0, 0}, max_rank[2] = {0, 0};
  for (int which = 0; which < 2; ++which) {
    ifw::SolveOptions opt;
    opt.method = which == 0 ? ifw::Method::InFaceRank : ifw::Method::InFace;
    opt.gamma1 = 0.0;
    opt.gamma2 = inf;
    opt.delta = delta;
    opt.gap_target = std::pow(10.0, -2.5);
    opt.power_tol = 1e-5;
    opt.max_seconds = 240.0;
    std::string tag = std::string("profile:") + (which == 0 ? "if-rank" : "if(0,inf)");
    const ifw::SolveResult& res = remember(tag, ifw::solve(inst, opt));
    final_rank[which] = res.final_rank();
    max_rank[which] = res.max_rank;
    if (final_rank[which] <= 0) {
      c.fail(tag + " ended with an empty iterate");
      continue;
    }
    ratio[which] = static_cast<double>(max_rank[which]) / final_rank[which];
  }
  if (!(ratio[0] >= 2.0))
    c.fail(fmt("rank-triggered profile max/final %.2f < 2.0 (max %.0f, final %.0f)", ratio[0],
               double(max_rank[0]), double(final_rank[0])));
  if (!(ratio[1] <= 1.3))
    c.fail(fmt("in-face profile max/final %.2f > 1.3 (max %.0f, final %.0f)", ratio[1],
               double(max_rank[1]), double(final_rank[1])));
  summary = fmt("delta %.4g", delta) +
            fmt(", rank-triggered %.0f->%.0f", double(max_rank[0]), double(final_rank[0])) +
            fmt(", in-face %.0f->%.0f", double(max_rank[1]), double(final_rank[1]));
  return c;
}

// ---------------------------------------------------------------------------
// C9: lower-bound validity across every run the harness performed: the bound
// never decreases and never exceeds the final objective value plus 1e-10.

Criterion run_bound_validity(std::string& summary) {
  Criterion c;
  for (const TaggedRun& tr : g_runs) c.check(checks::bound_sound(tr.res, 1e-10), tr.tag);
  summary = fmt("%.0f runs audited", double(g_runs.size()));
  return c;
}

}  // namespace

int main() {
  const auto t0 = clk::now();
  bool ok = true;

  SuiteOutcome suite = run_guarantee_suite();
  ok &= report(1, suite.c1,
               fmt("guarantee suite: %.0f runs over 20 instances, %.1fs", double(suite.runs),
                   suite.seconds));
  ok &= report(2, suite.c2, "per-step reciprocal growth under the quadratic rule");
  ok &= report(3, suite.c3, "rank accounting on every suite run");

  std::string s4;
  Criterion c4 = run_shadow_parity(s4);
  ok &= report(4, c4, "dense-shadow parity: " + s4);

  std::string s5;
  Criterion c5 = run_cone_exit(s5);
  ok &= report(5, c5, "cone-exit agreement: " + s5);

  std::string s6;
  Criterion c6 = run_face_image(s6);
  ok &= report(6, c6, "face image nuclear norm: " + s6);

  std::string s7;
  Criterion c7 = run_planted_profile(s7);
  ok &= report(7, c7, "planted 200x400 profile: " + s7);

  std::string s8;
  Criterion c8 = run_rank_profile(s8);
  ok &= report(8, c8, "rank build-up/refine profile: " + s8);

  std::string s9;
  Criterion c9 = run_bound_validity(s9);
  ok &= report(9, c9, "lower-bound validity: " + s9);

  std::printf("%s  (%.0fs total)\n", ok ? "ALL CRITERIA PASS" : "ACCEPTANCE FAILED",
              secs_since(t0));
  return ok ? 0 : 1;
}
