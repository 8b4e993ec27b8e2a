#pragma once

// Nuclear-norm-ball solvers for observed-entry least squares.  All iterates are
// maintained as thin SVDs (or explicit atom combinations for the atomic away
// variant); every method tracks a certified lower bound B alongside f.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "ifw/face.hpp"
#include "ifw/problem.hpp"

namespace ifw {

enum class Method { FrankWolfe, InFace, InFaceOptimize, InFaceRank, AwayNatural, AwayAtomic };
enum class StepRule { ExactLineSearch, QuadraticApprox };
enum class StopReason { GapTarget, MaxIters, MaxSeconds, Stationary };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::FrankWolfe: return "fw";
    case Method::InFace: return "if";
    case Method::InFaceOptimize: return "if-opt";
    case Method::InFaceRank: return "if-rank";
    case Method::AwayNatural: return "away";
    case Method::AwayAtomic: return "away-atomic";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "fw") return Method::FrankWolfe;
  if (s == "if") return Method::InFace;
  if (s == "if-opt") return Method::InFaceOptimize;
  if (s == "if-rank") return Method::InFaceRank;
  if (s == "away") return Method::AwayNatural;
  if (s == "away-atomic") return Method::AwayAtomic;
  return std::nullopt;
}

inline const char* step_rule_name(StepRule r) {
  return r == StepRule::ExactLineSearch ? "exact" : "quad";
}

inline std::optional<StepRule> parse_step_rule(std::string_view s) {
  if (s == "exact") return StepRule::ExactLineSearch;
  if (s == "quad") return StepRule::QuadraticApprox;
  return std::nullopt;
}

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::GapTarget: return "gap-target";
    case StopReason::MaxIters: return "max-iters";
    case StopReason::MaxSeconds: return "max-seconds";
    case StopReason::Stationary: return "stationary";
  }
  return "?";
}

// Relative optimality gap; falls back to the absolute gap when B is not yet
// bounded away from zero.
inline double relative_gap(double f, double B) {
  const double g = f - B;
  return B > 1e-300 ? g / B : g;
}

struct SolveOptions {
  Method method = Method::FrankWolfe;
  StepRule step_rule = StepRule::ExactLineSearch;
  double delta = 1.0;
  // In-face acceptance strengths; infinity allowed.  The rank-stall method
  // ignores these: it runs plain Frank-Wolfe until the rank stops growing,
  // then switches to (1, 1).
  double gamma1 = 0.0;  // full in-face step
  double gamma2 = 1.0;  // partial in-face step
  double gap_target = 1e-3;
  long long max_iters = 100000;
  double max_seconds = std::numeric_limits<double>::infinity();
  double lbar = 0.0;  // 0 -> curvature scale of the objective
  double dbar = 0.0;  // 0 -> nuclear-ball diameter 2 * delta
  double power_tol = 1e-9;
  int power_dense_cutoff = 64;
  unsigned power_seed = 9001;
  double trunc_tol = 1e-6;     // singular values at or below this are dropped
  double resync_tol = 1e-12;   // accumulated dropped mass (relative to delta) before resync
  double ortho_tol = 1e-8;     // factor drift before reorthonormalization
  int rank_stall_window = 5;   // consecutive non-increasing ranks before if-rank engages
  FaceOptimizeOptions face_opt{};
  const ThinSvd* warm_start = nullptr;  // must be feasible; resets B to 0
};

struct TraceRow {
  long long k = 0;
  double seconds = 0.0;
  double f = 0.0;
  double B = 0.0;
  double alpha = 0.0;
  int rank = 0;
  const char* step = "";
  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;  // counts of prior steps, summing to k
};

// Observers see each iterate mutation in one of two exact forms so a dense
// shadow can replay the run.  Events fire after the update has been applied
// (cold starts emit one event for the initial step off zero); `after` points
// at the solver's post-update factorization for the factored methods and is
// null for the atomic method, which only assembles an SVD on exit.
struct StepEvent {
  enum class Kind { ScalePlusRankOne, InFaceCore };
  Kind kind = Kind::ScalePlusRankOne;
  double z_coef = 1.0;  // Z_new = z_coef * Z + uv_coef * u v^T
  double uv_coef = 0.0;
  Vector u, v;
  Matrix core;          // Z_new = Z + U_pre * core * V_pre^T
  Matrix U_pre, V_pre;
  const ThinSvd* after = nullptr;
};
using StepObserver = std::function<void(const StepEvent&)>;

struct SolveResult {
  ThinSvd Z;
  double f = 0.0, B = 0.0;
  StopReason reason = StopReason::MaxIters;
  long long iters = 0;
  double seconds = 0.0;
  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;
  int max_rank = 0;
  double max_nuclear = 0.0;  // largest iterate nuclear norm encountered
  double b_init = 0.0;       // lower bound before iteration 0
  double delta = 0.0, lbar = 0.0, dbar = 0.0, scale = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0;
  Method method = Method::FrankWolfe;
  StepRule step_rule = StepRule::ExactLineSearch;
  long long rank_switch_k = -1;  // if-rank: first iteration with finite gammas
  long long lmo_failures = 0;
  std::vector<TraceRow> trace;  // iters + 1 rows; last row is the stop record

  double rel_gap() const { return relative_gap(f, B); }
  int final_rank() const { return trace.empty() ? Z.rank() : trace.back().rank; }
};

namespace detail {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

struct LmoResult {
  Vector u, v;
  Vector uv_vals;  // raw u_i v_j at the observed coordinates
  double sigma = 0.0;
  double gs = 0.0;        // <grad, -delta u v^T>
  double bw_margin = 0.0; // relative safety inflation applied when merging B
  bool converged = false;
};

inline LmoResult run_lmo(const Objective& obj, const Vector& gvals, double delta,
                         const PowerOptions& po, const Vector* warm) {
  const Instance& inst = obj.instance();
  CooMatrix G{inst.m, inst.n, inst.ii, inst.jj, gvals};
  SingularTriplet t = top_singular_triplet(G, po, warm);
  LmoResult r;
  r.u = t.u;
  r.v = t.v;
  r.sigma = t.sigma;
  r.converged = t.converged;
  r.bw_margin = std::min(inst.m, inst.n) <= po.dense_cutoff ? 1e-13 : po.tol;
  r.uv_vals.resize(inst.nnz());
  for (int k = 0; k < inst.nnz(); ++k) r.uv_vals[k] = t.u[inst.ii[k]] * t.v[inst.jj[k]];
  r.gs = -delta * gvals.dot(r.uv_vals);
  return r;
}

// Reciprocal-increase acceptance for in-face candidates: moving to f_new is
// taken when 1/(f_new - B) >= 1/(f_cur - B) + gamma / (2 Lbar Dbar^2), with a
// closed gap treated as an infinite left side.
inline bool inface_accept(double f_new, double f_cur, double B, double gamma, double two_ld2) {
  const double gap_new = f_new - B;
  if (gap_new <= 0.0) return true;
  if (std::isinf(gamma)) return false;
  const double gap_cur = f_cur - B;
  if (gap_cur <= 0.0) return false;
  if (gamma == 0.0) return f_new <= f_cur;
  return 1.0 / gap_new >= 1.0 / gap_cur + gamma / two_ld2;
}

// Step length under the active rule, clamped to [0, cap].  dvals2 is the
// squared Frobenius norm of the direction restricted to the observed set.
inline double step_length(StepRule rule, double dd, double dvals2, double cap, double scale,
                          double lbar) {
  if (dd >= 0.0) return 0.0;
  const double denom = (rule == StepRule::ExactLineSearch ? scale : lbar) * dvals2;
  if (denom <= 0.0) return cap;  // objective is flat along the direction
  return std::clamp(-dd / denom, 0.0, cap);
}

inline SolveResult solve_factored(const Objective& obj, const SolveOptions& opt,
                                  const StepObserver& obs) {
  Stopwatch sw;
  const Instance& inst = obj.instance();
  const double scale = obj.scale();
  const double lbar = opt.lbar > 0.0 ? opt.lbar : scale;
  const double dbar = opt.dbar > 0.0 ? opt.dbar : 2.0 * opt.delta;
  const double two_ld2 = 2.0 * lbar * dbar * dbar;
  const PowerOptions po{opt.power_tol, 0, opt.power_dense_cutoff, opt.power_seed};

  SolveResult res;
  res.method = opt.method;
  res.step_rule = opt.step_rule;
  res.delta = opt.delta;
  res.lbar = lbar;
  res.dbar = dbar;
  res.scale = scale;
  double g1 = opt.gamma1, g2 = opt.gamma2;
  bool rank_phase_pending = false;
  if (opt.method == Method::InFaceRank) {
    g1 = g2 = std::numeric_limits<double>::infinity();
    rank_phase_pending = true;
  }
  res.gamma1 = g1;
  res.gamma2 = g2;
  const bool inface_family = opt.method == Method::InFace || opt.method == Method::InFaceRank;

  ThinSvd Z;
  Vector z;
  double f = 0.0, B = 0.0;
  bool on_boundary = false;
  double trace_level = 0.0;
  double dropped_acc = 0.0;
  Vector power_warm;
  bool have_warm = false;

  if (opt.warm_start) {
    if (opt.warm_start->rank() > 0 &&
        (opt.warm_start->rows() != inst.m || opt.warm_start->cols() != inst.n))
      throw std::invalid_argument("warm start shape mismatch");
    if (opt.warm_start->nuclear_norm() > opt.delta * (1.0 + 1e-9))
      throw std::invalid_argument("warm start is infeasible");
    Z = *opt.warm_start;
    if (Z.rank() == 0) Z = ThinSvd::zero(inst.m, inst.n);
    z = obj.values(Z);
    f = obj.f_of(z);
    B = 0.0;  // f >= 0, so zero is always a valid restart bound
    on_boundary = Z.nuclear_norm() >= opt.delta * (1.0 - 1e-12);
    trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
  } else {
    const Vector zero = Vector::Zero(inst.nnz());
    const double f0 = obj.f_of(zero);  // exactly 1/2 by construction
    const Vector g0 = obj.grad_of(zero);
    LmoResult lm = run_lmo(obj, g0, opt.delta, po, nullptr);
    if (!lm.converged) ++res.lmo_failures;
    Z = rank1(opt.delta, -lm.u, lm.v);
    z = obj.values(Z);
    f = obj.f_of(z);
    if (lm.converged) B = std::max(f0 + lm.gs * (1.0 + lm.bw_margin), 0.0);
    power_warm = lm.v;
    have_warm = true;
    on_boundary = true;
    trace_level = Z.sigma.sum();
    if (obs) {
      StepEvent ev;
      ev.kind = StepEvent::Kind::ScalePlusRankOne;
      ev.z_coef = 0.0;
      ev.uv_coef = -opt.delta;
      ev.u = lm.u;
      ev.v = lm.v;
      ev.after = &Z;
      obs(ev);
    }
  }
  res.b_init = B;

  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;
  res.max_rank = Z.rank();
  res.max_nuclear = Z.nuclear_norm();

  auto after_update = [&]() {
    if (ortho_drift(Z) > opt.ortho_tol) {
      reorthonormalize(Z);
      z = obj.values(Z);
      dropped_acc = 0.0;
    } else if (dropped_acc > opt.resync_tol * opt.delta) {
      z = obj.values(Z);
      dropped_acc = 0.0;
    }
    f = obj.f_of(z);
    res.max_rank = std::max(res.max_rank, Z.rank());
    res.max_nuclear = std::max(res.max_nuclear, Z.nuclear_norm());
  };

  auto apply_scale_rank1 = [&](double z_coef, double uv_coef, const Vector& u, const Vector& v,
                               const Vector& uv_vals) {
    SvdUpdateResult up = svd_scale_plus_rank1(Z, z_coef, uv_coef * u, v, opt.trunc_tol);
    dropped_acc += up.dropped;
    Z = std::move(up.Z);
    z = z_coef * z + uv_coef * uv_vals;
    after_update();
    if (obs) {
      StepEvent ev;
      ev.kind = StepEvent::Kind::ScalePlusRankOne;
      ev.z_coef = z_coef;
      ev.uv_coef = uv_coef;
      ev.u = u;
      ev.v = v;
      ev.after = &Z;
      obs(ev);
    }
  };

  auto apply_inface_core = [&](const Matrix& S, const Vector& step_vals) {
    Matrix U_pre, V_pre;
    if (obs) {
      U_pre = Z.U;
      V_pre = Z.V;
    }
    SvdUpdateResult up = svd_inface_update(Z, S, opt.trunc_tol, 1e-7 * opt.delta);
    dropped_acc += up.dropped;
    Z = std::move(up.Z);
    z += step_vals;
    after_update();
    if (obs) {
      StepEvent ev;
      ev.kind = StepEvent::Kind::InFaceCore;
      ev.core = S;
      ev.U_pre = std::move(U_pre);
      ev.V_pre = std::move(V_pre);
      ev.after = &Z;
      obs(ev);
    }
    on_boundary = true;  // trace-preserving move within a boundary face
    trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
  };

  long long k = 0;
  StopReason reason = StopReason::MaxIters;
  std::vector<TraceRow>& trace = res.trace;

  auto record = [&](const char* step, double alpha, double f_at, double B_at, int rank_at) {
    trace.push_back(TraceRow{k, sw.elapsed(), f_at, B_at, alpha, rank_at, step, Na, Nb, Nc, Nd});
  };

  int prev_rank = Z.rank();
  int stall_run = 0;

  for (;; ++k) {
    if (relative_gap(f, B) <= opt.gap_target) { reason = StopReason::GapTarget; break; }
    if (f <= 1e-28) { reason = StopReason::Stationary; break; }
    if (sw.elapsed() >= opt.max_seconds) { reason = StopReason::MaxSeconds; break; }
    if (k >= opt.max_iters) { reason = StopReason::MaxIters; break; }

    const double f_at = f;
    const int rank_at = Z.rank();
    const bool boundary_at = on_boundary;
    Vector gvals = obj.grad_of(z);
    const double gz = gvals.dot(z);

    std::optional<LmoResult> lmo;
    auto ensure_lmo = [&]() -> LmoResult& {
      if (!lmo) {
        lmo = run_lmo(obj, gvals, opt.delta, po, have_warm ? &power_warm : nullptr);
        if (lmo->converged) {
          B = std::max(B, f + lmo->gs * (1.0 + lmo->bw_margin) - gz);
          power_warm = lmo->v;
          have_warm = true;
        } else {
          ++res.lmo_failures;
        }
      }
      return *lmo;
    };

    bool done = false;

    // ---- in-face family: try the face move before falling back to a toward step
    if (inface_family && !(std::isinf(g1) && std::isinf(g2))) {
      Matrix delta_core;  // boundary case
      Vector dvals;
      double astop = 0.0;
      bool have_dir = false;
      bool interior_dir = false;
      Vector au, av;  // interior composite ray atom pair
      Vector a_uv;

      if (boundary_at && Z.rank() >= 2) {
        CooMatrix G{inst.m, inst.n, inst.ii, inst.jj, gvals};
        Matrix ghat = reduced_gradient(G, Z.U, Z.V);
        BoundaryAway ba = boundary_away(Z.sigma, ghat, trace_level);
        if (ba.present && ba.alpha_stop < kUnboundedStep) {
          delta_core = std::move(ba.delta);
          dvals = core_direction_values(Z.U, Z.V, delta_core, inst.ii, inst.jj);
          astop = ba.alpha_stop;
          have_dir = true;
        }
      } else if (!boundary_at && Z.rank() >= 1) {
        LmoResult& lm = ensure_lmo();
        astop = interior_alpha_cap(Z, opt.delta, lm.u, lm.v);
        if (astop > 0.0 && astop < 1e100) {
          au = lm.u;
          av = lm.v;
          a_uv = lm.uv_vals;
          dvals = z - opt.delta * a_uv;
          have_dir = true;
          interior_dir = true;
        }
      }

      if (have_dir) {
        const double dd = gvals.dot(dvals);
        const double dvals2 = dvals.squaredNorm();
        const double curv = scale * dvals2;
        const double fB = f + astop * dd + 0.5 * astop * astop * curv;
        if (inface_accept(fB, f, B, g1, two_ld2)) {
          record("inface-full", astop, f_at, B, rank_at);
          if (boundary_at) ++Na; else ++Nd;
          if (interior_dir)
            apply_scale_rank1(1.0 + astop, -astop * opt.delta, au, av, a_uv);
          else
            apply_inface_core(astop * delta_core, astop * dvals);
          if (interior_dir) {
            on_boundary = true;
            trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
          }
          done = true;
        } else {
          const double bb = step_length(opt.step_rule, dd, dvals2, astop, scale, lbar);
          if (bb > 0.0) {
            const double fA = f + bb * dd + 0.5 * bb * bb * curv;
            if (inface_accept(fA, f, B, g2, two_ld2)) {
              record("inface-partial", bb, f_at, B, rank_at);
              if (boundary_at) ++Nb; else ++Nd;
              if (interior_dir) {
                apply_scale_rank1(1.0 + bb, -bb * opt.delta, au, av, a_uv);
                if (bb >= astop) {
                  on_boundary = true;
                  trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
                }
              } else {
                apply_inface_core(bb * delta_core, bb * dvals);
              }
              done = true;
            }
          }
        }
      }
    }

    // ---- away-step method: pick between the toward and the away direction
    if (!done && opt.method == Method::AwayNatural) {
      LmoResult& lm = ensure_lmo();
      const double dd_fw = lm.gs - gz;  // <g, atom - Z>
      double dd_away = 0.0;
      bool away_ok = false;
      bool away_interior = false;
      Matrix delta_core;
      double away_cap = 0.0;
      if (boundary_at && Z.rank() >= 2) {
        CooMatrix G{inst.m, inst.n, inst.ii, inst.jj, gvals};
        Matrix ghat = reduced_gradient(G, Z.U, Z.V);
        BoundaryAway ba = boundary_away(Z.sigma, ghat, trace_level);
        if (ba.present && ba.alpha_stop < kUnboundedStep) {
          dd_away = ba.dd;
          delta_core = std::move(ba.delta);
          away_cap = ba.alpha_stop;
          away_ok = true;
        }
      } else if (!boundary_at) {
        const double cap = interior_alpha_cap(Z, opt.delta, lm.u, lm.v);
        if (cap > 0.0 && cap < 1e100) {
          dd_away = gz - opt.delta * gvals.dot(lm.uv_vals);
          away_cap = cap;
          away_ok = true;
          away_interior = true;
        }
      }

      if (away_ok && dd_fw > dd_away) {  // away is strictly steeper; ties go toward
        if (away_interior) {
          Vector dvals = z - opt.delta * lm.uv_vals;
          const double dd = gvals.dot(dvals);
          const double a = step_length(opt.step_rule, dd, dvals.squaredNorm(), away_cap, scale, lbar);
          record(a >= away_cap ? "away-full" : "away-partial", a, f_at, B, rank_at);
          ++Nd;
          apply_scale_rank1(1.0 + a, -a * opt.delta, lm.u, lm.v, lm.uv_vals);
          if (a >= away_cap) {
            on_boundary = true;
            trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
          }
        } else {
          Vector dvals = core_direction_values(Z.U, Z.V, delta_core, inst.ii, inst.jj);
          const double dd = gvals.dot(dvals);
          const double a = step_length(opt.step_rule, dd, dvals.squaredNorm(), away_cap, scale, lbar);
          record(a >= away_cap ? "away-full" : "away-partial", a, f_at, B, rank_at);
          if (a >= away_cap) ++Na; else ++Nb;
          apply_inface_core(a * delta_core, a * dvals);
        }
        done = true;
      }
    }

    // ---- toward step (the shared fallback and the whole of plain Frank-Wolfe)
    if (!done) {
      LmoResult& lm = ensure_lmo();
      Vector dvals = -opt.delta * lm.uv_vals - z;
      const double dd = lm.gs - gz;
      const double a = step_length(opt.step_rule, dd, dvals.squaredNorm(), 1.0, scale, lbar);
      const bool face_pass = opt.method == Method::InFaceOptimize;
      record(face_pass ? "fw+faceopt" : "fw", a, f_at, B, rank_at);
      ++Nc;
      apply_scale_rank1(1.0 - a, -a * opt.delta, lm.u, lm.v, lm.uv_vals);
      if (a >= 1.0) {
        on_boundary = true;
        trace_level = Z.sigma.size() ? Z.sigma.sum() : 0.0;
      } else if (a > 0.0) {
        on_boundary = false;
      }

      // if-opt: follow the toward step with a full optimization over the
      // current face, kept only when it improves
      if (face_pass && on_boundary && Z.rank() >= 2) {
        const Matrix U = Z.U, V = Z.V;
        const Vector sig = Z.sigma;
        const Vector z_base = z;
        Matrix M0 = Matrix::Zero(sig.size(), sig.size());
        for (int t = 0; t < sig.size(); ++t) M0(t, t) = sig[t];
        auto value = [&](const Matrix& M) {
          Matrix S = M - M0;
          Vector dv = core_direction_values(U, V, S, inst.ii, inst.jj);
          return obj.f_of(z_base + dv);
        };
        auto gradm = [&](const Matrix& M) {
          Matrix S = M - M0;
          Vector dv = core_direction_values(U, V, S, inst.ii, inst.jj);
          Vector gv = obj.grad_of(z_base + dv);
          CooMatrix G{inst.m, inst.n, inst.ii, inst.jj, gv};
          return reduced_gradient(G, U, V);
        };
        FaceOptimizeResult fo =
            entropic_face_minimize(value, gradm, M0, trace_level, opt.face_opt);
        if (fo.improved) {
          Matrix S = fo.M - M0;
          apply_inface_core(S, core_direction_values(U, V, S, inst.ii, inst.jj));
        }
      }
    }

    // ---- if-rank: engage the in-face tests once the rank stalls
    if (rank_phase_pending) {
      if (Z.rank() <= prev_rank) ++stall_run; else stall_run = 0;
      prev_rank = Z.rank();
      if (stall_run >= opt.rank_stall_window) {
        g1 = 1.0;
        g2 = 1.0;
        rank_phase_pending = false;
        res.rank_switch_k = k + 1;
      }
    }
  }

  record("stop", 0.0, f, B, Z.rank());
  res.Z = std::move(Z);
  res.f = f;
  res.B = B;
  res.reason = reason;
  res.iters = k;
  res.seconds = sw.elapsed();
  res.Na = Na;
  res.Nb = Nb;
  res.Nc = Nc;
  res.Nd = Nd;
  return res;
}

// ---------------------------------------------------------------------------
// atomic away variant: the iterate is an explicit convex combination of
// rank-one extreme points; away steps shift weight off the worst atom.

inline SolveResult solve_atomic(const Objective& obj, const SolveOptions& opt,
                                const StepObserver& obs) {
  Stopwatch sw;
  const Instance& inst = obj.instance();
  const double scale = obj.scale();
  const double lbar = opt.lbar > 0.0 ? opt.lbar : scale;
  const double dbar = opt.dbar > 0.0 ? opt.dbar : 2.0 * opt.delta;
  const PowerOptions po{opt.power_tol, 0, opt.power_dense_cutoff, opt.power_seed};

  SolveResult res;
  res.method = opt.method;
  res.step_rule = opt.step_rule;
  res.delta = opt.delta;
  res.lbar = lbar;
  res.dbar = dbar;
  res.scale = scale;
  res.gamma1 = opt.gamma1;
  res.gamma2 = opt.gamma2;

  std::vector<Vector> au, av;   // unit atom factors, canonical signs
  std::vector<double> lam;      // positive weights summing to one
  std::vector<Vector> uvv;      // raw u_i v_j samples per atom
  Matrix GU(0, 0), GV(0, 0);    // atom Gram matrices

  auto add_atom = [&](Vector u, Vector v, Vector uv) -> int {
    canonicalize_signs(u, v);
    for (size_t t = 0; t < au.size(); ++t)
      if ((au[t] - u).norm() + (av[t] - v).norm() <= 1e-10) return static_cast<int>(t);
    const int t = static_cast<int>(au.size());
    Matrix GU2(t + 1, t + 1), GV2(t + 1, t + 1);
    GU2.topLeftCorner(t, t) = GU;
    GV2.topLeftCorner(t, t) = GV;
    for (int s = 0; s < t; ++s) {
      GU2(s, t) = GU2(t, s) = au[s].dot(u);
      GV2(s, t) = GV2(t, s) = av[s].dot(v);
    }
    GU2(t, t) = u.squaredNorm();
    GV2(t, t) = v.squaredNorm();
    GU = std::move(GU2);
    GV = std::move(GV2);
    au.push_back(std::move(u));
    av.push_back(std::move(v));
    uvv.push_back(std::move(uv));
    lam.push_back(0.0);
    return t;
  };

  auto remove_atom = [&](int t) {
    const int last = static_cast<int>(au.size()) - 1;
    if (t != last) {
      std::swap(au[t], au[last]);
      std::swap(av[t], av[last]);
      std::swap(uvv[t], uvv[last]);
      std::swap(lam[t], lam[last]);
      GU.row(t).swap(GU.row(last));
      GU.col(t).swap(GU.col(last));
      GV.row(t).swap(GV.row(last));
      GV.col(t).swap(GV.col(last));
    }
    au.pop_back();
    av.pop_back();
    uvv.pop_back();
    lam.pop_back();
    GU.conservativeResize(last, last);
    GV.conservativeResize(last, last);
  };

  auto z_from_atoms = [&]() {
    Vector zz = Vector::Zero(inst.nnz());
    for (size_t t = 0; t < au.size(); ++t) zz += (-opt.delta * lam[t]) * uvv[t];
    return zz;
  };

  // numerical rank at the truncation tolerance, via the atom Gram matrices
  auto atom_rank = [&]() -> int {
    const int t = static_cast<int>(au.size());
    if (t == 0) return 0;
    Vector w(t);
    for (int s = 0; s < t; ++s) w[s] = -opt.delta * lam[s];
    SymEig ev = sym_eig(GV);
    Matrix half = Matrix::Zero(t, t);
    for (int s = 0; s < t; ++s) {
      const double lv = std::max(ev.values[s], 0.0);
      half += std::sqrt(lv) * (ev.vectors.col(s) * ev.vectors.col(s).transpose());
    }
    Matrix S = half * w.asDiagonal() * GU * w.asDiagonal() * half;
    SymEig es = sym_eig(0.5 * (S + S.transpose()));
    const double thr = opt.trunc_tol * opt.trunc_tol;
    int r = 0;
    for (int s = 0; s < t; ++s)
      if (es.values[s] > thr) ++r;
    return r;
  };

  auto rebuild_svd = [&]() -> ThinSvd {
    const int t = static_cast<int>(au.size());
    if (t == 0) return ThinSvd::zero(inst.m, inst.n);
    Matrix Ua(inst.m, t), Va(inst.n, t);
    for (int s = 0; s < t; ++s) {
      Ua.col(s) = au[s];
      Va.col(s) = av[s];
    }
    // the atom count can exceed the matrix dimensions, so the thin QR factors
    // are m x ru and ru x t with ru = min(m, t) (and likewise for V)
    const int ru = std::min(inst.m, t);
    const int rv = std::min(inst.n, t);
    Eigen::HouseholderQR<Matrix> qu(Ua), qv(Va);
    Matrix Qu = qu.householderQ() * Matrix::Identity(inst.m, ru);
    Matrix Qv = qv.householderQ() * Matrix::Identity(inst.n, rv);
    Matrix Ru = qu.matrixQR().topRows(ru).triangularView<Eigen::Upper>();
    Matrix Rv = qv.matrixQR().topRows(rv).triangularView<Eigen::Upper>();
    Vector w(t);
    for (int s = 0; s < t; ++s) w[s] = -opt.delta * lam[s];
    Matrix core = Ru * w.asDiagonal() * Rv.transpose();
    Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    int keep = 0;
    while (keep < sv.size() && sv[keep] > opt.trunc_tol) ++keep;
    ThinSvd out;
    if (keep == 0) return ThinSvd::zero(inst.m, inst.n);
    out.U = Qu * svd.matrixU().leftCols(keep);
    out.V = Qv * svd.matrixV().leftCols(keep);
    out.sigma = sv.head(keep);
    canonicalize_signs(out.U, out.V);
    return out;
  };

  // initialization: one full toward step from zero
  Vector z;
  double f = 0.0, B = 0.0;
  Vector power_warm;
  {
    const Vector zero = Vector::Zero(inst.nnz());
    const double f0 = obj.f_of(zero);
    const Vector g0 = obj.grad_of(zero);
    LmoResult lm = run_lmo(obj, g0, opt.delta, po, nullptr);
    if (!lm.converged) ++res.lmo_failures;
    const int t = add_atom(lm.u, lm.v, lm.uv_vals);
    lam[static_cast<size_t>(t)] = 1.0;
    z = z_from_atoms();
    f = obj.f_of(z);
    if (lm.converged) B = std::max(f0 + lm.gs * (1.0 + lm.bw_margin), 0.0);
    power_warm = lm.v;
    if (obs) {
      StepEvent ev;
      ev.z_coef = 0.0;
      ev.uv_coef = -opt.delta;
      ev.u = au[static_cast<size_t>(t)];
      ev.v = av[static_cast<size_t>(t)];
      obs(ev);
    }
  }
  res.b_init = B;

  long long Na = 0, Nb = 0, Nc = 0, Nd = 0;
  res.max_rank = atom_rank();
  res.max_nuclear = opt.delta;  // a single extreme atom

  long long k = 0;
  StopReason reason = StopReason::MaxIters;
  auto record = [&](const char* step, double alpha, double f_at, double B_at, int rank_at) {
    res.trace.push_back(
        TraceRow{k, sw.elapsed(), f_at, B_at, alpha, rank_at, step, Na, Nb, Nc, Nd});
  };

  long long since_resync = 0;
  auto after_update = [&]() {
    double s = 0.0;
    for (double l : lam) s += l;
    if (std::abs(s - 1.0) > 1e-13) {
      for (double& l : lam) l /= s;
      z = z_from_atoms();
    } else if (++since_resync >= 50) {
      z = z_from_atoms();
      since_resync = 0;
    }
    f = obj.f_of(z);
    double nuc = 0.0;
    for (double l : lam) nuc += opt.delta * l;
    res.max_nuclear = std::max(res.max_nuclear, nuc);
  };

  for (;; ++k) {
    if (relative_gap(f, B) <= opt.gap_target) { reason = StopReason::GapTarget; break; }
    if (f <= 1e-28) { reason = StopReason::Stationary; break; }
    if (sw.elapsed() >= opt.max_seconds) { reason = StopReason::MaxSeconds; break; }
    if (k >= opt.max_iters) { reason = StopReason::MaxIters; break; }

    const double f_at = f;
    const int rank_at = atom_rank();
    res.max_rank = std::max(res.max_rank, rank_at);
    Vector gvals = obj.grad_of(z);
    const double gz = gvals.dot(z);

    LmoResult lm = run_lmo(obj, gvals, opt.delta, po, &power_warm);
    if (lm.converged) {
      B = std::max(B, f + lm.gs * (1.0 + lm.bw_margin) - gz);
      power_warm = lm.v;
    } else {
      ++res.lmo_failures;
    }

    // away atom: the support atom most aligned with the gradient
    int jworst = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < au.size(); ++t) {
      const double sc = -opt.delta * gvals.dot(uvv[t]);
      if (sc > best_score) {
        best_score = sc;
        jworst = static_cast<int>(t);
      }
    }

    const double dd_fw = lm.gs - gz;
    const double dd_away = jworst >= 0 ? gz - best_score : 0.0;
    const double lam_j = jworst >= 0 ? lam[static_cast<size_t>(jworst)] : 0.0;
    const bool away_possible = jworst >= 0 && lam_j < 1.0 - 1e-14;

    if (away_possible && dd_fw > dd_away) {
      // away step: x + a (x - atom_j), capped where atom_j's weight hits zero
      const double cap = lam_j / (1.0 - lam_j);
      Vector dvals = z + opt.delta * uvv[static_cast<size_t>(jworst)];
      const double dd = gvals.dot(dvals);
      const double a = step_length(opt.step_rule, dd, dvals.squaredNorm(), cap, scale, lbar);
      const bool drops = a >= cap;
      record(drops ? "away-full" : "away-partial", a, f_at, B, rank_at);
      if (drops) ++Na; else ++Nb;
      const Vector atom_u = au[static_cast<size_t>(jworst)];
      const Vector atom_v = av[static_cast<size_t>(jworst)];
      z = (1.0 + a) * z + (a * opt.delta) * uvv[static_cast<size_t>(jworst)];
      for (double& l : lam) l *= 1.0 + a;
      lam[static_cast<size_t>(jworst)] -= a;
      if (lam[static_cast<size_t>(jworst)] <= 1e-12) remove_atom(jworst);
      after_update();
      if (obs) {
        StepEvent ev;
        ev.z_coef = 1.0 + a;
        ev.uv_coef = a * opt.delta;
        ev.u = atom_u;
        ev.v = atom_v;
        obs(ev);
      }
    } else {
      // toward step
      Vector dvals = -opt.delta * lm.uv_vals - z;
      const double dd = lm.gs - gz;
      const double a = step_length(opt.step_rule, dd, dvals.squaredNorm(), 1.0, scale, lbar);
      record("fw", a, f_at, B, rank_at);
      ++Nc;
      if (a >= 1.0) {
        while (!au.empty()) remove_atom(0);
        const int t = add_atom(lm.u, lm.v, lm.uv_vals);
        lam[static_cast<size_t>(t)] = 1.0;
        z = z_from_atoms();
        since_resync = 0;
        f = obj.f_of(z);
        res.max_nuclear = std::max(res.max_nuclear, opt.delta);
      } else {
        const int t = add_atom(lm.u, lm.v, lm.uv_vals);
        for (double& l : lam) l *= 1.0 - a;
        lam[static_cast<size_t>(t)] += a;
        z = (1.0 - a) * z + (-a * opt.delta) * lm.uv_vals;
        // purge atoms whose weight has decayed to nothing
        for (int t2 = static_cast<int>(au.size()) - 1; t2 >= 0; --t2)
          if (lam[static_cast<size_t>(t2)] <= 1e-12) remove_atom(t2);
        after_update();
      }
      if (obs) {
        StepEvent ev;
        ev.z_coef = 1.0 - a;
        ev.uv_coef = -a * opt.delta;
        ev.u = lm.u;
        ev.v = lm.v;
        obs(ev);
      }
    }
  }

  record("stop", 0.0, f, B, atom_rank());
  res.Z = rebuild_svd();
  res.f = obj.f(res.Z);
  res.B = B;
  res.reason = reason;
  res.iters = k;
  res.seconds = sw.elapsed();
  res.Na = Na;
  res.Nb = Nb;
  res.Nc = Nc;
  res.Nd = Nd;
  return res;
}

}  // namespace detail

inline SolveResult solve(const Objective& obj, const SolveOptions& opt,
                         const StepObserver& observer = {}) {
  if (!(opt.delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (opt.method == Method::AwayAtomic) return detail::solve_atomic(obj, opt, observer);
  return detail::solve_factored(obj, opt, observer);
}

inline SolveResult solve(const Instance& inst, const SolveOptions& opt,
                         const StepObserver& observer = {}) {
  Objective obj(inst);
  return solve(obj, opt, observer);
}

// Radius selection with plain Frank-Wolfe inner solves.
inline DeltaSelection select_delta_fw(const Instance& inst, SolveOptions base,
                                      DeltaSelectOptions sel = {}) {
  base.method = Method::FrankWolfe;
  return select_delta(
      inst,
      [&base](const Instance& train, double delta, const ThinSvd& warm) {
        SolveOptions o = base;
        o.delta = delta;
        o.warm_start = warm.rank() > 0 ? &warm : nullptr;
        Objective obj(train);
        return solve(obj, o).Z;
      },
      sel);
}

}  // namespace ifw
