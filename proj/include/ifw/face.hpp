#pragma once

// Geometry of the nuclear-norm ball's faces for iterates kept as thin SVDs.
// A boundary iterate Z = U diag(sigma) V^T with trace level t = sum(sigma)
// spans the face {U M V^T : M symmetric PSD, trace M = t}; directions within
// that face are symmetric trace-zero core perturbations of diag(sigma).

#include <cmath>
#include <limits>

#include "ifw/linalg.hpp"

namespace ifw {

// Sentinel for "no finite feasibility cap along this ray".
inline constexpr double kUnboundedStep = 1e300;

// Minimal face of the ball containing a feasible iterate: boundary iterates
// (trace within a relative band of delta) span a face of dimension
// r(r+1)/2 - 1; anything strictly inside has the whole ball as its minimal
// face and carries no proper-face dimension.
enum class FaceKind { Interior, Boundary };

struct FaceInfo {
  FaceKind kind = FaceKind::Interior;
  int r = 0;
  long long dim = -1;  // r(r+1)/2 - 1 on the boundary; -1 otherwise
};

inline FaceInfo classify_face(const ThinSvd& Z, double delta, double boundary_tol = 1e-9) {
  const double t = Z.nuclear_norm();
  if (t > delta * (1.0 + boundary_tol)) throw std::invalid_argument("iterate outside the ball");
  FaceInfo out;
  out.r = Z.rank();
  if (t >= delta * (1.0 - boundary_tol)) {
    out.kind = FaceKind::Boundary;
    const long long r = out.r;
    out.dim = r * (r + 1) / 2 - 1;
  }
  return out;
}

// sym(U^T G V): gradient of M -> f(U M V^T) on the symmetric core.
inline Matrix reduced_gradient(const CooMatrix& G, const Matrix& U, const Matrix& V) {
  const int r = static_cast<int>(U.cols());
  Matrix Y = Matrix::Zero(G.rows, r);
  for (int k = 0; k < G.nnz(); ++k) Y.row(G.ii[k]) += G.vals[k] * V.row(G.jj[k]);
  Matrix W = U.transpose() * Y;
  return 0.5 * (W + W.transpose());
}

// Values of U Delta V^T at the given coordinates.
inline Vector core_direction_values(const Matrix& U, const Matrix& V, const Matrix& delta,
                                    const std::vector<int>& ii, const std::vector<int>& jj) {
  Matrix Y = U * delta;
  Vector out(static_cast<Eigen::Index>(ii.size()));
  for (size_t k = 0; k < ii.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = Y.row(ii[k]).dot(V.row(jj[k]));
  return out;
}

// Largest alpha with diag(sigma) + alpha * delta PSD, via the scaled minimum
// eigenvalue.  Returns kUnboundedStep when the ray never leaves the cone.
inline double alpha_stop_psd(const Vector& sigma, const Matrix& delta) {
  const int r = static_cast<int>(sigma.size());
  Matrix W(r, r);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) W(a, b) = delta(a, b) / std::sqrt(sigma[a] * sigma[b]);
  const double lam = eig_min_pair(0.5 * (W + W.transpose())).value;
  if (lam >= -1e-16) return kUnboundedStep;
  return -1.0 / lam;
}

// Closed form for the away perturbation delta = diag(sigma) - t q q^T:
// alpha_stop = 1 / (t * q^T diag(sigma)^{-1} q - 1).
inline double alpha_stop_away_closed(const Vector& sigma, const Vector& q, double trace_level) {
  double c = 0.0;
  for (int i = 0; i < sigma.size(); ++i) c += q[i] * q[i] / sigma[i];
  c *= trace_level;
  if (c <= 1.0 + 1e-15) return kUnboundedStep;
  return 1.0 / (c - 1.0);
}

// Away step within the boundary face: the face point maximizing the linearized
// objective is t q q^T for the top eigenvector q of the reduced gradient, and
// the direction is the trace-zero core perturbation diag(sigma) - t q q^T.
struct BoundaryAway {
  bool present = false;
  Vector q;           // top eigenvector of the reduced gradient
  Matrix delta;       // r x r, trace exactly zero at the face's own trace level
  double dd = 0.0;    // <reduced gradient, delta>
  double alpha_stop = 0.0;
};

inline BoundaryAway boundary_away(const Vector& sigma, const Matrix& ghat, double trace_level) {
  BoundaryAway out;
  const int r = static_cast<int>(sigma.size());
  if (r <= 1) return out;  // the face is a single point
  EigPair top = eig_max_pair(ghat);
  out.present = true;
  out.q = top.vector;
  out.delta = -trace_level * (top.vector * top.vector.transpose());
  for (int i = 0; i < r; ++i) out.delta(i, i) += sigma[i];
  double ddiag = 0.0;
  for (int i = 0; i < r; ++i) ddiag += ghat(i, i) * sigma[i];
  out.dd = ddiag - trace_level * top.value;
  out.alpha_stop = alpha_stop_away_closed(sigma, top.vector, trace_level);
  return out;
}

// Frank-Wolfe step within the boundary face: the face point minimizing the
// linearized objective is t q q^T for the bottom eigenvector q of the reduced
// gradient, giving the trace-zero direction t q q^T - diag(sigma).  Absent on
// point faces and when the direction does not descend.
struct BoundaryToward {
  bool present = false;
  Vector q;
  Matrix delta;
  double dd = 0.0;
};

inline BoundaryToward boundary_toward(const Vector& sigma, const Matrix& ghat,
                                      double trace_level) {
  BoundaryToward out;
  const int r = static_cast<int>(sigma.size());
  if (r <= 1) return out;
  EigPair bottom = eig_min_pair(ghat);
  double ddiag = 0.0;
  for (int i = 0; i < r; ++i) ddiag += ghat(i, i) * sigma[i];
  const double dd = trace_level * bottom.value - ddiag;
  if (dd >= 0.0) return out;
  out.present = true;
  out.q = bottom.vector;
  out.delta = trace_level * (bottom.vector * bottom.vector.transpose());
  for (int i = 0; i < r; ++i) out.delta(i, i) -= sigma[i];
  out.dd = dd;
  return out;
}

// Feasibility cap for the interior composite ray (1 + alpha) Z - alpha delta u v^T:
// the nuclear norm along the ray is convex and below delta at alpha = 0, so the
// feasible set is an interval; bracket by doubling, then bisect keeping the
// feasible side.  Returns the feasible endpoint.
inline double interior_alpha_cap(const ThinSvd& Z, double delta, const Vector& u, const Vector& v,
                                 double tol_rel = 1e-7, int max_bisect = 60) {
  auto norm_at = [&](double a) {
    return nuclear_norm_scale_plus_rank1(Z, 1.0 + a, (-a * delta) * u, v);
  };
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (norm_at(hi) <= delta && guard++ < 200) {
    lo = hi;
    hi *= 2.0;
  }
  if (guard >= 200) return hi;  // ray never exits (degenerate); caller clamps elsewhere
  for (int it = 0; it < max_bisect; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double nm = norm_at(mid);
    if (nm <= delta) {
      lo = mid;
      if (delta - nm <= tol_rel * delta) break;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// ---------------------------------------------------------------------------
// entropic mirror descent over {M PSD, trace M = trace_level}, used by the
// face-optimization variant.  Objective and gradient come in as callbacks on
// the symmetric core; the quadratic model is exact for the host objective, but
// nothing here relies on that.

struct FaceOptimizeOptions {
  int max_iters = 50;
  int max_backtracks = 30;
  double rel_tol = 1e-6;
  double eta0 = 1.0;
};

struct FaceOptimizeResult {
  Matrix M;
  double value = 0.0;
  bool improved = false;
  int iters = 0;
};

template <class ValueFn, class GradFn>
FaceOptimizeResult entropic_face_minimize(ValueFn&& value, GradFn&& grad, const Matrix& M0,
                                          double trace_level, FaceOptimizeOptions opt = {}) {
  const int r = static_cast<int>(M0.rows());
  FaceOptimizeResult res;
  res.M = M0;
  res.value = value(M0);
  if (r <= 1) return res;
  const double floor_eig = 1e-18 * trace_level;

  auto mirror_step = [&](const Matrix& M, const Matrix& G, double eta) {
    SymEig em = sym_eig(M);
    Matrix logm = Matrix::Zero(r, r);
    for (int i = 0; i < r; ++i) {
      const double li = std::log(std::max(em.values[i], floor_eig));
      logm += li * (em.vectors.col(i) * em.vectors.col(i).transpose());
    }
    SymEig ea = sym_eig(logm - eta * G);
    const double shift = ea.values[r - 1];
    Matrix expm = Matrix::Zero(r, r);
    double tr = 0.0;
    for (int i = 0; i < r; ++i) {
      const double w = std::exp(ea.values[i] - shift);
      expm += w * (ea.vectors.col(i) * ea.vectors.col(i).transpose());
      tr += w;
    }
    return Matrix((trace_level / tr) * expm);
  };

  Matrix M = M0;
  double fv = res.value;
  double eta = opt.eta0;
  for (int it = 0; it < opt.max_iters; ++it) {
    res.iters = it + 1;
    Matrix G = grad(M);
    Matrix Mn;
    double fn = std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      Mn = mirror_step(M, G, eta);
      fn = value(Mn);
      if (fn <= fv) {
        ok = true;
        break;
      }
      eta *= 0.5;
    }
    if (!ok) break;
    const double drop = fv - fn;
    M = Mn;
    fv = fn;
    if (fv < res.value) {
      res.value = fv;
      res.M = M;
      res.improved = true;
    }
    if (drop <= opt.rel_tol * std::max(1.0, std::abs(fv))) break;
    eta *= 1.2;
  }
  return res;
}

}  // namespace ifw
