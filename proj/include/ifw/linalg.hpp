#pragma once

// Factored linear algebra kernels: thin SVDs maintained under scale-plus-rank-one
// and in-face core perturbations, a sparse power method for the top singular
// triplet, and small symmetric-eigen wrappers.  Deterministic for fixed seeds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace ifw {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// sparse coordinate matrix (observation patterns, residual gradients)

struct CooMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> ii, jj;  // parallel coordinate arrays
  Vector vals;

  int nnz() const { return static_cast<int>(ii.size()); }

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(rows);
    for (int k = 0; k < nnz(); ++k) y[ii[k]] += vals[k] * x[jj[k]];
    return y;
  }

  Vector apply_t(const Vector& y) const {
    Vector x = Vector::Zero(cols);
    for (int k = 0; k < nnz(); ++k) x[jj[k]] += vals[k] * y[ii[k]];
    return x;
  }

  Matrix dense() const {
    Matrix A = Matrix::Zero(rows, cols);
    for (int k = 0; k < nnz(); ++k) A(ii[k], jj[k]) += vals[k];
    return A;
  }

  double frobenius() const { return vals.norm(); }
};

// ---------------------------------------------------------------------------
// thin SVD

struct ThinSvd {
  Matrix U;      // m x r, orthonormal columns
  Vector sigma;  // r, positive, descending
  Matrix V;      // n x r, orthonormal columns

  int rows() const { return static_cast<int>(U.rows()); }
  int cols() const { return static_cast<int>(V.rows()); }
  int rank() const { return static_cast<int>(sigma.size()); }
  double nuclear_norm() const { return sigma.size() ? sigma.sum() : 0.0; }

  Matrix dense() const {
    if (rank() == 0) return Matrix::Zero(rows(), cols());
    return U * sigma.asDiagonal() * V.transpose();
  }

  double entry(int i, int j) const {
    double s = 0.0;
    for (int t = 0; t < rank(); ++t) s += U(i, t) * sigma[t] * V(j, t);
    return s;
  }

  static ThinSvd zero(int m, int n) {
    return {Matrix::Zero(m, 0), Vector(0), Matrix::Zero(n, 0)};
  }
};

inline Vector entries_at(const ThinSvd& Z, const std::vector<int>& ii,
                         const std::vector<int>& jj) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(ii.size()));
  for (size_t k = 0; k < ii.size(); ++k) out[static_cast<Eigen::Index>(k)] = Z.entry(ii[k], jj[k]);
  return out;
}

// Deterministic sign convention: the first entry of each left vector whose
// magnitude exceeds 1e-12 is made positive; the right vector flips in tandem.
inline void canonicalize_signs(Matrix& U, Matrix& V) {
  for (int k = 0; k < U.cols(); ++k) {
    for (int i = 0; i < U.rows(); ++i) {
      if (std::abs(U(i, k)) > 1e-12) {
        if (U(i, k) < 0) {
          U.col(k) *= -1.0;
          V.col(k) *= -1.0;
        }
        break;
      }
    }
  }
}

inline void canonicalize_signs(Vector& u, Vector& v) {
  for (int i = 0; i < u.size(); ++i) {
    if (std::abs(u[i]) > 1e-12) {
      if (u[i] < 0) {
        u *= -1.0;
        v *= -1.0;
      }
      break;
    }
  }
}

inline ThinSvd rank1(double s, Vector u, Vector v) {
  if (s <= 0.0) return ThinSvd::zero(static_cast<int>(u.size()), static_cast<int>(v.size()));
  u /= u.norm();
  v /= v.norm();
  canonicalize_signs(u, v);
  ThinSvd Z;
  Z.U = u;
  Z.sigma = Vector::Constant(1, s);
  Z.V = v;
  return Z;
}

inline double ortho_drift(const Matrix& U) {
  if (U.cols() == 0) return 0.0;
  Matrix G = U.transpose() * U;
  G.diagonal().array() -= 1.0;
  return G.cwiseAbs().maxCoeff();
}

inline double ortho_drift(const ThinSvd& Z) {
  return std::max(ortho_drift(Z.U), ortho_drift(Z.V));
}

// Re-factor through QR of each basis plus an SVD of the small core.  Rank is
// preserved; only the factors are cleaned up.
inline void reorthonormalize(ThinSvd& Z) {
  const int r = Z.rank();
  if (r == 0) return;
  Eigen::HouseholderQR<Matrix> qu(Z.U);
  Eigen::HouseholderQR<Matrix> qv(Z.V);
  Matrix Qu = qu.householderQ() * Matrix::Identity(Z.rows(), r);
  Matrix Qv = qv.householderQ() * Matrix::Identity(Z.cols(), r);
  Matrix Ru = qu.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  Matrix Rv = qv.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  Matrix core = Ru * Z.sigma.asDiagonal() * Rv.transpose();
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Z.U = Qu * svd.matrixU();
  Z.V = Qv * svd.matrixV();
  Z.sigma = svd.singularValues();
  canonicalize_signs(Z.U, Z.V);
}

// ---------------------------------------------------------------------------
// top singular triplet

struct PowerOptions {
  double tol = 1e-9;      // residual tolerance relative to the eigenvalue
  int max_iters = 0;      // 0 -> 10 * max(m, n)
  int dense_cutoff = 64;  // JacobiSVD when min(m, n) <= cutoff
  unsigned seed = 9001;
};

struct SingularTriplet {
  Vector u, v;
  double sigma = 0.0;
  bool converged = false;
  int iters = 0;
};

// Power iteration on A^T A: w = A v, lambda = ||w||^2, z = A^T w, accept when
// ||z - lambda v|| <= tol * lambda.  Falls back to a dense SVD on small shapes.
// An optional start vector (e.g. the previous solution against a slowly moving
// matrix) cuts the iteration count sharply.
inline SingularTriplet top_singular_triplet(const CooMatrix& A, const PowerOptions& opt = {},
                                            const Vector* v0 = nullptr) {
  SingularTriplet out;
  const int m = A.rows, n = A.cols;
  if (A.frobenius() == 0.0) {
    out.u = Vector::Unit(m, 0);
    out.v = Vector::Unit(n, 0);
    out.converged = true;
    return out;
  }
  if (std::min(m, n) <= opt.dense_cutoff) {
    Eigen::JacobiSVD<Matrix> svd(A.dense(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.sigma = svd.singularValues()[0];
    out.u = svd.matrixU().col(0);
    out.v = svd.matrixV().col(0);
    out.converged = true;
    canonicalize_signs(out.u, out.v);
    return out;
  }
  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> gauss;
  Vector v(n);
  if (v0 && v0->size() == n && v0->norm() > 0.0) {
    v = *v0;
  } else {
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  }
  v /= v.norm();
  const int cap = opt.max_iters > 0 ? opt.max_iters : 10 * std::max(m, n);
  Vector w, z;
  double lambda = 0.0;
  for (int it = 1; it <= cap; ++it) {
    w = A.apply(v);
    lambda = w.squaredNorm();
    if (lambda == 0.0) {  // landed in the null space; restart
      for (int i = 0; i < n; ++i) v[i] = gauss(rng);
      v /= v.norm();
      continue;
    }
    z = A.apply_t(w);
    out.iters = it;
    if ((z - lambda * v).norm() <= opt.tol * lambda) {
      out.converged = true;
      break;
    }
    v = z / z.norm();
  }
  out.sigma = std::sqrt(lambda);
  if (out.sigma > 0.0) {
    out.u = w / w.norm();
    out.v = v;
  } else {
    out.u = Vector::Unit(m, 0);
    out.v = Vector::Unit(n, 0);
    out.converged = true;
  }
  canonicalize_signs(out.u, out.v);
  return out;
}

// ---------------------------------------------------------------------------
// factored updates

namespace detail {

// Two-pass Gram-Schmidt of a against the orthonormal columns of U.
// Returns the residual norm; coef/perp are outputs.
inline double split_against(const Matrix& U, const Vector& a, Vector& coef, Vector& perp) {
  if (U.cols() == 0) {
    coef = Vector(0);
    perp = a;
    return perp.norm();
  }
  coef = U.transpose() * a;
  perp = a - U * coef;
  Vector c2 = U.transpose() * perp;
  coef += c2;
  perp -= U * c2;
  return perp.norm();
}

}  // namespace detail

struct SvdUpdateResult {
  ThinSvd Z;
  double dropped = 0.0;  // spectral mass discarded by truncation / projection
};

// Thin SVD of c * Z + a b^T.  New basis directions are appended only when the
// orthogonal residual is appreciable; singular values <= trunc_tol are dropped
// and their mass reported.
inline SvdUpdateResult svd_scale_plus_rank1(const ThinSvd& Z, double c, const Vector& a,
                                            const Vector& b, double trunc_tol = 1e-6) {
  SvdUpdateResult res;
  const int r = Z.rank();
  Vector p, a_perp, q, b_perp;
  const double ra = detail::split_against(Z.U, a, p, a_perp);
  const double rb = detail::split_against(Z.V, b, q, b_perp);
  const bool aug_u = ra > 1e-12 * std::max(1.0, a.norm());
  const bool aug_v = rb > 1e-12 * std::max(1.0, b.norm());
  if (!aug_u) res.dropped += ra * b.norm();
  if (!aug_v) res.dropped += rb * a.norm();

  const int ru = r + (aug_u ? 1 : 0);
  const int rv = r + (aug_v ? 1 : 0);
  Vector ah = Vector::Zero(ru), bh = Vector::Zero(rv);
  ah.head(r) = p;
  if (aug_u) ah[r] = ra;
  bh.head(r) = q;
  if (aug_v) bh[r] = rb;

  Matrix K = Matrix::Zero(ru, rv);
  for (int t = 0; t < r; ++t) K(t, t) = c * Z.sigma[t];
  K += ah * bh.transpose();

  Eigen::JacobiSVD<Matrix> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  int keep = 0;
  while (keep < s.size() && s[keep] > trunc_tol) ++keep;
  for (int t = keep; t < s.size(); ++t) res.dropped += s[t];

  const int m = Z.rows(), n = Z.cols();
  if (keep == 0) {
    res.Z = ThinSvd::zero(m, n);
    return res;
  }
  Matrix Uext(m, ru), Vext(n, rv);
  Uext.leftCols(r) = Z.U;
  if (aug_u) Uext.col(r) = a_perp / ra;
  Vext.leftCols(r) = Z.V;
  if (aug_v) Vext.col(r) = b_perp / rb;

  res.Z.U = Uext * svd.matrixU().leftCols(keep);
  res.Z.V = Vext * svd.matrixV().leftCols(keep);
  res.Z.sigma = s.head(keep);
  canonicalize_signs(res.Z.U, res.Z.V);
  return res;
}

// Singular values only of c * Z + a b^T (sum returned).  Same construction as
// above without the basis bookkeeping; used by feasibility bisection.
inline double nuclear_norm_scale_plus_rank1(const ThinSvd& Z, double c, const Vector& a,
                                            const Vector& b) {
  const int r = Z.rank();
  Vector p, a_perp, q, b_perp;
  const double ra = detail::split_against(Z.U, a, p, a_perp);
  const double rb = detail::split_against(Z.V, b, q, b_perp);
  Vector ah(r + 1), bh(r + 1);
  ah.head(r) = p;
  ah[r] = ra;
  bh.head(r) = q;
  bh[r] = rb;
  Matrix K = Matrix::Zero(r + 1, r + 1);
  for (int t = 0; t < r; ++t) K(t, t) = c * Z.sigma[t];
  K += ah * bh.transpose();
  Eigen::JacobiSVD<Matrix> svd(K);
  return svd.singularValues().sum();
}

// Thin SVD of U (D + S) V^T for symmetric S expressed in the current factor
// coordinates.  The perturbed core must stay positive semidefinite up to
// psd_floor; eigenvalues <= trunc_tol are dropped with their mass reported.
inline SvdUpdateResult svd_inface_update(const ThinSvd& Z, const Matrix& S,
                                         double trunc_tol = 1e-6, double psd_floor = 1e-9) {
  const int r = Z.rank();
  Matrix core = S;
  for (int t = 0; t < r; ++t) core(t, t) += Z.sigma[t];
  Eigen::SelfAdjointEigenSolver<Matrix> es(core);
  if (es.info() != Eigen::Success) throw std::runtime_error("in-face eigensolve failed");
  const Vector& lam = es.eigenvalues();  // ascending
  if (lam.size() && lam[0] < -psd_floor)
    throw std::runtime_error("in-face update left the positive semidefinite cone");

  SvdUpdateResult res;
  std::vector<int> kept;
  for (int t = r - 1; t >= 0; --t) {  // descending
    if (lam[t] > trunc_tol)
      kept.push_back(t);
    else
      res.dropped += std::abs(lam[t]);
  }
  const int m = Z.rows(), n = Z.cols();
  if (kept.empty()) {
    res.Z = ThinSvd::zero(m, n);
    return res;
  }
  Matrix Q(r, static_cast<int>(kept.size()));
  Vector sig(static_cast<int>(kept.size()));
  for (size_t t = 0; t < kept.size(); ++t) {
    Q.col(static_cast<int>(t)) = es.eigenvectors().col(kept[t]);
    sig[static_cast<int>(t)] = lam[kept[t]];
  }
  res.Z.U = Z.U * Q;
  res.Z.V = Z.V * Q;
  res.Z.sigma = sig;
  canonicalize_signs(res.Z.U, res.Z.V);
  return res;
}

// ---------------------------------------------------------------------------
// symmetric eigensolver wrappers

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // columns match values
};

inline SymEig sym_eig(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolve failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

struct EigPair {
  double value = 0.0;
  Vector vector;
};

namespace detail {
inline void fix_sign(Vector& q) {
  for (int i = 0; i < q.size(); ++i) {
    if (std::abs(q[i]) > 1e-12) {
      if (q[i] < 0) q *= -1.0;
      break;
    }
  }
}
}  // namespace detail

inline EigPair eig_min_pair(const Matrix& S) {
  SymEig e = sym_eig(S);
  EigPair p{e.values[0], e.vectors.col(0)};
  detail::fix_sign(p.vector);
  return p;
}

inline EigPair eig_max_pair(const Matrix& S) {
  SymEig e = sym_eig(S);
  const int last = static_cast<int>(e.values.size()) - 1;
  EigPair p{e.values[last], e.vectors.col(last)};
  detail::fix_sign(p.vector);
  return p;
}

}  // namespace ifw
