#pragma once

// Observed-entry least squares over a low-rank completion: instance generation,
// (de)serialization, the normalized objective, and holdout-based radius selection.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <iterator>
#include <random>
#include <ranges>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifw/linalg.hpp"

namespace ifw {

struct Instance {
  int m = 0, n = 0;
  std::vector<int> ii, jj;  // observed coordinates, lexicographically sorted
  Vector x;                 // observed values
  std::uint64_t seed = 0;   // generation metadata
  int rank = 0;
  double snr = 0.0;

  int nnz() const { return static_cast<int>(ii.size()); }
  double density() const {
    return m && n ? static_cast<double>(nnz()) / (static_cast<double>(m) * n) : 0.0;
  }
};

struct GenerateOptions {
  int m = 100, n = 100;
  double density = 0.2;  // per-entry observation probability
  int rank = 5;
  double snr = 5.0;  // w1*signal + w2*noise with w1 = 1/||UV^T||_F, w2 = 1/(snr*||E||_F)
  std::uint64_t seed = 1;
};

struct GroundTruth {
  Matrix U, V;  // planted factors, X = w1 U V^T + w2 E
  double w1 = 0.0, w2 = 0.0;
  double noise_fro = 0.0;  // ||E||_F over the full matrix, so w2 snr ||E||_F = 1
};

// X = w1 U V^T + w2 E with iid standard normal U, V, E, w1 = 1/||UV^T||_F and
// w2 = 1/(snr ||E||_F), observing each entry independently with probability
// `density`.  The full noise matrix is streamed row by row: its Frobenius norm
// is needed for w2 but only observed entries are kept.
inline Instance generate_instance(const GenerateOptions& g, GroundTruth* truth = nullptr) {
  if (g.m <= 0 || g.n <= 0 || g.rank <= 0 || g.rank > std::min(g.m, g.n))
    throw std::invalid_argument("bad instance shape");
  if (!(g.density > 0.0) || g.density > 1.0) throw std::invalid_argument("bad density");
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix U(g.m, g.rank), V(g.n, g.rank);
  for (int i = 0; i < g.m; ++i)
    for (int t = 0; t < g.rank; ++t) U(i, t) = gauss(rng);
  for (int j = 0; j < g.n; ++j)
    for (int t = 0; t < g.rank; ++t) V(j, t) = gauss(rng);
  // ||UV^T||_F^2 = tr((U^T U)(V^T V)) without forming the product
  const double sig_norm = std::sqrt(((U.transpose() * U) * (V.transpose() * V)).trace());
  const double w1 = sig_norm > 0.0 ? 1.0 / sig_norm : 0.0;

  Instance inst;
  inst.m = g.m;
  inst.n = g.n;
  inst.seed = g.seed;
  inst.rank = g.rank;
  inst.snr = g.snr;
  std::vector<double> noise;
  double e2 = 0.0;
  for (int i = 0; i < g.m; ++i) {
    for (int j = 0; j < g.n; ++j) {
      const double e = gauss(rng);
      e2 += e * e;
      if (unif(rng) < g.density) {
        inst.ii.push_back(i);
        inst.jj.push_back(j);
        noise.push_back(e);
      }
    }
  }
  if (inst.ii.empty()) throw std::runtime_error("no entries observed; raise density");
  const double w2 = g.snr > 0.0 && e2 > 0.0 ? 1.0 / (g.snr * std::sqrt(e2)) : 0.0;

  inst.x.resize(static_cast<Eigen::Index>(inst.ii.size()));
  for (size_t k = 0; k < inst.ii.size(); ++k)
    inst.x[static_cast<Eigen::Index>(k)] =
        w1 * U.row(inst.ii[k]).dot(V.row(inst.jj[k])) + w2 * noise[k];
  if (truth) {
    truth->U = std::move(U);
    truth->V = std::move(V);
    truth->w1 = w1;
    truth->w2 = w2;
    truth->noise_fro = std::sqrt(e2);
  }
  return inst;
}

inline void save_truth(const GroundTruth& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  auto g17 = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "ifw-truth v1\n";
  out << "m " << t.U.rows() << "\nn " << t.V.rows() << "\nrank " << t.U.cols() << "\n";
  out << "w1 " << g17(t.w1) << "\nw2 " << g17(t.w2) << "\n";
  out << "noise_fro " << g17(t.noise_fro) << "\n";
  out << "U\n";
  for (Eigen::Index i = 0; i < t.U.rows(); ++i) {
    for (Eigen::Index c = 0; c < t.U.cols(); ++c) out << (c ? " " : "") << g17(t.U(i, c));
    out << "\n";
  }
  out << "V\n";
  for (Eigen::Index j = 0; j < t.V.rows(); ++j) {
    for (Eigen::Index c = 0; c < t.V.cols(); ++c) out << (c ? " " : "") << g17(t.V(j, c));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

// FNV-1a over shape, coordinates, and value bits; used to pair runs across
// processes and to verify file round-trips.
inline std::uint64_t instance_hash(const Instance& inst) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t w, int bytes) {
    for (int b = 0; b < bytes; ++b) {
      h ^= (w >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(inst.m), 4);
  mix(static_cast<std::uint64_t>(inst.n), 4);
  for (int k = 0; k < inst.nnz(); ++k) {
    mix(static_cast<std::uint64_t>(inst.ii[k]), 4);
    mix(static_cast<std::uint64_t>(inst.jj[k]), 4);
    mix(std::bit_cast<std::uint64_t>(inst.x[k]), 8);
  }
  return h;
}

// Observed entries as whitespace-separated `i j value` lines with 1-based
// indices and `#` comments; shape and provenance go to a key-value sidecar at
// <path>.meta so plain triplet dumps from other tools stay loadable.
inline void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  auto g17 = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "# row col value (1-based)\n";
  for (int k = 0; k < inst.nnz(); ++k)
    out << inst.ii[k] + 1 << ' ' << inst.jj[k] + 1 << ' ' << g17(inst.x[k]) << "\n";
  if (!out) throw std::runtime_error("write to " + path + " failed");

  std::ofstream meta(path + ".meta");
  if (!meta) throw std::runtime_error("cannot open " + path + ".meta for writing");
  const double sq = inst.x.squaredNorm();
  meta << "m " << inst.m << "\n";
  meta << "n " << inst.n << "\n";
  meta << "nnz " << inst.nnz() << "\n";
  meta << "delta 0\n";  // radius is a solve parameter; 0 marks it unset
  meta << "scale " << g17(sq > 0.0 ? 1.0 / sq : 0.0) << "\n";
  meta << "seed " << inst.seed << "\n";
  meta << "rank " << inst.rank << "\n";
  meta << "snr " << g17(inst.snr) << "\n";
  if (!meta) throw std::runtime_error("write to " + path + ".meta failed");
}

// Reads 1-based `i j value` triplets, skipping blank lines and `#` comments.
// Dims come from the sidecar when present and from the largest index seen
// otherwise.  Entries are sorted lexicographically; duplicates are rejected
// with the offending coordinate named, malformed lines with their number.
inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  Instance inst;
  int meta_m = 0, meta_n = 0;
  if (std::ifstream meta(path + ".meta"); meta) {
    std::string key;
    while (meta >> key) {
      if (key == "m")
        meta >> meta_m;
      else if (key == "n")
        meta >> meta_n;
      else if (key == "seed")
        meta >> inst.seed;
      else if (key == "rank")
        meta >> inst.rank;
      else if (key == "snr")
        meta >> inst.snr;
      else {
        std::string rest;
        std::getline(meta, rest);  // delta/scale/unknown: informational only
      }
    }
  }

  struct Entry {
    int i, j;
    double v;
  };
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  long max_i = 0, max_j = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long i = 0, j = 0;
    double v = 0.0;
    std::string extra;
    if (!(ls >> i >> j >> v) || static_cast<bool>(ls >> extra))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'row col value', got '" + line + "'");
    if (i < 1 || j < 1)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": indices are 1-based and positive");
    max_i = std::max(max_i, i);
    max_j = std::max(max_j, j);
    entries.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1), v});
  }
  if (entries.empty()) throw std::runtime_error(path + ": no observed entries");

  inst.m = meta_m > 0 ? meta_m : static_cast<int>(max_i);
  inst.n = meta_n > 0 ? meta_n : static_cast<int>(max_j);
  if (max_i > inst.m || max_j > inst.n)
    throw std::runtime_error(path + ": entry (" + std::to_string(max_i) + ", " +
                             std::to_string(max_j) + ") outside the declared " +
                             std::to_string(inst.m) + "x" + std::to_string(inst.n) + " shape");

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (size_t k = 1; k < entries.size(); ++k)
    if (entries[k].i == entries[k - 1].i && entries[k].j == entries[k - 1].j)
      throw std::runtime_error(path + ": duplicate entry at (" + std::to_string(entries[k].i + 1) +
                               ", " + std::to_string(entries[k].j + 1) + ")");

  inst.ii.reserve(entries.size());
  inst.jj.reserve(entries.size());
  inst.x.resize(static_cast<Eigen::Index>(entries.size()));
  for (size_t k = 0; k < entries.size(); ++k) {
    inst.ii.push_back(entries[k].i);
    inst.jj.push_back(entries[k].j);
    inst.x[static_cast<Eigen::Index>(k)] = entries[k].v;
  }
  return inst;
}

// ---------------------------------------------------------------------------
// objective: f(Z) = ||Z_Omega - x||^2 / (2 ||x||^2), so f(0) = 1/2 exactly and
// the curvature scale is 1/||x||^2.

class Objective {
 public:
  // normalizer 0 picks the default ||x||^2; anything positive overrides it
  // (unit normalizer gives the plain half squared error).
  explicit Objective(const Instance& inst, double normalizer = 0.0) : inst_(&inst) {
    normalizer_ = normalizer > 0.0 ? normalizer : inst.x.squaredNorm();
    if (!(normalizer_ > 0.0)) throw std::invalid_argument("instance has no observed energy");
  }

  const Instance& instance() const { return *inst_; }
  int m() const { return inst_->m; }
  int n() const { return inst_->n; }
  int nnz() const { return inst_->nnz(); }
  double normalizer() const { return normalizer_; }
  double scale() const { return 1.0 / normalizer_; }

  Vector values(const ThinSvd& Z) const { return entries_at(Z, inst_->ii, inst_->jj); }

  double f_of(const Vector& z) const { return (z - inst_->x).squaredNorm() / (2.0 * normalizer_); }
  double f(const ThinSvd& Z) const { return f_of(values(Z)); }

  Vector grad_of(const Vector& z) const { return (z - inst_->x) / normalizer_; }

  CooMatrix pattern_matrix(Vector vals) const {
    return CooMatrix{inst_->m, inst_->n, inst_->ii, inst_->jj, std::move(vals)};
  }

 private:
  const Instance* inst_;
  double normalizer_ = 0.0;
};

// ---------------------------------------------------------------------------
// holdout split + radius selection

struct HoldoutSplit {
  Instance train, holdout;
};

inline HoldoutSplit split_holdout(const Instance& inst, double fraction, std::uint64_t seed) {
  const int nnz = inst.nnz();
  int h = static_cast<int>(std::llround(fraction * nnz));
  h = std::clamp(h, 1, nnz - 1);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> pick(static_cast<size_t>(h));
  auto all = std::views::iota(0, nnz);
  std::ranges::sample(all, pick.begin(), h, rng);
  std::vector<char> held(static_cast<size_t>(nnz), 0);
  for (int k : pick) held[static_cast<size_t>(k)] = 1;

  HoldoutSplit out;
  out.train.m = out.holdout.m = inst.m;
  out.train.n = out.holdout.n = inst.n;
  out.train.seed = out.holdout.seed = inst.seed;
  out.train.rank = out.holdout.rank = inst.rank;
  out.train.snr = out.holdout.snr = inst.snr;
  std::vector<double> xt, xh;
  for (int k = 0; k < nnz; ++k) {
    Instance& dst = held[static_cast<size_t>(k)] ? out.holdout : out.train;
    std::vector<double>& xv = held[static_cast<size_t>(k)] ? xh : xt;
    dst.ii.push_back(inst.ii[k]);
    dst.jj.push_back(inst.jj[k]);
    xv.push_back(inst.x[k]);
  }
  out.train.x = Eigen::Map<const Vector>(xt.data(), static_cast<Eigen::Index>(xt.size()));
  out.holdout.x = Eigen::Map<const Vector>(xh.data(), static_cast<Eigen::Index>(xh.size()));
  return out;
}

struct DeltaSelectOptions {
  int grid_points = 10;
  double lo_factor = 0.25;
  double hi_factor = 2.0;
  double base = 0.0;  // 0 -> nuclear norm of the zero-filled observed matrix
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct DeltaSelection {
  double delta = 0.0;
  std::vector<double> grid;
  std::vector<double> holdout_sse;
};

// Sweeps an increasing radius grid, warm-starting each solve from the previous
// solution (feasible because the ball only grows), and keeps the radius with
// the smallest holdout squared error; ties go to the smaller radius.
// SolveFn: ThinSvd(const Instance& train, double delta, const ThinSvd& warm).
template <class SolveFn>
DeltaSelection select_delta(const Instance& inst, SolveFn&& solve, DeltaSelectOptions opt = {}) {
  HoldoutSplit split = split_holdout(inst, opt.holdout_fraction, opt.seed);
  // the holdout-error curve bottoms out well below the zero-filled nuclear
  // norm, so that norm itself brackets the useful radius range from above
  double base = opt.base;
  if (base <= 0.0) {
    Objective obj(split.train);
    Eigen::BDCSVD<Matrix> svd(obj.pattern_matrix(split.train.x).dense());
    base = svd.singularValues().sum();
  }
  DeltaSelection sel;
  const int P = std::max(opt.grid_points, 1);
  for (int t = 0; t < P; ++t) {
    const double frac = P == 1 ? 0.0 : static_cast<double>(t) / (P - 1);
    sel.grid.push_back(base * opt.lo_factor *
                       std::pow(opt.hi_factor / opt.lo_factor, frac));
  }
  ThinSvd warm = ThinSvd::zero(inst.m, inst.n);
  int best = -1;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int t = 0; t < P; ++t) {
    ThinSvd Z = solve(split.train, sel.grid[static_cast<size_t>(t)], warm);
    warm = Z;
    Vector zh = entries_at(Z, split.holdout.ii, split.holdout.jj);
    const double sse = (zh - split.holdout.x).squaredNorm();
    sel.holdout_sse.push_back(sse);
    if (sse < best_sse) {
      best_sse = sse;
      best = t;
    }
  }
  sel.delta = sel.grid[static_cast<size_t>(best)];
  return sel;
}

}  // namespace ifw
