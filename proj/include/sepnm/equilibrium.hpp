#pragma once

// Equilibrium bifunctions, the proximal argmin sub-step, and the resolvent of
// a monotone bifunction, together with brute-force verification helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <variant>

#include "sepnm/errors.hpp"
#include "sepnm/linalg.hpp"
#include "sepnm/sampling.hpp"
#include "sepnm/sets.hpp"

namespace sepnm {

enum class Monotonicity { monotone, pseudomonotone };

inline const char* to_string(Monotonicity m) {
  return m == Monotonicity::monotone ? "monotone" : "pseudomonotone";
}

/// f(x, y) = <M x + q, y - x>
struct AffineVIForm {
  Matrix M;
  Vector q;
  double lipschitz = 0.0;  // upper bound on ||M||
  bool symmetric = false;
};

/// User-supplied f(x, y) with a selection from the subdifferential of f(x, .) at y.
struct GeneralForm {
  std::function<double(const Vector&, const Vector&)> evaluate;
  std::function<Vector(const Vector&, const Vector&)> subgradient_y;
};

class Bifunction {
 public:
  using Variant = std::variant<AffineVIForm, GeneralForm>;

  /// Lipschitz-type constants c1 = c2 = L/2 with L an upper bound on ||M||:
  /// f(x,y) + f(y,z) - f(x,z) = <F(y) - F(x), z - y> >= -L|x-y||y-z|
  ///                          >= -(L/2)(|x-y|^2 + |y-z|^2).
  static Bifunction vi_affine(Matrix M, Vector q, Monotonicity cls) {
    const double L = std::sqrt(operator_norm_sq_upper(M));
    return vi_affine(std::move(M), std::move(q), cls, 0.5 * L, 0.5 * L);
  }

  static Bifunction vi_affine(Matrix M, Vector q, Monotonicity cls, double c1, double c2) {
    if (M.rows() != M.cols() || M.rows() != q.size() || q.size() < 1) {
      throw UsageError("vi_affine: M must be square and match q");
    }
    if (!M.allFinite() || !q.allFinite()) throw UsageError("vi_affine: non-finite data");
    AffineVIForm form;
    form.lipschitz = std::sqrt(operator_norm_sq_upper(M));
    form.symmetric = (M - M.transpose()).cwiseAbs().maxCoeff() <=
                     1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff());
    form.M = std::move(M);
    form.q = std::move(q);
    const auto dim = form.q.size();
    return Bifunction(std::move(form), dim, cls, c1, c2);
  }

  static Bifunction zero(Eigen::Index dim) {
    return vi_affine(Matrix::Zero(dim, dim), Vector::Zero(dim), Monotonicity::monotone);
  }

  static Bifunction general(Eigen::Index dim, GeneralForm form, Monotonicity cls, double c1,
                            double c2) {
    if (!form.evaluate || !form.subgradient_y) {
      throw UsageError("general bifunction: evaluate and subgradient_y are required");
    }
    return Bifunction(std::move(form), dim, cls, c1, c2);
  }

  Eigen::Index dim() const { return dim_; }
  Monotonicity monotonicity() const { return class_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  const Variant& variant() const { return data_; }
  const AffineVIForm* affine() const { return std::get_if<AffineVIForm>(&data_); }

  double operator()(const Vector& x, const Vector& y) const {
    if (x.size() != dim_ || y.size() != dim_) throw UsageError("bifunction: dimension mismatch");
    if (const auto* a = affine()) return (a->M * x + a->q).dot(y - x);
    return std::get<GeneralForm>(data_).evaluate(x, y);
  }

  /// An element of the subdifferential of f(x, .) at y.
  Vector subgradient(const Vector& x, const Vector& y) const {
    if (x.size() != dim_ || y.size() != dim_) throw UsageError("bifunction: dimension mismatch");
    if (const auto* a = affine()) return a->M * x + a->q;
    return std::get<GeneralForm>(data_).subgradient_y(x, y);
  }

  /// Same data, same constants. General callables compare by identity only,
  /// so two General bifunctions are never equal.
  friend bool operator==(const Bifunction& a, const Bifunction& b) {
    const auto* fa = a.affine();
    const auto* fb = b.affine();
    if (!fa || !fb) return false;
    return a.class_ == b.class_ && a.c1_ == b.c1_ && a.c2_ == b.c2_ && fa->M == fb->M &&
           fa->q == fb->q;
  }

 private:
  Bifunction(Variant data, Eigen::Index dim, Monotonicity cls, double c1, double c2)
      : data_(std::move(data)), dim_(dim), class_(cls), c1_(c1), c2_(c2) {
    if (!(c1 > 0.0) || !(c2 > 0.0) || !std::isfinite(c1) || !std::isfinite(c2)) {
      throw UsageError("bifunction: Lipschitz-type constants must be positive and finite");
    }
  }

  Variant data_;
  Eigen::Index dim_ = 0;
  Monotonicity class_ = Monotonicity::monotone;
  double c1_ = 0.0;
  double c2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Proximal sub-step

struct ProxOptions {
  double tol = 1e-10;
  int max_inner = 100000;
  double eta0 = 1.0;
  double membership_tol = 1e-9;
};

struct ProxResult {
  Vector minimizer;
  int inner_iterations = 0;
  double inner_residual = 0.0;
};

/// argmin { lambda f(base, y) + 1/2 |y - anchor|^2 : y in C }.
///
/// The extragradient correction calls this with base != anchor. Affine
/// bifunctions have the closed form P_C(anchor - lambda F(base)); general ones
/// run projected subgradient descent with steps eta0 / (j + 1).
inline ProxResult prox_step_from(const Bifunction& f, const ConvexSet& C, const Vector& base,
                                 const Vector& anchor, double lambda,
                                 const ProxOptions& opts = {}) {
  if (!(lambda > 0.0)) throw UsageError("prox_step: lambda must be positive");
  if (base.size() != f.dim() || anchor.size() != f.dim() || C.dim() != f.dim()) {
    throw UsageError("prox_step: dimension mismatch");
  }
  if (violation(C, anchor) > opts.membership_tol) {
    throw UsageError("prox_step: anchor point is not in C");
  }

  if (const auto* a = f.affine()) {
    return {project(C, anchor - lambda * (a->M * base + a->q)), 0, 0.0};
  }

  Vector y = anchor;
  double disp = std::numeric_limits<double>::infinity();
  for (int j = 0; j < opts.max_inner; ++j) {
    const Vector g = lambda * f.subgradient(base, y) + (y - anchor);
    const double eta = opts.eta0 / static_cast<double>(j + 1);
    Vector next = project(C, y - eta * g);
    disp = (next - y).norm();
    y = std::move(next);
    if (disp < opts.tol) return {y, j + 1, disp};
  }
  throw InnerFailure("prox_step: projected subgradient did not converge", disp);
}

inline ProxResult prox_step(const Bifunction& f, const ConvexSet& C, const Vector& x,
                            double lambda, const ProxOptions& opts = {}) {
  return prox_step_from(f, C, x, x, lambda, opts);
}

// ---------------------------------------------------------------------------
// Resolvent

struct ResolventOptions {
  double tol = 1e-9;
  int max_inner = 100000;
};

struct ResolventResult {
  Vector point;
  int iterations = 0;
  double last_displacement = 0.0;
};

/// Projection-method step size for VI(Q, alpha G + (. - u)).
///
/// The shifted operator has strong monotonicity modulus 1 and Lipschitz
/// constant 1 + alpha L. For symmetric positive semidefinite M the iteration
/// matrix (1 - rho) I - rho alpha M has spectrum in [0, alpha L / (1 + alpha L)]
/// with rho = 1 / (1 + alpha L). Without symmetry only rho = 1 / (1 + alpha L)^2
/// is a guaranteed contraction.
inline double resolvent_step(const Bifunction& g, double alpha) {
  if (const auto* a = g.affine()) {
    const double s = 1.0 + alpha * a->lipschitz;
    return a->symmetric ? 1.0 / s : 1.0 / (s * s);
  }
  const double s = 1.0 + alpha * 2.0 * std::max(g.c1(), g.c2());
  return 1.0 / (s * s);
}

/// w = T_alpha^g(u): the point of Q with g(w, v) + (1/alpha)<v - w, w - u> >= 0 for all v in Q.
///
/// Fixed-point iteration w <- P_Q(w - rho (alpha G(w) + w - u)) from P_Q(u).
/// For general g, G(w) is the subgradient selection of g(w, .) at w, which is
/// heuristic: nothing guarantees convergence unless g is of affine VI form.
inline ResolventResult resolvent_detailed(const Bifunction& g, const ConvexSet& Q, double alpha,
                                          const Vector& u, const ResolventOptions& opts = {}) {
  if (!(alpha > 0.0)) throw UsageError("resolvent: alpha must be positive");
  if (u.size() != g.dim() || Q.dim() != g.dim()) throw UsageError("resolvent: dimension mismatch");

  const double rho = resolvent_step(g, alpha);
  const auto* a = g.affine();
  Vector w = project(Q, u);
  double disp = std::numeric_limits<double>::infinity();
  for (int j = 0; j < opts.max_inner; ++j) {
    const Vector G = a ? Vector(a->M * w + a->q) : g.subgradient(w, w);
    Vector next = project(Q, w - rho * (alpha * G + (w - u)));
    disp = (next - w).norm();
    w = std::move(next);
    if (disp < opts.tol) return {w, j + 1, disp};
  }
  throw InnerFailure("resolvent: fixed-point iteration did not converge", disp);
}

inline Vector resolvent(const Bifunction& g, const ConvexSet& Q, double alpha, const Vector& u,
                        double tol = 1e-9, int max_inner = 100000) {
  return resolvent_detailed(g, Q, alpha, u, {tol, max_inner}).point;
}

namespace detail {

struct GridBox {
  Vector lower;
  Vector upper;
};

inline GridBox bounding_box(const ConvexSet& Q) {
  if (const auto* b = Q.get_if<Box>()) return {b->lower, b->upper};
  if (const auto* b = Q.get_if<Ball>()) {
    const Vector r = Vector::Constant(b->center.size(), b->radius);
    return {b->center - r, b->center + r};
  }
  if (const auto* in = Q.get_if<Intersection>()) {
    for (const auto& m : in->members) {
      if (m.is_bounded()) return bounding_box(m);
    }
  }
  throw UsageError("resolvent_oracle: Q must be bounded");
}

inline Vector grid_point(const GridBox& box, const std::vector<long>& idx, long n) {
  Vector p(box.lower.size());
  for (Eigen::Index d = 0; d < p.size(); ++d) {
    const double t = static_cast<double>(idx[d]) / static_cast<double>(n - 1);
    p[d] = idx[d] == n - 1 ? box.upper[d] : box.lower[d] + t * (box.upper[d] - box.lower[d]);
  }
  return p;
}

/// Indices lo, lo + stride, ..., always ending at hi.
inline std::vector<long> strided(long lo, long hi, long stride) {
  std::vector<long> out;
  for (long i = lo; i < hi; i += stride) out.push_back(i);
  out.push_back(hi);
  return out;
}

}  // namespace detail

/// Brute-force approximation of T_alpha^g(u) on a uniform grid over Q (dim <= 2).
///
/// Returns the grid point minimizing the worst violation
/// max_v [-g(w,v) - (1/alpha)<v - w, w - u>] over a test grid of v in Q.
/// Grids with more than kOracleLevelWidth + 1 points per axis are scanned
/// coarse to fine: each level evaluates at most that many points per axis and
/// zooms into two coarse cells around the best candidate. The test grid is
/// the requested grid capped at the same width (it always contains the
/// corners of the bounding box).
inline Vector resolvent_oracle(const Bifunction& g, const ConvexSet& Q, double alpha,
                               const Vector& u, long grid_points) {
  const auto dim = Q.dim();
  if (dim > 2) throw UsageError("resolvent_oracle: dimension must be <= 2");
  if (!Q.is_bounded()) throw UsageError("resolvent_oracle: Q must be bounded");
  if (grid_points < 2) throw UsageError("resolvent_oracle: need at least 2 grid points");
  if (!(alpha > 0.0)) throw UsageError("resolvent_oracle: alpha must be positive");
  if (u.size() != dim || g.dim() != dim) throw UsageError("resolvent_oracle: dimension mismatch");

  const long width = dim == 1 ? 2048 : 64;
  const auto box = detail::bounding_box(Q);

  std::vector<Vector> tests;
  {
    const long nt = std::min(grid_points, width + 1);
    std::vector<long> idx(dim, 0);
    while (true) {
      Vector v = detail::grid_point(box, idx, nt);
      if (violation(Q, v) <= 1e-12) tests.push_back(std::move(v));
      Eigen::Index d = 0;
      while (d < dim && ++idx[d] == nt) idx[d++] = 0;
      if (d == dim) break;
    }
  }

  const auto worst = [&](const Vector& w) {
    double out = 0.0;
    for (const auto& v : tests) {
      out = std::max(out, -g(w, v) - (v - w).dot(w - u) / alpha);
    }
    return out;
  };

  std::vector<long> lo(dim, 0), hi(dim, grid_points - 1);
  Vector best_point;
  std::vector<long> best_idx(dim, 0);
  while (true) {
    std::vector<std::vector<long>> axes(dim);
    long stride = 1;
    for (Eigen::Index d = 0; d < dim; ++d) {
      stride = std::max(stride, (hi[d] - lo[d] + width - 1) / width);
    }
    for (Eigen::Index d = 0; d < dim; ++d) axes[d] = detail::strided(lo[d], hi[d], stride);

    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pos(dim, 0);
    std::vector<long> idx(dim);
    while (true) {
      for (Eigen::Index d = 0; d < dim; ++d) idx[d] = axes[d][pos[d]];
      Vector w = detail::grid_point(box, idx, grid_points);
      if (violation(Q, w) <= 1e-12) {
        const double score = worst(w);
        if (score < best) {
          best = score;
          best_idx = idx;
          best_point = std::move(w);
        }
      }
      Eigen::Index d = 0;
      while (d < dim && ++pos[d] == axes[d].size()) pos[d++] = 0;
      if (d == dim) break;
    }
    if (best_point.size() == 0) throw UsageError("resolvent_oracle: no grid point lies in Q");
    if (stride == 1) return best_point;
    for (Eigen::Index d = 0; d < dim; ++d) {
      lo[d] = std::max(0L, best_idx[d] - 2 * stride);
      hi[d] = std::min(grid_points - 1, best_idx[d] + 2 * stride);
    }
  }
}

// ---------------------------------------------------------------------------
// Sampled assumption checks

struct AssumptionReport {
  double reflexivity = 0.0;         // max |f(x, x)|
  double monotonicity = 0.0;        // max f(x,y) + f(y,x), floored at 0
  double pseudomonotonicity = 0.0;  // max f(y,x) over pairs with f(x,y) >= 0, floored at 0
  double lipschitz = 0.0;           // max f(x,z) - c1|x-y|^2 - c2|y-z|^2 - f(x,y) - f(y,z)
  int samples = 0;

  /// Checks only what the declared monotonicity class promises.
  bool clean(const Bifunction& f, double tol = 1e-8) const {
    const double order = f.monotonicity() == Monotonicity::monotone ? monotonicity
                                                                     : pseudomonotonicity;
    return reflexivity <= tol && order <= tol && lipschitz <= tol;
  }
};

inline AssumptionReport check_assumptions(const Bifunction& f, const ConvexSet& domain,
                                          int samples, std::uint64_t seed) {
  if (domain.dim() != f.dim()) throw UsageError("check_assumptions: dimension mismatch");
  Rng rng(seed);
  AssumptionReport r;
  r.samples = samples;
  for (int s = 0; s < samples; ++s) {
    const Vector x = sample_point(domain, rng);
    const Vector y = sample_point(domain, rng);
    const Vector z = sample_point(domain, rng);
    const double fxy = f(x, y);
    const double fyx = f(y, x);
    r.reflexivity = std::max(r.reflexivity, std::abs(f(x, x)));
    r.monotonicity = std::max(r.monotonicity, fxy + fyx);
    if (fxy >= 0.0) r.pseudomonotonicity = std::max(r.pseudomonotonicity, fyx);
    if (fyx >= 0.0) r.pseudomonotonicity = std::max(r.pseudomonotonicity, fxy);
    const double lip = f(x, z) - f.c1() * (x - y).squaredNorm() - f.c2() * (y - z).squaredNorm() -
                       fxy - f(y, z);
    r.lipschitz = std::max(r.lipschitz, lip);
  }
  return r;
}

}  // namespace sepnm
