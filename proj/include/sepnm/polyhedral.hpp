#pragma once

// Exact Euclidean projection onto a polyhedron {r : a_i^T r >= b_i} by the
// Goldfarb-Idnani dual active-set method specialized to the identity Hessian.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sepnm/errors.hpp"
#include "sepnm/linalg.hpp"
#include "sepnm/sets.hpp"

namespace sepnm {

class PolyhedralProjector {
 public:
  static constexpr double kDefaultFeasTol = 1e-12;

  explicit PolyhedralProjector(Eigen::Index dim) : dim_(dim), normals_(dim, 0), offsets_(0) {}

  /// Nullopt when some member is not a box, halfspace, whole space or an
  /// intersection of those.
  static std::optional<PolyhedralProjector> from_sets(const std::vector<ConvexSet>& members) {
    if (members.empty()) return std::nullopt;
    PolyhedralProjector out(members.front().dim());
    for (const auto& m : members) {
      if (!out.add(m)) return std::nullopt;
    }
    return out;
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t constraint_count() const { return count_; }

  /// Adds the set's constraints; false when the set is not polyhedral.
  bool add(const ConvexSet& set) {
    if (set.dim() != dim_) throw UsageError("PolyhedralProjector: dimension mismatch");
    if (set.is<WholeSpace>()) return true;
    if (const auto* h = set.get_if<Halfspace>()) {
      add_halfspace(h->normal, h->offset);
      return true;
    }
    if (const auto* b = set.get_if<Box>()) {
      for (Eigen::Index i = 0; i < dim_; ++i) {
        push(Vector::Unit(dim_, i), b->lower[i]);
        push(-Vector::Unit(dim_, i), -b->upper[i]);
      }
      return true;
    }
    if (const auto* in = set.get_if<Intersection>()) {
      for (const auto& m : in->members) {
        if (!add(m)) return false;
      }
      return true;
    }
    return false;
  }

  /// {r : <normal, r> <= offset}, stored with a unit normal.
  void add_halfspace(const Vector& normal, double offset) {
    const double len = normal.norm();
    if (len < kTinyNormal) {
      if (offset < -kTinyNormal) throw DomainError("PolyhedralProjector: empty halfspace");
      return;
    }
    push(-normal / len, -offset / len);
  }

  int last_iterations() const { return last_iterations_; }

  /// argmin |r - anchor| over the polyhedron, where a constraint counts as
  /// met when its slack is >= -feas_tol. Throws InnerFailure when the
  /// constraints are inconsistent at that tolerance or the iteration cap is
  /// reached.
  ///
  /// Constraint generation: the dual active-set method runs on a small
  /// working set (the previous active set plus constraints added since), then
  /// one dense pass over all constraints adds whatever that solution violates.
  /// Repeated calls with the same anchor and a growing constraint list, as in
  /// the hybrid scheme, usually settle in a single round.
  Vector project(const Vector& anchor, double feas_tol = kDefaultFeasTol) {
    if (anchor.size() != dim_) throw UsageError("PolyhedralProjector: anchor dimension mismatch");
    if (anchor_.size() != anchor.size() || anchor_ != anchor) {
      anchor_ = anchor;
      working_.clear();
      previous_active_.clear();
      seen_ = 0;
    }
    for (std::size_t i = seen_; i < count_; ++i) working_.push_back(i);
    seen_ = count_;

    last_iterations_ = 0;
    const std::size_t max_rounds = count_ + 10;
    for (std::size_t round = 0; round < max_rounds; ++round) {
      std::vector<std::size_t> active = previous_active_;
      Vector x;
      try {
        x = solve_subset(anchor, working_, active, feas_tol);
      } catch (const InnerFailure&) {
        // An ill-conditioned warm active set can make the dual method stall or
        // misjudge consistency. Redo the solve cold, over every constraint.
        active.clear();
        working_.resize(count_);
        for (std::size_t i = 0; i < count_; ++i) working_[i] = i;
        x = solve_subset(anchor, working_, active, feas_tol);
      }

      const std::vector<std::size_t> violated = scan(x, feas_tol, active);
      previous_active_ = active;
      working_ = std::move(active);
      if (violated.empty()) return x;
      working_.insert(working_.end(), violated.begin(), violated.end());
    }
    throw InnerFailure("active-set projection: constraint generation did not settle", 0.0);
  }

 private:
  std::vector<std::size_t> scan(const Vector& x, double feas_tol, const std::vector<std::size_t>& active) const {
    const auto n = static_cast<Eigen::Index>(count_);
    const Vector slack = normals_.leftCols(n).transpose() * x - offsets_.head(n);
    std::vector<std::size_t> violated;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (slack[i] < -feas_tol && std::find(active.begin(), active.end(), idx) == active.end()) {
        violated.push_back(idx);
      }
    }
    return violated;
  }

  // N = Q R for the active normals, grown by Gram-Schmidt with one
  // reorthogonalization pass. Removing a column refactors from scratch; that
  // is rare next to additions.
  class ActiveBasis {
   public:
    explicit ActiveBasis(Eigen::Index dim) : q_(dim, dim), r_(dim, dim) {}

    Eigen::Index size() const { return k_; }
    void clear() { k_ = 0; }

    /// z = a minus its projection onto span(N), h = Q^T a. Returns |z|^2.
    double split(const Vector& a, Vector& h, Vector& z) const {
      const auto Q = q_.leftCols(k_);
      h = Q.transpose() * a;
      z = a - Q * h;
      const Vector again = Q.transpose() * z;
      z -= Q * again;
      h += again;
      return z.squaredNorm();
    }

    /// False (and no change) when a is numerically in span(N).
    bool push(const Vector& a, double min_sq) {
      if (k_ == q_.cols()) return false;
      Vector h, z;
      const double zz = split(a, h, z);
      if (zz <= min_sq) return false;
      const double rho = std::sqrt(zz);
      q_.col(k_) = z / rho;
      r_.col(k_).head(k_) = h;
      r_(k_, k_) = rho;
      ++k_;
      return true;
    }

    /// Coefficients r with N r = Q h.
    Vector coefficients(const Vector& h) const {
      return r_.topLeftCorner(k_, k_).triangularView<Eigen::Upper>().solve(h);
    }

    /// Solves N^T N m = rhs.
    Vector normal_solve(const Vector& rhs) const {
      const auto R = r_.topLeftCorner(k_, k_);
      const Vector y = R.transpose().triangularView<Eigen::Lower>().solve(rhs);
      return R.triangularView<Eigen::Upper>().solve(y);
    }

   private:
    Matrix q_;
    Matrix r_;
    Eigen::Index k_ = 0;
  };

  Vector column(std::size_t i) const { return normals_.col(static_cast<Eigen::Index>(i)); }
  double offset(std::size_t i) const { return offsets_[static_cast<Eigen::Index>(i)]; }

  void refactor(ActiveBasis& basis, const std::vector<std::size_t>& active) const {
    basis.clear();
    for (std::size_t i : active) {
      if (!basis.push(column(i), kDegenerate)) {
        throw InnerFailure("active-set projection: active normals became dependent", 0.0);
      }
    }
  }

  /// A dual-feasible start for the active-set method: among the constraints
  /// passed in `active`, keep a linearly independent subset, project the anchor
  /// onto their intersection as equalities, and drop the most negative
  /// multiplier until all are nonnegative. An empty set gives the anchor.
  Vector warm_start(const Vector& anchor, ActiveBasis& basis, std::vector<std::size_t>& active,
                    std::vector<double>& lambda) const {
    std::vector<std::size_t> kept;
    basis.clear();
    for (std::size_t i : active) {
      if (basis.push(column(i), kWarmIndependence)) kept.push_back(i);
    }
    while (!kept.empty()) {
      const auto k = static_cast<Eigen::Index>(kept.size());
      Vector rhs(k);
      Matrix N(dim_, k);
      for (Eigen::Index j = 0; j < k; ++j) {
        N.col(j) = column(kept[static_cast<std::size_t>(j)]);
        rhs[j] = offset(kept[static_cast<std::size_t>(j)]) - N.col(j).dot(anchor);
      }
      const Vector mult = basis.normal_solve(rhs);
      Eigen::Index worst = 0;
      if (mult.allFinite() && mult.minCoeff(&worst) >= 0.0) {
        active = kept;
        lambda.assign(mult.data(), mult.data() + mult.size());
        return anchor + N * mult;
      }
      if (!mult.allFinite()) worst = k - 1;
      kept.erase(kept.begin() + worst);
      refactor(basis, kept);
    }
    active.clear();
    lambda.clear();
    return anchor;
  }

  /// Goldfarb-Idnani on the listed constraints only. `active` carries a
  /// suggested starting active set in and the final one out.
  Vector solve_subset(const Vector& anchor, const std::vector<std::size_t>& subset,
                      std::vector<std::size_t>& active, double feas_tol) {
    ActiveBasis basis(dim_);
    std::vector<double> lambda;
    Vector x = warm_start(anchor, basis, active, lambda);
    const long cap = 20 * static_cast<long>(subset.size() + static_cast<std::size_t>(dim_)) + 100;

    long iter = 0;
    Vector h, z, r;
    while (true) {
      // most violated constraint of the subset
      std::size_t p = count_;
      double worst = -feas_tol;
      for (std::size_t i : subset) {
        // roundoff can leave an active constraint a hair short; it is met
        if (std::find(active.begin(), active.end(), i) != active.end()) continue;
        const double c = column(i).dot(x) - offset(i);
        if (c < worst) {
          worst = c;
          p = i;
        }
      }
      if (p == count_) {
        last_iterations_ += static_cast<int>(iter);
        return x;
      }

      const Vector ap = column(p);
      double lambda_p = 0.0;
      while (true) {
        if (++iter > cap) {
          throw InnerFailure("active-set projection exceeded its iteration cap", -worst);
        }
        const double zz = basis.split(ap, h, z);
        r = basis.coefficients(h);

        double t1 = std::numeric_limits<double>::infinity();
        std::size_t drop = active.size();
        for (std::size_t j = 0; j < active.size(); ++j) {
          const double rj = r[static_cast<Eigen::Index>(j)];
          if (rj > 0.0 && lambda[j] / rj < t1) {
            t1 = lambda[j] / rj;
            drop = j;
          }
        }
        const double cp = ap.dot(x) - offset(p);
        const double t2 = zz > kDegenerate ? -cp / zz : std::numeric_limits<double>::infinity();
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) {
          throw InnerFailure("active-set projection: constraints are inconsistent (empty set)", -cp);
        }

        for (std::size_t j = 0; j < active.size(); ++j) lambda[j] -= t * r[static_cast<Eigen::Index>(j)];
        lambda_p += t;
        if (std::isfinite(t2)) x += t * z;

        if (t == t2) {
          if (!basis.push(ap, kDegenerate)) {
            refactor(basis, active);
            if (!basis.push(ap, 0.0)) {
              throw InnerFailure("active-set projection: active normals became dependent", 0.0);
            }
          }
          active.push_back(p);
          lambda.push_back(lambda_p);
          break;
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
        lambda.erase(lambda.begin() + static_cast<std::ptrdiff_t>(drop));
        refactor(basis, active);
      }
    }
  }

  static constexpr double kDegenerate = 1e-24;
  static constexpr double kWarmIndependence = 1e-12;

  // a^T r >= b with |a| = 1
  void push(const Vector& a, double b) {
    if (static_cast<Eigen::Index>(count_) == normals_.cols()) {
      const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * normals_.cols());
      normals_.conservativeResize(dim_, cap);
      offsets_.conservativeResize(cap);
    }
    normals_.col(static_cast<Eigen::Index>(count_)) = a;
    offsets_[static_cast<Eigen::Index>(count_)] = b;
    ++count_;
  }

  Eigen::Index dim_;
  Matrix normals_;  // column i is a_i; columns past count_ are spare capacity
  Vector offsets_;
  std::size_t count_ = 0;
  int last_iterations_ = 0;

  Vector anchor_;
  std::vector<std::size_t> working_;
  std::vector<std::size_t> previous_active_;
  std::size_t seen_ = 0;
};

}  // namespace sepnm
