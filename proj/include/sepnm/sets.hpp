#pragma once

// Projectable closed convex sets, Dykstra's algorithm for intersections, and
// nonexpansive mappings assembled from projections.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sepnm/errors.hpp"
#include "sepnm/linalg.hpp"

namespace sepnm {

/// Normals shorter than this encode the whole space (or the empty set).
inline constexpr double kTinyNormal = 1e-14;

inline constexpr double kDykstraTol = 1e-10;
inline constexpr int kDykstraMaxSweeps = 10000;

class ConvexSet;

struct WholeSpace {
  Eigen::Index dim = 1;
  friend bool operator==(const WholeSpace&, const WholeSpace&) = default;
};

struct Box {
  Vector lower;
  Vector upper;
  friend bool operator==(const Box& a, const Box& b) {
    return a.lower.size() == b.lower.size() && a.lower == b.lower && a.upper == b.upper;
  }
};

struct Ball {
  Vector center;
  double radius = 0.0;
  friend bool operator==(const Ball& a, const Ball& b) {
    return a.center.size() == b.center.size() && a.center == b.center && a.radius == b.radius;
  }
};

/// {x : <normal, x> <= offset}
struct Halfspace {
  Vector normal;
  double offset = 0.0;
  bool is_whole_space() const { return normal.norm() < kTinyNormal; }
  friend bool operator==(const Halfspace& a, const Halfspace& b) {
    return a.normal.size() == b.normal.size() && a.normal == b.normal && a.offset == b.offset;
  }
};

struct Intersection {
  std::vector<ConvexSet> members;
  friend bool operator==(const Intersection& a, const Intersection& b);
};

class ConvexSet {
 public:
  using Variant = std::variant<WholeSpace, Box, Ball, Halfspace, Intersection>;

  static ConvexSet whole(Eigen::Index dim) {
    if (dim < 1) throw UsageError("WholeSpace: dim must be >= 1");
    return ConvexSet(WholeSpace{dim});
  }

  static ConvexSet box(Vector lower, Vector upper) {
    require_same_dim(lower, upper, "Box");
    if (lower.size() < 1) throw UsageError("Box: dim must be >= 1");
    if (!lower.allFinite() || !upper.allFinite()) throw UsageError("Box: non-finite bound");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (lower[i] > upper[i]) {
        throw DomainError("Box: lower > upper in component " + std::to_string(i) + " (empty box)");
      }
    }
    return ConvexSet(Box{std::move(lower), std::move(upper)});
  }

  static ConvexSet ball(Vector center, double radius) {
    if (center.size() < 1) throw UsageError("Ball: dim must be >= 1");
    if (!center.allFinite() || !std::isfinite(radius)) throw UsageError("Ball: non-finite data");
    if (radius < 0.0) throw DomainError("Ball: negative radius");
    return ConvexSet(Ball{std::move(center), radius});
  }

  static ConvexSet halfspace(Vector normal, double offset) {
    if (normal.size() < 1) throw UsageError("Halfspace: dim must be >= 1");
    if (!normal.allFinite() || !std::isfinite(offset)) throw UsageError("Halfspace: non-finite data");
    if (normal.norm() < kTinyNormal && offset < -kTinyNormal) {
      throw DomainError("Halfspace: zero normal with negative offset (empty set)");
    }
    return ConvexSet(Halfspace{std::move(normal), offset});
  }

  static ConvexSet intersection(std::vector<ConvexSet> members) {
    if (members.empty()) throw UsageError("Intersection: member list is empty");
    const auto d = members.front().dim();
    for (const auto& m : members) {
      if (m.dim() != d) throw UsageError("Intersection: members have different dimensions");
    }
    return ConvexSet(Intersection{std::move(members)});
  }

  Eigen::Index dim() const {
    return std::visit(
        [](const auto& s) -> Eigen::Index {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, WholeSpace>) return s.dim;
          else if constexpr (std::is_same_v<T, Box>) return s.lower.size();
          else if constexpr (std::is_same_v<T, Ball>) return s.center.size();
          else if constexpr (std::is_same_v<T, Halfspace>) return s.normal.size();
          else return s.members.front().dim();
        },
        data_);
  }

  bool is_bounded() const {
    if (is<Box>() || is<Ball>()) return true;
    if (const auto* in = get_if<Intersection>()) {
      return std::any_of(in->members.begin(), in->members.end(),
                         [](const ConvexSet& m) { return m.is_bounded(); });
    }
    return false;
  }

  template <class T>
  bool is() const { return std::holds_alternative<T>(data_); }
  template <class T>
  const T* get_if() const { return std::get_if<T>(&data_); }
  const Variant& variant() const { return data_; }

  friend bool operator==(const ConvexSet& a, const ConvexSet& b) { return a.data_ == b.data_; }

 private:
  explicit ConvexSet(Variant v) : data_(std::move(v)) {}
  Variant data_;
};

inline bool operator==(const Intersection& a, const Intersection& b) {
  return a.members == b.members;
}

namespace detail {

inline void check_dim(const ConvexSet& set, const Vector& x, const char* where) {
  if (x.size() != set.dim()) {
    throw UsageError(std::string(where) + ": point has dim " + std::to_string(x.size()) +
                     ", set has dim " + std::to_string(set.dim()));
  }
}

inline Vector project_box(const Box& b, const Vector& x) {
  return x.cwiseMax(b.lower).cwiseMin(b.upper);
}

inline Vector project_ball(const Ball& b, const Vector& x) {
  const Vector d = x - b.center;
  const double dn = d.norm();
  if (dn <= b.radius) return x;
  return b.center + (b.radius / dn) * d;
}

inline Vector project_halfspace(const Halfspace& h, const Vector& x) {
  if (h.is_whole_space()) return x;
  const double excess = h.normal.dot(x) - h.offset;
  if (excess <= 0.0) return x;
  return x - (excess / h.normal.squaredNorm()) * h.normal;
}

}  // namespace detail

/// How far x lies outside the set: zero inside, a distance-like quantity outside.
/// Exact Euclidean distance for Ball and Halfspace; max componentwise excess for Box.
inline double violation(const ConvexSet& set, const Vector& x) {
  detail::check_dim(set, x, "violation");
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Box>) {
          return std::max({0.0, (s.lower - x).maxCoeff(), (x - s.upper).maxCoeff()});
        } else if constexpr (std::is_same_v<T, Ball>) {
          return std::max(0.0, (x - s.center).norm() - s.radius);
        } else if constexpr (std::is_same_v<T, Halfspace>) {
          if (s.is_whole_space()) return 0.0;
          return std::max(0.0, (s.normal.dot(x) - s.offset) / s.normal.norm());
        } else {
          double worst = 0.0;
          for (const auto& m : s.members) worst = std::max(worst, violation(m, x));
          return worst;
        }
      },
      set.variant());
}

inline bool contains(const ConvexSet& set, const Vector& x, double tol = 1e-9) {
  return violation(set, x) <= tol;
}

inline Vector project_intersection(const std::vector<ConvexSet>& members, const Vector& x,
                                   double tol = kDykstraTol, int max_sweeps = kDykstraMaxSweeps);

/// Metric projection onto the set (closed form except for intersections).
inline Vector project(const ConvexSet& set, const Vector& x) {
  detail::check_dim(set, x, "project");
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) return x;
        else if constexpr (std::is_same_v<T, Box>) return detail::project_box(s, x);
        else if constexpr (std::is_same_v<T, Ball>) return detail::project_ball(s, x);
        else if constexpr (std::is_same_v<T, Halfspace>) return detail::project_halfspace(s, x);
        else return project_intersection(s.members, x);
      },
      set.variant());
}

/// Dykstra's alternating projections with persistent dual increments.
///
/// Invariant: iterate + sum(increments) == anchor. Dykstra is block coordinate
/// ascent on the dual of the projection problem, so the increments from a
/// previous call are a valid starting point for the next one; adding a member
/// starts its increment at zero. The limit is P_{cap members}(anchor)
/// regardless of the warm start.
class DykstraProjector {
 public:
  DykstraProjector() = default;
  explicit DykstraProjector(std::vector<ConvexSet> members) {
    for (auto& m : members) add_member(std::move(m));
  }

  void add_member(ConvexSet set) {
    if (!members_.empty() && set.dim() != members_.front().dim()) {
      throw UsageError("DykstraProjector: member dimension mismatch");
    }
    Slot slot;
    if (const auto* h = set.get_if<Halfspace>()) {
      slot.halfspace = true;
      slot.normal_sq = h->normal.squaredNorm();
      slot.trivial = h->is_whole_space();
    } else {
      slot.increment = Vector::Zero(set.dim());
    }
    members_.push_back(std::move(set));
    slots_.push_back(std::move(slot));
  }

  const std::vector<ConvexSet>& members() const { return members_; }
  int last_sweeps() const { return last_sweeps_; }

  double worst_violation(const Vector& x) const {
    double worst = 0.0;
    for (const auto& m : members_) worst = std::max(worst, violation(m, x));
    return worst;
  }

  /// Throws InnerFailure when max_sweeps is exhausted and some member is
  /// violated by more than 10 * tol.
  Vector project(const Vector& anchor, double tol = kDykstraTol,
                 int max_sweeps = kDykstraMaxSweeps) {
    if (members_.empty()) throw UsageError("DykstraProjector: no members");
    if (anchor.size() != members_.front().dim()) {
      throw UsageError("DykstraProjector: anchor dimension mismatch");
    }
    if (!(tol > 0.0) || max_sweeps < 1) throw UsageError("DykstraProjector: bad tolerance");

    Vector x = anchor;
    for (std::size_t i = 0; i < members_.size(); ++i) {
      const Slot& s = slots_[i];
      if (s.halfspace) {
        if (s.multiplier != 0.0) x -= s.multiplier * members_[i].get_if<Halfspace>()->normal;
      } else {
        x -= s.increment;
      }
    }

    Vector before(x.size());
    Vector shifted(x.size());
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
      before = x;
      // x can leave and come back within one sweep while the increments are
      // still moving, so both have to settle.
      double moved_sq = 0.0;
      for (std::size_t i = 0; i < members_.size(); ++i) {
        Slot& s = slots_[i];
        if (s.halfspace) {
          if (s.trivial) continue;
          const auto& h = *members_[i].get_if<Halfspace>();
          // y = x + beta*a; project y; new beta = max(0, excess)/|a|^2
          const double excess = h.normal.dot(x) + s.multiplier * s.normal_sq - h.offset;
          const double next = excess > 0.0 ? excess / s.normal_sq : 0.0;
          const double delta = s.multiplier - next;
          if (delta != 0.0) x += delta * h.normal;
          moved_sq += delta * delta * s.normal_sq;
          s.multiplier = next;
        } else {
          shifted = x + s.increment;
          x = sepnm::project(members_[i], shifted);
          moved_sq += (shifted - x - s.increment).squaredNorm();
          s.increment = shifted - x;
        }
      }
      last_sweeps_ = sweep;
      if ((x - before).norm() < tol && std::sqrt(moved_sq) < tol && worst_violation(x) <= tol) return x;
    }
    const double worst = worst_violation(x);
    if (worst > 10.0 * tol) {
      throw InnerFailure("Dykstra did not converge in " + std::to_string(max_sweeps) +
                             " sweeps; intersection may be empty (worst violation " +
                             std::to_string(worst) + ")",
                         worst);
    }
    return x;
  }

 private:
  struct Slot {
    bool halfspace = false;
    bool trivial = false;
    double normal_sq = 0.0;
    double multiplier = 0.0;  // halfspace increment = multiplier * normal
    Vector increment;
  };
  std::vector<ConvexSet> members_;
  std::vector<Slot> slots_;
  int last_sweeps_ = 0;
};

inline Vector project_intersection(const std::vector<ConvexSet>& members, const Vector& x,
                                   double tol, int max_sweeps) {
  if (members.empty()) throw UsageError("project_intersection: member list is empty");
  DykstraProjector projector(members);
  return projector.project(x, tol, max_sweeps);
}

/// The halfspace {r : ||a - r|| <= ||b - r||}, i.e. 2<b - a, r> <= ||b||^2 - ||a||^2.
/// Degenerate a == b gives the zero-normal whole-space encoding.
inline ConvexSet halfspace_dominates(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "halfspace_dominates");
  const Vector diff = b - a;
  Vector normal = 2.0 * diff;
  if (normal.norm() < kTinyNormal) return ConvexSet::halfspace(Vector::Zero(a.size()), 0.0);
  // ||b||^2 - ||a||^2 factored to avoid cancellation
  const double offset = diff.dot(b + a);
  return ConvexSet::halfspace(std::move(normal), offset);
}

// ---------------------------------------------------------------------------
// Nonexpansive mappings

class NonexpansiveMap;

struct IdentityMap {
  Eigen::Index dim = 1;
  friend bool operator==(const IdentityMap&, const IdentityMap&) = default;
};

struct ProjectionMap {
  ConvexSet set;
  friend bool operator==(const ProjectionMap&, const ProjectionMap&) = default;
};

/// (1 - theta) I + theta * base
struct AveragedMap {
  double theta = 1.0;
  std::shared_ptr<const NonexpansiveMap> base;
  friend bool operator==(const AveragedMap& a, const AveragedMap& b);
};

/// outer(inner(x))
struct CompositionMap {
  std::shared_ptr<const NonexpansiveMap> outer;
  std::shared_ptr<const NonexpansiveMap> inner;
  friend bool operator==(const CompositionMap& a, const CompositionMap& b);
};

class NonexpansiveMap {
 public:
  using Variant = std::variant<IdentityMap, ProjectionMap, AveragedMap, CompositionMap>;

  static NonexpansiveMap identity(Eigen::Index dim) {
    if (dim < 1) throw UsageError("Identity: dim must be >= 1");
    return NonexpansiveMap(IdentityMap{dim});
  }
  static NonexpansiveMap projection(ConvexSet set) {
    return NonexpansiveMap(ProjectionMap{std::move(set)});
  }
  static NonexpansiveMap averaged(double theta, NonexpansiveMap base) {
    if (!(theta > 0.0 && theta <= 1.0)) throw UsageError("Averaged: theta must lie in (0, 1]");
    return NonexpansiveMap(
        AveragedMap{theta, std::make_shared<const NonexpansiveMap>(std::move(base))});
  }
  static NonexpansiveMap composition(NonexpansiveMap outer, NonexpansiveMap inner) {
    if (outer.dim() != inner.dim()) throw UsageError("Composition: dimension mismatch");
    return NonexpansiveMap(
        CompositionMap{std::make_shared<const NonexpansiveMap>(std::move(outer)),
                       std::make_shared<const NonexpansiveMap>(std::move(inner))});
  }

  Eigen::Index dim() const {
    return std::visit(
        [](const auto& m) -> Eigen::Index {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, IdentityMap>) return m.dim;
          else if constexpr (std::is_same_v<T, ProjectionMap>) return m.set.dim();
          else if constexpr (std::is_same_v<T, AveragedMap>) return m.base->dim();
          else return m.inner->dim();
        },
        data_);
  }

  bool is_identity() const { return std::holds_alternative<IdentityMap>(data_); }
  const Variant& variant() const { return data_; }

  friend bool operator==(const NonexpansiveMap& a, const NonexpansiveMap& b) {
    return a.data_ == b.data_;
  }

 private:
  explicit NonexpansiveMap(Variant v) : data_(std::move(v)) {}
  Variant data_;
};

inline bool operator==(const AveragedMap& a, const AveragedMap& b) {
  return a.theta == b.theta && *a.base == *b.base;
}
inline bool operator==(const CompositionMap& a, const CompositionMap& b) {
  return *a.outer == *b.outer && *a.inner == *b.inner;
}

inline Vector map_apply(const NonexpansiveMap& S, const Vector& x) {
  if (x.size() != S.dim()) throw UsageError("map_apply: dimension mismatch");
  return std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityMap>) return x;
        else if constexpr (std::is_same_v<T, ProjectionMap>) return project(m.set, x);
        else if constexpr (std::is_same_v<T, AveragedMap>)
          return (1.0 - m.theta) * x + m.theta * map_apply(*m.base, x);
        else return map_apply(*m.outer, map_apply(*m.inner, x));
      },
      S.variant());
}

}  // namespace sepnm
