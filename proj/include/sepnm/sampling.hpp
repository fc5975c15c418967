#pragma once

#include <random>

#include "sepnm/sets.hpp"

namespace sepnm {

using Rng = std::mt19937_64;

inline Vector gaussian_vector(Eigen::Index dim, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

inline Vector uniform_vector(Eigen::Index dim, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = uni(rng);
  return v;
}

inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uni(rng);
  return m;
}

namespace detail {

struct Spread {
  Vector center;
  Vector scale;
};

inline Spread spread_of(const ConvexSet& set) {
  const auto d = set.dim();
  if (const auto* b = set.get_if<Box>()) {
    return {0.5 * (b->lower + b->upper), (0.5 * (b->upper - b->lower)).cwiseMax(1e-3)};
  }
  if (const auto* b = set.get_if<Ball>()) {
    return {b->center, Vector::Constant(d, std::max(b->radius, 1e-3))};
  }
  if (const auto* in = set.get_if<Intersection>()) {
    for (const auto& m : in->members) {
      if (m.is_bounded()) return spread_of(m);
    }
  }
  return {Vector::Zero(d), Vector::Constant(d, 10.0)};
}

}  // namespace detail

/// Gaussian point around the set's natural center, projected onto the set.
inline Vector sample_point(const ConvexSet& set, Rng& rng) {
  const auto spread = detail::spread_of(set);
  const Vector raw = spread.center + spread.scale.cwiseProduct(gaussian_vector(set.dim(), rng));
  return project(set, raw);
}

}  // namespace sepnm
