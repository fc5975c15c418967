#pragma once

// Split equilibrium problem instances: data model, planted-solution
// generator, numerical verification, and the JSON file format.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sepnm/equilibrium.hpp"
#include "sepnm/linalg.hpp"
#include "sepnm/sampling.hpp"
#include "sepnm/sets.hpp"

namespace sepnm {

/// Find x* in Sol(C, f) cap Fix(S) with A x* in Sol(Q, g) cap Fix(T).
struct ProblemSpec {
  ConvexSet C = ConvexSet::whole(1);
  ConvexSet Q = ConvexSet::whole(1);
  DenseOperator A = DenseOperator::identity(1);
  Bifunction f = Bifunction::zero(1);
  Bifunction g = Bifunction::zero(1);
  NonexpansiveMap S = NonexpansiveMap::identity(1);
  NonexpansiveMap T = NonexpansiveMap::identity(1);
  Vector x1 = Vector::Zero(1);
  std::optional<Vector> planted_solution;

  Eigen::Index n() const { return C.dim(); }
  Eigen::Index m() const { return Q.dim(); }

  /// Throws UsageError when the pieces do not fit together.
  void check_shapes() const {
    const auto nn = C.dim();
    const auto mm = Q.dim();
    if (A.cols() != nn || A.rows() != mm) throw UsageError("problem: A must be m x n");
    if (f.dim() != nn || S.dim() != nn || x1.size() != nn) {
      throw UsageError("problem: f, S and x1 must live in dimension n");
    }
    if (g.dim() != mm || T.dim() != mm) throw UsageError("problem: g and T must live in dimension m");
    if (planted_solution && planted_solution->size() != nn) {
      throw UsageError("problem: planted solution must have dimension n");
    }
    if (g.monotonicity() != Monotonicity::monotone) {
      throw UsageError("problem: g must be declared monotone");
    }
  }

  friend bool operator==(const ProblemSpec& a, const ProblemSpec& b) {
    const bool planted_eq =
        a.planted_solution.has_value() == b.planted_solution.has_value() &&
        (!a.planted_solution || (a.planted_solution->size() == b.planted_solution->size() &&
                                 *a.planted_solution == *b.planted_solution));
    return a.C == b.C && a.Q == b.Q && a.A == b.A && a.f == b.f && a.g == b.g && a.S == b.S &&
           a.T == b.T && a.x1.size() == b.x1.size() && a.x1 == b.x1 && planted_eq;
  }
};

/// Generator constants.
struct PlantedDefaults {
  static constexpr double kBoxHalfWidth = 5.0;
  static constexpr double kSolutionRange = 3.0;  // x* drawn in [-3, 3]^n, inside C
  static constexpr double kStrongMonotonicity = 0.1;
  static constexpr double kFixedBallRadius = 1.0;
  static constexpr double kStartOffset = 2.0;
};

/// Seeded instance with a known solution x*.
///
/// C = [-5, 5]^n, Q = A x* + [-5, 5]^m, F(x) = M (x - x*) with
/// M = R^T R + 0.1 I, G(u) = N (u - A x*) with N = P^T P of rank about m/2,
/// S and T half-averaged projections onto unit balls centered at x* and A x*.
/// R and P carry entries in [-1, 1] scaled by 1/sqrt(dim) so ||M|| and ||N||
/// stay O(1) as the dimension grows.
inline ProblemSpec generate_planted(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw UsageError("generate_planted: n and m must be >= 1");
  using D = PlantedDefaults;
  Rng rng(seed);

  const Vector x_star = uniform_vector(n, rng, -D::kSolutionRange, D::kSolutionRange);
  const Matrix A = uniform_matrix(m, n, rng, -1.0, 1.0);
  const Vector Ax = A * x_star;

  const Matrix R = uniform_matrix(n, n, rng, -1.0, 1.0) / std::sqrt(static_cast<double>(n));
  const Matrix M = R.transpose() * R + D::kStrongMonotonicity * Matrix::Identity(n, n);
  const Eigen::Index rank = std::max<Eigen::Index>(1, m / 2);
  const Matrix P = uniform_matrix(rank, m, rng, -1.0, 1.0) / std::sqrt(static_cast<double>(m));
  const Matrix N = P.transpose() * P;

  ProblemSpec p;
  p.C = ConvexSet::box(Vector::Constant(n, -D::kBoxHalfWidth), Vector::Constant(n, D::kBoxHalfWidth));
  p.Q = ConvexSet::box(Ax - Vector::Constant(m, D::kBoxHalfWidth),
                       Ax + Vector::Constant(m, D::kBoxHalfWidth));
  p.A = DenseOperator(A);
  p.f = Bifunction::vi_affine(M, -(M * x_star), Monotonicity::pseudomonotone);
  p.g = Bifunction::vi_affine(N, -(N * Ax), Monotonicity::monotone);
  p.S = NonexpansiveMap::averaged(
      0.5, NonexpansiveMap::projection(ConvexSet::ball(x_star, D::kFixedBallRadius)));
  p.T = NonexpansiveMap::averaged(
      0.5, NonexpansiveMap::projection(ConvexSet::ball(Ax, D::kFixedBallRadius)));

  Vector offset = gaussian_vector(n, rng);
  offset *= D::kStartOffset / offset.norm();
  p.x1 = project(p.C, x_star + offset);
  p.planted_solution = x_star;
  return p;
}

struct PlantedReport {
  double x1_in_C = 0.0;
  double solution_in_C = 0.0;
  double image_in_Q = 0.0;
  double fixed_by_S = 0.0;
  double fixed_by_T = 0.0;
  double equilibrium_f = 0.0;  // max(0, -min_v f(x*, v))
  double equilibrium_g = 0.0;  // max(0, -min_v g(A x*, v))

  double worst() const {
    return std::max({x1_in_C, solution_in_C, image_in_Q, fixed_by_S, fixed_by_T, equilibrium_f,
                     equilibrium_g});
  }
};

/// Numerical check that the planted point solves the instance.
inline PlantedReport verify_planted(const ProblemSpec& p, int samples, std::uint64_t seed = 0) {
  if (!p.planted_solution) throw UsageError("verify_planted: problem has no planted solution");
  p.check_shapes();
  const Vector& xs = *p.planted_solution;
  const Vector Ax = apply(p.A, xs);

  PlantedReport r;
  r.x1_in_C = violation(p.C, p.x1);
  r.solution_in_C = violation(p.C, xs);
  r.image_in_Q = violation(p.Q, Ax);
  r.fixed_by_S = (map_apply(p.S, xs) - xs).norm();
  r.fixed_by_T = (map_apply(p.T, Ax) - Ax).norm();

  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    r.equilibrium_f = std::max(r.equilibrium_f, -p.f(xs, sample_point(p.C, rng)));
    r.equilibrium_g = std::max(r.equilibrium_g, -p.g(Ax, sample_point(p.Q, rng)));
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON file format

namespace io {

using json = nlohmann::json;

class Reader {
 public:
  explicit Reader(std::string path) : path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("at " + (path_.empty() ? std::string("/") : path_) + ": " + msg);
  }

  Reader at(const std::string& key) const { return Reader(path_ + "/" + key); }
  Reader at(std::size_t i) const { return Reader(path_ + "/" + std::to_string(i)); }

  const json& field(const json& obj, const std::string& key) const {
    if (!obj.is_object()) fail("expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail("missing key \"" + key + "\"");
    return *it;
  }

  double number(const json& j) const {
    if (!j.is_number()) fail("expected a number");
    return j.get<double>();
  }

  long integer(const json& j) const {
    if (!j.is_number_integer()) fail("expected an integer");
    return j.get<long>();
  }

  std::string string(const json& j) const {
    if (!j.is_string()) fail("expected a string");
    return j.get<std::string>();
  }

  Vector vector(const json& j) const {
    if (!j.is_array() || j.empty()) fail("expected a nonempty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = at(i).number(j[i]);
    return v;
  }

  Matrix matrix(const json& j) const {
    if (!j.is_array() || j.empty()) fail("expected a nonempty array of rows");
    const Vector first = at(std::size_t{0}).vector(j[0]);
    Matrix out(static_cast<Eigen::Index>(j.size()), first.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
      const Vector row = at(i).vector(j[i]);
      if (row.size() != first.size()) at(i).fail("ragged matrix row");
      out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
  }

  template <class Fn>
  auto guard(Fn&& fn) const -> decltype(fn()) {
    try {
      return fn();
    } catch (const UsageError& e) {
      fail(e.what());
    } catch (const DomainError& e) {
      fail(e.what());
    }
  }

 private:
  std::string path_;
};

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline json to_json(const ConvexSet& set) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) {
          return {{"type", "whole"}, {"dim", s.dim}};
        } else if constexpr (std::is_same_v<T, Box>) {
          return {{"type", "box"}, {"lower", to_json(s.lower)}, {"upper", to_json(s.upper)}};
        } else if constexpr (std::is_same_v<T, Ball>) {
          return {{"type", "ball"}, {"center", to_json(s.center)}, {"radius", s.radius}};
        } else if constexpr (std::is_same_v<T, Halfspace>) {
          return {{"type", "halfspace"}, {"normal", to_json(s.normal)}, {"offset", s.offset}};
        } else {
          json members = json::array();
          for (const auto& m : s.members) members.push_back(to_json(m));
          return {{"type", "intersection"}, {"members", members}};
        }
      },
      set.variant());
}

inline json to_json(const Bifunction& f) {
  const auto* a = f.affine();
  if (!a) throw UsageError("save: general bifunctions cannot be serialized");
  return {{"type", "vi_affine"},     {"M", to_json(a->M)}, {"q", to_json(a->q)},
          {"c1", f.c1()},            {"c2", f.c2()},
          {"monotonicity", to_string(f.monotonicity())}};
}

inline json to_json(const NonexpansiveMap& S) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityMap>) {
          return {{"type", "identity"}, {"dim", m.dim}};
        } else if constexpr (std::is_same_v<T, ProjectionMap>) {
          return {{"type", "projection"}, {"set", to_json(m.set)}};
        } else if constexpr (std::is_same_v<T, AveragedMap>) {
          return {{"type", "averaged"}, {"theta", m.theta}, {"base", to_json(*m.base)}};
        } else {
          return {{"type", "composition"}, {"outer", to_json(*m.outer)}, {"inner", to_json(*m.inner)}};
        }
      },
      S.variant());
}

inline json to_json(const ProblemSpec& p) {
  json j;
  j["C"] = to_json(p.C);
  j["Q"] = to_json(p.Q);
  j["A"] = to_json(p.A.matrix());
  j["f"] = to_json(p.f);
  j["g"] = to_json(p.g);
  j["S"] = to_json(p.S);
  j["T"] = to_json(p.T);
  j["x1"] = to_json(p.x1);
  j["planted_solution"] = p.planted_solution ? to_json(*p.planted_solution) : json(nullptr);
  return j;
}

inline ConvexSet set_from_json(const json& j, const Reader& r) {
  const std::string type = r.at("type").string(r.field(j, "type"));
  if (type == "whole") {
    const long dim = r.at("dim").integer(r.field(j, "dim"));
    return r.guard([&] { return ConvexSet::whole(dim); });
  }
  if (type == "box") {
    Vector lo = r.at("lower").vector(r.field(j, "lower"));
    Vector hi = r.at("upper").vector(r.field(j, "upper"));
    return r.guard([&] { return ConvexSet::box(lo, hi); });
  }
  if (type == "ball") {
    Vector c = r.at("center").vector(r.field(j, "center"));
    const double radius = r.at("radius").number(r.field(j, "radius"));
    return r.guard([&] { return ConvexSet::ball(c, radius); });
  }
  if (type == "halfspace") {
    Vector a = r.at("normal").vector(r.field(j, "normal"));
    const double b = r.at("offset").number(r.field(j, "offset"));
    return r.guard([&] { return ConvexSet::halfspace(a, b); });
  }
  if (type == "intersection") {
    const json& ms = r.field(j, "members");
    if (!ms.is_array()) r.at("members").fail("expected an array");
    std::vector<ConvexSet> members;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      members.push_back(set_from_json(ms[i], r.at("members").at(i)));
    }
    return r.guard([&] { return ConvexSet::intersection(std::move(members)); });
  }
  r.at("type").fail("unknown set variant \"" + type + "\"");
}

inline Bifunction bifunction_from_json(const json& j, const Reader& r) {
  const std::string type = r.at("type").string(r.field(j, "type"));
  if (type != "vi_affine") r.at("type").fail("unknown bifunction variant \"" + type + "\"");
  Matrix M = r.at("M").matrix(r.field(j, "M"));
  Vector q = r.at("q").vector(r.field(j, "q"));
  const double c1 = r.at("c1").number(r.field(j, "c1"));
  const double c2 = r.at("c2").number(r.field(j, "c2"));
  const std::string mono = r.at("monotonicity").string(r.field(j, "monotonicity"));
  Monotonicity cls;
  if (mono == "monotone") cls = Monotonicity::monotone;
  else if (mono == "pseudomonotone") cls = Monotonicity::pseudomonotone;
  else r.at("monotonicity").fail("unknown monotonicity class \"" + mono + "\"");
  return r.guard([&] { return Bifunction::vi_affine(M, q, cls, c1, c2); });
}

inline NonexpansiveMap map_from_json(const json& j, const Reader& r) {
  const std::string type = r.at("type").string(r.field(j, "type"));
  if (type == "identity") {
    const long dim = r.at("dim").integer(r.field(j, "dim"));
    return r.guard([&] { return NonexpansiveMap::identity(dim); });
  }
  if (type == "projection") {
    return NonexpansiveMap::projection(set_from_json(r.field(j, "set"), r.at("set")));
  }
  if (type == "averaged") {
    const double theta = r.at("theta").number(r.field(j, "theta"));
    auto base = map_from_json(r.field(j, "base"), r.at("base"));
    return r.guard([&] { return NonexpansiveMap::averaged(theta, base); });
  }
  if (type == "composition") {
    auto outer = map_from_json(r.field(j, "outer"), r.at("outer"));
    auto inner = map_from_json(r.field(j, "inner"), r.at("inner"));
    return r.guard([&] { return NonexpansiveMap::composition(outer, inner); });
  }
  r.at("type").fail("unknown map variant \"" + type + "\"");
}

inline ProblemSpec problem_from_json(const json& j) {
  const Reader r("");
  ProblemSpec p;
  p.C = set_from_json(r.field(j, "C"), r.at("C"));
  p.Q = set_from_json(r.field(j, "Q"), r.at("Q"));
  const Matrix A = r.at("A").matrix(r.field(j, "A"));
  p.A = r.at("A").guard([&] { return DenseOperator(A); });
  p.f = bifunction_from_json(r.field(j, "f"), r.at("f"));
  p.g = bifunction_from_json(r.field(j, "g"), r.at("g"));
  p.S = map_from_json(r.field(j, "S"), r.at("S"));
  p.T = map_from_json(r.field(j, "T"), r.at("T"));
  p.x1 = r.at("x1").vector(r.field(j, "x1"));
  const json& planted = r.field(j, "planted_solution");
  if (!planted.is_null()) p.planted_solution = r.at("planted_solution").vector(planted);
  r.guard([&] {
    p.check_shapes();
    return 0;
  });
  return p;
}

}  // namespace io

/// Serialize as JSON text. Doubles are written in shortest round-trip form.
inline std::string to_text(const ProblemSpec& p) { return io::to_json(p).dump(2) + "\n"; }

inline ProblemSpec from_text(const std::string& text) {
  io::json j;
  try {
    j = io::json::parse(text);
  } catch (const io::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return io::problem_from_json(j);
}

inline void save(const ProblemSpec& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_text(p);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline ProblemSpec load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

}  // namespace sepnm
