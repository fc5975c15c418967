#include <algorithm>

#include "catch_amalgamated.hpp"
#include "sepnm/solver.hpp"

using namespace sepnm;

namespace {

ProblemSpec degenerate(Eigen::Index n) {
  ProblemSpec p;
  p.C = ConvexSet::whole(n);
  p.Q = ConvexSet::whole(n);
  p.A = DenseOperator::identity(n);
  p.f = Bifunction::zero(n);
  p.g = Bifunction::zero(n);
  p.S = NonexpansiveMap::identity(n);
  p.T = NonexpansiveMap::identity(n);
  p.x1 = Vector::LinSpaced(n, -1.0, 2.0);
  return p;
}

ProblemSpec with_identity_maps(ProblemSpec p) {
  p.S = NonexpansiveMap::identity(p.n());
  p.T = NonexpansiveMap::identity(p.m());
  return p;
}

bool has_issue(const ValidationError& e, ConfigIssue issue) {
  return std::any_of(e.violations().begin(), e.violations().end(),
                     [&](const ConfigViolation& v) { return v.issue == issue; });
}

bool same_iterates(const std::vector<IterateRecord>& a, const std::vector<IterateRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].next_x != b[i].next_x || a[i].residual != b[i].residual) return false;
    if (a[i].has_step && (a[i].y != b[i].y || a[i].z != b[i].z || a[i].t != b[i].t || a[i].u != b[i].u))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("validate examples") {
  ProblemSpec p = degenerate(2);
  Matrix A(2, 2);
  A << 1.0, 0.5, -0.25, 2.0;
  p.A = DenseOperator(A);
  p.f = Bifunction::vi_affine(Matrix::Identity(2, 2), Vector::Zero(2), Monotonicity::pseudomonotone, 0.5, 0.5);
  const double U = operator_norm_sq_upper(p.A);

  SolverConfig cfg = constant_schedules(SolverConfig{}, 0.4, 1.0);
  cfg.alpha = 0.5;
  cfg.mu = 0.9 / U;
  CHECK_NOTHROW(validate(cfg, p));

  SolverConfig big_lambda = constant_schedules(cfg, 1.5, 1.0);
  try {
    validate(big_lambda, p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(has_issue(e, ConfigIssue::LambdaOutOfRange));
  }

  SolverConfig big_mu = cfg;
  big_mu.mu = 2.0 / U;
  try {
    validate(big_mu, p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(has_issue(e, ConfigIssue::MuTooLarge));
    CHECK(e.violations().size() == 1);
  }
}

TEST_CASE("validate reports every violation at once") {
  const auto p = generate_planted(3, 2, 1);
  SolverConfig cfg = constant_schedules(SolverConfig{}, 100.0, 0.0);
  cfg.alpha = 1.0;
  cfg.mu = -1.0;
  cfg.tol = 0.0;
  cfg.max_iter = 0;
  try {
    validate(cfg, p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    for (auto issue : {ConfigIssue::LambdaOutOfRange, ConfigIssue::AlphaOutOfRange, ConfigIssue::MuNotPositive,
                       ConfigIssue::AlphaKNotBoundedBelow, ConfigIssue::BadTolerance, ConfigIssue::BadMaxIter}) {
      CHECK(has_issue(e, issue));
    }
  }

  SolverConfig drifting = default_config(p, Mode::weak);
  const double bound = lambda_bound(p.f);
  drifting.lambda_schedule = [bound](int k) { return k < 50 ? 0.5 * bound : 0.99 * bound; };
  drifting.lambda_lower = 0.1 * bound;
  drifting.lambda_upper = 0.9 * bound;
  try {
    validate(drifting, p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(has_issue(e, ConfigIssue::LambdaScheduleOutsideBounds));
  }
}

TEST_CASE("default configuration uses the documented constants") {
  const auto p = generate_planted(4, 3, 2);
  const auto cfg = default_config(p, Mode::strong);
  const double U = operator_norm_sq_upper(p.A);
  CHECK(cfg.mu == 0.5 / U);
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.lambda_schedule(17) == 0.9 * std::min(1.0 / (2 * p.f.c1()), 1.0 / (2 * p.f.c2())));
  CHECK(cfg.alpha_k_schedule(3) == 1.0);
  CHECK(cfg.tol == 1e-6);
  CHECK(cfg.max_iter == 50000);
  CHECK(cfg.mode == Mode::strong);
}

TEST_CASE("degenerate problem is a fixed point in both modes") {
  const auto p = degenerate(3);
  for (Mode mode : {Mode::weak, Mode::strong}) {
    const auto checked = validate(default_config(p, mode), p);
    const auto report = solve(p, checked);
    CHECK(report.status == SolveStatus::Converged);
    CHECK(report.iterations <= 2);
    CHECK(report.final_x == p.x1);
    const auto& r = report.history.back();
    CHECK(r.y == p.x1);
    CHECK(r.z == p.x1);
    CHECK(r.t == p.x1);
    CHECK(r.u == p.x1);
    CHECK(r.residual == 0.0);
  }
}

TEST_CASE("first strong step on the degenerate problem") {
  const auto p = degenerate(2);
  const auto checked = validate(default_config(p, Mode::strong), p);
  StrongState state(p.C, p.x1);
  const auto r = strong_step(p, checked, state, p.x1, 1);
  CHECK(r.s == p.x1);
  CHECK(r.t == p.x1);
  REQUIRE(state.cuts().size() == 2);
  for (const auto& c : state.cuts()) CHECK(c.get_if<Halfspace>()->is_whole_space());
  CHECK(r.next_x == p.x1);
}

TEST_CASE("a weak step does not move away from the planted solution") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = generate_planted(2, 2, seed);
    const auto checked = validate(default_config(p, Mode::weak), p);
    const Vector& xs = *p.planted_solution;
    Vector x = p.x1;
    for (int k = 1; k <= 20; ++k) {
      const auto r = weak_step(p, checked, x, k);
      CHECK((r.next_x - xs).norm() <= (x - xs).norm() + 1e-8);
      x = r.next_x;
    }
  }
}

TEST_CASE("planted one-dimensional solution is a fixed point") {
  const auto p = generate_planted(1, 1, 3);
  const auto checked = validate(default_config(p, Mode::weak), p);
  const auto r = weak_step(p, checked, *p.planted_solution, 1);
  CHECK(std::abs(r.next_x[0] - (*p.planted_solution)[0]) <= 1e-9);
  CHECK(r.residual <= 1e-9);
}

TEST_CASE("weak runs converge and pass the audits") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto [n, m] : {std::pair{2, 2}, std::pair{5, 10}, std::pair{10, 5}}) {
      const auto p = generate_planted(n, m, seed);
      const auto report = weak_solve(p, validate(default_config(p, Mode::weak), p));
      REQUIRE(report.status == SolveStatus::Converged);
      CHECK(report.final_residual <= 1e-6);
      CHECK((report.final_x - *p.planted_solution).norm() <= 1e-4);
      CHECK(fejer_audit(report.history, *p.planted_solution) <= 1e-8);
      CHECK(extragradient_audit(report.history, *p.planted_solution, p.f.c1(), p.f.c2()) <= 1e-8);
      const auto& last = report.history.back();
      for (double part : {last.parts.xy, last.parts.yz, last.parts.Sz, last.parts.uAt, last.parts.Tu})
        CHECK(part <= 1e-6);
    }
  }
}

TEST_CASE("strong runs keep the planted point inside every cut") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = generate_planted(3, 3, seed);
    const auto report = strong_solve(p, validate(default_config(p, Mode::strong), p));
    REQUIRE(report.status == SolveStatus::Converged);
    CHECK((report.final_x - *p.planted_solution).norm() <= 1e-4);
    CHECK(report.cuts.size() == 2 * static_cast<std::size_t>(report.iterations));
    CHECK(cut_audit(report.cuts, *p.planted_solution) <= 1e-8);
    CHECK(anchor_distance_audit(report.history, p.x1) <= 1e-10);
    CHECK(cauchy_audit(report.history, p.x1, std::max<std::size_t>(1, report.history.size() / 40)) <= 1e-6);
    CHECK(fejer_audit(report.history, *p.planted_solution) <= 1e-8);
  }
}

TEST_CASE("strong mode over a ball converges through the split projection") {
  auto p = generate_planted(2, 2, 4);
  p.C = ConvexSet::ball(Vector::Zero(2), 10.0);
  REQUIRE(verify_planted(p, 200).worst() <= 1e-8);
  StrongState probe(p.C, p.x1);
  CHECK_FALSE(probe.exact());

  auto cfg = default_config(p, Mode::strong);
  const auto report = strong_solve(p, validate(cfg, p));
  CHECK(report.status == SolveStatus::Converged);
  CHECK((report.final_x - *p.planted_solution).norm() <= 1e-4);
  CHECK(cut_audit(report.cuts, *p.planted_solution) <= 1e-8);
  CHECK(anchor_distance_audit(report.history, p.x1) <= 1e-8);

  // both projection routes approximate the same P_{C_{k+1}}(x^1)
  cfg.max_iter = 30;
  auto plain = cfg;
  plain.cut_projection = CutProjection::dykstra;
  const auto split = strong_solve(p, validate(cfg, p));
  const auto cyclic = strong_solve(p, validate(plain, p));
  REQUIRE(split.history.size() == cyclic.history.size());
  for (std::size_t i = 0; i < split.history.size(); ++i) {
    CHECK((split.history[i].next_x - cyclic.history[i].next_x).norm() <= 1e-6);
  }
}

TEST_CASE("sep mode coincides with explicit identity maps") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = with_identity_maps(generate_planted(4, 3, seed));
    for (Mode mode : {Mode::weak, Mode::strong}) {
      auto plain = default_config(p, mode);
      plain.max_iter = 300;
      auto sep = plain;
      sep.sep_mode = true;
      const auto a = solve(p, validate(plain, p));
      const auto b = solve(p, validate(sep, p));
      CHECK(a.iterations == b.iterations);
      CHECK(same_iterates(a.history, b.history));
    }
  }
}

TEST_CASE("audits on trivial and corrupted histories") {
  const auto p = generate_planted(3, 2, 5);
  const Vector& xs = *p.planted_solution;
  CHECK(fejer_audit({start_record(p.x1)}, xs) == 0.0);
  CHECK(anchor_distance_audit({start_record(p.x1)}, p.x1) == 0.0);

  auto cfg = default_config(p, Mode::weak);
  cfg.mu = 2.0 / operator_norm_sq_upper(p.A);
  cfg.max_iter = 200;
  CHECK_THROWS_AS(validate(cfg, p), ValidationError);
  const auto report = weak_solve(p, CheckedConfig::bypass_validation(cfg));
  double expected = 0.0;
  for (const auto& r : report.history) {
    if (!r.has_step) continue;
    expected = std::max({expected, (r.next_x - xs).norm() - (r.t - xs).norm(),
                         (r.t - xs).norm() - (r.z - xs).norm(), (r.z - xs).norm() - (r.x - xs).norm()});
  }
  CHECK(fejer_audit(report.history, xs) == expected);
}

TEST_CASE("history thinning keeps the first and last records") {
  const auto p = generate_planted(3, 3, 2);
  auto cfg = default_config(p, Mode::weak);
  cfg.history_stride = 10;
  const auto report = weak_solve(p, validate(cfg, p));
  REQUIRE(report.status == SolveStatus::Converged);
  CHECK(report.history.front().k == 0);
  CHECK(report.history.back().k == report.iterations);
  CHECK(report.history.size() <= static_cast<std::size_t>(report.iterations / 10 + 2));
}

TEST_CASE("observer sees every record in order") {
  const auto p = generate_planted(2, 3, 8);
  std::vector<int> ks;
  const auto report = weak_solve(p, validate(default_config(p, Mode::weak), p),
                                 [&](const IterateRecord& r) { ks.push_back(r.k); });
  REQUIRE(ks.size() == static_cast<std::size_t>(report.iterations + 1));
  for (std::size_t i = 0; i < ks.size(); ++i) CHECK(ks[i] == static_cast<int>(i));
}

TEST_CASE("divergence is reported as an inner failure") {
  auto p = degenerate(2);
  p.f = Bifunction::vi_affine(-Matrix::Identity(2, 2), Vector::Zero(2), Monotonicity::pseudomonotone);
  auto cfg = default_config(p, Mode::weak);
  cfg.max_iter = 50000;
  const auto report = weak_solve(p, validate(cfg, p));
  CHECK(report.status == SolveStatus::InnerFailure);
  CHECK(report.message.find("diverged") != std::string::npos);
}
