#pragma once

// Extragradient (weak) and shrinking-projection (strong) iterations for the
// split equilibrium problem with nonexpansive mappings.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sepnm/equilibrium.hpp"
#include "sepnm/polyhedral.hpp"
#include "sepnm/problems.hpp"
#include "sepnm/sets.hpp"

namespace sepnm {

enum class Mode { weak, strong };

/// How x^{k+1} = P_{C_{k+1}}(x^1) is computed in strong mode. The active-set
/// method is exact and applies whenever C is polyhedral; Dykstra handles any C.
enum class CutProjection { active_set, dykstra };

inline const char* to_string(Mode m) { return m == Mode::weak ? "weak" : "strong"; }

struct SolverConfig {
  /// lambda_k, promised to stay inside [lambda_lower, lambda_upper].
  std::function<double(int)> lambda_schedule;
  double lambda_lower = 0.0;
  double lambda_upper = 0.0;
  double alpha = 0.5;
  double mu = 0.0;
  /// alpha_k, promised to stay >= alpha_k_lower.
  std::function<double(int)> alpha_k_schedule;
  double alpha_k_lower = 0.0;
  double tol = 1e-6;
  int max_iter = 50000;
  Mode mode = Mode::weak;
  /// Treat S and T as identities.
  bool sep_mode = false;

  ProxOptions prox;
  ResolventOptions resolvent;
  CutProjection cut_projection = CutProjection::active_set;
  /// Each cut is moved outward by this distance before projecting. A cut is
  /// the bisector of two points that agree to nearly all digits near
  /// convergence, so its position carries the inner solvers' error divided by
  /// their separation; unrelaxed, late cuts can be mutually inconsistent.
  double cut_slack = 1e-8;
  double cut_feasibility_tol = PolyhedralProjector::kDefaultFeasTol;
  double dykstra_tol = kDykstraTol;
  int dykstra_max_sweeps = kDykstraMaxSweeps;
  double divergence_bound = 1e12;
  /// Keep every n-th record in SolveReport::history (first and last always kept).
  int history_stride = 1;
};

inline constexpr double kLambdaFraction = 0.9;
inline constexpr double kMuFraction = 0.5;

inline double lambda_bound(const Bifunction& f) {
  return std::min(1.0 / (2.0 * f.c1()), 1.0 / (2.0 * f.c2()));
}

inline SolverConfig constant_schedules(SolverConfig cfg, double lambda, double alpha_k) {
  cfg.lambda_schedule = [lambda](int) { return lambda; };
  cfg.lambda_lower = cfg.lambda_upper = lambda;
  cfg.alpha_k_schedule = [alpha_k](int) { return alpha_k; };
  cfg.alpha_k_lower = alpha_k;
  return cfg;
}

/// lambda = 0.9 * min{1/(2 c1), 1/(2 c2)}, alpha = 0.5, alpha_k = 1, mu = 0.5 / U.
inline SolverConfig default_config(const ProblemSpec& p, Mode mode) {
  SolverConfig cfg;
  cfg.mode = mode;
  cfg.mu = kMuFraction / operator_norm_sq_upper(p.A);
  return constant_schedules(std::move(cfg), kLambdaFraction * lambda_bound(p.f), 1.0);
}

enum class ConfigIssue {
  LambdaOutOfRange,
  LambdaScheduleOutsideBounds,
  AlphaOutOfRange,
  MuNotPositive,
  MuTooLarge,
  AlphaKNotBoundedBelow,
  AlphaKScheduleBelowBound,
  BadTolerance,
  BadMaxIter,
  MissingSchedule,
};

inline const char* to_string(ConfigIssue i) {
  switch (i) {
    case ConfigIssue::LambdaOutOfRange: return "LambdaOutOfRange";
    case ConfigIssue::LambdaScheduleOutsideBounds: return "LambdaScheduleOutsideBounds";
    case ConfigIssue::AlphaOutOfRange: return "AlphaOutOfRange";
    case ConfigIssue::MuNotPositive: return "MuNotPositive";
    case ConfigIssue::MuTooLarge: return "MuTooLarge";
    case ConfigIssue::AlphaKNotBoundedBelow: return "AlphaKNotBoundedBelow";
    case ConfigIssue::AlphaKScheduleBelowBound: return "AlphaKScheduleBelowBound";
    case ConfigIssue::BadTolerance: return "BadTolerance";
    case ConfigIssue::BadMaxIter: return "BadMaxIter";
    case ConfigIssue::MissingSchedule: return "MissingSchedule";
  }
  return "?";
}

struct ConfigViolation {
  ConfigIssue issue;
  std::string detail;
};

class ValidationError : public UsageError {
 public:
  explicit ValidationError(std::vector<ConfigViolation> v)
      : UsageError(summarize(v)), violations_(std::move(v)) {}
  const std::vector<ConfigViolation>& violations() const { return violations_; }

 private:
  static std::string summarize(const std::vector<ConfigViolation>& v) {
    std::string s = "invalid solver configuration:";
    for (const auto& e : v) s += std::string(" ") + to_string(e.issue) + " (" + e.detail + ");";
    return s;
  }
  std::vector<ConfigViolation> violations_;
};

/// Number of schedule entries checked against the declared bounds.
inline constexpr int kScheduleProbe = 10000;

/// Every violated hypothesis at once; empty means the configuration is admissible.
inline std::vector<ConfigViolation> config_violations(const SolverConfig& cfg, const ProblemSpec& p) {
  std::vector<ConfigViolation> out;
  const auto add = [&](ConfigIssue i, std::string d) { out.push_back({i, std::move(d)}); };

  const double bound = lambda_bound(p.f);
  if (!(cfg.lambda_lower > 0.0 && cfg.lambda_lower <= cfg.lambda_upper && cfg.lambda_upper < bound)) {
    add(ConfigIssue::LambdaOutOfRange, "need 0 < a <= b < " + std::to_string(bound) + ", got [" +
                                           std::to_string(cfg.lambda_lower) + ", " +
                                           std::to_string(cfg.lambda_upper) + "]");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    add(ConfigIssue::AlphaOutOfRange, "need 0 < alpha < 1, got " + std::to_string(cfg.alpha));
  }
  const double U = operator_norm_sq_upper(p.A);
  if (!(cfg.mu > 0.0)) {
    add(ConfigIssue::MuNotPositive, "got " + std::to_string(cfg.mu));
  } else if (!(cfg.mu < 1.0 / U)) {
    add(ConfigIssue::MuTooLarge, "need mu < 1/U = " + std::to_string(1.0 / U) + ", got " +
                                     std::to_string(cfg.mu));
  }
  if (!(cfg.alpha_k_lower > 0.0) || !std::isfinite(cfg.alpha_k_lower)) {
    add(ConfigIssue::AlphaKNotBoundedBelow, "declared lower bound " + std::to_string(cfg.alpha_k_lower));
  }
  if (!(cfg.tol > 0.0)) add(ConfigIssue::BadTolerance, "tol must be positive");
  if (cfg.max_iter < 1) add(ConfigIssue::BadMaxIter, "max_iter must be >= 1");

  if (!cfg.lambda_schedule || !cfg.alpha_k_schedule) {
    add(ConfigIssue::MissingSchedule, "lambda and alpha_k schedules are required");
    return out;
  }
  const int probe = std::min(std::max(cfg.max_iter, 1), kScheduleProbe);
  for (int k = 1; k <= probe; ++k) {
    const double l = cfg.lambda_schedule(k);
    if (!(l >= cfg.lambda_lower && l <= cfg.lambda_upper)) {
      add(ConfigIssue::LambdaScheduleOutsideBounds,
          "lambda_" + std::to_string(k) + " = " + std::to_string(l));
      break;
    }
  }
  for (int k = 1; k <= probe; ++k) {
    const double a = cfg.alpha_k_schedule(k);
    if (!(a >= cfg.alpha_k_lower) || !std::isfinite(a)) {
      add(ConfigIssue::AlphaKScheduleBelowBound,
          "alpha_" + std::to_string(k) + " = " + std::to_string(a));
      break;
    }
  }
  return out;
}

/// A configuration that passed validate(), or was explicitly let through.
class CheckedConfig {
 public:
  const SolverConfig& get() const { return cfg_; }
  const SolverConfig* operator->() const { return &cfg_; }

  /// Skips every hypothesis check. Exists for negative-control experiments.
  static CheckedConfig bypass_validation(SolverConfig cfg) { return CheckedConfig(std::move(cfg)); }

 private:
  explicit CheckedConfig(SolverConfig cfg) : cfg_(std::move(cfg)) {}
  friend CheckedConfig validate(SolverConfig cfg, const ProblemSpec& p);
  SolverConfig cfg_;
};

inline CheckedConfig validate(SolverConfig cfg, const ProblemSpec& p) {
  p.check_shapes();
  auto v = config_violations(cfg, p);
  if (!v.empty()) throw ValidationError(std::move(v));
  return CheckedConfig(std::move(cfg));
}

// ---------------------------------------------------------------------------
// Iterates

struct ResidualParts {
  double xy = 0.0;    // |x - y|
  double yz = 0.0;    // |y - z|
  double Sz = 0.0;    // |S z - z|
  double uAt = 0.0;   // |u - A t|
  double Tu = 0.0;    // |T u - u|
  double step = 0.0;  // |x_next - x|
  double sx = 0.0;    // |s - x|, strong mode
  double tx = 0.0;    // |t - x|, strong mode

  double max(Mode mode) const {
    double r = std::max({xy, yz, Sz, uAt, Tu, step});
    if (mode == Mode::strong) r = std::max({r, sx, tx});
    return r;
  }
};

/// Record k >= 1 is the step taken from x = x^k; record 0 only holds the start.
struct IterateRecord {
  int k = 0;
  bool has_step = false;
  double lambda = 0.0;
  Vector x, y, z, t, u, Tu, s;
  Vector next_x;
  ResidualParts parts;
  double residual = std::numeric_limits<double>::infinity();
};

inline IterateRecord start_record(const Vector& x1) {
  IterateRecord r;
  r.x = x1;
  r.next_x = x1;
  return r;
}

namespace detail {

/// y, z, t, u and T u for one step from x, shared by both schemes.
inline IterateRecord extragradient_half(const ProblemSpec& p, const SolverConfig& cfg,
                                        const Vector& x, int k) {
  IterateRecord r;
  r.k = k;
  r.has_step = true;
  r.x = x;
  r.lambda = cfg.lambda_schedule(k);

  r.y = prox_step(p.f, p.C, x, r.lambda, cfg.prox).minimizer;
  r.z = prox_step_from(p.f, p.C, r.y, x, r.lambda, cfg.prox).minimizer;

  if (cfg.sep_mode || p.S.is_identity()) {
    r.t = r.z;
    r.parts.Sz = 0.0;
  } else {
    const Vector Sz = map_apply(p.S, r.z);
    r.parts.Sz = (Sz - r.z).norm();
    r.t = (1.0 - cfg.alpha) * r.z + cfg.alpha * Sz;
  }

  const Vector At = apply(p.A, r.t);
  r.u = resolvent_detailed(p.g, p.Q, cfg.alpha_k_schedule(k), At, cfg.resolvent).point;
  r.Tu = (cfg.sep_mode || p.T.is_identity()) ? r.u : map_apply(p.T, r.u);

  r.parts.xy = (x - r.y).norm();
  r.parts.yz = (r.y - r.z).norm();
  r.parts.uAt = (r.u - At).norm();
  r.parts.Tu = (r.Tu - r.u).norm();
  return r;
}

/// P_C(t + mu A^*(T u - A t))
inline Vector split_correction(const ProblemSpec& p, const SolverConfig& cfg, const IterateRecord& r) {
  const Vector At = apply(p.A, r.t);
  return project(p.C, r.t + cfg.mu * adjoint_apply(p.A, r.Tu - At));
}

inline void check_divergence(const SolverConfig& cfg, const Vector& x) {
  if (!x.allFinite() || x.norm() > cfg.divergence_bound) {
    throw InnerFailure("iterate diverged (|x| exceeds " + std::to_string(cfg.divergence_bound) + ")",
                       x.norm());
  }
}

}  // namespace detail

/// One extragradient step from x: y, z, t, u and the next iterate.
inline IterateRecord weak_step(const ProblemSpec& p, const CheckedConfig& checked, const Vector& x,
                               int k) {
  const auto& cfg = checked.get();
  IterateRecord r = detail::extragradient_half(p, cfg, x, k);
  r.next_x = detail::split_correction(p, cfg, r);
  detail::check_divergence(cfg, r.next_x);
  r.parts.step = (r.next_x - x).norm();
  r.residual = r.parts.max(Mode::weak);
  return r;
}

/// Anchor and accumulated cuts of the shrinking sets C_{k+1} = C cap cuts.
///
/// Cuts are never dropped: two per iteration, O(k n) memory.
///
/// Polyhedral C goes to the active-set projector together with the cuts. Any
/// other C, under CutProjection::active_set, runs a two-set Dykstra between C
/// and the cut polyhedron, the latter projected exactly: Dykstra over
/// hundreds of nearly parallel cuts crawls. CutProjection::dykstra cycles
/// through C and every cut individually.
class StrongState {
 public:
  StrongState(const ConvexSet& C, Vector x1, CutProjection method = CutProjection::active_set,
              double cut_slack = 0.0)
      : C_(C), x1_(std::move(x1)), slack_(cut_slack), dykstra_({C}) {
    if (method == CutProjection::active_set) {
      exact_ = PolyhedralProjector::from_sets({C});
      if (!exact_) cuts_only_.emplace(C.dim());
    }
  }

  const Vector& anchor() const { return x1_; }
  const std::vector<ConvexSet>& cuts() const { return cuts_; }
  bool exact() const { return exact_.has_value(); }

  /// Records the cut as given; the projection sees it relaxed by the slack.
  void add_cut(ConvexSet cut) {
    const auto& h = *cut.get_if<Halfspace>();
    const double offset = h.offset + slack_ * h.normal.norm();
    if (exact_) {
      exact_->add_halfspace(h.normal, offset);
    } else if (cuts_only_) {
      cuts_only_->add_halfspace(h.normal, offset);
    } else {
      dykstra_.add_member(ConvexSet::halfspace(h.normal, offset));
    }
    cuts_.push_back(std::move(cut));
  }

  Vector project_anchor(double tol, int max_sweeps, double feas_tol = PolyhedralProjector::kDefaultFeasTol) {
    if (exact_) return exact_->project(x1_, feas_tol);
    if (cuts_only_) return split_dykstra(tol, max_sweeps, feas_tol);
    return dykstra_.project(x1_, tol, max_sweeps);
  }

  /// Worst distance by which x lies outside an accumulated cut.
  double cut_violation(const Vector& x) const {
    double worst = 0.0;
    for (const auto& c : cuts_) worst = std::max(worst, violation(c, x));
    return worst;
  }

 private:
  Vector split_dykstra(double tol, int max_sweeps, double feas_tol) {
    Vector x = x1_;
    Vector p = Vector::Zero(x.size());
    Vector q = Vector::Zero(x.size());
    double outside = 0.0;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
      const Vector y = cuts_only_->project(x + p, feas_tol);
      const Vector p_next = x + p - y;
      const Vector x_next = project(C_, y + q);
      const Vector q_next = y + q - x_next;
      const double moved = (x_next - x).norm() + (p_next - p).norm() + (q_next - q).norm();
      x = x_next;
      p = p_next;
      q = q_next;
      // x is in C; the cuts it answers to are the relaxed ones
      outside = std::max(0.0, cut_violation(x) - slack_);
      if (moved < tol && outside <= tol) return x;
    }
    if (outside > 10.0 * tol) {
      throw InnerFailure("split Dykstra did not converge in " + std::to_string(max_sweeps) +
                             " sweeps (worst cut violation " + std::to_string(outside) + ")",
                         outside);
    }
    return x;
  }

  ConvexSet C_;
  Vector x1_;
  double slack_ = 0.0;
  std::vector<ConvexSet> cuts_;
  std::optional<PolyhedralProjector> exact_;
  std::optional<PolyhedralProjector> cuts_only_;
  DykstraProjector dykstra_;
};

/// One hybrid step: s^k, the cuts |s - r| <= |t - r| and |t - r| <= |x - r|,
/// then x^{k+1} = P_{C_{k+1}}(x^1).
inline IterateRecord strong_step(const ProblemSpec& p, const CheckedConfig& checked,
                                 StrongState& state, const Vector& x, int k) {
  const auto& cfg = checked.get();
  IterateRecord r = detail::extragradient_half(p, cfg, x, k);
  r.s = detail::split_correction(p, cfg, r);
  state.add_cut(halfspace_dominates(r.s, r.t));
  state.add_cut(halfspace_dominates(r.t, x));
  r.next_x = state.project_anchor(cfg.dykstra_tol, cfg.dykstra_max_sweeps, cfg.cut_feasibility_tol);
  detail::check_divergence(cfg, r.next_x);
  r.parts.step = (r.next_x - x).norm();
  r.parts.sx = (r.s - x).norm();
  r.parts.tx = (r.t - x).norm();
  r.residual = r.parts.max(Mode::strong);
  return r;
}

enum class SolveStatus { Converged, MaxIterReached, InnerFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterReached: return "MaxIterReached";
    case SolveStatus::InnerFailure: return "InnerFailure";
  }
  return "?";
}

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIterReached;
  Mode mode = Mode::weak;
  int iterations = 0;
  Vector final_x;
  Vector final_u;
  double final_residual = std::numeric_limits<double>::infinity();
  std::string message;
  std::vector<IterateRecord> history;
  /// Strong mode only: every halfspace cut accumulated beyond C.
  std::vector<ConvexSet> cuts;
};

using RecordObserver = std::function<void(const IterateRecord&)>;

namespace detail {

template <class Step>
SolveReport run(const ProblemSpec& p, const CheckedConfig& checked, Mode mode, Step&& step,
                const RecordObserver& observe) {
  const auto& cfg = checked.get();
  p.check_shapes();
  SolveReport report;
  report.mode = mode;
  report.final_x = p.x1;

  const int stride = std::max(1, cfg.history_stride);
  IterateRecord last = start_record(p.x1);
  if (observe) observe(last);
  report.history.push_back(last);

  for (int k = 1; k <= cfg.max_iter; ++k) {
    try {
      last = step(last.next_x, k);
    } catch (const InnerFailure& e) {
      report.status = SolveStatus::InnerFailure;
      report.message = e.what();
      break;
    }
    report.iterations = k;
    report.final_x = last.next_x;
    report.final_u = last.u;
    report.final_residual = last.residual;
    if (observe) observe(last);
    const bool done = last.residual <= cfg.tol;
    if (k % stride == 0 || done || k == cfg.max_iter) report.history.push_back(last);
    if (done) {
      report.status = SolveStatus::Converged;
      break;
    }
  }
  return report;
}

}  // namespace detail

inline SolveReport weak_solve(const ProblemSpec& p, const CheckedConfig& checked,
                              const RecordObserver& observe = {}) {
  return detail::run(
      p, checked, Mode::weak,
      [&](const Vector& x, int k) { return weak_step(p, checked, x, k); }, observe);
}

inline SolveReport strong_solve(const ProblemSpec& p, const CheckedConfig& checked,
                                const RecordObserver& observe = {}) {
  StrongState state(p.C, p.x1, checked->cut_projection, checked->cut_slack);
  auto report = detail::run(
      p, checked, Mode::strong,
      [&](const Vector& x, int k) { return strong_step(p, checked, state, x, k); }, observe);
  report.cuts = state.cuts();
  return report;
}

inline SolveReport solve(const ProblemSpec& p, const CheckedConfig& checked,
                         const RecordObserver& observe = {}) {
  return checked->mode == Mode::weak ? weak_solve(p, checked, observe)
                                     : strong_solve(p, checked, observe);
}

// ---------------------------------------------------------------------------
// Diagnostics against a known solution

/// Worst break of |x_next - x*| <= |t - x*| <= |z - x*| <= |x - x*| over the
/// history (s takes the place of x_next for strong-mode records).
inline double fejer_audit(const std::vector<IterateRecord>& history, const Vector& x_star) {
  double worst = 0.0;
  for (const auto& r : history) {
    if (!r.has_step) continue;
    const double dn = ((r.s.size() ? r.s : r.next_x) - x_star).norm();
    const double dt = (r.t - x_star).norm();
    const double dz = (r.z - x_star).norm();
    const double dx = (r.x - x_star).norm();
    worst = std::max({worst, dn - dt, dt - dz, dz - dx});
  }
  return worst;
}

/// Worst excess of |z - x*|^2 over
/// |x - x*|^2 - (1 - 2 lambda c1)|x - y|^2 - (1 - 2 lambda c2)|y - z|^2.
inline double extragradient_audit(const std::vector<IterateRecord>& history, const Vector& x_star,
                                  double c1, double c2) {
  double worst = 0.0;
  for (const auto& r : history) {
    if (!r.has_step) continue;
    const double rhs = (r.x - x_star).squaredNorm() -
                       (1.0 - 2.0 * r.lambda * c1) * (r.x - r.y).squaredNorm() -
                       (1.0 - 2.0 * r.lambda * c2) * (r.y - r.z).squaredNorm();
    worst = std::max(worst, (r.z - x_star).squaredNorm() - rhs);
  }
  return worst;
}

/// Worst decrease of |x^k - x^1| along consecutive history entries.
inline double anchor_distance_audit(const std::vector<IterateRecord>& history, const Vector& x1) {
  double worst = 0.0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double prev = (history[i - 1].next_x - x1).norm();
    const double cur = (history[i].next_x - x1).norm();
    worst = std::max(worst, prev - cur);
  }
  return worst;
}

/// Worst excess of |x^m - x^n|^2 over |x^m - x^1|^2 - |x^n - x^1|^2, m > n,
/// checked for every pair at the given index stride.
inline double cauchy_audit(const std::vector<IterateRecord>& history, const Vector& x1,
                           std::size_t stride = 1) {
  double worst = 0.0;
  stride = std::max<std::size_t>(1, stride);
  for (std::size_t n = 0; n < history.size(); n += stride) {
    for (std::size_t m = n + stride; m < history.size(); m += stride) {
      const Vector& xm = history[m].next_x;
      const Vector& xn = history[n].next_x;
      const double excess = (xm - xn).squaredNorm() - ((xm - x1).squaredNorm() - (xn - x1).squaredNorm());
      worst = std::max(worst, excess);
    }
  }
  return worst;
}

inline double cut_audit(const std::vector<ConvexSet>& cuts, const Vector& x_star) {
  double worst = 0.0;
  for (const auto& c : cuts) worst = std::max(worst, violation(c, x_star));
  return worst;
}

}  // namespace sepnm
