// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Per-run numbers go to <work-dir>/details.csv; traces go under <work-dir>.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "sepnm/cli.hpp"

using namespace sepnm;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kResidualTol = 1e-6;
constexpr int kIterationBudget = 50000;
constexpr double kDistanceTol = 1e-4;
constexpr double kWeakSeconds = 60.0;
constexpr double kCutTol = 1e-8;
constexpr double kAnchorTol = 1e-10;
constexpr double kFejerTol = 1e-8;
constexpr double kExtragradientTol = 1e-8;
constexpr double kResolventTol = 1e-6;
constexpr double kProjectionTol = 1e-10;
constexpr double kDykstraOracleTol = 1e-6;
constexpr double kUnsafeMuFraction = 2.0;
constexpr int kUnsafeSeedsRequired = 3;

const std::vector<long> kDims{2, 5, 10, 20};
constexpr std::uint64_t kSeeds = 10;

struct Instance {
  long n, m;
  std::uint64_t seed;
  std::string stem() const { return cli::detail::planted_stem(n, m, seed); }
};

std::vector<Instance> planted_grid() {
  std::vector<Instance> out;
  for (long n : kDims)
    for (long m : kDims)
      for (std::uint64_t s = 1; s <= kSeeds; ++s) out.push_back({n, m, s});
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

class Ledger {
 public:
  explicit Ledger(const fs::path& csv) : details_(csv) {
    details_ << "criterion,instance,status,iterations,residual,distance,audit1,audit2,seconds\n";
  }

  void row(int criterion, const std::string& instance, const std::string& status, int iterations,
           double residual, double distance, double a1, double a2, double secs) {
    details_ << criterion << ',' << instance << ',' << status << ',' << iterations << ','
             << cli::format_double(residual) << ',' << cli::format_double(distance) << ','
             << cli::format_double(a1) << ',' << cli::format_double(a2) << ',' << secs << '\n';
    details_.flush();
  }

  void verdict(int criterion, const std::string& title, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << criterion << "] " << title << ": " << v.detail
              << std::endl;
    failures_ += v.pass ? 0 : 1;
  }

  int failures() const { return failures_; }

 private:
  std::ofstream details_;
  int failures_ = 0;
};

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

// ---------------------------------------------------------------------------
// Criteria 1, 3, 4 and 9: the weak-mode planted sweep

struct WeakSweep {
  std::vector<std::string> traces;
  double seconds = 0.0;
  int converged = 0;
  double worst_residual = 0.0;
  double worst_distance = 0.0;
  int worst_iterations = 0;
  double worst_fejer = 0.0;
  double worst_extragradient = 0.0;
};

WeakSweep weak_sweep(const fs::path& dir, Ledger* ledger) {
  WeakSweep out;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& inst : planted_grid()) {
    const auto p = generate_planted(inst.n, inst.m, inst.seed);
    cli::RunRequest req;
    req.algorithm = cli::Algorithm::weak;
    std::ostringstream trace;
    const auto t1 = std::chrono::steady_clock::now();
    const auto o = cli::solve_request(p, req, &trace);
    const double secs = seconds_since(t1);
    const auto& r = o.report;
    const Vector& xs = *p.planted_solution;

    const double dist = (r.final_x - xs).norm();
    const double fejer = fejer_audit(r.history, xs);
    const double eg = extragradient_audit(r.history, xs, p.f.c1(), p.f.c2());
    const bool ok = r.status == SolveStatus::Converged && r.final_residual <= kResidualTol &&
                    r.iterations <= kIterationBudget && dist <= kDistanceTol;
    out.converged += ok ? 1 : 0;
    out.worst_residual = std::max(out.worst_residual, r.final_residual);
    out.worst_distance = std::max(out.worst_distance, dist);
    out.worst_iterations = std::max(out.worst_iterations, r.iterations);
    out.worst_fejer = std::max(out.worst_fejer, fejer);
    out.worst_extragradient = std::max(out.worst_extragradient, eg);
    out.traces.push_back(trace.str());
    write_file(dir / (inst.stem() + ".weak.trace.csv"), out.traces.back());
    if (ledger) ledger->row(1, inst.stem(), to_string(r.status), r.iterations, r.final_residual, dist, fejer, eg, secs);
  }
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: strong mode on the same instances

Verdict strong_sweep(Ledger& ledger) {
  int ok = 0, total = 0;
  double worst_dist = 0.0, worst_cut = 0.0, worst_anchor = 0.0;
  std::string first_bad;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& inst : planted_grid()) {
    const auto p = generate_planted(inst.n, inst.m, inst.seed);
    cli::RunRequest req;
    req.algorithm = cli::Algorithm::strong;
    const auto t1 = std::chrono::steady_clock::now();
    const auto o = cli::solve_request(p, req, nullptr);
    const double secs = seconds_since(t1);
    const auto& r = o.report;
    const Vector& xs = *p.planted_solution;
    const double dist = (r.final_x - xs).norm();
    const double cut = cut_audit(r.cuts, xs);
    const double anchor = anchor_distance_audit(r.history, p.x1);
    const bool good = r.status == SolveStatus::Converged && dist <= kDistanceTol && cut <= kCutTol &&
                      anchor <= kAnchorTol;
    ++total;
    ok += good ? 1 : 0;
    if (!good && first_bad.empty()) first_bad = inst.stem() + " " + to_string(r.status) + " " + r.message;
    worst_dist = std::max(worst_dist, dist);
    worst_cut = std::max(worst_cut, cut);
    worst_anchor = std::max(worst_anchor, anchor);
    ledger.row(2, inst.stem(), to_string(r.status), r.iterations, r.final_residual, dist, cut, anchor, secs);
  }
  Verdict v;
  v.pass = ok == total;
  v.detail = std::to_string(ok) + "/" + std::to_string(total) + " converged with max |x-x*| " + sci(worst_dist) +
             " (<= " + sci(kDistanceTol) + "), max cut violation " + sci(worst_cut) + " (<= " + sci(kCutTol) +
             "), max anchor-distance decrease " + sci(worst_anchor) + " (<= " + sci(kAnchorTol) + "), " +
             sci(seconds_since(t0)) + " s";
  if (!first_bad.empty()) v.detail += "; first failure: " + first_bad;
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 5: resolvent properties

Verdict resolvent_properties() {
  Rng rng(5005);
  std::uniform_real_distribution<double> param(0.1, 5.0);
  double firm = 0.0, two_param = 0.0;
  int pairs = 0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Index n = 1 + i % 5;
    const auto g = Bifunction::vi_affine(oracle::random_monotone(n, rng), gaussian_vector(n, rng),
                                         Monotonicity::monotone);
    const Vector lo = uniform_vector(n, rng, -2.0, 0.0);
    const Vector hi = lo + uniform_vector(n, rng, 0.5, 3.0);
    const ConvexSet Q = ConvexSet::box(lo, hi);
    for (int s = 0; s < 50; ++s, ++pairs) {
      const Vector u = gaussian_vector(n, rng, 3.0);
      const Vector v = gaussian_vector(n, rng, 3.0);
      const double a = param(rng), b = param(rng);
      const Vector Tu = resolvent(g, Q, a, u);
      const Vector Tv = resolvent(g, Q, a, v);
      const Vector Tbv = resolvent(g, Q, b, v);
      firm = std::max(firm, (Tu - Tv).squaredNorm() - (Tu - Tv).dot(u - v));
      two_param = std::max(two_param, (Tu - Tbv).norm() - (v - u).norm() - std::abs(b - a) / b * (Tbv - v).norm());
    }
  }

  constexpr long kGrid = 20001;
  int matched = 0;
  double worst_cells = 0.0;
  for (int i = 0; i < 50; ++i) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double slope = 2.0 * unit(rng);
    const double q = 2.0 * unit(rng) - 1.0;
    const double lo = -1.0 - unit(rng), hi = lo + 0.5 + 2.0 * unit(rng);
    const double u = 4.0 * unit(rng) - 2.0;
    const double alpha = param(rng);
    const auto g = Bifunction::vi_affine(Matrix::Constant(1, 1, slope), Vector::Constant(1, q),
                                         Monotonicity::monotone);
    const ConvexSet Q = ConvexSet::box(Vector::Constant(1, lo), Vector::Constant(1, hi));
    const double spacing = (hi - lo) / static_cast<double>(kGrid - 1);
    const double w = resolvent(g, Q, alpha, Vector::Constant(1, u))[0];
    const double grid = resolvent_oracle(g, Q, alpha, Vector::Constant(1, u), kGrid)[0];
    const double cells = std::abs(w - grid) / spacing;
    worst_cells = std::max(worst_cells, cells);
    matched += cells <= 1.0 ? 1 : 0;
  }

  Verdict v;
  v.pass = firm <= kResolventTol && two_param <= kResolventTol && matched == 50;
  v.detail = std::to_string(pairs) + " pairs over 20 g: firm nonexpansiveness violation " + sci(std::max(firm, 0.0)) +
             ", two-parameter bound violation " + sci(std::max(two_param, 0.0)) + " (<= " + sci(kResolventTol) +
             "); grid oracle matched on " + std::to_string(matched) + "/50 1-D instances (worst " +
             sci(worst_cells) + " grid cells, limit 1)";
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 6: projection properties

Verdict projection_properties() {
  Rng rng(6006);
  std::vector<ConvexSet> sets;
  for (Eigen::Index n = 1; n <= 5; ++n) {
    sets.push_back(ConvexSet::whole(n));
    const Vector lo = uniform_vector(n, rng, -2.0, 1.0);
    sets.push_back(ConvexSet::box(lo, lo + uniform_vector(n, rng, 0.0, 3.0)));
    sets.push_back(ConvexSet::ball(gaussian_vector(n, rng), 0.2 + 2.0 * std::abs(gaussian_vector(1, rng)[0])));
    sets.push_back(ConvexSet::halfspace(gaussian_vector(n, rng), gaussian_vector(1, rng)[0]));
  }
  double b = 0.0, c = 0.0, d = 0.0;
  for (const auto& set : sets) {
    const auto n = set.dim();
    for (int s = 0; s < 100; ++s) {
      const Vector x = gaussian_vector(n, rng, 4.0);
      const Vector y = gaussian_vector(n, rng, 4.0);
      const Vector px = project(set, x), py = project(set, y);
      const Vector member = project(set, gaussian_vector(n, rng, 4.0));
      b = std::max(b, (x - px).dot(member - px));
      c = std::max(c, (px - py).squaredNorm() - (px - py).dot(x - y));
      d = std::max(d, (px - py).squaredNorm() - (x - y).squaredNorm() + (x - px - y + py).squaredNorm());
    }
  }

  double dykstra = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector a1 = gaussian_vector(3, rng), a2 = gaussian_vector(3, rng);
    std::uniform_real_distribution<double> off(0.1, 2.0);
    const double b1 = off(rng), b2 = off(rng);
    const Vector x = gaussian_vector(3, rng, 4.0);
    const Vector got = project_intersection({ConvexSet::halfspace(a1, b1), ConvexSet::halfspace(a2, b2)}, x);
    dykstra = std::max(dykstra, (got - oracle::two_halfspaces(a1, b1, a2, b2, x)).norm());
  }

  Verdict v;
  v.pass = b <= kProjectionTol && c <= kProjectionTol && d <= kProjectionTol && dykstra <= kDykstraOracleTol;
  v.detail = std::to_string(sets.size()) + " closed-form sets x 100 samples: characterization " +
             sci(std::max(b, 0.0)) + ", firm nonexpansiveness " + sci(std::max(c, 0.0)) + ", strong form " +
             sci(std::max(d, 0.0)) + " (<= " + sci(kProjectionTol) + "); Dykstra vs enumeration oracle max " +
             sci(dykstra) + " over 100 instances (<= " + sci(kDykstraOracleTol) + ")";
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 7: sep modes against explicit identity maps

Verdict specialization(const fs::path& dir) {
  int same = 0, total = 0;
  std::string first_diff;
  for (long n : {2L, 5L}) {
    for (long m : {2L, 5L}) {
      for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        auto p = generate_planted(n, m, seed);
        p.S = NonexpansiveMap::identity(n);
        p.T = NonexpansiveMap::identity(m);
        const std::string stem = cli::detail::planted_stem(n, m, seed);
        for (auto [plain, sep] : {std::pair{cli::Algorithm::weak, cli::Algorithm::sep_weak},
                                  std::pair{cli::Algorithm::strong, cli::Algorithm::sep_strong}}) {
          std::ostringstream a, b;
          cli::RunRequest req;
          req.algorithm = plain;
          cli::solve_request(p, req, &a);
          req.algorithm = sep;
          cli::solve_request(p, req, &b);
          write_file(dir / (stem + "." + cli::to_string(plain) + ".trace.csv"), a.str());
          write_file(dir / (stem + "." + cli::to_string(sep) + ".trace.csv"), b.str());
          ++total;
          if (a.str() == b.str()) {
            ++same;
          } else if (first_diff.empty()) {
            first_diff = stem + " " + cli::to_string(sep);
          }
        }
      }
    }
  }
  Verdict v;
  v.pass = same == total;
  v.detail = std::to_string(same) + "/" + std::to_string(total) +
             " sep-weak/sep-strong traces byte-identical to weak/strong with identity S and T";
  if (!first_diff.empty()) v.detail += "; first difference: " + first_diff;
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 8: negative control with mu beyond the certified bound

struct UnsafeOutcome {
  int flagged = 0;
  std::string audits;
};

UnsafeOutcome unsafe_runs(double fraction, Ledger* ledger) {
  UnsafeOutcome out;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto p = generate_planted(5, 4, seed);
    cli::RunRequest req;
    req.algorithm = cli::Algorithm::weak;
    req.unsafe_mu_fraction = fraction;
    const auto o = cli::solve_request(p, req, nullptr);
    const auto& r = o.report;
    const double fejer = fejer_audit(r.history, *p.planted_solution);
    const bool flagged = r.status != SolveStatus::Converged || fejer > 0.0;
    out.flagged += flagged ? 1 : 0;
    if (!out.audits.empty()) out.audits += ' ';
    out.audits += sci(fejer) + (r.status == SolveStatus::Converged ? "" : "*");
    if (ledger) {
      ledger->row(8, cli::detail::planted_stem(5, 4, seed), to_string(r.status), r.iterations, r.final_residual,
                  (r.final_x - *p.planted_solution).norm(), fejer, 0.0, 0.0);
    }
  }
  return out;
}

Verdict negative_control(Ledger& ledger) {
  const auto at_bound = unsafe_runs(kUnsafeMuFraction, &ledger);
  const auto far = unsafe_runs(4.0 * kUnsafeMuFraction, nullptr);
  Verdict v;
  v.pass = at_bound.flagged >= kUnsafeSeedsRequired;
  v.detail = "mu = 2/U, n=5 m=4, seeds 1.." + std::to_string(kSeeds) + ": " + std::to_string(at_bound.flagged) +
             " runs nonconvergent or with a positive Fejer audit (need >= " + std::to_string(kUnsafeSeedsRequired) +
             "); audits [" + at_bound.audits + "]; for reference mu = 8/U flags " + std::to_string(far.flagged) +
             "/" + std::to_string(kSeeds) + " (* = not converged)";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work_dir = "acceptance_out";
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "Directory for traces and details.csv");
  app.add_option("--only", only, "Run just these criteria (1-9)");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9}
                                              : std::set<int>(only.begin(), only.end());
  const auto want = [&](int c) { return selected.count(c) > 0; };
  const fs::path root(work_dir);
  fs::create_directories(root);
  Ledger ledger(root / "details.csv");

  std::optional<WeakSweep> weak;
  if (want(1) || want(3) || want(4) || want(9)) weak = weak_sweep(root / "weak_a", &ledger);
  const std::string runs = weak ? std::to_string(weak->traces.size()) : "0";

  if (want(1)) {
    Verdict v;
    v.pass = weak->converged == static_cast<int>(weak->traces.size()) && weak->seconds <= kWeakSeconds;
    v.detail = std::to_string(weak->converged) + "/" + runs + " reached residual <= " + sci(kResidualTol) +
               " within " + std::to_string(kIterationBudget) + " iterations and |x-x*| <= " + sci(kDistanceTol) +
               " (max residual " + sci(weak->worst_residual) + ", max distance " + sci(weak->worst_distance) +
               ", max iterations " + std::to_string(weak->worst_iterations) + "), " + sci(weak->seconds) +
               " s total (<= " + sci(kWeakSeconds) + " s)";
    ledger.verdict(1, "weak planted convergence", v);
  }
  if (want(2)) ledger.verdict(2, "strong planted convergence", strong_sweep(ledger));
  if (want(3)) {
    ledger.verdict(3, "Fejer chain",
                   {weak->worst_fejer <= kFejerTol,
                    "max violation " + sci(weak->worst_fejer) + " over " + runs + " weak runs (<= " + sci(kFejerTol) + ")"});
  }
  if (want(4)) {
    ledger.verdict(4, "extragradient inequality",
                   {weak->worst_extragradient <= kExtragradientTol,
                    "min slack " + sci(0.0 - weak->worst_extragradient) + " over every iteration of " + runs +
                        " weak runs (>= " + sci(-kExtragradientTol) + ")"});
  }
  if (want(5)) ledger.verdict(5, "resolvent properties", resolvent_properties());
  if (want(6)) ledger.verdict(6, "projection properties", projection_properties());
  if (want(7)) ledger.verdict(7, "specialization equivalence", specialization(root / "specialization"));
  if (want(8)) ledger.verdict(8, "negative control", negative_control(ledger));
  if (want(9)) {
    const auto again = weak_sweep(root / "weak_b", nullptr);
    int same = 0;
    for (std::size_t i = 0; i < weak->traces.size(); ++i) same += weak->traces[i] == again.traces[i] ? 1 : 0;
    ledger.verdict(9, "determinism",
                   {same == static_cast<int>(weak->traces.size()),
                    std::to_string(same) + "/" + runs + " re-run traces byte-identical"});
  }
  return ledger.failures() == 0 ? 0 : 1;
}
