#pragma once

// Command-line front end: generate, solve, verify and bench.
//
// Exit codes: 0 success, 2 validation error, 3 parse error, 4 inner failure.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepnm/problems.hpp"
#include "sepnm/solver.hpp"

namespace sepnm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitInner = 4;
inline constexpr int kExitIo = 1;

/// Where reports, traces and generated problems go when no path is given.
inline constexpr const char* kOutputDirEnv = "SEPNM_OUTPUT_DIR";

inline constexpr const char* kTraceHeader = "k,res_xy,res_yz,res_Sz,res_uAt,res_Tu,step,dist_xstar";

enum class Command { generate, solve, verify, bench };
enum class Algorithm { weak, strong, sep_weak, sep_strong };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::weak: return "weak";
    case Algorithm::strong: return "strong";
    case Algorithm::sep_weak: return "sep-weak";
    case Algorithm::sep_strong: return "sep-strong";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "weak") return Algorithm::weak;
  if (s == "strong") return Algorithm::strong;
  if (s == "sep-weak") return Algorithm::sep_weak;
  if (s == "sep-strong") return Algorithm::sep_strong;
  throw ParseError("unknown algorithm '" + s + "' (expected weak, strong, sep-weak or sep-strong)");
}

struct RunRequest {
  Command command = Command::solve;
  std::string problem_path;
  Algorithm algorithm = Algorithm::weak;

  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<double> lambda;
  std::optional<double> alpha;
  /// mu = mu_fraction / U, so the step-size hypothesis cannot be broken here.
  std::optional<double> mu_fraction;
  std::optional<double> alpha_k;
  std::optional<std::uint64_t> seed;

  /// Negative controls only: mu = fraction / U with validation skipped.
  std::optional<double> unsafe_mu_fraction;

  long n = 5;
  long m = 4;
  std::uint64_t seed_first = 1;
  std::uint64_t seed_last = 10;
  int jobs = 1;
  int samples = 1000;

  std::string report_path;
  std::string trace_path;
  /// generate: the problem file; bench: optional directory for per-seed traces.
  std::string output_path;
  std::string output_dir;
};

inline std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? std::string(env) : std::string(".");
}

/// "3" or "1..10".
inline std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    std::size_t used = 0;
    if (dots == std::string::npos) {
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return {v, v};
    }
    const std::string lo = s.substr(0, dots), hi = s.substr(dots + 2);
    const auto a = std::stoull(lo, &used);
    if (used != lo.size()) throw std::invalid_argument(s);
    const auto b = std::stoull(hi, &used);
    if (used != hi.size()) throw std::invalid_argument(s);
    if (b < a) throw ParseError("seed range '" + s + "' is empty");
    return {a, b};
  } catch (const std::logic_error&) {
    throw ParseError("bad seed range '" + s + "' (expected N or A..B)");
  }
}

// ---------------------------------------------------------------------------
// Formatting

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json vector_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// One CSV row per record. Record 0 (the start point) has no residual parts;
/// dist_xstar is |x^{k+1} - x*| and is blank when nothing is planted.
inline std::string trace_row(const IterateRecord& r, const std::optional<Vector>& x_star) {
  std::string line = std::to_string(r.k);
  const auto cell = [&line](const std::optional<double>& v) {
    line += ',';
    if (v) line += format_double(*v);
  };
  const auto part = [&r](double v) { return r.has_step ? std::optional<double>(v) : std::nullopt; };
  cell(part(r.parts.xy));
  cell(part(r.parts.yz));
  cell(part(r.parts.Sz));
  cell(part(r.parts.uAt));
  cell(part(r.parts.Tu));
  cell(part(r.parts.step));
  cell(x_star ? std::optional<double>((r.next_x - *x_star).norm()) : std::nullopt);
  return line;
}

// ---------------------------------------------------------------------------
// Configuration from a request

struct ResolvedConfig {
  CheckedConfig checked;
  double mu_fraction;
  bool validated;
};

inline SolverConfig requested_config(const ProblemSpec& p, const RunRequest& req) {
  const bool strong = req.algorithm == Algorithm::strong || req.algorithm == Algorithm::sep_strong;
  SolverConfig cfg = default_config(p, strong ? Mode::strong : Mode::weak);
  cfg.sep_mode = req.algorithm == Algorithm::sep_weak || req.algorithm == Algorithm::sep_strong;
  if (req.tol) cfg.tol = *req.tol;
  if (req.max_iter) cfg.max_iter = *req.max_iter;
  if (req.alpha) cfg.alpha = *req.alpha;
  const double lambda = req.lambda.value_or(cfg.lambda_upper);
  const double alpha_k = req.alpha_k.value_or(cfg.alpha_k_lower);
  cfg = constant_schedules(std::move(cfg), lambda, alpha_k);
  const double U = operator_norm_sq_upper(p.A);
  if (req.mu_fraction) cfg.mu = *req.mu_fraction / U;
  if (req.unsafe_mu_fraction) cfg.mu = *req.unsafe_mu_fraction / U;
  return cfg;
}

/// Throws ValidationError for a bad mu fraction or any violated hypothesis,
/// unless the unsafe override is in effect.
inline ResolvedConfig resolve_config(const ProblemSpec& p, const RunRequest& req) {
  if (req.mu_fraction && !(*req.mu_fraction > 0.0 && *req.mu_fraction < 1.0)) {
    throw ValidationError({{ConfigIssue::MuTooLarge,
                            "mu_fraction must lie in (0, 1), got " + format_double(*req.mu_fraction)}});
  }
  SolverConfig cfg = requested_config(p, req);
  const double fraction = cfg.mu * operator_norm_sq_upper(p.A);
  if (req.unsafe_mu_fraction) {
    return {CheckedConfig::bypass_validation(std::move(cfg)), fraction, false};
  }
  return {validate(std::move(cfg), p), fraction, true};
}

// ---------------------------------------------------------------------------
// Solving with a trace and a report

struct SolveOutcome {
  SolveReport report;
  double mu_fraction = 0.0;
  bool validated = true;
};

/// Runs the requested algorithm, streaming the CSV trace to `trace` when given.
inline SolveOutcome solve_request(const ProblemSpec& p, const RunRequest& req, std::ostream* trace) {
  auto resolved = resolve_config(p, req);
  RecordObserver observe;
  if (trace) {
    *trace << kTraceHeader << '\n';
    observe = [&](const IterateRecord& r) { *trace << trace_row(r, p.planted_solution) << '\n'; };
  }
  SolveOutcome out;
  out.report = solve(p, resolved.checked, observe);
  out.mu_fraction = resolved.mu_fraction;
  out.validated = resolved.validated;
  return out;
}

inline nlohmann::json report_json(const ProblemSpec& p, const RunRequest& req, const SolveOutcome& o) {
  const auto& r = o.report;
  const SolverConfig cfg = requested_config(p, req);
  nlohmann::json j;
  j["algorithm"] = to_string(req.algorithm);
  j["status"] = to_string(r.status);
  j["iterations"] = r.iterations;
  j["final_residual"] = r.iterations > 0 ? nlohmann::json(r.final_residual) : nlohmann::json(nullptr);
  j["final_x"] = vector_json(r.final_x);
  j["final_u"] = r.final_u.size() ? vector_json(r.final_u) : nlohmann::json(nullptr);
  j["message"] = r.message;
  j["config"] = {{"lambda", cfg.lambda_upper},  {"alpha", cfg.alpha},
                 {"mu", cfg.mu},                {"mu_fraction", o.mu_fraction},
                 {"alpha_k", cfg.alpha_k_lower}, {"tol", cfg.tol},
                 {"max_iter", cfg.max_iter},    {"sep_mode", cfg.sep_mode},
                 {"validated", o.validated}};
  if (r.mode == Mode::strong) j["cuts"] = r.cuts.size();
  if (p.planted_solution) {
    const Vector& xs = *p.planted_solution;
    nlohmann::json a;
    a["distance"] = (r.final_x - xs).norm();
    a["fejer_audit"] = fejer_audit(r.history, xs);
    a["extragradient_audit"] = extragradient_audit(r.history, xs, p.f.c1(), p.f.c2());
    if (r.mode == Mode::strong) {
      a["cut_audit"] = cut_audit(r.cuts, xs);
      a["anchor_distance_audit"] = anchor_distance_audit(r.history, p.x1);
    }
    j["planted"] = a;
  }
  return j;
}

namespace detail {

inline std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline std::string out_dir(const RunRequest& req) {
  return req.output_dir.empty() ? default_output_dir() : req.output_dir;
}

inline std::string planted_stem(long n, long m, std::uint64_t seed) {
  return "planted_n" + std::to_string(n) + "_m" + std::to_string(m) + "_s" + std::to_string(seed);
}

inline std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

/// The problem named by --problem, or a planted one from --seed/--n/--m.
inline std::pair<ProblemSpec, std::string> obtain_problem(const RunRequest& req) {
  if (!req.problem_path.empty()) {
    return {load(req.problem_path), std::filesystem::path(req.problem_path).stem().string()};
  }
  if (!req.seed) throw UsageError("need --problem or --seed");
  return {generate_planted(req.n, req.m, *req.seed), planted_stem(req.n, req.m, *req.seed)};
}

inline int exit_for(SolveStatus s) { return s == SolveStatus::InnerFailure ? kExitInner : kExitOk; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int run_generate(const RunRequest& req, std::ostream& out) {
  const std::uint64_t seed = req.seed.value_or(req.seed_first);
  const ProblemSpec p = generate_planted(req.n, req.m, seed);
  const std::string path = req.output_path.empty()
                               ? detail::join(detail::out_dir(req), detail::planted_stem(req.n, req.m, seed) + ".json")
                               : req.output_path;
  auto f = detail::open_out(path);
  f << to_text(p);
  out << path << '\n';
  return kExitOk;
}

inline int run_solve(const RunRequest& req, std::ostream& out) {
  const auto [p, stem] = detail::obtain_problem(req);
  const std::string base = stem + "." + to_string(req.algorithm);
  const std::string trace_path =
      req.trace_path.empty() ? detail::join(detail::out_dir(req), base + ".trace.csv") : req.trace_path;
  const std::string report_path =
      req.report_path.empty() ? detail::join(detail::out_dir(req), base + ".report.json") : req.report_path;

  // validate before touching any file
  resolve_config(p, req);
  SolveOutcome o;
  {
    auto trace = detail::open_out(trace_path);
    o = solve_request(p, req, &trace);
  }
  auto report = detail::open_out(report_path);
  report << report_json(p, req, o).dump(2) << '\n';

  out << "status=" << to_string(o.report.status) << " iterations=" << o.report.iterations
      << " residual=" << format_double(o.report.final_residual);
  if (p.planted_solution) out << " distance=" << format_double((o.report.final_x - *p.planted_solution).norm());
  out << "\ntrace=" << trace_path << "\nreport=" << report_path << '\n';
  if (!o.report.message.empty()) out << "message=" << o.report.message << '\n';
  return detail::exit_for(o.report.status);
}

inline int run_verify(const RunRequest& req, std::ostream& out) {
  const auto [p, stem] = detail::obtain_problem(req);
  p.check_shapes();
  const std::uint64_t seed = req.seed.value_or(0);
  nlohmann::json j;
  j["problem"] = stem;
  bool clean = true;
  if (p.planted_solution) {
    const PlantedReport r = verify_planted(p, req.samples, seed);
    j["planted"] = {{"x1_in_C", r.x1_in_C},           {"solution_in_C", r.solution_in_C},
                    {"image_in_Q", r.image_in_Q},     {"fixed_by_S", r.fixed_by_S},
                    {"fixed_by_T", r.fixed_by_T},     {"equilibrium_f", r.equilibrium_f},
                    {"equilibrium_g", r.equilibrium_g}, {"worst", r.worst()}};
    clean = clean && r.worst() <= 1e-8;
  }
  const auto assumptions = [&](const Bifunction& f, const ConvexSet& dom, std::uint64_t s) {
    const AssumptionReport a = check_assumptions(f, dom, req.samples, s);
    clean = clean && a.clean(f);
    return nlohmann::json{{"monotonicity_class", to_string(f.monotonicity())},
                          {"reflexivity", a.reflexivity},
                          {"monotonicity", a.monotonicity},
                          {"pseudomonotonicity", a.pseudomonotonicity},
                          {"lipschitz", a.lipschitz},
                          {"c1", f.c1()},
                          {"c2", f.c2()},
                          {"clean", a.clean(f)}};
  };
  j["f"] = assumptions(p.f, p.C, seed + 1);
  j["g"] = assumptions(p.g, p.Q, seed + 2);
  j["clean"] = clean;
  out << j.dump(2) << '\n';
  return kExitOk;
}

struct BenchRow {
  std::uint64_t seed = 0;
  SolveStatus status = SolveStatus::MaxIterReached;
  int iterations = 0;
  double residual = 0.0;
  double distance = 0.0;
  std::string error;
};

/// Seeds are independent solves; with jobs > 1 they run on a small thread
/// pool, and each trace file is written by the worker that owns the seed.
inline std::vector<BenchRow> bench_rows(const RunRequest& req) {
  std::vector<std::uint64_t> seeds;
  for (auto s = req.seed_first; s <= req.seed_last; ++s) seeds.push_back(s);
  std::vector<BenchRow> rows(seeds.size());

  // Validation problems surface before any worker starts.
  resolve_config(generate_planted(req.n, req.m, seeds.front()), req);

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      BenchRow& row = rows[i];
      row.seed = seeds[i];
      const ProblemSpec p = generate_planted(req.n, req.m, row.seed);
      SolveOutcome o;
      if (req.output_path.empty()) {
        o = solve_request(p, req, nullptr);
      } else {
        auto trace = detail::open_out(detail::join(
            req.output_path, detail::planted_stem(req.n, req.m, row.seed) + "." + to_string(req.algorithm) +
                                 ".trace.csv"));
        o = solve_request(p, req, &trace);
      }
      row.status = o.report.status;
      row.iterations = o.report.iterations;
      row.residual = o.report.final_residual;
      row.distance = (o.report.final_x - *p.planted_solution).norm();
      row.error = o.report.message;
    }
  };
  const int jobs = std::max(1, std::min<int>(req.jobs, static_cast<int>(seeds.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

inline int run_bench(const RunRequest& req, std::ostream& out) {
  const auto rows = bench_rows(req);
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-15s %10s %14s %14s\n", "seed", "status", "iterations",
                "residual", "distance");
  out << line;
  int code = kExitOk;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6llu %-15s %10d %14.6e %14.6e\n",
                  static_cast<unsigned long long>(r.seed), to_string(r.status), r.iterations, r.residual,
                  r.distance);
    out << line;
    if (r.status == SolveStatus::InnerFailure) code = kExitInner;
  }
  return code;
}

/// Dispatches a parsed request. Errors go to `err` as one line and map to
/// the documented exit codes.
inline int run(const RunRequest& req, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    switch (req.command) {
      case Command::generate: return run_generate(req, out);
      case Command::solve: return run_solve(req, out);
      case Command::verify: return run_verify(req, out);
      case Command::bench: return run_bench(req, out);
    }
    return kExitOk;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const UsageError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InnerFailure& e) {
    err << "inner failure: " << e.what() << '\n';
    return kExitInner;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

// ---------------------------------------------------------------------------
// Argument parsing

/// Parses argv into a request. Returns nullopt with `code` set when the
/// process should exit right away (help, or a malformed command line).
inline std::optional<RunRequest> parse_args(int argc, const char* const* argv, int& code,
                                            std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunRequest req;
  CLI::App app{"Split equilibrium solver: extragradient and hybrid projection schemes"};
  app.require_subcommand(1);

  std::string algorithm = "weak";
  std::string seeds = "1..10";
  std::optional<std::uint64_t> seed;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--output-dir", req.output_dir,
                    std::string("Default directory for outputs (else $") + kOutputDirEnv + " or .)");
  };
  const auto add_solver = [&](CLI::App* sub) {
    sub->add_option("--algorithm", algorithm, "weak | strong | sep-weak | sep-strong");
    sub->add_option("--tol", req.tol, "Stopping tolerance on the max residual part");
    sub->add_option("--max-iter", req.max_iter, "Iteration budget");
    sub->add_option("--lambda", req.lambda, "Constant lambda_k");
    sub->add_option("--alpha", req.alpha, "Averaging weight for S");
    sub->add_option("--mu-fraction", req.mu_fraction, "mu as a fraction of 1/U, in (0, 1)");
    sub->add_option("--alpha-k", req.alpha_k, "Constant resolvent parameter alpha_k");
    sub->add_option("--unsafe-mu-fraction", req.unsafe_mu_fraction)->group("");
  };
  const auto add_shape = [&](CLI::App* sub) {
    sub->add_option("--n", req.n, "Dimension of x")->check(CLI::PositiveNumber);
    sub->add_option("--m", req.m, "Dimension of A x")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "Write a planted problem file");
  gen->add_option("--seed", seed, "Generator seed");
  add_shape(gen);
  gen->add_option("--out", req.output_path, "Problem file path");
  add_common(gen);

  auto* sol = app.add_subcommand("solve", "Solve a problem, writing a JSON report and a CSV trace");
  sol->add_option("--problem", req.problem_path, "Problem file (else planted from --seed)");
  sol->add_option("--seed", seed, "Planted problem seed when no file is given");
  add_shape(sol);
  add_solver(sol);
  sol->add_option("--report", req.report_path, "JSON report path");
  sol->add_option("--trace", req.trace_path, "CSV trace path");
  add_common(sol);

  auto* ver = app.add_subcommand("verify", "Check the planted solution and the bifunction assumptions");
  ver->add_option("--problem", req.problem_path, "Problem file (else planted from --seed)");
  ver->add_option("--seed", seed, "Planted problem seed, also seeds the sampling");
  add_shape(ver);
  ver->add_option("--samples", req.samples, "Sample count")->check(CLI::PositiveNumber);
  add_common(ver);

  auto* ben = app.add_subcommand("bench", "Solve planted problems over a seed range");
  ben->add_option("--seeds", seeds, "Seed range A..B");
  add_shape(ben);
  add_solver(ben);
  ben->add_option("--jobs", req.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  ben->add_option("--trace-dir", req.output_path, "Write one trace per seed here");

  try {
    app.parse(argc, argv);
    req.algorithm = parse_algorithm(algorithm);
    req.seed = seed;
    if (gen->parsed()) req.command = Command::generate;
    if (sol->parsed()) req.command = Command::solve;
    if (ver->parsed()) req.command = Command::verify;
    if (ben->parsed()) {
      req.command = Command::bench;
      std::tie(req.seed_first, req.seed_last) = parse_seed_range(seeds);
    }
  } catch (const CLI::ParseError& e) {
    code = app.exit(e, out, err);
    if (code != 0) code = kExitParse;
    return std::nullopt;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    code = kExitParse;
    return std::nullopt;
  }
  code = kExitOk;
  return req;
}

inline int main(int argc, const char* const* argv) {
  int code = 0;
  const auto req = parse_args(argc, argv, code);
  if (!req) return code;
  return run(*req);
}

}  // namespace sepnm::cli
