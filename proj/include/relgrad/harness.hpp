#pragma once

// Experiment harness: problem/method descriptors, JSON configuration, trace
// persistence (UTF-8 CSV with a fixed header, JSON reports with a schema
// version), and batch sweeps.  Every run is deterministic given its seed; all
// files are written atomically (temp file + rename) so readers never observe a
// partial artifact.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "relgrad/config.hpp"
#include "relgrad/convex.hpp"
#include "relgrad/operator.hpp"
#include "relgrad/quadratic_solvers.hpp"
#include "relgrad/rng.hpp"
#include "relgrad/spectral.hpp"
#include "relgrad/trace.hpp"

namespace relgrad {

inline constexpr const char* kReportSchemaVersion = "1";

// ---------------------------------------------------------------------------
// Problem and method descriptors
// ---------------------------------------------------------------------------

struct Poisson2dProblem {
  std::size_t grid_side = 2;
};
struct DiagonalProblem {
  std::vector<double> spectrum;
};
struct StrictlyConvex2Problem {
  std::size_t n = 1;
};
struct LogisticProblem {
  std::size_t n = 2;
  std::size_t p = 1;
  double kappa = 0.1;
};

using ProblemDescriptor = std::variant<Poisson2dProblem, DiagonalProblem,
                                       StrictlyConvex2Problem, LogisticProblem>;

inline bool problem_is_quadratic(const ProblemDescriptor& p) {
  return std::holds_alternative<Poisson2dProblem>(p) ||
         std::holds_alternative<DiagonalProblem>(p);
}

inline std::string problem_name(const ProblemDescriptor& p) {
  if (std::holds_alternative<Poisson2dProblem>(p)) return "poisson2d";
  if (std::holds_alternative<DiagonalProblem>(p)) return "diagonal";
  if (std::holds_alternative<StrictlyConvex2Problem>(p)) return "strictly_convex_2";
  return "logistic";
}

enum class MethodKind {
  quad_relaxed_sd,   // plain relaxed steepest descent
  quad_relaxed_mr,   // plain relaxed minimal residual (no-zigzag baseline)
  quad_eig_accel,    // MR with detection-triggered full steps
  quad_lba,          // MR with detection-triggered Lanczos projections
  quad_lba_djm,      // randomly damped Jacobi smoothing with Lanczos projections
  convex_mr,         // relaxed MR-type steps under the nonmonotone line search
  convex_eig_accel,  // plus detection-triggered full steps
  convex_lba,        // plus detection-triggered Lanczos projections
};

inline std::string to_string(MethodKind m) {
  switch (m) {
    case MethodKind::quad_relaxed_sd: return "relaxed_sd";
    case MethodKind::quad_relaxed_mr: return "relaxed_mr";
    case MethodKind::quad_eig_accel: return "eig_accel";
    case MethodKind::quad_lba: return "lba";
    case MethodKind::quad_lba_djm: return "lba_djm";
    case MethodKind::convex_mr: return "mr";
    case MethodKind::convex_eig_accel: return "eig";
    case MethodKind::convex_lba: return "convex_lba";
  }
  return "unknown";
}

inline MethodKind parse_method(const std::string& name, bool quadratic) {
  if (quadratic) {
    if (name == "relaxed_sd" || name == "sd") return MethodKind::quad_relaxed_sd;
    if (name == "relaxed_mr" || name == "mr") return MethodKind::quad_relaxed_mr;
    if (name == "eig_accel" || name == "eig") return MethodKind::quad_eig_accel;
    if (name == "lba") return MethodKind::quad_lba;
    if (name == "lba_djm") return MethodKind::quad_lba_djm;
    throw std::invalid_argument("unknown quadratic method: " + name);
  }
  if (name == "mr" || name == "mr_relaxed") return MethodKind::convex_mr;
  if (name == "eig" || name == "eig_accel") return MethodKind::convex_eig_accel;
  if (name == "lba" || name == "convex_lba") return MethodKind::convex_lba;
  throw std::invalid_argument("unknown convex method: " + name);
}

inline bool method_is_quadratic(MethodKind m) {
  switch (m) {
    case MethodKind::convex_mr:
    case MethodKind::convex_eig_accel:
    case MethodKind::convex_lba:
      return false;
    default:
      return true;
  }
}

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

struct ExperimentSpec {
  std::string label = "run";
  ProblemDescriptor problem = Poisson2dProblem{};
  MethodKind method = MethodKind::quad_relaxed_mr;
  SolverConfig config{};           // config.seed is the run's single seed
  LineSearchParams line_search{};  // used by convex methods only
  double beta_max = 7.0;           // damping bound, lba_djm only
  std::string output_dir;          // empty: keep the run in memory only

  void validate() const {
    if (label.empty()) throw std::invalid_argument("ExperimentSpec: empty label");
    if (label.find_first_of("/\\") != std::string::npos)
      throw std::invalid_argument("ExperimentSpec: label must not contain path separators");
    config.validate();
    line_search.validate();
    if (method_is_quadratic(method) != problem_is_quadratic(problem))
      throw std::invalid_argument("ExperimentSpec: method does not match problem kind");
    if (const auto* d = std::get_if<DiagonalProblem>(&problem)) {
      if (d->spectrum.empty())
        throw std::invalid_argument("ExperimentSpec: empty diagonal spectrum");
      for (double v : d->spectrum)
        if (!(v > 0.0))
          throw std::invalid_argument("ExperimentSpec: diagonal spectrum must be positive");
    }
    if (const auto* p = std::get_if<Poisson2dProblem>(&problem)) {
      if (p->grid_side < 2)
        throw std::invalid_argument("ExperimentSpec: poisson2d grid_side must be >= 2");
    }
    if (const auto* s = std::get_if<StrictlyConvex2Problem>(&problem)) {
      if (s->n == 0) throw std::invalid_argument("ExperimentSpec: strictly_convex_2 needs n >= 1");
    }
    if (const auto* l = std::get_if<LogisticProblem>(&problem)) {
      if (l->p == 0 || l->n <= l->p)
        throw std::invalid_argument("ExperimentSpec: logistic needs n > p >= 1");
      if (!(l->kappa > 0.0))
        throw std::invalid_argument("ExperimentSpec: logistic kappa must be positive");
    }
    if (method == MethodKind::quad_lba_djm && !(beta_max > 0.0))
      throw std::invalid_argument("ExperimentSpec: beta_max must be positive");
  }
};

struct RunReport {
  std::string label;
  std::string problem;
  std::string method;
  std::uint64_t seed = 0;
  RunSummary summary{};
  std::string status = "ok";  // "ok" or "error"
  std::string error;          // message when status is "error"
  double wall_time_seconds = 0.0;
  std::string trace_csv;   // path of the written trace, empty if none
  std::string report_json; // path of the written report, empty if none
};

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

namespace detail {

// Deterministic shortest-faithful double formatting for CSV cells.
inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kTraceCsvHeader =
    "k,residual_norm,steplength,relaxation_used,eig_residual,event,"
    "cumulative_matvecs,cumulative_grad_evals";

inline std::string trace_to_csv(const ConvergenceTrace& trace) {
  std::string out{kTraceCsvHeader};
  out += '\n';
  for (const IterationRecord& rec : trace.records) {
    out += std::to_string(rec.k);
    out += ',';
    out += detail::csv_double(rec.residual_norm);
    out += ',';
    out += detail::csv_double(rec.steplength);
    out += ',';
    out += detail::csv_double(rec.relaxation_used);
    out += ',';
    out += detail::csv_double(rec.eig_residual);
    out += ',';
    out += to_string(rec.event);
    out += ',';
    out += std::to_string(rec.cumulative_matvecs);
    out += ',';
    out += std::to_string(rec.cumulative_grad_evals);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json problem_to_json(const ProblemDescriptor& p) {
  nlohmann::ordered_json j;
  j["type"] = problem_name(p);
  if (const auto* g = std::get_if<Poisson2dProblem>(&p)) {
    j["grid_side"] = g->grid_side;
  } else if (const auto* d = std::get_if<DiagonalProblem>(&p)) {
    j["spectrum"] = d->spectrum;
  } else if (const auto* s = std::get_if<StrictlyConvex2Problem>(&p)) {
    j["n"] = s->n;
  } else if (const auto* l = std::get_if<LogisticProblem>(&p)) {
    j["n"] = l->n;
    j["p"] = l->p;
    j["kappa"] = l->kappa;
  }
  return j;
}

inline nlohmann::ordered_json config_to_json(const SolverConfig& c) {
  nlohmann::ordered_json adaptive;
  switch (c.adaptive_policy.kind) {
    case AdaptivePolicy::Kind::none:
      adaptive["kind"] = "none";
      break;
    case AdaptivePolicy::Kind::fixed_reltol:
      adaptive["kind"] = "fixed_reltol";
      adaptive["value"] = c.adaptive_policy.value;
      break;
    case AdaptivePolicy::Kind::residual_power:
      adaptive["kind"] = "residual_power";
      adaptive["value"] = c.adaptive_policy.value;
      break;
  }
  return nlohmann::ordered_json{{"sigma", c.sigma},
                                {"eps_eig", c.eps_eig},
                                {"lanczos_m", c.lanczos_m},
                                {"adaptive", std::move(adaptive)},
                                {"rel_tol", c.rel_tol},
                                {"grad_tol", c.grad_tol},
                                {"max_iter", c.max_iter},
                                {"seed", c.seed}};
}

inline nlohmann::ordered_json line_search_to_json(const LineSearchParams& p) {
  return nlohmann::ordered_json{{"gamma", p.gamma},
                                {"sigma1", p.sigma1},
                                {"sigma2", p.sigma2},
                                {"eta0", p.eta0},
                                {"eta_exponent", p.eta_exponent}};
}

inline nlohmann::ordered_json report_to_json(const ExperimentSpec& spec,
                                             const RunReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["label"] = report.label;
  j["problem"] = problem_to_json(spec.problem);
  j["method"] = report.method;
  j["config"] = config_to_json(spec.config);
  if (!method_is_quadratic(spec.method))
    j["line_search"] = line_search_to_json(spec.line_search);
  if (spec.method == MethodKind::quad_lba_djm) j["beta_max"] = spec.beta_max;
  j["summary"] = {{"iterations", report.summary.iterations},
                  {"total_matvecs", report.summary.total_matvecs},
                  {"total_grad_evals", report.summary.total_grad_evals},
                  {"lanczos_calls", report.summary.lanczos_calls},
                  {"total_backtracks", report.summary.total_backtracks},
                  {"converged", report.summary.converged},
                  {"final_residual_norm", report.summary.final_residual_norm}};
  j["status"] = report.status;
  if (!report.error.empty()) j["error"] = report.error;
  j["trace_csv"] = report.trace_csv;
  j["wall_time_seconds"] = report.wall_time_seconds;
  return j;
}

// ---------------------------------------------------------------------------
// JSON configuration parsing; CLI flags later override parsed fields.
// ---------------------------------------------------------------------------

inline ProblemDescriptor problem_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "poisson2d")
    return Poisson2dProblem{j.at("grid_side").get<std::size_t>()};
  if (type == "diagonal")
    return DiagonalProblem{j.at("spectrum").get<std::vector<double>>()};
  if (type == "strictly_convex_2")
    return StrictlyConvex2Problem{j.at("n").get<std::size_t>()};
  if (type == "logistic")
    return LogisticProblem{j.at("n").get<std::size_t>(), j.at("p").get<std::size_t>(),
                           j.at("kappa").get<double>()};
  throw std::invalid_argument("unknown problem type: " + type);
}

inline AdaptivePolicy adaptive_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") return AdaptivePolicy::none();
  if (kind == "fixed_reltol")
    return AdaptivePolicy::fixed_reltol(j.at("value").get<double>());
  if (kind == "residual_power")
    return AdaptivePolicy::residual_power(j.at("value").get<double>());
  throw std::invalid_argument("unknown adaptive policy kind: " + kind);
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  spec.problem = problem_from_json(j.at("problem"));
  spec.method =
      parse_method(j.at("method").get<std::string>(), problem_is_quadratic(spec.problem));
  if (j.contains("label")) spec.label = j.at("label").get<std::string>();
  SolverConfig& c = spec.config;
  if (j.contains("sigma")) c.sigma = j.at("sigma").get<double>();
  if (j.contains("eps_eig")) c.eps_eig = j.at("eps_eig").get<double>();
  if (j.contains("lanczos_m")) c.lanczos_m = j.at("lanczos_m").get<std::size_t>();
  if (j.contains("adaptive")) c.adaptive_policy = adaptive_from_json(j.at("adaptive"));
  if (j.contains("rel_tol")) c.rel_tol = j.at("rel_tol").get<double>();
  if (j.contains("grad_tol")) c.grad_tol = j.at("grad_tol").get<double>();
  if (j.contains("max_iter")) c.max_iter = j.at("max_iter").get<std::size_t>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("beta_max")) spec.beta_max = j.at("beta_max").get<double>();
  if (j.contains("line_search")) {
    const nlohmann::json& ls = j.at("line_search");
    LineSearchParams& p = spec.line_search;
    if (ls.contains("gamma")) p.gamma = ls.at("gamma").get<double>();
    if (ls.contains("sigma1")) p.sigma1 = ls.at("sigma1").get<double>();
    if (ls.contains("sigma2")) p.sigma2 = ls.at("sigma2").get<double>();
    if (ls.contains("eta0")) p.eta0 = ls.at("eta0").get<double>();
    if (ls.contains("eta_exponent")) p.eta_exponent = ls.at("eta_exponent").get<double>();
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Atomic file output
// ---------------------------------------------------------------------------

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

namespace detail {

// All run randomness (right-hand sides, starting points, data sets, damping
// draws) is derived from the one spec seed through PCG streams.
inline ConvergenceTrace dispatch_run(const ExperimentSpec& spec) {
  const SolverConfig& config = spec.config;
  if (method_is_quadratic(spec.method)) {
    SymmetricOperator op =
        std::holds_alternative<Poisson2dProblem>(spec.problem)
            ? poisson2d(std::get<Poisson2dProblem>(spec.problem).grid_side)
            : SymmetricOperator::diagonal(std::get<DiagonalProblem>(spec.problem).spectrum);
    Pcg64 rng(config.seed);
    std::vector<double> b = random_vector(rng, op.dim());
    const std::vector<double> x0(op.dim(), 0.0);
    QuadraticProblem problem(std::move(op), std::move(b));
    switch (spec.method) {
      case MethodKind::quad_relaxed_sd:
        return relaxed_gradient_run(problem, GradientMethod::steepest_descent, config, x0);
      case MethodKind::quad_relaxed_mr:
        return relaxed_gradient_run(problem, GradientMethod::minimal_residual, config, x0);
      case MethodKind::quad_eig_accel:
        return eigenvector_acceleration_run(problem, config, x0);
      case MethodKind::quad_lba:
        return lba_run(problem, config, x0);
      case MethodKind::quad_lba_djm:
        return lba_djm_run(problem, config, spec.beta_max, x0);
      default:
        break;
    }
    throw std::logic_error("dispatch_run: unreachable quadratic method");
  }

  ConvexMethod method = ConvexMethod::mr_relaxed;
  if (spec.method == MethodKind::convex_eig_accel) method = ConvexMethod::eig_accel;
  if (spec.method == MethodKind::convex_lba) method = ConvexMethod::lba;
  if (const auto* s = std::get_if<StrictlyConvex2Problem>(&spec.problem)) {
    ConvexObjective obj = strictly_convex_2(s->n);
    Pcg64 rng(config.seed);
    const std::vector<double> x0 = random_vector(rng, s->n, 0.0, 3.0);
    return convex_solver_run(obj, method, config, spec.line_search, x0);
  }
  const auto& l = std::get<LogisticProblem>(spec.problem);
  ConvexObjective obj = logistic_loss(l.n, l.p, l.kappa, config.seed);
  const std::vector<double> x0(l.n, 1.0);
  return convex_solver_run(obj, method, config, spec.line_search, x0);
}

}  // namespace detail

// Runs one experiment.  Solver failures are captured in the report (status
// "error") rather than thrown, so batch runs continue; an invalid spec still
// throws.  When spec.output_dir is set, <label>.trace.csv and
// <label>.report.json are written there atomically.
inline RunReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  RunReport report;
  report.label = spec.label;
  report.problem = problem_name(spec.problem);
  report.method = to_string(spec.method);
  report.seed = spec.config.seed;

  const auto start = std::chrono::steady_clock::now();
  std::string csv;
  try {
    ConvergenceTrace trace = detail::dispatch_run(spec);
    report.summary = trace.summary;
    csv = trace_to_csv(trace);
  } catch (const std::exception& e) {
    report.status = "error";
    report.error = e.what();
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!spec.output_dir.empty()) {
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    if (report.status == "ok") {
      const std::filesystem::path csv_path = dir / (spec.label + ".trace.csv");
      write_file_atomic(csv_path, csv);
      report.trace_csv = csv_path.string();
    }
    const std::filesystem::path json_path = dir / (spec.label + ".report.json");
    write_file_atomic(json_path, report_to_json(spec, report).dump(2) + "\n");
    report.report_json = json_path.string();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

inline constexpr const char* kSweepCsvHeader =
    "label,iterations,matvecs,lanczos_calls,converged";

struct SweepResult {
  std::vector<RunReport> reports;
  std::string aggregate_csv;       // text of the aggregated table
  std::string aggregate_csv_path;  // written file, empty if none
};

// Runs every spec (sequentially by default; `parallel` opts in to one async
// task per spec — runs are state-isolated so this is safe).  Per-spec failures
// are recorded and the sweep continues.  When out_dir is set the aggregate
// table is written there as sweep.csv.
inline SweepResult sweep(const std::vector<ExperimentSpec>& specs, bool parallel = false,
                         const std::string& out_dir = "") {
  if (specs.empty()) throw std::invalid_argument("sweep: empty spec list");

  const auto guarded_run = [](const ExperimentSpec& spec) {
    try {
      return run_experiment(spec);
    } catch (const std::exception& e) {
      RunReport report;
      report.label = spec.label;
      report.problem = problem_name(spec.problem);
      report.method = to_string(spec.method);
      report.seed = spec.config.seed;
      report.status = "error";
      report.error = e.what();
      return report;
    }
  };

  SweepResult result;
  if (parallel) {
    std::vector<std::future<RunReport>> futures;
    futures.reserve(specs.size());
    for (const ExperimentSpec& spec : specs)
      futures.push_back(std::async(std::launch::async, guarded_run, spec));
    for (auto& f : futures) result.reports.push_back(f.get());
  } else {
    for (const ExperimentSpec& spec : specs) result.reports.push_back(guarded_run(spec));
  }

  std::string csv{kSweepCsvHeader};
  csv += '\n';
  for (const RunReport& r : result.reports) {
    csv += r.label;
    csv += ',';
    csv += std::to_string(r.summary.iterations);
    csv += ',';
    csv += std::to_string(r.summary.total_matvecs);
    csv += ',';
    csv += std::to_string(r.summary.lanczos_calls);
    csv += ',';
    csv += r.summary.converged ? "true" : "false";
    csv += '\n';
  }
  result.aggregate_csv = std::move(csv);

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const std::filesystem::path path = dir / "sweep.csv";
    write_file_atomic(path, result.aggregate_csv);
    result.aggregate_csv_path = path.string();
  }
  return result;
}

inline std::vector<ExperimentSpec> sweep_specs_from_json(const nlohmann::json& j,
                                                         const std::string& out_dir = "") {
  if (!j.contains("runs") || !j.at("runs").is_array() || j.at("runs").empty())
    throw std::invalid_argument("sweep config: nonempty \"runs\" array required");
  std::vector<ExperimentSpec> specs;
  for (const nlohmann::json& run : j.at("runs")) {
    ExperimentSpec spec = experiment_from_json(run);
    spec.output_dir = out_dir;
    specs.push_back(std::move(spec));
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Spectral-laboratory runs (power-dynamics and two-mode subcommands)
// ---------------------------------------------------------------------------

struct PowerDynamicsSpec {
  std::string label = "power";
  ProblemDescriptor problem = DiagonalProblem{};  // diagonal or poisson2d
  ShiftPolicy policy = ShiftPolicy::random_uniform(0.8);
  SpectralNorm normalization = SpectralNorm::euclidean;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  std::vector<int> tracked;  // 1-based component indices
  std::string output_dir;
};

inline PowerDynamicsSpec power_dynamics_from_json(const nlohmann::json& j) {
  PowerDynamicsSpec spec;
  if (j.contains("label")) spec.label = j.at("label").get<std::string>();
  spec.problem = problem_from_json(j.at("problem"));
  if (!problem_is_quadratic(spec.problem))
    throw std::invalid_argument("power-dynamics: problem must be diagonal or poisson2d");
  const nlohmann::json& pol = j.at("policy");
  const std::string kind = pol.at("kind").get<std::string>();
  if (kind == "random_uniform")
    spec.policy = ShiftPolicy::random_uniform(pol.at("sigma").get<double>());
  else if (kind == "sd_derived")
    spec.policy = ShiftPolicy::sd_derived(pol.at("sigma").get<double>());
  else if (kind == "mr_derived")
    spec.policy = ShiftPolicy::mr_derived(pol.at("sigma").get<double>());
  else if (kind == "fixed_sequence")
    spec.policy = ShiftPolicy::fixed_sequence(pol.at("shifts").get<std::vector<double>>());
  else
    throw std::invalid_argument("unknown shift policy kind: " + kind);
  if (j.contains("normalization")) {
    const std::string n = j.at("normalization").get<std::string>();
    if (n == "euclidean")
      spec.normalization = SpectralNorm::euclidean;
    else if (n == "a_norm")
      spec.normalization = SpectralNorm::a_norm;
    else
      throw std::invalid_argument("unknown normalization: " + n);
  }
  if (j.contains("steps")) spec.steps = j.at("steps").get<std::size_t>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("tracked")) spec.tracked = j.at("tracked").get<std::vector<int>>();
  return spec;
}

// Runs the shifted-power laboratory and (optionally) writes
// <label>.trace.csv with columns k, shift, scale, rayleigh and one
// beta_<i> magnitude column per tracked index; row 0 is the starting state,
// whose shift/scale cells are nan.
inline SpectralTrace run_power_dynamics(const PowerDynamicsSpec& spec) {
  SymmetricOperator op =
      std::holds_alternative<Poisson2dProblem>(spec.problem)
          ? poisson2d(std::get<Poisson2dProblem>(spec.problem).grid_side)
          : SymmetricOperator::diagonal(std::get<DiagonalProblem>(spec.problem).spectrum);
  std::vector<EigenPair> pairs;
  if (const auto* d = std::get_if<DiagonalProblem>(&spec.problem)) {
    // Eigenvectors of a diagonal operator are coordinate axes; sort the axes
    // by eigenvalue so each coordinate is used exactly once even under ties.
    const std::size_t n = d->spectrum.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return d->spectrum[a] < d->spectrum[b];
    });
    pairs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pairs[i].index = static_cast<int>(i + 1);
      pairs[i].value = d->spectrum[order[i]];
      pairs[i].vector.assign(n, 0.0);
      pairs[i].vector[order[i]] = 1.0;
    }
  } else {
    pairs = poisson2d_eigenpairs(std::get<Poisson2dProblem>(spec.problem).grid_side);
  }
  std::vector<int> tracked = spec.tracked;
  if (tracked.empty())
    tracked = {1, static_cast<int>(op.dim())};  // default: the two extremes

  SpectralTrace trace = run_shifted_power(op, pairs, spec.policy, spec.steps, spec.seed,
                                          tracked, spec.normalization);
  if (!spec.output_dir.empty()) {
    std::string csv = "k,shift,scale,rayleigh";
    for (int idx : tracked) csv += ",beta_" + std::to_string(idx);
    csv += '\n';
    for (std::size_t k = 0; k < trace.magnitudes.size(); ++k) {
      csv += std::to_string(k);
      const double shift = k == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : trace.shifts[k - 1];
      const double scale = k == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : trace.scales[k - 1];
      csv += ',';
      csv += detail::csv_double(shift);
      csv += ',';
      csv += detail::csv_double(scale);
      csv += ',';
      csv += detail::csv_double(trace.rayleigh[k]);
      for (double m : trace.magnitudes[k]) {
        csv += ',';
        csv += detail::csv_double(m);
      }
      csv += '\n';
    }
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (spec.label + ".trace.csv"), csv);

    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["label"] = spec.label;
    j["problem"] = problem_to_json(spec.problem);
    j["normalization"] = to_string(spec.normalization);
    j["steps"] = spec.steps;
    j["seed"] = spec.seed;
    j["tracked"] = tracked;
    nlohmann::ordered_json final_mags = nlohmann::ordered_json::object();
    for (std::size_t t = 0; t < tracked.size(); ++t)
      final_mags["beta_" + std::to_string(tracked[t])] = trace.magnitudes.back()[t];
    j["final_magnitudes"] = std::move(final_mags);
    j["final_rayleigh"] = trace.rayleigh.back();
    write_file_atomic(dir / (spec.label + ".report.json"), j.dump(2) + "\n");
  }
  return trace;
}

struct TwoModeSpec {
  std::string label = "two_mode";
  double lambda1 = 1.0;
  double lambdan = 10.0;
  double sigma = 1.0;
  double lambda_bar = 5.5;  // initial Rayleigh quotient (sets |beta1|, |betan|)
  std::size_t steps = 100;
  std::string output_dir;
};

inline TwoModeSpec two_mode_from_json(const nlohmann::json& j) {
  TwoModeSpec spec;
  if (j.contains("label")) spec.label = j.at("label").get<std::string>();
  spec.lambda1 = j.at("lambda1").get<double>();
  spec.lambdan = j.at("lambdan").get<double>();
  spec.sigma = j.at("sigma").get<double>();
  spec.lambda_bar = j.at("lambda_bar").get<double>();
  if (j.contains("steps")) spec.steps = j.at("steps").get<std::size_t>();
  return spec;
}

// Iterates the exact two-mode recurrence and (optionally) writes
// <label>.trace.csv with columns k, beta1, betan, rayleigh, offset, scale;
// the scale cell of row 0 is nan (no step has been taken yet).
inline std::vector<TwoModeState> run_two_mode(const TwoModeSpec& spec) {
  TwoModeState state =
      TwoModeState::from_rayleigh(spec.lambda_bar, spec.lambda1, spec.lambdan, spec.sigma);
  std::vector<TwoModeState> states{state};
  std::vector<double> scales;
  for (std::size_t k = 0; k < spec.steps; ++k) {
    scales.push_back(two_mode_scale(states.back()));
    states.push_back(two_mode_step(states.back()));
  }
  if (!spec.output_dir.empty()) {
    std::string csv = "k,beta1,betan,rayleigh,offset,scale\n";
    for (std::size_t k = 0; k < states.size(); ++k) {
      const TwoModeState& s = states[k];
      csv += std::to_string(k);
      csv += ',';
      csv += detail::csv_double(s.beta1);
      csv += ',';
      csv += detail::csv_double(s.betan);
      csv += ',';
      csv += detail::csv_double(s.rayleigh());
      csv += ',';
      csv += detail::csv_double(s.offset());
      csv += ',';
      csv += detail::csv_double(k == 0 ? std::numeric_limits<double>::quiet_NaN()
                                       : scales[k - 1]);
      csv += '\n';
    }
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (spec.label + ".trace.csv"), csv);

    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["label"] = spec.label;
    j["lambda1"] = spec.lambda1;
    j["lambdan"] = spec.lambdan;
    j["sigma"] = spec.sigma;
    j["initial_rayleigh"] = spec.lambda_bar;
    j["steps"] = spec.steps;
    j["final_rayleigh"] = states.back().rayleigh();
    j["final_offset"] = states.back().offset();
    write_file_atomic(dir / (spec.label + ".report.json"), j.dump(2) + "\n");
  }
  return states;
}

}  // namespace relgrad
