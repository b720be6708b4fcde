// Command-line front end for the relgrad experiment harness.
//
//   relgrad solve-quadratic --config cfg.json [--seed N] [--out DIR]
//   relgrad solve-convex    --config cfg.json [--seed N] [--out DIR]
//   relgrad power-dynamics  --config cfg.json [--seed N] [--out DIR]
//   relgrad two-mode        --config cfg.json [--out DIR]
//   relgrad sweep           --config cfg.json [--seed N] [--out DIR] [--parallel]
//
// Config files are JSON; command-line flags override the corresponding config
// fields.  Exit codes: 0 converged (or lab run completed), 2 solver finished
// without converging, 1 any error.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "relgrad/harness.hpp"

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void print_report(const relgrad::RunReport& r) {
  std::cout << "label=" << r.label << " problem=" << r.problem
            << " method=" << r.method << " seed=" << r.seed
            << " status=" << r.status;
  if (r.status == "ok") {
    std::cout << " iterations=" << r.summary.iterations
              << " matvecs=" << r.summary.total_matvecs
              << " grad_evals=" << r.summary.total_grad_evals
              << " lanczos_calls=" << r.summary.lanczos_calls
              << " converged=" << (r.summary.converged ? "true" : "false")
              << " final_residual=" << r.summary.final_residual_norm;
  } else {
    std::cout << " error=\"" << r.error << '"';
  }
  if (!r.report_json.empty()) std::cout << " report=" << r.report_json;
  std::cout << '\n';
}

int report_exit_code(const relgrad::RunReport& r) {
  if (r.status != "ok") return kExitError;
  return r.summary.converged ? kExitConverged : kExitNotConverged;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool with_seed = true) {
  cmd->add_option("--config", flags.config_path, "JSON configuration file")->required();
  if (with_seed)
    cmd->add_option("--seed", flags.seed, "Seed override (takes precedence over config)");
  cmd->add_option("--out", flags.out, "Output directory for trace/report files");
}

// Resolves the output directory: flag overrides config field; empty means
// in-memory only.
std::string resolve_out(const nlohmann::json& config, const CommonFlags& flags) {
  if (flags.out) return *flags.out;
  if (config.contains("out")) return config.at("out").get<std::string>();
  return "";
}

int run_solve(const CommonFlags& flags, bool expect_quadratic) {
  const nlohmann::json config = load_config(flags.config_path);
  relgrad::ExperimentSpec spec = relgrad::experiment_from_json(config);
  if (relgrad::problem_is_quadratic(spec.problem) != expect_quadratic)
    throw std::invalid_argument(expect_quadratic
                                    ? "solve-quadratic: config describes a convex problem"
                                    : "solve-convex: config describes a quadratic problem");
  if (flags.seed) spec.config.seed = *flags.seed;
  spec.output_dir = resolve_out(config, flags);
  const relgrad::RunReport report = relgrad::run_experiment(spec);
  print_report(report);
  return report_exit_code(report);
}

int run_sweep(const CommonFlags& flags, bool parallel_flag) {
  const nlohmann::json config = load_config(flags.config_path);
  const std::string out_dir = resolve_out(config, flags);
  std::vector<relgrad::ExperimentSpec> specs =
      relgrad::sweep_specs_from_json(config, out_dir);
  if (flags.seed) {
    // A sweep compares configurations, so one base seed fans out: run i gets
    // base + i.  Runs keep distinct streams while the whole batch stays
    // reproducible from a single flag.
    for (std::size_t i = 0; i < specs.size(); ++i)
      specs[i].config.seed = *flags.seed + i;
  }
  const bool parallel =
      parallel_flag || (config.contains("parallel") && config.at("parallel").get<bool>());
  const relgrad::SweepResult result = relgrad::sweep(specs, parallel, out_dir);
  for (const relgrad::RunReport& r : result.reports) print_report(r);
  if (!result.aggregate_csv_path.empty())
    std::cout << "sweep_csv=" << result.aggregate_csv_path << '\n';
  bool any_error = false;
  bool all_converged = true;
  for (const relgrad::RunReport& r : result.reports) {
    if (r.status != "ok") any_error = true;
    if (!r.summary.converged) all_converged = false;
  }
  if (any_error) return kExitError;
  return all_converged ? kExitConverged : kExitNotConverged;
}

int run_power_dynamics(const CommonFlags& flags) {
  const nlohmann::json config = load_config(flags.config_path);
  relgrad::PowerDynamicsSpec spec = relgrad::power_dynamics_from_json(config);
  if (flags.seed) spec.seed = *flags.seed;
  spec.output_dir = resolve_out(config, flags);
  const relgrad::SpectralTrace trace = relgrad::run_power_dynamics(spec);
  std::cout << "label=" << spec.label << " steps=" << spec.steps
            << " normalization=" << relgrad::to_string(spec.normalization)
            << " final_rayleigh=" << trace.rayleigh.back();
  for (std::size_t t = 0; t < trace.tracked_indices.size(); ++t)
    std::cout << " beta_" << trace.tracked_indices[t] << '='
              << trace.magnitudes.back()[t];
  std::cout << '\n';
  return kExitConverged;
}

int run_two_mode(const CommonFlags& flags) {
  const nlohmann::json config = load_config(flags.config_path);
  relgrad::TwoModeSpec spec = relgrad::two_mode_from_json(config);
  spec.output_dir = resolve_out(config, flags);
  const std::vector<relgrad::TwoModeState> states = relgrad::run_two_mode(spec);
  const relgrad::TwoModeState& last = states.back();
  std::cout << "label=" << spec.label << " steps=" << spec.steps
            << " final_rayleigh=" << last.rayleigh() << " final_offset=" << last.offset()
            << '\n';
  return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relaxed gradient methods: solvers, spectral laboratory, sweeps"};
  app.require_subcommand(1);

  CommonFlags quad_flags, convex_flags, power_flags, two_mode_flags, sweep_flags;
  bool sweep_parallel = false;

  CLI::App* quad =
      app.add_subcommand("solve-quadratic", "Solve an SPD linear system (quadratic model)");
  add_common_flags(quad, quad_flags);
  CLI::App* convex =
      app.add_subcommand("solve-convex", "Minimize a smooth convex objective");
  add_common_flags(convex, convex_flags);
  CLI::App* power = app.add_subcommand(
      "power-dynamics", "Shifted/scaled power iteration with eigencomponent tracking");
  add_common_flags(power, power_flags);
  CLI::App* two_mode = app.add_subcommand(
      "two-mode", "Exact two-mode Rayleigh-quotient recurrence");
  add_common_flags(two_mode, two_mode_flags, /*with_seed=*/false);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a batch of experiments");
  add_common_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_flag("--parallel", sweep_parallel, "Run the batch concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0 through here; every real parse problem is an error.
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (quad->parsed()) return run_solve(quad_flags, /*expect_quadratic=*/true);
    if (convex->parsed()) return run_solve(convex_flags, /*expect_quadratic=*/false);
    if (power->parsed()) return run_power_dynamics(power_flags);
    if (two_mode->parsed()) return run_two_mode(two_mode_flags);
    if (sweep_cmd->parsed()) return run_sweep(sweep_flags, sweep_parallel);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
