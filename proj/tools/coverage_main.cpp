#include <coverage/run_io.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace {

int run_cmd(const std::string& scenario_path, const std::string& mode_name,
            const std::string& out_dir, const std::optional<std::uint64_t>& seed,
            const std::optional<int>& max_iters) {
  const coverage::Scenario scenario = coverage::load_scenario(scenario_path);
  const coverage::RunMode mode =
      mode_name == "static" ? coverage::RunMode::Static : coverage::RunMode::Tracking;
  coverage::RunOverrides overrides;
  overrides.seed = seed;
  overrides.max_iters = max_iters;
  const coverage::IterationTrace trace =
      coverage::run_scenario(scenario, mode, out_dir, overrides);
  const int budget = max_iters.value_or(scenario.descent.max_iters);
  const char* status = trace.stationary ? "stationary"
                       : trace.stalled  ? "stalled"
                       : trace.iterations >= budget ? "iteration budget exhausted"
                                                    : "movie complete";
  std::printf("%s: %d iterations, objective %.12g -> %.12g, %s\n", mode_name.c_str(),
              trace.iterations, trace.records.front().objective,
              trace.records.back().objective, status);
  return 0;
}

int validate_cmd(const std::string& scenario_path) {
  const coverage::Scenario scenario = coverage::load_scenario(scenario_path);
  std::printf("valid: %zu sensors, %zu frames\n", scenario.sensors.size(),
              scenario.movie.frames.size());
  return 0;
}

int gradient_check_cmd(const std::string& scenario_path, int tuples_per_sensor, double fd_step,
                       double tolerance) {
  const coverage::Scenario scenario = coverage::load_scenario(scenario_path);
  const coverage::GradientCheckReport report =
      coverage::gradient_check(scenario, tuples_per_sensor, fd_step, coverage::default_exec());
  std::printf("gradient check: %d tuples, max relative error %.12g\n", report.tuples,
              report.max_relative_error);
  return report.max_relative_error < tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coverage control for orientation-steered cameras"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string mode = "static";
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;

  CLI::App* run = app.add_subcommand("run", "Run a scenario and write the result files");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--mode", mode, "static or tracking")
      ->check(CLI::IsMember({"static", "tracking"}));
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--max-iters", max_iters, "Override the iteration budget");

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario file against the schema");
  validate->add_option("--scenario", scenario_path, "Scenario JSON file")->required();

  int tuples_per_sensor = 70;
  double fd_step = 1e-6;
  double tolerance = 1e-5;
  CLI::App* check = app.add_subcommand(
      "gradient-check", "Compare analytic gradients with finite differences");
  check->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  check->add_option("--tuples", tuples_per_sensor, "Tuples per sensor");
  check->add_option("--step", fd_step, "Finite-difference step");
  check->add_option("--tolerance", tolerance, "Maximum accepted relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_cmd(scenario_path, mode, out_dir, seed, max_iters);
    if (validate->parsed()) return validate_cmd(scenario_path);
    return gradient_check_cmd(scenario_path, tuples_per_sensor, fd_step, tolerance);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
