#pragma once

#include <coverage/scenario.hpp>

#include <filesystem>
#include <optional>

namespace coverage {

enum class RunMode { Static, Tracking };

/// Command-line knobs that take precedence over scenario fields.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;
};

/// Executes the scenario and writes four files into out_dir (created if
/// needed): trace.csv (iteration, objective, per-sensor gradient norms and
/// accepted steps), rotations.csv (nine row-major entries per sensor),
/// fov.csv (four footprint vertices per sensor as x,y pairs) and
/// summary.json (terminal state). Static mode descends against the first
/// movie frame with per-sweep density refits; tracking mode walks all
/// frames. Output bytes depend only on the scenario and the effective
/// seed. The COVERAGE_LOG environment variable turns on progress lines to
/// stderr: 1 for headlines, 2 to add one line per recorded iteration.
IterationTrace run_scenario(const Scenario& scenario, RunMode mode,
                            const std::filesystem::path& out_dir,
                            const RunOverrides& overrides = {}, Exec exec = default_exec());

struct GradientCheckReport {
  int tuples = 0;
  double max_relative_error = 0.0;
};

/// Compares the analytic ambient gradient against central finite
/// differences of its defining extension, for every scenario sensor at
/// randomized orientations, densities, and perturbation directions drawn
/// from the scenario seed.
GradientCheckReport gradient_check(const Scenario& scenario, int tuples_per_sensor,
                                   double fd_step, Exec exec);

}  // namespace coverage
