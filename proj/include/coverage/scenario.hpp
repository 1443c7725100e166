#pragma once

#include <coverage/controller.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace coverage {

/// Raised when a scenario file violates the schema; the message names the
/// offending field as a dotted path and states the constraint.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, as read from a scenario file. Units are SI
/// meters throughout. Defaults filled at load: seed 0, phi_bar 1.05,
/// psi_bar 1, components 3, eval_stride 1, weight_rule "vertex_ratio",
/// initial rotations identity, descent block as DescentConfig, movie
/// binarize false / threshold 1e-3 / noise_sigma 0.
struct Scenario {
  std::uint64_t seed = 0;

  double gamma = 0.0;
  std::vector<Vec2> mission;
  double phi_bar = 1.05;

  std::vector<SensorConfig> sensors;  // eval_stride copied from the objective block
  std::vector<Rotation> initial;      // aligned with sensors

  Vec3 w_diag = Vec3(0.01, 0.01, 1.0);
  double psi_bar = 1.0;
  int components = 3;
  int eval_stride = 1;

  DescentConfig descent;
  Movie movie;  // frames plus how sensors observe them
};

/// Parses and fully validates scenario JSON. Throws ScenarioError naming
/// the field on any violation.
Scenario parse_scenario(const std::string& text);

/// parse_scenario on the contents of a file.
Scenario load_scenario(const std::filesystem::path& path);

/// Scenario back to JSON with every field explicit; parsing the result
/// reproduces the scenario structurally.
std::string serialize_scenario(const Scenario& scenario);

void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// The validated pieces a run consumes.
Environment environment_of(const Scenario& scenario);
ObjectiveParams objective_params_of(const Scenario& scenario);
FitOptions fit_options_of(const Scenario& scenario);
std::vector<Sensor> build_sensors(const Scenario& scenario);

}  // namespace coverage
