#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <coverage/run_io.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

using coverage::Scenario;
using coverage::ScenarioError;

namespace {

std::string quartet_text() {
  return R"({
    "seed": 7,
    "environment": {
      "gamma": 10.0,
      "mission": [[-15.0, -11.5], [15.0, -11.5], [15.0, 11.5], [-15.0, 11.5]],
      "phi_bar": 1.05
    },
    "objective": {"w_diag": [0.01, 0.01, 1.0], "psi_bar": 1.0, "components": 3, "eval_stride": 3},
    "sensors": [
      {"id": 0, "position": [-6.0, -4.5, 6.0], "focal_length": 0.0034,
       "plane_width": 0.0064, "plane_height": 0.0048, "cols": 33, "rows": 33},
      {"id": 1, "position": [6.0, -4.5, 6.0], "focal_length": 0.0034,
       "plane_width": 0.0064, "plane_height": 0.0048, "cols": 33, "rows": 33,
       "axes": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]}
    ],
    "descent": {"rule": "armijo", "grad_tol": 600.0, "max_iters": 500},
    "movie": {
      "frames": [{"blobs": [{"center": [-5.5, -4.1], "radius": 0.5, "importance": 0.8}]}]
    }
  })";
}

std::string tiny_text() {
  return R"({
    "environment": {
      "gamma": 10.0,
      "mission": [[-4.0, -3.0], [4.0, -3.0], [4.0, 3.0], [-4.0, 3.0]]
    },
    "objective": {"w_diag": [0.01, 0.01, 1.0], "components": 1},
    "sensors": [
      {"id": 0, "position": [0.0, 0.0, 6.0], "focal_length": 0.0034,
       "plane_width": 0.0016, "plane_height": 0.0012, "cols": 5, "rows": 4}
    ],
    "descent": {"grad_tol": 1.0, "max_iters": 5},
    "movie": {"frames": [{"blobs": [{"center": [0.6, 0.4], "radius": 0.7, "importance": 0.7}]}]}
  })";
}

std::string error_for(const std::string& text) {
  try {
    coverage::parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

bool same_structure(const Scenario& a, const Scenario& b) {
  return coverage::serialize_scenario(a) == coverage::serialize_scenario(b);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

int columns(const std::string& line) {
  return static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("a full scenario parses with every field in place") {
  const Scenario s = coverage::parse_scenario(quartet_text());
  CHECK(s.seed == 7);
  CHECK(s.gamma == 10.0);
  REQUIRE(s.mission.size() == 4);
  CHECK(s.phi_bar == 1.05);
  CHECK(s.w_diag == coverage::Vec3(0.01, 0.01, 1.0));
  CHECK(s.psi_bar == 1.0);
  CHECK(s.components == 3);
  CHECK(s.eval_stride == 3);
  REQUIRE(s.sensors.size() == 2);
  CHECK(s.sensors[0].focal_length == 0.0034);
  CHECK(s.sensors[0].eval_stride == 3);
  CHECK(!s.sensors[0].axes.has_value());
  REQUIRE(s.sensors[1].axes.has_value());
  CHECK(!s.sensors[1].axes->single_axis());
  CHECK(s.descent.grad_tol == 600.0);
  CHECK(s.descent.max_iters == 500);
  REQUIRE(s.movie.frames.size() == 1);
  REQUIRE(s.movie.frames[0].blobs.size() == 1);
  CHECK(s.movie.frames[0].blobs[0].radius == 0.5);

  const std::vector<coverage::Sensor> sensors = coverage::build_sensors(s);
  REQUIRE(sensors.size() == 2);
  CHECK(sensors[0].eval_ids.size() == 121);  // 33x33 grid sampled at stride 3
}

TEST_CASE("defaults fill every omitted field") {
  const Scenario s = coverage::parse_scenario(tiny_text());
  CHECK(s.seed == 0);
  CHECK(s.phi_bar == 1.05);
  CHECK(s.psi_bar == 1.0);
  CHECK(s.eval_stride == 1);
  CHECK(s.sensors[0].weight_rule == coverage::WeightRule::VertexRatio);
  CHECK((s.initial[0].matrix() - coverage::AmbientMatrix::Identity()).norm() == 0.0);
  CHECK(std::holds_alternative<coverage::ArmijoStep>(s.descent.rule));
  CHECK(s.movie.synth.binarize == false);
  CHECK(s.movie.synth.threshold == 1e-3);
  CHECK(s.movie.synth.noise_sigma == 0.0);
}

TEST_CASE("schema violations name the offending field") {
  CHECK(error_for(R"({"sensors": [], "movie": {}})").find("environment") != std::string::npos);

  std::string no_gamma = quartet_text();
  no_gamma.replace(no_gamma.find("\"gamma\""), 7, "\"gamma_\"");
  CHECK(error_for(no_gamma).find("environment.gamma: missing") != std::string::npos);

  std::string bad_focal = quartet_text();
  bad_focal.replace(bad_focal.find("0.0034"), 6, "-0.003");
  CHECK(error_for(bad_focal).find("sensors[0].focal_length") != std::string::npos);

  std::string dup_id = quartet_text();
  dup_id.replace(dup_id.find("\"id\": 1"), 7, "\"id\": 0");
  CHECK(error_for(dup_id).find("sensors[1].id") != std::string::npos);

  std::string bad_rule = quartet_text();
  bad_rule.replace(bad_rule.find("\"armijo\""), 8, "\"newton\"");
  CHECK(error_for(bad_rule).find("descent.rule") != std::string::npos);

  CHECK(error_for("{nope").find("not valid JSON") != std::string::npos);
}

TEST_CASE("a non-rotation initial matrix is rejected with its field path") {
  std::string text = quartet_text();
  const std::string inject =
      "\"initial_rotation\": [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]], \"id\": 0";
  text.replace(text.find("\"id\": 0"), 7, inject);
  CHECK(error_for(text).find("sensors[0].initial_rotation") != std::string::npos);
}

TEST_CASE("serialization round-trips structurally") {
  const Scenario a = coverage::parse_scenario(quartet_text());
  const Scenario b = coverage::parse_scenario(coverage::serialize_scenario(a));
  CHECK(same_structure(a, b));

  const Scenario t = coverage::parse_scenario(tiny_text());
  CHECK(same_structure(t, coverage::parse_scenario(coverage::serialize_scenario(t))));
}

TEST_CASE("save and load through a file preserve the scenario") {
  TempDir dir("coverage_scenario_io");
  std::filesystem::create_directories(dir.path);
  const Scenario a = coverage::parse_scenario(quartet_text());
  const std::filesystem::path file = dir.path / "scenario.json";
  coverage::save_scenario(a, file);
  CHECK(same_structure(a, coverage::load_scenario(file)));
  CHECK_THROWS_AS(coverage::load_scenario(dir.path / "missing.json"), ScenarioError);
}

TEST_CASE("a run writes the four result files with consistent shapes") {
  TempDir dir("coverage_run_files");
  const Scenario s = coverage::parse_scenario(tiny_text());
  const coverage::IterationTrace trace = coverage::run_scenario(
      s, coverage::RunMode::Static, dir.path, {}, coverage::Exec::Serial);

  const std::string trace_csv = slurp(dir.path / "trace.csv");
  const std::string rotations_csv = slurp(dir.path / "rotations.csv");
  const std::string fov_csv = slurp(dir.path / "fov.csv");
  const std::string summary = slurp(dir.path / "summary.json");

  CHECK(trace_csv.find("\r") == std::string::npos);
  const std::size_t rows = static_cast<std::size_t>(
      std::count(trace_csv.begin(), trace_csv.end(), '\n'));
  CHECK(rows == trace.records.size() + 1);

  std::istringstream lines(trace_csv);
  std::string line;
  while (std::getline(lines, line)) CHECK(columns(line) == 2 + 2 * 1);
  std::istringstream rot_lines(rotations_csv);
  while (std::getline(rot_lines, line)) CHECK(columns(line) == 1 + 9 * 1);
  std::istringstream fov_lines(fov_csv);
  while (std::getline(fov_lines, line)) CHECK(columns(line) == 1 + 8 * 1);

  CHECK(summary.find("\"mode\": \"static\"") != std::string::npos);
  CHECK(summary.find("\"iterations\": ") != std::string::npos);
  CHECK(summary.find("\"stationary\": ") != std::string::npos);
}

TEST_CASE("equal seeds rerun to identical bytes and overrides change them") {
  TempDir a("coverage_run_a");
  TempDir b("coverage_run_b");
  TempDir c("coverage_run_c");
  Scenario s = coverage::parse_scenario(tiny_text());
  s.movie.synth.noise_sigma = 0.05;  // make the seed actually matter
  coverage::run_scenario(s, coverage::RunMode::Static, a.path, {}, coverage::Exec::Serial);
  coverage::run_scenario(s, coverage::RunMode::Static, b.path, {}, coverage::Exec::Serial);
  for (const char* name : {"trace.csv", "rotations.csv", "fov.csv", "summary.json"})
    CHECK(slurp(a.path / name) == slurp(b.path / name));

  coverage::RunOverrides overrides;
  overrides.seed = 99;
  coverage::run_scenario(s, coverage::RunMode::Static, c.path, overrides,
                         coverage::Exec::Serial);
  CHECK(slurp(a.path / "trace.csv") != slurp(c.path / "trace.csv"));
  CHECK(slurp(c.path / "summary.json").find("\"seed\": 99") != std::string::npos);

  coverage::RunOverrides capped;
  capped.max_iters = 2;
  const coverage::IterationTrace t = coverage::run_scenario(
      s, coverage::RunMode::Static, c.path, capped, coverage::Exec::Serial);
  CHECK(t.iterations <= 2);
}

TEST_CASE("tracking mode records one row per frame") {
  TempDir dir("coverage_run_tracking");
  Scenario s = coverage::parse_scenario(tiny_text());
  coverage::TruthFrame second = s.movie.frames[0];
  second.blobs[0].center = coverage::Vec2(0.2, 0.1);
  s.movie.frames.push_back(second);
  const coverage::IterationTrace trace = coverage::run_scenario(
      s, coverage::RunMode::Tracking, dir.path, {}, coverage::Exec::Serial);
  CHECK(trace.records.size() == s.movie.frames.size() + 1);
  const std::string summary = slurp(dir.path / "summary.json");
  CHECK(summary.find("\"mode\": \"tracking\"") != std::string::npos);
  CHECK(summary.find("\"frames\": 2") != std::string::npos);
}

TEST_CASE("the gradient check agrees with finite differences on scenario sensors") {
  const Scenario s = coverage::parse_scenario(tiny_text());
  const coverage::GradientCheckReport report =
      coverage::gradient_check(s, 40, 1e-6, coverage::Exec::Serial);
  CHECK(report.tuples >= 40);
  CHECK(report.max_relative_error < 1e-5);
  CHECK_THROWS_AS(coverage::gradient_check(s, 0, 1e-6, coverage::Exec::Serial),
                  std::invalid_argument);
}
