#include <benchmark/benchmark.h>

#include <coverage/controller.hpp>

#include <cmath>
#include <vector>

using coverage::AmbientMatrix;
using coverage::Blob;
using coverage::Environment;
using coverage::Exec;
using coverage::FovPolytope;
using coverage::GaussianComponent;
using coverage::MixtureDensity;
using coverage::ObjectiveParams;
using coverage::Rotation;
using coverage::Sensor;
using coverage::SensorConfig;
using coverage::TruthFrame;
using coverage::Vec2;
using coverage::Vec3;

namespace {

Sensor make_camera(int id, const Vec3& position, int cols, int rows) {
  SensorConfig c;
  c.id = id;
  c.position = position;
  c.focal_length = 3.4e-3;
  c.plane_width = 6.4e-3;
  c.plane_height = 4.8e-3;
  c.cols = cols;
  c.rows = rows;
  return coverage::make_sensor(c);
}

Environment make_ground() {
  return coverage::make_environment(
      10.0, {Vec2(-12, -9), Vec2(12, -9), Vec2(12, 9), Vec2(-12, 9)}, 1.05);
}

MixtureDensity make_density() {
  std::vector<GaussianComponent> comps;
  for (int j = 0; j < 3; ++j) {
    GaussianComponent c;
    c.alpha = 0.2;
    c.mean = Vec2((j - 1) * 1.2e-3, (j - 1) * 0.7e-3);
    c.weight = Eigen::Vector2d(4e5 + j * 1e5, 3e5).asDiagonal();
    comps.push_back(c);
  }
  return MixtureDensity(1.0, std::move(comps));
}

TruthFrame make_frame() {
  TruthFrame frame;
  frame.blobs = {Blob{Vec2(-2.0, 1.0), 0.8, 0.7}, Blob{Vec2(3.0, -1.5), 0.6, 0.5}};
  return frame;
}

Rotation tilted() { return Rotation(coverage::rodrigues(Vec3(0.08, -0.05, 0.2))); }

void bench_objective_single(benchmark::State& state, Exec exec) {
  const Sensor sensor = make_camera(0, Vec3(0, 0, 6), 200, 150);
  const Environment env = make_ground();
  const ObjectiveParams params =
      coverage::make_objective_params(Vec3(0.01, 0.01, 1.0).asDiagonal());
  const MixtureDensity density = make_density();
  const Rotation r = tilted();
  for (auto _ : state)
    benchmark::DoNotOptimize(coverage::objective_single(sensor, env, params, density, r, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(sensor.eval_ids.size()));
}

void bench_gradient_single(benchmark::State& state, Exec exec) {
  const Sensor sensor = make_camera(0, Vec3(0, 0, 6), 200, 150);
  const Environment env = make_ground();
  const ObjectiveParams params =
      coverage::make_objective_params(Vec3(0.01, 0.01, 1.0).asDiagonal());
  const MixtureDensity density = make_density();
  const Rotation r = tilted();
  for (auto _ : state) {
    const coverage::GradientReport rep =
        coverage::gradient_single(sensor, env, params, density, r, exec);
    benchmark::DoNotOptimize(rep.ambient);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(sensor.eval_ids.size()));
}

void bench_active_pixels(benchmark::State& state, Exec exec) {
  const Environment env = make_ground();
  const AmbientMatrix w = Vec3(0.01, 0.01, 1.0).asDiagonal();
  std::vector<Sensor> sensors;
  std::vector<Rotation> rotations;
  for (int i = 0; i < 3; ++i) {
    sensors.push_back(make_camera(i, Vec3(i * 3.0 - 3.0, 0.0, 6.0), 150, 150));
    rotations.push_back(Rotation(coverage::rodrigues(Vec3(0.05 * i, -0.04, 0.0))));
  }
  std::vector<FovPolytope> fovs;
  for (std::size_t i = 0; i < sensors.size(); ++i)
    fovs.push_back(coverage::fov(sensors[i], env, rotations[i]));
  for (auto _ : state) {
    const std::vector<std::uint8_t> mask = coverage::active_pixels(
        0, sensors, rotations, fovs, env, w, sensors[0].eval_ids, exec);
    benchmark::DoNotOptimize(mask.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(sensors[0].eval_ids.size()));
}

void bench_synth_pixels(benchmark::State& state, Exec exec) {
  const Sensor sensor = make_camera(0, Vec3(0, 0, 6), 200, 150);
  const Environment env = make_ground();
  const TruthFrame frame = make_frame();
  coverage::SynthOptions opts;
  opts.noise_sigma = 0.02;
  const Rotation r = tilted();
  for (auto _ : state) {
    const coverage::PixelData data =
        coverage::synth_pixel_data(frame, sensor, env, r, opts, 42, exec);
    benchmark::DoNotOptimize(data.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(sensor.pixels.size()));
}

void bench_evaluation_objective(benchmark::State& state, Exec exec) {
  const Environment env = make_ground();
  const ObjectiveParams params =
      coverage::make_objective_params(Vec3(0.01, 0.01, 1.0).asDiagonal());
  const TruthFrame frame = make_frame();
  std::vector<Sensor> sensors;
  std::vector<Rotation> rotations;
  for (int i = 0; i < 4; ++i) {
    sensors.push_back(
        make_camera(i, Vec3((i % 2) * 6.0 - 3.0, (i / 2) * 4.0 - 2.0, 6.0), 100, 100));
    rotations.push_back(Rotation(coverage::rodrigues(Vec3(0.03 * i, -0.02 * i, 0.0))));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(
        coverage::evaluation_objective(sensors, rotations, env, params, 1.0, frame, exec));
}

}  // namespace

BENCHMARK_CAPTURE(bench_objective_single, serial, Exec::Serial);
BENCHMARK_CAPTURE(bench_objective_single, parallel, Exec::Parallel);
BENCHMARK_CAPTURE(bench_gradient_single, serial, Exec::Serial);
BENCHMARK_CAPTURE(bench_gradient_single, parallel, Exec::Parallel);
BENCHMARK_CAPTURE(bench_active_pixels, serial, Exec::Serial);
BENCHMARK_CAPTURE(bench_active_pixels, parallel, Exec::Parallel);
BENCHMARK_CAPTURE(bench_synth_pixels, serial, Exec::Serial);
BENCHMARK_CAPTURE(bench_synth_pixels, parallel, Exec::Parallel);
BENCHMARK_CAPTURE(bench_evaluation_objective, serial, Exec::Serial);
BENCHMARK_CAPTURE(bench_evaluation_objective, parallel, Exec::Parallel);

BENCHMARK_MAIN();
