#include <coverage/run_io.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace coverage {

namespace {

int log_verbosity() {
  const char* v = std::getenv("COVERAGE_LOG");
  if (!v || !*v || std::strcmp(v, "0") == 0) return 0;
  if (std::strcmp(v, "1") == 0) return 1;
  return 2;
}

void append_number(std::string& out, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  out += buf;
}

class OutputFile {
 public:
  OutputFile(const std::filesystem::path& path) : path_(path.string()) {
    file_ = std::fopen(path_.c_str(), "wb");
    if (!file_) throw std::runtime_error("run: cannot write " + path_);
  }
  ~OutputFile() {
    if (file_) std::fclose(file_);
  }
  OutputFile(const OutputFile&) = delete;
  OutputFile& operator=(const OutputFile&) = delete;

  void write(const std::string& text) {
    if (std::fwrite(text.data(), 1, text.size(), file_) != text.size())
      throw std::runtime_error("run: short write to " + path_);
  }
  void close() {
    if (std::fclose(file_) != 0) {
      file_ = nullptr;
      throw std::runtime_error("run: cannot finish writing " + path_);
    }
    file_ = nullptr;
  }

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

void write_trace_csv(const std::filesystem::path& path, const IterationTrace& trace,
                     std::span<const SensorConfig> sensors) {
  OutputFile out(path);
  std::string text = "iter,objective";
  for (const SensorConfig& s : sensors) text += ",grad_norm_" + std::to_string(s.id);
  for (const SensorConfig& s : sensors) text += ",step_" + std::to_string(s.id);
  text += "\n";
  for (const IterationRecord& rec : trace.records) {
    text += std::to_string(rec.iter);
    text += ",";
    append_number(text, rec.objective);
    for (double gn : rec.grad_norms) {
      text += ",";
      append_number(text, gn);
    }
    for (double s : rec.steps) {
      text += ",";
      append_number(text, s);
    }
    text += "\n";
  }
  out.write(text);
  out.close();
}

void write_rotations_csv(const std::filesystem::path& path, const IterationTrace& trace,
                         std::span<const SensorConfig> sensors) {
  OutputFile out(path);
  std::string text = "iter";
  for (const SensorConfig& s : sensors)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        text += ",r" + std::to_string(s.id) + "_" + std::to_string(r) + std::to_string(c);
  text += "\n";
  for (const IterationRecord& rec : trace.records) {
    text += std::to_string(rec.iter);
    for (const Rotation& rot : rec.rotations) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          text += ",";
          append_number(text, rot.matrix()(r, c));
        }
      }
    }
    text += "\n";
  }
  out.write(text);
  out.close();
}

void write_fov_csv(const std::filesystem::path& path, const IterationTrace& trace,
                   std::span<const SensorConfig> sensors) {
  OutputFile out(path);
  std::string text = "iter";
  for (const SensorConfig& s : sensors)
    for (int v = 0; v < 4; ++v)
      text += ",s" + std::to_string(s.id) + "_v" + std::to_string(v) + "x,s" +
              std::to_string(s.id) + "_v" + std::to_string(v) + "y";
  text += "\n";
  for (const IterationRecord& rec : trace.records) {
    text += std::to_string(rec.iter);
    for (const FovPolytope& f : rec.fovs) {
      for (const Vec3& v : f.vertices) {
        text += ",";
        append_number(text, v.x());
        text += ",";
        append_number(text, v.y());
      }
    }
    text += "\n";
  }
  out.write(text);
  out.close();
}

void write_summary_json(const std::filesystem::path& path, RunMode mode, std::uint64_t seed,
                        std::size_t frames_used, const IterationTrace& trace) {
  OutputFile out(path);
  std::string text = "{\n";
  text += std::string("  \"mode\": \"") + (mode == RunMode::Static ? "static" : "tracking") +
          "\",\n";
  text += "  \"seed\": " + std::to_string(seed) + ",\n";
  text += "  \"frames\": " + std::to_string(frames_used) + ",\n";
  text += "  \"iterations\": " + std::to_string(trace.iterations) + ",\n";
  text += std::string("  \"stationary\": ") + (trace.stationary ? "true" : "false") + ",\n";
  text += std::string("  \"stalled\": ") + (trace.stalled ? "true" : "false") + ",\n";
  text += "  \"initial_objective\": ";
  append_number(text, trace.records.front().objective);
  text += ",\n  \"final_objective\": ";
  append_number(text, trace.records.back().objective);
  text += ",\n  \"final_grad_norms\": [";
  const std::vector<double>& norms = trace.records.back().grad_norms;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (i) text += ", ";
    append_number(text, norms[i]);
  }
  text += "]\n}\n";
  out.write(text);
  out.close();
}

}  // namespace

IterationTrace run_scenario(const Scenario& scenario, RunMode mode,
                            const std::filesystem::path& out_dir, const RunOverrides& overrides,
                            Exec exec) {
  const std::uint64_t seed = overrides.seed.value_or(scenario.seed);
  DescentConfig config = scenario.descent;
  if (overrides.max_iters) {
    if (*overrides.max_iters < 1)
      throw std::invalid_argument("run: max_iters override must be at least 1");
    config.max_iters = *overrides.max_iters;
  }

  const Environment env = environment_of(scenario);
  const ObjectiveParams params = objective_params_of(scenario);
  const FitOptions fit = fit_options_of(scenario);
  const std::vector<Sensor> sensors = build_sensors(scenario);
  const int verbosity = log_verbosity();
  const std::size_t frames_used =
      mode == RunMode::Static ? 1 : scenario.movie.frames.size();
  if (verbosity >= 1)
    std::fprintf(stderr, "run: mode=%s sensors=%zu frames=%zu seed=%llu\n",
                 mode == RunMode::Static ? "static" : "tracking", sensors.size(), frames_used,
                 static_cast<unsigned long long>(seed));

  IterationTrace trace;
  if (mode == RunMode::Static) {
    trace = run_static(sensors, scenario.initial, env, params, scenario.movie.frames.front(),
                       scenario.movie.synth, fit, scenario.psi_bar, config, seed, exec);
  } else {
    trace = run_tracking(sensors, scenario.initial, env, params, scenario.movie, fit,
                         scenario.psi_bar, config, seed, exec);
  }

  if (verbosity >= 2) {
    for (const IterationRecord& rec : trace.records)
      std::fprintf(stderr, "run: iter=%d objective=%.12g\n", rec.iter, rec.objective);
  }
  if (verbosity >= 1)
    std::fprintf(stderr, "run: finished iterations=%d stationary=%s stalled=%s objective=%.12g\n",
                 trace.iterations, trace.stationary ? "yes" : "no",
                 trace.stalled ? "yes" : "no", trace.records.back().objective);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("run: cannot create " + out_dir.string());
  write_trace_csv(out_dir / "trace.csv", trace, scenario.sensors);
  write_rotations_csv(out_dir / "rotations.csv", trace, scenario.sensors);
  write_fov_csv(out_dir / "fov.csv", trace, scenario.sensors);
  write_summary_json(out_dir / "summary.json", mode, seed, frames_used, trace);
  return trace;
}

GradientCheckReport gradient_check(const Scenario& scenario, int tuples_per_sensor,
                                   double fd_step, Exec exec) {
  if (tuples_per_sensor < 1)
    throw std::invalid_argument("gradient_check: tuples_per_sensor must be at least 1");
  if (!(fd_step > 0.0)) throw std::invalid_argument("gradient_check: fd_step must be positive");

  const Environment env = environment_of(scenario);
  const ObjectiveParams params = objective_params_of(scenario);
  const std::vector<Sensor> sensors = build_sensors(scenario);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(scenario.seed ^ 0x9e3779b9u));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GradientCheckReport report;
  for (const Sensor& sensor : sensors) {
    const int dirs = 5;
    const int states = (tuples_per_sensor + dirs - 1) / dirs;
    for (int state = 0; state < states; ++state) {
      // Shrink the tilt until the whole footprint lands on the plane.
      Rotation r;
      std::vector<std::uint8_t> mask;
      double scale = 1.0;
      for (int attempt = 0;; ++attempt) {
        const Vec3 tilt(scale * 0.25 * (2.0 * unit(rng) - 1.0),
                        scale * 0.25 * (2.0 * unit(rng) - 1.0),
                        scale * 1.0 * (2.0 * unit(rng) - 1.0));
        try {
          const Rotation candidate(rodrigues(tilt));
          mask = mission_mask(sensor, env, candidate);
          r = candidate;
          break;
        } catch (const FovError&) {
          if (attempt >= 20)
            throw std::runtime_error("gradient_check: cannot pose a sensor on the plane");
          scale *= 0.5;
        }
      }

      const int m = 1 + state % 3;
      std::vector<GaussianComponent> comps;
      for (int j = 0; j < m; ++j) {
        GaussianComponent c;
        c.alpha = scenario.psi_bar * (0.08 + 0.12 * unit(rng));
        c.mean = Vec2((unit(rng) - 0.5) * 0.8 * sensor.plane_width,
                      (unit(rng) - 0.5) * 0.8 * sensor.plane_height);
        const double angle = 3.0 * unit(rng);
        Eigen::Matrix2d rot;
        rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        const auto sigma = [&] {
          const double s = sensor.plane_width * (0.1 + 0.4 * unit(rng));
          return 1.0 / (s * s);
        };
        c.weight = rot * Eigen::Vector2d(sigma(), sigma()).asDiagonal() * rot.transpose();
        comps.push_back(c);
      }
      const MixtureDensity density(scenario.psi_bar, std::move(comps));

      const GradientReport rep = gradient_single(sensor, env, params, density, r, mask, exec);
      for (int d = 0; d < dirs; ++d) {
        AmbientMatrix dir;
        for (int rr = 0; rr < 3; ++rr)
          for (int cc = 0; cc < 3; ++cc) dir(rr, cc) = 2.0 * unit(rng) - 1.0;
        const double up = ambient_objective(sensor, env, params, density, r, mask,
                                            r.matrix() + fd_step * dir, exec);
        const double dn = ambient_objective(sensor, env, params, density, r, mask,
                                            r.matrix() - fd_step * dir, exec);
        const double fd = (up - dn) / (2.0 * fd_step);
        const double an = inner(rep.ambient, dir);
        const double err =
            std::abs(fd - an) /
            std::max({std::abs(fd), std::abs(an), 1e-9 * (1.0 + rep.ambient.norm())});
        report.max_relative_error = std::max(report.max_relative_error, err);
        ++report.tuples;
      }
    }
  }
  return report;
}

}  // namespace coverage
