#include <coverage/run_io.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using coverage::AmbientMatrix;
using coverage::AxisPair;
using coverage::Environment;
using coverage::Exec;
using coverage::FovPolytope;
using coverage::GaussianComponent;
using coverage::IterationTrace;
using coverage::MixtureDensity;
using coverage::PixelData;
using coverage::Rotation;
using coverage::Scenario;
using coverage::Sensor;
using coverage::SensorConfig;
using coverage::TangentAtR;
using coverage::Vec2;
using coverage::Vec3;

namespace {

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return std::string(buf);
}

std::filesystem::path scenario_dir() {
  if (const char* env = std::getenv("COVERAGE_SCENARIO_DIR"); env && *env) return env;
  return COVERAGE_SCENARIO_DIR;
}

std::filesystem::path fresh_out_dir(const char* name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "coverage-acceptance" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec3 random_vec(std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

Rotation random_rotation(std::mt19937& rng) {
  return Rotation(coverage::rodrigues(random_vec(rng, 2.0)));
}

AmbientMatrix random_matrix(std::mt19937& rng, double scale) {
  AmbientMatrix m;
  std::uniform_real_distribution<double> u(-scale, scale);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = u(rng);
  return m;
}

SensorConfig camera_config() {
  SensorConfig c;
  c.position = Vec3(0, 0, 6);
  c.focal_length = 3.4e-3;
  c.plane_width = 6.4e-3;
  c.plane_height = 4.8e-3;
  c.cols = 33;
  c.rows = 33;
  c.eval_stride = 1;
  return c;
}

Environment ground_environment() {
  const double gx = 9.41;
  const double gy = 7.06;
  return coverage::make_environment(
      10.0, {Vec2(-gx, -gy), Vec2(gx, -gy), Vec2(gx, gy), Vec2(-gx, gy)}, 1.05);
}

bool in_quad(const FovPolytope& f, const Vec2& q) {
  int pos = 0;
  int neg = 0;
  for (int l = 0; l < 4; ++l) {
    const Vec2 a = f.vertices[static_cast<std::size_t>(l)].head<2>();
    const Vec2 b = f.vertices[static_cast<std::size_t>((l + 1) % 4)].head<2>();
    const Vec2 e = b - a;
    const Vec2 d = q - a;
    const double cross = e.x() * d.y() - e.y() * d.x();
    if (cross > 0) ++pos;
    if (cross < 0) ++neg;
  }
  return pos == 0 || neg == 0;
}

Eigen::Matrix2d rotated_weight(double s1, double s2, double angle) {
  Eigen::Matrix2d rot;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return rot * Eigen::Vector2d(s1, s2).asDiagonal() * rot.transpose();
}

struct CheckResult {
  bool pass = false;
  std::string detail;
};

CheckResult check_gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = coverage::load_scenario(scenario_dir() / "static.json");
  const coverage::GradientCheckReport report =
      coverage::gradient_check(s, 70, 1e-6, coverage::default_exec());
  const double secs = seconds_since(t0);
  const bool pass = report.tuples >= 200 && report.max_relative_error < 1e-5 && secs < 10.0;
  return {pass, fmt("%d tuples (>= 200), max relative error %.3g (< 1e-05), %.2f s (< 10 s)",
                    report.tuples, report.max_relative_error, secs)};
}

CheckResult check_manifold_invariants() {
  std::mt19937 rng(101);
  double idem = 0.0;
  double adjoint = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Rotation r = random_rotation(rng);
    const AmbientMatrix m = random_matrix(rng, 1.0);
    const AmbientMatrix n = random_matrix(rng, 1.0);
    const AmbientMatrix pm = coverage::project_tangent(r, m).delta();
    const AmbientMatrix pn = coverage::project_tangent(r, n).delta();
    idem = std::max(idem, (coverage::project_tangent(r, pm).delta() - pm).norm());
    adjoint = std::max(adjoint, std::abs(coverage::inner(pm, n) - coverage::inner(m, pn)));
  }

  Rotation walker = random_rotation(rng);
  std::uniform_real_distribution<double> step(-0.05, 0.05);
  for (int k = 0; k < 10000; ++k) {
    const TangentAtR g = coverage::project_tangent(walker, random_matrix(rng, 1.0));
    walker = coverage::retract(g, step(rng));
  }
  const AmbientMatrix w = walker.matrix();
  const double drift = (w.transpose() * w - AmbientMatrix::Identity()).norm();

  const AxisPair pan_tilt(Vec3(1, 0, 0), Vec3(0, 1, 0));
  const AxisPair skewed(Vec3(1, 0, 0),
                        Vec3(1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0));
  const AxisPair pan_only(Vec3(0, 0, 1));
  double ua_idem = 0.0;
  double ua_span = 0.0;
  for (const AxisPair& axes : {pan_tilt, skewed, pan_only}) {
    for (int trial = 0; trial < 60; ++trial) {
      const Rotation r = random_rotation(rng);
      const TangentAtR g = coverage::project_tangent(r, random_matrix(rng, 1.0));
      const TangentAtR p = coverage::project_underactuated(g, axes);
      const TangentAtR pp = coverage::project_underactuated(p, axes);
      const double scale = 1.0 + g.delta().norm();
      ua_idem = std::max(ua_idem, (pp.delta() - p.delta()).norm() / scale);
      const Vec3 v = coverage::vee(p.body());
      double off_span;
      if (axes.single_axis()) {
        off_span = (v - v.dot(axes.primary()) * axes.primary()).norm();
      } else {
        const Vec3 normal = axes.primary().cross(axes.secondary()).normalized();
        off_span = std::abs(v.dot(normal));
      }
      ua_span = std::max(ua_span, off_span / scale);
    }
  }

  const bool pass = idem < 1e-12 && adjoint < 1e-12 && drift < 1e-10 && ua_idem < 1e-10 &&
                    ua_span < 1e-10;
  return {pass,
          fmt("projection idempotence %.2g, self-adjointness %.2g (< 1e-12); "
              "drift %.2g after 10000 retractions (< 1e-10); "
              "restricted-axis idempotence %.2g, span residual %.2g (< 1e-10)",
              idem, adjoint, drift, ua_idem, ua_span)};
}

CheckResult check_footprint_geometry() {
  std::mt19937 rng(307);
  const Environment env = ground_environment();
  const Sensor cam = coverage::make_sensor(camera_config());

  double plane_dev = 0.0;
  double round_trip = 0.0;
  std::uniform_real_distribution<double> small(-0.3, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const Rotation r =
        Rotation(coverage::rodrigues(Vec3(small(rng), small(rng), small(rng) * 8.0)));
    for (int l : {0, 16 * 33 + 16, 32 * 33 + 32}) {
      const Vec3 q = coverage::pixel_world_point(cam, env, r, l);
      plane_dev = std::max(plane_dev, std::abs(q.z() - env.gamma));
    }
    const Vec3 p = cam.pixels[static_cast<std::size_t>(trial * 7) % cam.pixels.size()];
    const Vec3 q = coverage::back_project(cam, env, r, p);
    const Vec3 p2 = coverage::project_to_image(cam, r, q);
    round_trip = std::max(round_trip, (p2 - p).norm());
    const Vec3 q2 = coverage::back_project(cam, env, r, p2);
    round_trip = std::max(round_trip, (q2 - q).norm() / (1.0 + q.norm()));
  }

  int membership_points = 0;
  int membership_bad = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Rotation r =
        Rotation(coverage::rodrigues(Vec3(small(rng) * 0.8, small(rng) * 0.8, small(rng) * 8.0)));
    const FovPolytope f = coverage::fov(cam, env, r);
    double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
    for (const Vec3& v : f.vertices) {
      lo_x = std::min(lo_x, v.x());
      hi_x = std::max(hi_x, v.x());
      lo_y = std::min(lo_y, v.y());
      hi_y = std::max(hi_y, v.y());
    }
    std::uniform_real_distribution<double> px(lo_x - 0.25 * (hi_x - lo_x),
                                              hi_x + 0.25 * (hi_x - lo_x));
    std::uniform_real_distribution<double> py(lo_y - 0.25 * (hi_y - lo_y),
                                              hi_y + 0.25 * (hi_y - lo_y));
    for (int k = 0; k < 1000; ++k) {
      const Vec2 q(px(rng), py(rng));
      ++membership_points;
      if (coverage::contains(f, q) != in_quad(f, q)) ++membership_bad;
    }
  }

  const AmbientMatrix w_metric = Vec3(0.01, 0.01, 1.0).asDiagonal();
  std::uniform_real_distribution<double> pos(-4.0, 4.0);
  std::uniform_real_distribution<double> height(4.5, 7.5);
  std::uniform_real_distribution<double> ang(-0.2, 0.2);
  int partition_bad = 0;
  int partition_points = 0;
  for (int layout = 0; layout < 20; ++layout) {
    std::vector<Sensor> sensors;
    std::vector<Rotation> rotations;
    std::vector<FovPolytope> fovs;
    for (int attempt = 0;; ++attempt) {
      sensors.clear();
      rotations.clear();
      fovs.clear();
      try {
        for (int i = 0; i < 3; ++i) {
          SensorConfig c = camera_config();
          c.id = i;
          c.position = Vec3(pos(rng), pos(rng), height(rng));
          c.cols = 50;
          c.rows = 50;
          sensors.push_back(coverage::make_sensor(c));
          rotations.push_back(
              Rotation(coverage::rodrigues(Vec3(ang(rng), ang(rng), ang(rng) * 10.0))));
        }
        for (std::size_t i = 0; i < sensors.size(); ++i)
          fovs.push_back(coverage::fov(sensors[i], env, rotations[i]));
        break;
      } catch (const coverage::FovError&) {
        if (attempt > 50) throw;
      }
    }
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const std::vector<std::uint8_t> mask =
          coverage::active_pixels(i, sensors, rotations, fovs, env, w_metric,
                                  sensors[i].eval_ids, Exec::Serial);
      for (std::size_t k = 0; k < mask.size(); ++k) {
        const int l = sensors[i].eval_ids[k];
        bool expect = false;
        const Vec3 q = coverage::pixel_world_point(sensors[i], env, rotations[i], l);
        if (coverage::contains(env, Vec2(q.head<2>()))) {
          double best = std::numeric_limits<double>::infinity();
          std::size_t winner = sensors.size();
          for (std::size_t j = 0; j < sensors.size(); ++j) {
            if (j != i && !in_quad(fovs[j], Vec2(q.head<2>()))) continue;
            const Vec3 d = q - sensors[j].position;
            const double cost = d.dot(w_metric * d) / sensors[j].focal_length;
            if (cost < best) {
              best = cost;
              winner = j;
            }
          }
          expect = winner == i;
        }
        ++partition_points;
        if ((mask[k] != 0) != expect) ++partition_bad;
      }
    }
  }

  const bool pass = plane_dev < 1e-12 && round_trip < 1e-12 && membership_bad == 0 &&
                    partition_bad == 0;
  return {pass,
          fmt("plane membership %.2g, projection round trip %.2g (< 1e-12); "
              "H-rep/V-rep disagree on %d of %d points; "
              "partition differs from brute force on %d of %d points (20 layouts, 50x50)",
              plane_dev, round_trip, membership_bad, membership_points, partition_bad,
              partition_points)};
}

CheckResult check_static_descent() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = coverage::load_scenario(scenario_dir() / "static.json");
  const IterationTrace trace =
      coverage::run_scenario(s, coverage::RunMode::Static, fresh_out_dir("static-descent"));
  const double secs = seconds_since(t0);

  bool monotone = true;
  for (std::size_t k = 1; k < trace.records.size(); ++k)
    monotone = monotone && trace.records[k].objective <= trace.records[k - 1].objective;
  double max_norm = 0.0;
  for (double g : trace.records.back().grad_norms) max_norm = std::max(max_norm, g);

  const bool pass = monotone && trace.stationary && !trace.stalled &&
                    trace.iterations <= 500 && max_norm < s.descent.grad_tol && secs < 30.0;
  return {pass,
          fmt("objective %.6g -> %.6g %s, stationary=%s after %d iterations (<= 500), "
              "final gradient norms <= %.3g (tol %.3g), %.1f s (< 30 s)",
              trace.records.front().objective, trace.records.back().objective,
              monotone ? "non-increasing" : "NOT monotone", trace.stationary ? "yes" : "no",
              trace.iterations, max_norm, s.descent.grad_tol, secs)};
}

CheckResult check_density_fitting() {
  SensorConfig cfg = camera_config();
  cfg.cols = 32;
  cfg.rows = 24;
  const Sensor sensor = coverage::make_sensor(cfg);
  std::vector<MixtureDensity> fitted;

  GaussianComponent truth;
  truth.alpha = 0.8;
  truth.mean = Vec2(0.5e-3, -0.3e-3);
  truth.weight = rotated_weight(7e5, 3e5, 0.5);
  PixelData data;
  for (const Vec3& p : sensor.pixels) {
    const Vec2 d = p.head<2>() - truth.mean;
    data.values.push_back(truth.alpha * std::exp(-d.dot(truth.weight * d)));
  }
  const double peak = *std::max_element(data.values.begin(), data.values.end());

  coverage::FitOptions opts;
  opts.components = 1;
  opts.psi_bar = 1.0;
  const coverage::FitResult fit = coverage::fit_mixture(data, sensor, opts);
  fitted.push_back(fit.density);
  double sq = 0.0;
  for (std::size_t l = 0; l < sensor.pixels.size(); ++l) {
    const double signal =
        fit.density.psi_bar() - coverage::psi_image(fit.density, sensor.pixels[l].head<2>());
    sq += (signal - data.values[l]) * (signal - data.values[l]);
  }
  const double rms = std::sqrt(sq / static_cast<double>(sensor.pixels.size()));

  PixelData zero;
  zero.values.assign(sensor.pixels.size(), 0.0);
  const coverage::FitResult flat = coverage::fit_mixture(zero, sensor, opts);
  fitted.push_back(flat.density);
  const bool flat_ok = flat.density.components().empty() &&
                       coverage::psi_image(flat.density, Vec2(0, 0)) == 1.0 &&
                       coverage::psi_image(flat.density, Vec2(2e-3, -1.5e-3)) == 1.0;

  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GaussianComponent> comps;
    for (int j = 0; j <= trial % 3; ++j) {
      GaussianComponent c;
      c.alpha = 0.15 + 0.15 * u(rng);
      c.mean = Vec2((u(rng) - 0.5) * 5e-3, (u(rng) - 0.5) * 3.6e-3);
      c.weight = rotated_weight(2e5 + 6e5 * u(rng), 2e5 + 6e5 * u(rng), 3.0 * u(rng));
      comps.push_back(c);
    }
    PixelData sample;
    for (const Vec3& p : sensor.pixels) {
      double y = 0.0;
      for (const GaussianComponent& c : comps) {
        const Vec2 d = p.head<2>() - c.mean;
        y += c.alpha * std::exp(-d.dot(c.weight * d));
      }
      sample.values.push_back(y);
    }
    coverage::FitOptions multi;
    multi.components = static_cast<int>(comps.size());
    multi.psi_bar = 1.0;
    fitted.push_back(coverage::fit_mixture(sample, sensor, multi).density);
  }

  double min_psi = std::numeric_limits<double>::infinity();
  for (const MixtureDensity& d : fitted) {
    for (int ix = 0; ix <= 64; ++ix)
      for (int iy = 0; iy <= 48; ++iy)
        min_psi = std::min(
            min_psi, coverage::psi_image(d, Vec2(-4e-3 + ix * 1.25e-4, -3e-3 + iy * 1.25e-4)));
  }

  const bool pass = fit.converged && rms < 0.01 * peak && flat_ok && min_psi >= 0.0;
  return {pass,
          fmt("single-Gaussian RMS %.2g of peak %.2g (< 1%%); zero data gives the constant "
              "background: %s; min density %.2g over %zu fits on a 65x49 scan (>= 0)",
              rms / peak, peak, flat_ok ? "yes" : "no", min_psi, fitted.size())};
}

CheckResult check_tracking_correlation() {
  const Scenario s = coverage::load_scenario(scenario_dir() / "tracking.json");
  const IterationTrace trace =
      coverage::run_scenario(s, coverage::RunMode::Tracking, fresh_out_dir("tracking"));
  const std::size_t frames = s.movie.frames.size();
  if (trace.records.size() != frames + 1)
    return {false, fmt("expected %zu records, got %zu", frames + 1, trace.records.size())};

  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double bx = s.movie.frames[f].blobs[0].center.x();
    const double cx = coverage::centroid(trace.records[f + 1].fovs[0]).x();
    sx += bx;
    sy += cx;
    sxx += bx * bx;
    syy += cx * cx;
    sxy += bx * cx;
  }
  const double n = static_cast<double>(frames);
  const double cov = sxy - sx * sy / n;
  const double var_x = sxx - sx * sx / n;
  const double var_y = syy - sy * sy / n;
  const double pearson = cov / std::sqrt(var_x * var_y);

  const bool pass = frames >= 30 && pearson > 0.5;
  return {pass, fmt("Pearson %.4f between target track and footprint centroid over %zu frames "
                    "(> 0.5 over >= 30)",
                    pearson, frames)};
}

CheckResult check_determinism() {
  int identical = 0;
  int compared = 0;
  for (const char* name : {"static.json", "tracking.json"}) {
    const Scenario s = coverage::load_scenario(scenario_dir() / name);
    const coverage::RunMode mode = s.movie.frames.size() > 1 ? coverage::RunMode::Tracking
                                                             : coverage::RunMode::Static;
    const std::filesystem::path a = fresh_out_dir("determinism-a");
    const std::filesystem::path b = fresh_out_dir("determinism-b");
    coverage::run_scenario(s, mode, a);
    coverage::run_scenario(s, mode, b);
    for (const char* file : {"trace.csv", "rotations.csv", "fov.csv", "summary.json"}) {
      ++compared;
      if (slurp(a / file) == slurp(b / file)) ++identical;
    }
  }
  return {identical == compared,
          fmt("%d of %d output files byte-identical across reruns of both bundled scenarios",
              identical, compared)};
}

struct Check {
  const char* name;
  CheckResult (*fn)();
};

constexpr std::array<Check, 7> kChecks = {{
    {"gradient-oracle", check_gradient_oracle},
    {"manifold-invariants", check_manifold_invariants},
    {"footprint-geometry", check_footprint_geometry},
    {"static-descent", check_static_descent},
    {"density-fitting", check_density_fitting},
    {"tracking-correlation", check_tracking_correlation},
    {"determinism", check_determinism},
}};

int run_check(const Check& check) {
  CheckResult result;
  try {
    result = check.fn();
  } catch (const std::exception& e) {
    result = {false, std::string("exception: ") + e.what()};
  }
  std::printf("[%s] %s: %s\n", result.pass ? "PASS" : "FAIL", check.name,
              result.detail.c_str());
  std::fflush(stdout);
  return result.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 2) {
    std::fprintf(stderr, "usage: %s [check-name]\n", argv[0]);
    return 2;
  }
  if (argc == 2) {
    for (const Check& check : kChecks)
      if (std::string(argv[1]) == check.name) return run_check(check);
    std::fprintf(stderr, "unknown check \"%s\"; available:", argv[1]);
    for (const Check& check : kChecks) std::fprintf(stderr, " %s", check.name);
    std::fprintf(stderr, "\n");
    return 2;
  }
  int failures = 0;
  for (const Check& check : kChecks) failures += run_check(check);
  return failures == 0 ? 0 : 1;
}
