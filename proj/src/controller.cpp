#include <coverage/controller.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace coverage {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t frame, std::uint64_t sensor) {
  std::uint64_t x = seed ^ (frame * 0x9e3779b97f4a7c15ULL) ^ (sensor * 0xbf58476d1ce4e5b9ULL);
  x ^= x >> 30;
  x *= 0x94d049bb133111ebULL;
  return x ^ (x >> 27);
}

std::vector<FovPolytope> all_fovs(std::span<const Sensor> sensors,
                                  std::span<const Rotation> rotations, const Environment& env) {
  std::vector<FovPolytope> fovs;
  fovs.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i)
    fovs.push_back(fov(sensors[i], env, rotations[i]));
  return fovs;
}

double guarded_eval(std::span<const Sensor> sensors, std::span<const Rotation> rotations,
                    const Environment& env, const ObjectiveParams& params, double psi_bar,
                    const TruthFrame& frame, Exec exec) {
  try {
    return evaluation_objective(sensors, rotations, env, params, psi_bar, frame, exec);
  } catch (const FovError&) {
    // A candidate drove some footprint off the plane; price it as
    // arbitrarily poor so the guard rejects it.
    return std::numeric_limits<double>::infinity();
  }
}

struct SweepOutcome {
  bool stationary = false;
  bool stalled = false;
  std::vector<double> grad_norms;
  std::vector<double> steps;
};

/// One Jacobi sweep: per-sensor steps on partitions frozen at the current
/// state, then a network-level halving guard against the ground truth.
/// Updates rotations and objective in place only when a non-increasing
/// candidate is found.
SweepOutcome sweep(std::span<const Sensor> sensors, const Environment& env,
                   const ObjectiveParams& params, std::span<const MixtureDensity> densities,
                   double eval_psi_bar, const TruthFrame& frame, const DescentConfig& config,
                   std::vector<Rotation>& rotations, double& objective, Exec exec) {
  const std::size_t n = sensors.size();
  const std::vector<FovPolytope> fovs = all_fovs(sensors, rotations, env);

  SweepOutcome out;
  out.grad_norms.resize(n);
  out.steps.assign(n, 0.0);
  std::vector<StepResult> results;
  results.reserve(n);
  bool any_moving = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::uint8_t> mask = active_pixels(
        i, sensors, rotations, fovs, env, params.w_metric, sensors[i].eval_ids, exec);
    results.push_back(
        step_sensor(sensors[i], env, params, densities[i], rotations[i], mask, config, exec));
    out.grad_norms[i] = results[i].grad_norm;
    any_moving = any_moving || results[i].step > 0.0;
  }

  bool all_stationary = true;
  for (const StepResult& r : results) all_stationary = all_stationary && r.stationary;
  if (all_stationary) {
    out.stationary = true;
    return out;
  }
  if (!any_moving) {
    out.stalled = true;
    return out;
  }

  // A candidate that rotates by less than this is the current state up to
  // round-off; accepting it would stop progress without reporting a stall.
  constexpr double kMinAngle = 1e-15;

  std::vector<double> trial_steps(n);
  for (std::size_t i = 0; i < n; ++i) trial_steps[i] = results[i].step;
  std::vector<Rotation> candidate = rotations;
  for (int halving = 0; halving <= config.max_sweep_halvings; ++halving) {
    double max_angle = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      max_angle = std::max(max_angle, trial_steps[i] * results[i].grad_norm);
    if (max_angle < kMinAngle) break;
    for (std::size_t i = 0; i < n; ++i) {
      if (trial_steps[i] > 0.0)
        candidate[i] = retract(results[i].direction, -trial_steps[i]);
    }
    const double trial =
        guarded_eval(sensors, candidate, env, params, eval_psi_bar, frame, exec);
    if (trial < objective) {
      rotations = candidate;
      objective = trial;
      out.steps = trial_steps;
      return out;
    }
    for (double& s : trial_steps) s *= 0.5;
  }

  // The joint move failed the guard at every scale; some sensor is pinned
  // against a pricing discontinuity (a pixel crossing the mission boundary
  // or changing owner). Fall back to weaker moves, in id order so that
  // relabeling the array cannot change the outcome: first each sensor
  // alone, then each sensor along a single rotation axis, which can slide
  // along a discontinuity instead of into it.
  const auto try_single = [&](std::size_t i, const TangentAtR& dir, double s0,
                              double dir_norm) -> double {
    double s = s0;
    for (int halving = 0; halving <= config.max_sweep_halvings; ++halving) {
      if (s * dir_norm < kMinAngle) break;
      std::vector<Rotation> single = rotations;
      single[i] = retract(dir, -s);
      const double trial = guarded_eval(sensors, single, env, params, eval_psi_bar, frame, exec);
      if (trial < objective) {
        rotations = std::move(single);
        objective = trial;
        return s;
      }
      s *= 0.5;
    }
    return 0.0;
  };

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sensors[a].id < sensors[b].id; });
  for (std::size_t i : order) {
    if (results[i].step <= 0.0) continue;
    if (const double s =
            try_single(i, results[i].direction, results[i].step, results[i].grad_norm);
        s > 0.0) {
      out.steps.assign(n, 0.0);
      out.steps[i] = s;
      return out;
    }
  }
  for (std::size_t i : order) {
    if (results[i].step <= 0.0) continue;
    const Vec3 omega =
        vee(sk(rotations[i].matrix().transpose() * results[i].direction.delta()));
    for (int m = 0; m < 3; ++m) {
      if (!(std::abs(omega[m]) > 0.0)) continue;
      Vec3 axis_omega = Vec3::Zero();
      axis_omega[m] = omega[m];
      const TangentAtR dir(rotations[i], rotations[i].matrix() * hat(axis_omega));
      if (const double s = try_single(i, dir, results[i].step, std::abs(omega[m])); s > 0.0) {
        out.steps.assign(n, 0.0);
        out.steps[i] = s;
        return out;
      }
    }
  }
  out.stalled = true;
  return out;
}

IterationTrace descend(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                       const Environment& env, const ObjectiveParams& params,
                       const DescentConfig& config, Exec exec,
                       const std::function<std::span<const MixtureDensity>(
                           int frame_index, std::span<const Rotation>)>& densities_for,
                       std::span<const TruthFrame> frames, double eval_psi_bar,
                       int sweeps_per_frame, bool stop_on_stationary) {
  if (sensors.empty()) throw std::invalid_argument("descend: no sensors");
  if (sensors.size() != initial.size())
    throw std::invalid_argument("descend: sensors and initial rotations must align");
  if (frames.empty()) throw std::invalid_argument("descend: no frames");

  IterationTrace trace;
  std::vector<Rotation> rotations(initial.begin(), initial.end());
  int accepted = 0;
  int record_index = 0;

  for (std::size_t f = 0; f < frames.size(); ++f) {
    const TruthFrame& frame = frames[f];
    const std::span<const MixtureDensity> densities =
        densities_for(static_cast<int>(f), rotations);
    double objective =
        guarded_eval(sensors, rotations, env, params, eval_psi_bar, frame, exec);

    if (f == 0) {
      IterationRecord first;
      first.iter = 0;
      first.objective = objective;
      first.grad_norms.assign(sensors.size(), 0.0);
      first.steps.assign(sensors.size(), 0.0);
      first.rotations = rotations;
      first.fovs = all_fovs(sensors, rotations, env);
      trace.records.push_back(std::move(first));
    }

    std::vector<double> last_norms(sensors.size(), 0.0);
    std::vector<double> last_steps(sensors.size(), 0.0);
    for (int s = 0; s < sweeps_per_frame; ++s) {
      const SweepOutcome out = sweep(sensors, env, params, densities, eval_psi_bar, frame,
                                     config, rotations, objective, exec);
      last_norms = out.grad_norms;
      last_steps = out.steps;
      trace.stationary = out.stationary;
      trace.stalled = out.stalled;
      if (f == 0 && s == 0) trace.records[0].grad_norms = out.grad_norms;
      if (out.stationary || out.stalled) break;

      ++accepted;
      if (config.reorthonormalize_every > 0 &&
          accepted % config.reorthonormalize_every == 0) {
        for (Rotation& r : rotations) r = Rotation::orthonormalized(r.matrix());
      }
      if (frames.size() == 1) {
        IterationRecord rec;
        rec.iter = ++record_index;
        rec.objective = objective;
        rec.grad_norms = out.grad_norms;
        rec.steps = out.steps;
        rec.rotations = rotations;
        rec.fovs = all_fovs(sensors, rotations, env);
        trace.records.push_back(std::move(rec));
      }
      if (accepted >= config.max_iters) break;
    }
    if (frames.size() > 1) {
      IterationRecord rec;
      rec.iter = ++record_index;
      rec.objective = guarded_eval(sensors, rotations, env, params, eval_psi_bar, frame, exec);
      rec.grad_norms = last_norms;
      rec.steps = last_steps;
      rec.rotations = rotations;
      rec.fovs = all_fovs(sensors, rotations, env);
      trace.records.push_back(std::move(rec));
      if (stop_on_stationary &&
          (trace.stationary || trace.stalled || accepted >= config.max_iters))
        break;
    }
    if (frames.size() == 1 && (trace.stationary || trace.stalled || accepted >= config.max_iters))
      break;
  }
  trace.iterations = accepted;
  return trace;
}

}  // namespace

StepResult step_sensor(const Sensor& sensor, const Environment& env,
                       const ObjectiveParams& params, const MixtureDensity& density,
                       const Rotation& r, std::span<const std::uint8_t> mask,
                       const DescentConfig& config, Exec exec) {
  const GradientReport rep = gradient_single(sensor, env, params, density, r, mask, exec);
  const TangentAtR direction =
      sensor.axes ? project_underactuated(rep.riemannian, *sensor.axes) : rep.riemannian;
  const double gg = inner(direction.delta(), direction.delta());
  const double grad_norm = std::sqrt(gg);
  if (grad_norm < config.grad_tol)
    return StepResult{r, direction, 0.0, grad_norm, false, true};

  if (const FixedStep* fixed = std::get_if<FixedStep>(&config.rule)) {
    return StepResult{retract(direction, -fixed->step), direction, fixed->step, grad_norm,
                      false, false};
  }

  const ArmijoStep& armijo = std::get<ArmijoStep>(config.rule);
  const double at_base = rep.value;
  double step = armijo.initial_angle / grad_norm;
  for (int t = 0; t < armijo.max_backtracks; ++t) {
    const Rotation candidate = retract(direction, -step);
    const double at_step =
        ambient_objective(sensor, env, params, density, r, mask, candidate.matrix(), exec);
    if (at_step <= at_base - armijo.slope * step * gg)
      return StepResult{candidate, direction, step, grad_norm, false, false};
    step *= armijo.shrink;
  }
  return StepResult{r, direction, 0.0, grad_norm, true, false};
}

IterationTrace run(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                   const Environment& env, const ObjectiveParams& params,
                   std::span<const MixtureDensity> densities, double eval_psi_bar,
                   const TruthFrame& frame, const DescentConfig& config, Exec exec) {
  if (sensors.size() != densities.size())
    throw std::invalid_argument("run: sensors and densities must align");
  return descend(
      sensors, initial, env, params, config, exec,
      [&](int, std::span<const Rotation>) { return densities; },
      std::span<const TruthFrame>(&frame, 1), eval_psi_bar, config.max_iters, false);
}

IterationTrace run_tracking(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                            const Environment& env, const ObjectiveParams& params,
                            const Movie& movie, const FitOptions& fit_options,
                            double eval_psi_bar, const DescentConfig& config, std::uint64_t seed,
                            Exec exec) {
  if (movie.frames.empty()) throw std::invalid_argument("run_tracking: movie has no frames");
  std::vector<MixtureDensity> densities;
  const auto refit = [&](int frame_index,
                         std::span<const Rotation> rotations) -> std::span<const MixtureDensity> {
    densities.clear();
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const PixelData data = synth_pixel_data(
          movie.frames[static_cast<std::size_t>(frame_index)], sensors[i], env, rotations[i],
          movie.synth, mix_seed(seed, static_cast<std::uint64_t>(frame_index), i), exec);
      densities.push_back(fit_mixture(data, sensors[i], fit_options).density);
    }
    return densities;
  };
  return descend(sensors, initial, env, params, config, exec, refit, movie.frames, eval_psi_bar,
                 config.steps_per_frame, false);
}

IterationTrace run_static(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                          const Environment& env, const ObjectiveParams& params,
                          const TruthFrame& frame, const SynthOptions& synth,
                          const FitOptions& fit_options, double eval_psi_bar,
                          const DescentConfig& config, std::uint64_t seed, Exec exec) {
  if (config.max_iters < 1)
    throw std::invalid_argument("run_static: max_iters must be positive");
  const std::vector<TruthFrame> frames(static_cast<std::size_t>(config.max_iters), frame);
  std::vector<MixtureDensity> densities;
  const auto refit = [&](int, std::span<const Rotation> rotations) -> std::span<const MixtureDensity> {
    densities.clear();
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const PixelData data =
          synth_pixel_data(frame, sensors[i], env, rotations[i], synth, mix_seed(seed, 0, i), exec);
      densities.push_back(fit_mixture(data, sensors[i], fit_options).density);
    }
    return densities;
  };
  return descend(sensors, initial, env, params, config, exec, refit, frames, eval_psi_bar, 1,
                 true);
}

}  // namespace coverage
