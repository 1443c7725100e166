#pragma once

#include <coverage/objective.hpp>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace coverage {

/// Constant step size applied without a decrease check.
struct FixedStep {
  double step = 1e-2;
};

/// Backtracking line search. The first trial step rotates the sensor by
/// roughly initial_angle radians; each rejection shrinks the step until the
/// objective drops by at least slope * step * |grad|^2.
struct ArmijoStep {
  double initial_angle = 0.2;
  double shrink = 0.5;
  double slope = 1e-4;
  int max_backtracks = 30;
};

using StepRule = std::variant<FixedStep, ArmijoStep>;

struct DescentConfig {
  StepRule rule = ArmijoStep{};
  double grad_tol = 1e-3;          // stationarity threshold on projected gradient norms
  int max_iters = 500;
  int reorthonormalize_every = 1000;  // polar correction cadence, counted in sweeps
  int steps_per_frame = 1;            // descent sweeps per tracked frame
  int max_sweep_halvings = 40;        // network-level step halvings before declaring a stall
};

/// Outcome of one sensor's frozen-partition descent step.
struct StepResult {
  Rotation rotation;      // accepted orientation (unchanged when not moving)
  TangentAtR direction;   // projected gradient the step moved against
  double step = 0.0;      // accepted step size, 0 when not moving
  double grad_norm = 0.0; // norm of the projected gradient
  bool stalled = false;   // line search exhausted without a decrease
  bool stationary = false;
};

StepResult step_sensor(const Sensor& sensor, const Environment& env,
                       const ObjectiveParams& params, const MixtureDensity& density,
                       const Rotation& r, std::span<const std::uint8_t> mask,
                       const DescentConfig& config, Exec exec);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;          // network objective priced by the ground truth
  std::vector<double> grad_norms;  // per sensor, measured before the move
  std::vector<double> steps;       // per sensor, accepted step sizes
  std::vector<Rotation> rotations; // state after the move
  std::vector<FovPolytope> fovs;   // footprints of that state
};

struct IterationTrace {
  std::vector<IterationRecord> records;  // records[0] is the initial state
  bool stationary = false;
  bool stalled = false;
  int iterations = 0;  // accepted sweeps
};

/// Gradient descent on all sensor orientations against fixed fitted
/// densities: Jacobi sweeps of per-sensor steps on frozen partitions, with
/// a network-level guard that halves every accepted step until the
/// ground-truth objective does not increase. Stops at stationarity, stall,
/// or the iteration cap.
IterationTrace run(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                   const Environment& env, const ObjectiveParams& params,
                   std::span<const MixtureDensity> densities, double eval_psi_bar,
                   const TruthFrame& frame, const DescentConfig& config, Exec exec);

/// Per-frame loop: synthesize what each sensor sees, refit its density,
/// then run steps_per_frame descent sweeps against that frame. One record
/// per frame.
IterationTrace run_tracking(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                            const Environment& env, const ObjectiveParams& params,
                            const Movie& movie, const FitOptions& fit_options,
                            double eval_psi_bar, const DescentConfig& config, std::uint64_t seed,
                            Exec exec);

/// Descent against one fixed scene with the densities re-estimated from the
/// current orientations before every sweep, so the image-plane fits stay
/// anchored where the gradient is taken. Unlike run_tracking, the loop
/// terminates as soon as a sweep reports stationarity or a stall.
IterationTrace run_static(std::span<const Sensor> sensors, std::span<const Rotation> initial,
                          const Environment& env, const ObjectiveParams& params,
                          const TruthFrame& frame, const SynthOptions& synth,
                          const FitOptions& fit_options, double eval_psi_bar,
                          const DescentConfig& config, std::uint64_t seed, Exec exec);

}  // namespace coverage
