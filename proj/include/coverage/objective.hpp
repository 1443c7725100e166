#pragma once

#include <coverage/density.hpp>

#include <span>
#include <vector>

namespace coverage {

/// Anisotropic metric weighting the coverage cost. Symmetric positive
/// semidefinite.
struct ObjectiveParams {
  AmbientMatrix w_metric = AmbientMatrix::Identity();
};

ObjectiveParams make_objective_params(const AmbientMatrix& w_metric);

/// Coverage cost of one sensor for a world point: the weighted squared
/// distance scaled by the inverse focal length.
double performance(const Sensor& sensor, const ObjectiveParams& params, const Vec3& q);

/// Coverage cost of pixel l's world point, written directly in terms of the
/// orientation; agrees with performance at back_project(pixel).
double pixel_performance(const Sensor& sensor, const Environment& env,
                         const ObjectiveParams& params, const Rotation& r, int pixel_id);

/// Marks, per evaluation pixel, whether its world point lies in the mission
/// region (the active set when the sensor is alone in the network).
std::vector<std::uint8_t> mission_mask(const Sensor& sensor, const Environment& env,
                                       const Rotation& r);

/// Density factor per evaluation pixel under a frozen active mask: the
/// image density at the pixel center when active, the exterior price
/// otherwise.
std::vector<double> density_factors(const Sensor& sensor, const MixtureDensity& density,
                                    double phi_bar, std::span<const std::uint8_t> mask);

/// Sensor objective with per-pixel density factors held fixed; only the
/// geometric cost varies with the orientation. This is the quantity a line
/// search along a frozen partition evaluates.
double frozen_objective(const Sensor& sensor, const Environment& env,
                        const ObjectiveParams& params, std::span<const double> factors,
                        const Rotation& r, Exec exec);

/// Sensor objective for a sensor alone in the network.
double objective_single(const Sensor& sensor, const Environment& env,
                        const ObjectiveParams& params, const MixtureDensity& density,
                        const Rotation& r, Exec exec);

struct GradientReport {
  AmbientMatrix ambient;   // gradient in the ambient matrix space
  TangentAtR riemannian;   // its projection onto the tangent space at r
  double value;            // sensor objective at r under the same mask
};

/// Analytic gradient of the sensor objective under a frozen active mask.
GradientReport gradient_single(const Sensor& sensor, const Environment& env,
                               const ObjectiveParams& params, const MixtureDensity& density,
                               const Rotation& r, std::span<const std::uint8_t> mask, Exec exec);

/// Same, with the mask of a sensor alone in the network.
GradientReport gradient_single(const Sensor& sensor, const Environment& env,
                               const ObjectiveParams& params, const MixtureDensity& density,
                               const Rotation& r, Exec exec);

/// Extension of the sensor objective to an arbitrary ambient matrix m: the
/// active mask stays frozen at the base orientation and active pixels are
/// re-projected through the base pose before evaluating the density. At
/// m = base it equals the frozen objective; its derivative at base is what
/// gradient_single computes.
double ambient_objective(const Sensor& sensor, const Environment& env,
                         const ObjectiveParams& params, const MixtureDensity& density,
                         const Rotation& base, std::span<const std::uint8_t> mask,
                         const AmbientMatrix& m, Exec exec);

struct MultiObjective {
  double total = 0.0;
  std::vector<double> per_sensor;
};

/// Network objective: each sensor prices its evaluation pixels, active ones
/// by its own fitted density, ceded or exterior ones at phi_bar.
MultiObjective objective_multi(std::span<const Sensor> sensors, std::span<const Rotation> rotations,
                               const Environment& env, const ObjectiveParams& params,
                               std::span<const MixtureDensity> densities, Exec exec);

/// Per-sensor gradients under the frozen network partition.
std::vector<GradientReport> gradient_multi(std::span<const Sensor> sensors,
                                           std::span<const Rotation> rotations,
                                           const Environment& env, const ObjectiveParams& params,
                                           std::span<const MixtureDensity> densities, Exec exec);

/// Network objective priced by the ground-truth density instead of fitted
/// mixtures; the quantity reported in descent traces.
double evaluation_objective(std::span<const Sensor> sensors, std::span<const Rotation> rotations,
                            const Environment& env, const ObjectiveParams& params, double psi_bar,
                            const TruthFrame& frame, Exec exec);

}  // namespace coverage
