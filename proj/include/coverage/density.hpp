#pragma once

#include <coverage/geometry.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace coverage {

/// One Gaussian deduction from the background level. weight is the SPD
/// exponent matrix: the component contributes
/// alpha * exp(-(p - mean)^T weight (p - mean)).
struct GaussianComponent {
  double alpha = 0.0;
  Vec2 mean = Vec2::Zero();
  Eigen::Matrix2d weight = Eigen::Matrix2d::Identity();
};

/// Importance density over the image plane: a constant background minus
/// Gaussian deductions, nonnegative by construction (sum of alphas never
/// exceeds the background).
class MixtureDensity {
 public:
  MixtureDensity(double psi_bar, std::vector<GaussianComponent> components);

  static MixtureDensity background(double psi_bar) { return MixtureDensity(psi_bar, {}); }

  double psi_bar() const { return psi_bar_; }
  const std::vector<GaussianComponent>& components() const { return components_; }

 private:
  double psi_bar_;
  std::vector<GaussianComponent> components_;
};

/// Density at an image-plane point (2D).
double psi_image(const MixtureDensity& d, const Vec2& p);

/// Density at an image-plane point given in sensor coordinates; the
/// deductions depend only on the first two coordinates.
double psi_3d(const MixtureDensity& d, const Vec3& p);

/// Density at a world point, evaluated through the sensor's projection.
/// Throws FovError when the point is at or behind the camera.
double phi_world(const MixtureDensity& d, const Sensor& sensor, const Rotation& r, const Vec3& q);

/// Per-pixel measurements aligned with Sensor::pixels.
struct PixelData {
  std::vector<double> values;
};

struct FitOptions {
  int components = 3;
  int max_iterations = 200;
  double relative_tol = 1e-8;
  std::optional<double> psi_bar;  // background override; otherwise a margin above the fitted mass
  double phi_bar = 1.05;          // ceiling the background must stay below
};

struct FitResult {
  MixtureDensity density;
  bool converged = false;
  int iterations = 0;
  double rms_residual = 0.0;
};

/// Fits Gaussian deductions to per-pixel measurements by damped
/// Gauss-Newton with analytic Jacobians, seeded from a deterministic
/// k-means split of the brightest pixels. Components that fit to zero mass
/// are dropped.
FitResult fit_mixture(const PixelData& data, const Sensor& sensor, const FitOptions& opts);

/// A round importance bump on the monitored plane:
/// importance * exp(-|q - center|^2 / radius^2).
struct Blob {
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
  double importance = 0.0;
};

/// Ground-truth importance at one instant.
struct TruthFrame {
  std::vector<Blob> blobs;
};

double importance_at(const TruthFrame& frame, const Vec2& q);

/// Ground-truth density: background minus importance, floored at zero.
double truth_density(const TruthFrame& frame, double psi_bar, const Vec2& q);

struct SynthOptions {
  bool binarize = false;
  double threshold = 1e-3;
  double noise_sigma = 0.0;
};

/// What each pixel of the sensor would measure for the given frame:
/// the importance where its ray meets the monitored plane (zero when the
/// ray misses), plus optional Gaussian noise, optionally thresholded to
/// {0, 1}. Per-pixel noise is derived from (seed, pixel id) only, so the
/// result is independent of the execution mode.
PixelData synth_pixel_data(const TruthFrame& frame, const Sensor& sensor, const Environment& env,
                           const Rotation& r, const SynthOptions& opts, std::uint64_t seed,
                           Exec exec);

/// A sequence of truth frames plus how sensors observe them.
struct Movie {
  std::vector<TruthFrame> frames;
  SynthOptions synth;
};

}  // namespace coverage
