#include <coverage/objective.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

namespace coverage {

namespace {

constexpr double kDenomFloor = 1e-12;

/// Denominator e3 . (R p) with the magnitude floored away from zero so
/// pixels driven to the horizon price as arbitrarily poor coverage instead
/// of dividing by zero.
double floored(double u, double scale) {
  const double floor = kDenomFloor * scale;
  if (u >= 0.0) return std::max(u, floor);
  return std::min(u, -floor);
}

struct GradAccum {
  AmbientMatrix g = AmbientMatrix::Zero();
  double h = 0.0;
  GradAccum& operator+=(const GradAccum& o) {
    g += o.g;
    h += o.h;
    return *this;
  }
};

double scaled_offset(const Sensor& sensor, const Environment& env) {
  const double delta = plane_offset(sensor, env);
  return delta * delta / sensor.focal_length;
}

}  // namespace

ObjectiveParams make_objective_params(const AmbientMatrix& w_metric) {
  if ((w_metric - w_metric.transpose()).norm() > 1e-9 * (1.0 + w_metric.norm()))
    throw std::invalid_argument("make_objective_params: metric must be symmetric");
  const Eigen::SelfAdjointEigenSolver<AmbientMatrix> eig(w_metric);
  if (eig.eigenvalues().minCoeff() < -1e-12 * (1.0 + w_metric.norm()))
    throw std::invalid_argument("make_objective_params: metric must be positive semidefinite");
  return ObjectiveParams{w_metric};
}

double performance(const Sensor& sensor, const ObjectiveParams& params, const Vec3& q) {
  const Vec3 d = q - sensor.position;
  return d.dot(params.w_metric * d) / sensor.focal_length;
}

double pixel_performance(const Sensor& sensor, const Environment& env,
                         const ObjectiveParams& params, const Rotation& r, int pixel_id) {
  if (pixel_id < 0 || pixel_id >= static_cast<int>(sensor.pixels.size()))
    throw std::out_of_range("pixel_performance: pixel id out of range");
  const Vec3& p = sensor.pixels[static_cast<std::size_t>(pixel_id)];
  const Vec3 rp = r.matrix() * p;
  const double u = floored(rp.z(), p.norm());
  const double s = rp.dot(params.w_metric * rp);
  return scaled_offset(sensor, env) * s / (u * u);
}

std::vector<std::uint8_t> mission_mask(const Sensor& sensor, const Environment& env,
                                       const Rotation& r) {
  const double delta = plane_offset(sensor, env);
  std::vector<std::uint8_t> mask(sensor.eval_ids.size(), 0);
  for (std::size_t k = 0; k < sensor.eval_ids.size(); ++k) {
    const Vec3& p = sensor.pixels[static_cast<std::size_t>(sensor.eval_ids[k])];
    const Vec3 d = r.matrix() * p;
    if (d.z() * delta <= 0.0 || std::abs(d.z()) <= 1e-9 * p.norm()) continue;
    const Vec3 q = sensor.position + (delta / d.z()) * d;
    if (contains(env, Vec2(q.head<2>()))) mask[k] = 1;
  }
  return mask;
}

std::vector<double> density_factors(const Sensor& sensor, const MixtureDensity& density,
                                    double phi_bar, std::span<const std::uint8_t> mask) {
  if (mask.size() != sensor.eval_ids.size())
    throw std::invalid_argument("density_factors: mask does not match the evaluation pixels");
  std::vector<double> factors(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    factors[k] = mask[k] ? psi_3d(density, sensor.pixels[static_cast<std::size_t>(
                               sensor.eval_ids[k])])
                         : phi_bar;
  }
  return factors;
}

double frozen_objective(const Sensor& sensor, const Environment& env,
                        const ObjectiveParams& params, std::span<const double> factors,
                        const Rotation& r, Exec exec) {
  if (factors.size() != sensor.eval_ids.size())
    throw std::invalid_argument("frozen_objective: factors do not match the evaluation pixels");
  const double offset = scaled_offset(sensor, env);
  const AmbientMatrix& rot = r.matrix();
  const AmbientMatrix& w = params.w_metric;
  const double sum = chunked_sum(
      static_cast<std::ptrdiff_t>(factors.size()), 0.0,
      [&](std::ptrdiff_t k) {
        const Vec3& p =
            sensor.pixels[static_cast<std::size_t>(sensor.eval_ids[static_cast<std::size_t>(k)])];
        const Vec3 rp = rot * p;
        const double u = floored(rp.z(), p.norm());
        const double s = rp.dot(w * rp);
        return sensor.weights[static_cast<std::size_t>(sensor.eval_ids[static_cast<std::size_t>(
                   k)])] *
               (s / (u * u)) * factors[static_cast<std::size_t>(k)];
      },
      exec);
  return offset * sum;
}

double objective_single(const Sensor& sensor, const Environment& env,
                        const ObjectiveParams& params, const MixtureDensity& density,
                        const Rotation& r, Exec exec) {
  const std::vector<std::uint8_t> mask = mission_mask(sensor, env, r);
  const std::vector<double> factors = density_factors(sensor, density, env.phi_bar, mask);
  return frozen_objective(sensor, env, params, factors, r, exec);
}

GradientReport gradient_single(const Sensor& sensor, const Environment& env,
                               const ObjectiveParams& params, const MixtureDensity& density,
                               const Rotation& r, std::span<const std::uint8_t> mask, Exec exec) {
  if (mask.size() != sensor.eval_ids.size())
    throw std::invalid_argument("gradient_single: mask does not match the evaluation pixels");
  const double offset = scaled_offset(sensor, env);
  const AmbientMatrix& rot = r.matrix();
  const AmbientMatrix& w = params.w_metric;
  const double lambda = sensor.focal_length;
  const double psi_bar = density.psi_bar();
  const double phi_bar = env.phi_bar;
  const auto& comps = density.components();

  const GradAccum total = chunked_sum(
      static_cast<std::ptrdiff_t>(mask.size()), GradAccum{},
      [&](std::ptrdiff_t k) {
        const int l = sensor.eval_ids[static_cast<std::size_t>(k)];
        const Vec3& p = sensor.pixels[static_cast<std::size_t>(l)];
        const double weight = sensor.weights[static_cast<std::size_t>(l)];
        const Vec3 rp = rot * p;
        const double u = floored(rp.z(), p.norm());
        const double s = rp.dot(w * rp);
        const Vec3 wrp = w * rp;
        // Derivative of the geometric cost s / u^2 with respect to the
        // orientation, as a row against p.
        const Eigen::RowVector3d geo =
            (2.0 / (u * u * u)) *
            (u * wrp.transpose() - s * Eigen::RowVector3d(0, 0, 1));

        GradAccum acc;
        double factor;
        Eigen::RowVector3d row;
        if (!mask[static_cast<std::size_t>(k)]) {
          factor = phi_bar;
          row = phi_bar * geo;
        } else {
          factor = psi_bar;
          row = psi_bar * geo;
          for (const GaussianComponent& c : comps) {
            const Vec2 b2 = p.head<2>() - c.mean;
            const Vec2 z2 = c.weight * b2;
            const double e = std::exp(-b2.dot(z2));
            const Vec3 z(z2.x(), z2.y(), 0.0);
            // Derivative of the re-projected exponent through the base
            // pose, folded with the geometric cost.
            const Eigen::RowVector3d xi =
                s * (z.dot(p) * (rot.col(2)).transpose() - lambda * (rot * z).transpose()) +
                lambda * wrp.transpose();
            const Eigen::RowVector3d comp_row =
                (2.0 * e / (lambda * u * u * u)) *
                (u * xi - lambda * s * Eigen::RowVector3d(0, 0, 1));
            row -= c.alpha * comp_row;
            factor -= c.alpha * e;
          }
        }
        acc.g = weight * row.transpose() * p.transpose();
        acc.h = weight * (s / (u * u)) * factor;
        return acc;
      },
      exec);

  GradientReport report{offset * total.g,
                        project_tangent(r, offset * total.g),
                        offset * total.h};
  return report;
}

GradientReport gradient_single(const Sensor& sensor, const Environment& env,
                               const ObjectiveParams& params, const MixtureDensity& density,
                               const Rotation& r, Exec exec) {
  const std::vector<std::uint8_t> mask = mission_mask(sensor, env, r);
  return gradient_single(sensor, env, params, density, r, mask, exec);
}

double ambient_objective(const Sensor& sensor, const Environment& env,
                         const ObjectiveParams& params, const MixtureDensity& density,
                         const Rotation& base, std::span<const std::uint8_t> mask,
                         const AmbientMatrix& m, Exec exec) {
  if (mask.size() != sensor.eval_ids.size())
    throw std::invalid_argument("ambient_objective: mask does not match the evaluation pixels");
  const double offset = scaled_offset(sensor, env);
  const AmbientMatrix& rot = base.matrix();
  const AmbientMatrix& w = params.w_metric;
  const double lambda = sensor.focal_length;
  const double phi_bar = env.phi_bar;

  const double sum = chunked_sum(
      static_cast<std::ptrdiff_t>(mask.size()), 0.0,
      [&](std::ptrdiff_t k) {
        const int l = sensor.eval_ids[static_cast<std::size_t>(k)];
        const Vec3& p = sensor.pixels[static_cast<std::size_t>(l)];
        const double weight = sensor.weights[static_cast<std::size_t>(l)];
        const Vec3 mp = m * p;
        const double u = floored(mp.z(), p.norm() * (1.0 + m.norm()));
        const double s = mp.dot(w * mp);
        double factor = phi_bar;
        if (mask[static_cast<std::size_t>(k)]) {
          const Vec3 v = rot.transpose() * mp;
          const double d = floored(v.z(), v.norm());
          const Vec2 image((lambda / d) * v.x(), (lambda / d) * v.y());
          factor = psi_image(density, image);
        }
        return weight * (s / (u * u)) * factor;
      },
      exec);
  return offset * sum;
}

MultiObjective objective_multi(std::span<const Sensor> sensors, std::span<const Rotation> rotations,
                               const Environment& env, const ObjectiveParams& params,
                               std::span<const MixtureDensity> densities, Exec exec) {
  if (sensors.size() != rotations.size() || sensors.size() != densities.size())
    throw std::invalid_argument("objective_multi: sensors, rotations and densities must align");
  std::vector<FovPolytope> fovs;
  fovs.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i)
    fovs.push_back(fov(sensors[i], env, rotations[i]));

  MultiObjective result;
  result.per_sensor.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::vector<std::uint8_t> mask = active_pixels(
        i, sensors, rotations, fovs, env, params.w_metric, sensors[i].eval_ids, exec);
    const std::vector<double> factors =
        density_factors(sensors[i], densities[i], env.phi_bar, mask);
    const double h = frozen_objective(sensors[i], env, params, factors, rotations[i], exec);
    result.per_sensor.push_back(h);
    result.total += h;
  }
  return result;
}

std::vector<GradientReport> gradient_multi(std::span<const Sensor> sensors,
                                           std::span<const Rotation> rotations,
                                           const Environment& env, const ObjectiveParams& params,
                                           std::span<const MixtureDensity> densities, Exec exec) {
  if (sensors.size() != rotations.size() || sensors.size() != densities.size())
    throw std::invalid_argument("gradient_multi: sensors, rotations and densities must align");
  std::vector<FovPolytope> fovs;
  fovs.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i)
    fovs.push_back(fov(sensors[i], env, rotations[i]));

  std::vector<GradientReport> reports;
  reports.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::vector<std::uint8_t> mask = active_pixels(
        i, sensors, rotations, fovs, env, params.w_metric, sensors[i].eval_ids, exec);
    reports.push_back(
        gradient_single(sensors[i], env, params, densities[i], rotations[i], mask, exec));
  }
  return reports;
}

double evaluation_objective(std::span<const Sensor> sensors, std::span<const Rotation> rotations,
                            const Environment& env, const ObjectiveParams& params, double psi_bar,
                            const TruthFrame& frame, Exec exec) {
  if (sensors.size() != rotations.size())
    throw std::invalid_argument("evaluation_objective: sensors and rotations must align");
  std::vector<FovPolytope> fovs;
  fovs.reserve(sensors.size());
  for (std::size_t i = 0; i < sensors.size(); ++i)
    fovs.push_back(fov(sensors[i], env, rotations[i]));

  double total = 0.0;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const Sensor& s = sensors[i];
    const std::vector<std::uint8_t> mask =
        active_pixels(i, sensors, rotations, fovs, env, params.w_metric, s.eval_ids, exec);
    std::vector<double> factors(mask.size(), env.phi_bar);
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (!mask[k]) continue;
      const Vec3 q = pixel_world_point(s, env, rotations[i], s.eval_ids[k]);
      factors[k] = truth_density(frame, psi_bar, q.head<2>());
    }
    total += frozen_objective(s, env, params, factors, rotations[i], exec);
  }
  return total;
}

}  // namespace coverage
