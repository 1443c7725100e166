#include <coverage/density.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace coverage {

namespace {

constexpr double kMassEps = 1e-6;
constexpr double kMassMargin = 1.05;
constexpr double kSymTol = 1e-9;
constexpr int kMaxLloyd = 50;
constexpr int kMaxDampRetries = 25;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw that depends only on (seed, index).
double seeded_normal(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t s = splitmix64(seed ^ splitmix64(index));
  const double u1 = to_unit(s);
  const double u2 = to_unit(splitmix64(s));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct FitScales {
  double weight_floor = 0.0;  // smallest admissible exponent eigenvalue
  double weight_ceil = 0.0;   // largest admissible exponent eigenvalue
};

FitScales fit_scales(const Sensor& sensor) {
  const double diag = std::hypot(sensor.plane_width, sensor.plane_height);
  const double pitch =
      std::min(sensor.plane_width / sensor.cols, sensor.plane_height / sensor.rows);
  FitScales s;
  s.weight_floor = 1.0 / (10.0 * diag * 10.0 * diag);
  s.weight_ceil = 4.0 / (pitch * pitch);
  return s;
}

Eigen::Matrix2d clamp_spd(const Eigen::Matrix2d& m, double lo, double hi) {
  const Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sym);
  Eigen::Vector2d v = eig.eigenvalues();
  v(0) = std::clamp(v(0), lo, hi);
  v(1) = std::clamp(v(1), lo, hi);
  return eig.eigenvectors() * v.asDiagonal() * eig.eigenvectors().transpose();
}

struct Component {
  double alpha;
  Vec2 mean;
  Eigen::Matrix2d chol;  // lower-triangular factor of the exponent matrix
};

double model_value(const std::vector<Component>& comps, const Vec2& p) {
  double y = 0.0;
  for (const Component& c : comps) {
    const Eigen::Vector2d g = c.chol.transpose() * (p - c.mean);
    y += c.alpha * std::exp(-g.squaredNorm());
  }
  return y;
}

}  // namespace

MixtureDensity::MixtureDensity(double psi_bar, std::vector<GaussianComponent> components)
    : psi_bar_(psi_bar), components_(std::move(components)) {
  if (!(psi_bar > 0.0))
    throw std::invalid_argument("MixtureDensity: background level must be positive");
  double mass = 0.0;
  for (const GaussianComponent& c : components_) {
    if (!(c.alpha > 0.0))
      throw std::invalid_argument("MixtureDensity: component mass must be positive");
    if ((c.weight - c.weight.transpose()).norm() > kSymTol * (1.0 + c.weight.norm()))
      throw std::invalid_argument("MixtureDensity: exponent matrix must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(c.weight);
    if (!(eig.eigenvalues().minCoeff() > 0.0))
      throw std::invalid_argument("MixtureDensity: exponent matrix must be positive definite");
    mass += c.alpha;
  }
  if (mass > psi_bar * (1.0 + 1e-12))
    throw std::invalid_argument("MixtureDensity: component mass exceeds the background level");
}

double psi_image(const MixtureDensity& d, const Vec2& p) {
  double y = d.psi_bar();
  for (const GaussianComponent& c : d.components()) {
    const Vec2 diff = p - c.mean;
    y -= c.alpha * std::exp(-diff.dot(c.weight * diff));
  }
  return y;
}

double psi_3d(const MixtureDensity& d, const Vec3& p) { return psi_image(d, p.head<2>()); }

double phi_world(const MixtureDensity& d, const Sensor& sensor, const Rotation& r, const Vec3& q) {
  return psi_3d(d, project_to_image(sensor, r, q));
}

FitResult fit_mixture(const PixelData& data, const Sensor& sensor, const FitOptions& opts) {
  const std::size_t n = sensor.pixels.size();
  if (data.values.size() != n)
    throw std::invalid_argument("fit_mixture: data does not match the sensor's pixel grid");
  if (opts.components < 0)
    throw std::invalid_argument("fit_mixture: component count must be nonnegative");
  if (opts.psi_bar && !(*opts.psi_bar > 0.0 && *opts.psi_bar < opts.phi_bar))
    throw std::invalid_argument("fit_mixture: background override must be in (0, phi_bar)");

  const auto finish = [&](std::vector<Component> comps, bool converged, int iters, double cost) {
    const FitScales scales = fit_scales(sensor);
    std::vector<GaussianComponent> kept;
    double ymax = 0.0;
    for (double y : data.values) ymax = std::max(ymax, y);
    double mass = 0.0;
    for (const Component& c : comps) {
      if (!(c.alpha > std::max(1e-9 * ymax, 1e-300))) continue;
      GaussianComponent g;
      g.alpha = c.alpha;
      g.mean = c.mean;
      g.weight = clamp_spd(c.chol * c.chol.transpose(), scales.weight_floor, scales.weight_ceil);
      kept.push_back(g);
      mass += g.alpha;
    }
    double psi_bar = opts.psi_bar ? *opts.psi_bar : kMassMargin * std::max(mass, kMassEps);
    if (psi_bar >= opts.phi_bar) {
      const double shrink = opts.phi_bar * (1.0 - 1e-9) / psi_bar;
      for (GaussianComponent& g : kept) g.alpha *= shrink;
      mass *= shrink;
      psi_bar *= shrink;
    }
    if (mass > psi_bar) {
      const double shrink = psi_bar / mass;
      for (GaussianComponent& g : kept) g.alpha *= shrink;
    }
    FitResult result{MixtureDensity(psi_bar, std::move(kept)), converged, iters,
                     n > 0 ? std::sqrt(cost / static_cast<double>(n)) : 0.0};
    return result;
  };

  double ymax = 0.0;
  for (double y : data.values) ymax = std::max(ymax, y);
  if (!(ymax > 0.0) || opts.components == 0) return finish({}, true, 0, 0.0);

  // Deterministic k-means over the brightest decile: farthest-point
  // seeding, then Lloyd iterations with mass-weighted centroids.
  std::vector<double> positives;
  for (double y : data.values)
    if (y > 0.0) positives.push_back(y);
  std::nth_element(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(
                                          positives.size() * 9 / 10),
                   positives.end());
  const double bright = positives[positives.size() * 9 / 10];
  std::vector<std::size_t> peak_ids;
  for (std::size_t l = 0; l < n; ++l)
    if (data.values[l] >= bright) peak_ids.push_back(l);

  const int m = std::min<int>(opts.components, static_cast<int>(peak_ids.size()));
  std::vector<Vec2> centers;
  std::size_t first = peak_ids.front();
  for (std::size_t l : peak_ids)
    if (data.values[l] > data.values[first]) first = l;
  centers.push_back(sensor.pixels[first].head<2>());
  while (static_cast<int>(centers.size()) < m) {
    std::size_t next = peak_ids.front();
    double best = -1.0;
    for (std::size_t l : peak_ids) {
      const Vec2 p = sensor.pixels[l].head<2>();
      double d = std::numeric_limits<double>::infinity();
      for (const Vec2& c : centers) d = std::min(d, (p - c).squaredNorm());
      if (d > best) {
        best = d;
        next = l;
      }
    }
    centers.push_back(sensor.pixels[next].head<2>());
  }
  std::vector<int> assign(peak_ids.size(), 0);
  for (int sweep = 0; sweep < kMaxLloyd; ++sweep) {
    bool changed = false;
    for (std::size_t k = 0; k < peak_ids.size(); ++k) {
      const Vec2 p = sensor.pixels[peak_ids[k]].head<2>();
      int best = 0;
      for (int c = 1; c < m; ++c)
        if ((p - centers[static_cast<std::size_t>(c)]).squaredNorm() <
            (p - centers[static_cast<std::size_t>(best)]).squaredNorm())
          best = c;
      if (best != assign[k]) {
        assign[k] = best;
        changed = true;
      }
    }
    for (int c = 0; c < m; ++c) {
      Vec2 sum = Vec2::Zero();
      double mass = 0.0;
      for (std::size_t k = 0; k < peak_ids.size(); ++k) {
        if (assign[k] != c) continue;
        const double y = data.values[peak_ids[k]];
        sum += y * sensor.pixels[peak_ids[k]].head<2>();
        mass += y;
      }
      if (mass > 0.0) centers[static_cast<std::size_t>(c)] = sum / mass;
    }
    if (!changed) break;
  }

  // Initial parameters from mass-weighted statistics of each center's
  // basin (all pixels above a small cutoff, split by nearest center). For
  // Gaussian data the weighted covariance C gives the exponent C^-1 / 2.
  const FitScales scales = fit_scales(sensor);
  const double cutoff = 0.02 * ymax;
  std::vector<Component> comps;
  for (int c = 0; c < m; ++c) {
    double mass = 0.0;
    double peak = 0.0;
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (std::size_t l = 0; l < n; ++l) {
      const double y = data.values[l];
      if (y < cutoff) continue;
      const Vec2 p = sensor.pixels[l].head<2>();
      int best = 0;
      for (int c2 = 1; c2 < m; ++c2)
        if ((p - centers[static_cast<std::size_t>(c2)]).squaredNorm() <
            (p - centers[static_cast<std::size_t>(best)]).squaredNorm())
          best = c2;
      if (best != c) continue;
      mass += y;
      mean += y * p;
      peak = std::max(peak, y);
    }
    if (!(mass > 0.0)) continue;
    mean /= mass;
    for (std::size_t l = 0; l < n; ++l) {
      const double y = data.values[l];
      if (y < cutoff) continue;
      const Vec2 p = sensor.pixels[l].head<2>();
      int best = 0;
      for (int c2 = 1; c2 < m; ++c2)
        if ((p - centers[static_cast<std::size_t>(c2)]).squaredNorm() <
            (p - centers[static_cast<std::size_t>(best)]).squaredNorm())
          best = c2;
      if (best != c) continue;
      scatter += y * (p - mean) * (p - mean).transpose();
    }
    scatter /= mass;
    Eigen::Matrix2d weight;
    if (scatter.determinant() > 1e-300) {
      weight = clamp_spd(0.5 * scatter.inverse(), scales.weight_floor, scales.weight_ceil);
    } else {
      const double pitch =
          std::min(sensor.plane_width / sensor.cols, sensor.plane_height / sensor.rows);
      weight = Eigen::Matrix2d::Identity() / (8.0 * pitch * pitch);
    }
    Component comp;
    comp.alpha = peak;
    comp.mean = mean;
    comp.chol = Eigen::LLT<Eigen::Matrix2d>(weight).matrixL();
    comps.push_back(comp);
  }
  if (comps.empty()) return finish({}, true, 0, 0.0);

  // Damped Gauss-Newton on (alpha, mean, chol) per component.
  const int params = 6 * static_cast<int>(comps.size());
  const double chol_lo = std::sqrt(scales.weight_floor);
  const double chol_hi = 2.0 * std::sqrt(scales.weight_ceil);
  const auto pack_clamp = [&](std::vector<Component>& cs) {
    for (Component& c : cs) {
      c.alpha = std::clamp(c.alpha, 0.0, 100.0 * ymax);
      c.chol(0, 1) = 0.0;
      const auto keep = [&](double v) {
        const double mag = std::clamp(std::abs(v), chol_lo, chol_hi);
        return v < 0.0 ? -mag : mag;
      };
      c.chol(0, 0) = keep(c.chol(0, 0));
      c.chol(1, 1) = keep(c.chol(1, 1));
      c.chol(1, 0) = std::clamp(c.chol(1, 0), -chol_hi, chol_hi);
    }
  };
  pack_clamp(comps);

  const auto cost_of = [&](const std::vector<Component>& cs) {
    double cost = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      const double r = model_value(cs, sensor.pixels[l].head<2>()) - data.values[l];
      cost += r * r;
    }
    return cost;
  };

  double cost = cost_of(comps);
  double damping = 1e-3;
  bool converged = false;
  int iter = 0;
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), params);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(n));
  for (; iter < opts.max_iterations; ++iter) {
    for (std::size_t l = 0; l < n; ++l) {
      const Vec2 p = sensor.pixels[l].head<2>();
      double y = 0.0;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const Component& cm = comps[c];
        const Vec2 d = p - cm.mean;
        const Eigen::Vector2d g = cm.chol.transpose() * d;
        const double e = std::exp(-g.squaredNorm());
        y += cm.alpha * e;
        const Eigen::Index base = static_cast<Eigen::Index>(6 * c);
        const Eigen::Index row = static_cast<Eigen::Index>(l);
        const Eigen::Vector2d sd = cm.chol * g;  // exponent matrix times d
        jac(row, base + 0) = e;
        jac(row, base + 1) = cm.alpha * e * 2.0 * sd(0);
        jac(row, base + 2) = cm.alpha * e * 2.0 * sd(1);
        jac(row, base + 3) = -cm.alpha * e * 2.0 * g(0) * d(0);
        jac(row, base + 4) = -cm.alpha * e * 2.0 * g(0) * d(1);
        jac(row, base + 5) = -cm.alpha * e * 2.0 * g(1) * d(1);
      }
      resid(static_cast<Eigen::Index>(l)) = y - data.values[l];
    }
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * resid;

    bool accepted = false;
    for (int retry = 0; retry < kMaxDampRetries; ++retry) {
      Eigen::MatrixXd damped = normal;
      for (int k = 0; k < params; ++k)
        damped(k, k) += damping * std::max(normal(k, k), 1e-30);
      const Eigen::VectorXd delta = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(-grad);
      std::vector<Component> trial = comps;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const Eigen::Index base = static_cast<Eigen::Index>(6 * c);
        trial[c].alpha += delta(base + 0);
        trial[c].mean += Vec2(delta(base + 1), delta(base + 2));
        trial[c].chol(0, 0) += delta(base + 3);
        trial[c].chol(1, 0) += delta(base + 4);
        trial[c].chol(1, 1) += delta(base + 5);
      }
      pack_clamp(trial);
      const double trial_cost = cost_of(trial);
      if (trial_cost < cost) {
        const double drop = cost - trial_cost;
        comps = std::move(trial);
        cost = trial_cost;
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        if (drop <= opts.relative_tol * std::max(cost, 1e-300)) converged = true;
        break;
      }
      damping *= 4.0;
    }
    if (!accepted) {
      converged = cost <= 1e-24 * static_cast<double>(n) ||
                  damping > 1e10;  // flat residual landscape; nothing left to gain
      break;
    }
    if (converged) {
      ++iter;
      break;
    }
  }
  return finish(std::move(comps), converged, iter, cost);
}

double importance_at(const TruthFrame& frame, const Vec2& q) {
  double y = 0.0;
  for (const Blob& b : frame.blobs) {
    y += b.importance * std::exp(-(q - b.center).squaredNorm() / (b.radius * b.radius));
  }
  return y;
}

double truth_density(const TruthFrame& frame, double psi_bar, const Vec2& q) {
  return std::max(psi_bar - importance_at(frame, q), 0.0);
}

PixelData synth_pixel_data(const TruthFrame& frame, const Sensor& sensor, const Environment& env,
                           const Rotation& r, const SynthOptions& opts, std::uint64_t seed,
                           Exec exec) {
  PixelData data;
  data.values.assign(sensor.pixels.size(), 0.0);
  const double delta = env.gamma - sensor.position.z();
  parallel_for(
      static_cast<std::ptrdiff_t>(sensor.pixels.size()),
      [&](std::ptrdiff_t l) {
        const Vec3& p = sensor.pixels[static_cast<std::size_t>(l)];
        const Vec3 d = r.matrix() * p;
        double y = 0.0;
        if (d.z() * delta > 0.0 && std::abs(d.z()) > 1e-9 * p.norm()) {
          const Vec3 q = sensor.position + (delta / d.z()) * d;
          y = importance_at(frame, q.head<2>());
        }
        if (opts.noise_sigma > 0.0) {
          y += opts.noise_sigma * seeded_normal(seed, static_cast<std::uint64_t>(l));
        }
        if (opts.binarize) {
          y = y > opts.threshold ? 1.0 : 0.0;
        } else {
          y = std::max(y, 0.0);
        }
        data.values[static_cast<std::size_t>(l)] = y;
      },
      exec);
  return data;
}

}  // namespace coverage
