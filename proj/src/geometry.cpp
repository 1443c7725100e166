#include <coverage/geometry.hpp>

#include <cmath>
#include <limits>
#include <optional>

namespace coverage {

namespace {

constexpr double kWeightBias = 4e-4;
constexpr double kHorizonTol = 1e-9;
constexpr double kDegenerateTol = 1e-12;
constexpr double kVertexCheckTol = 1e-9;

/// Intersection of the ray through an image point with the monitored plane,
/// or nullopt when the ray points away from it or grazes the horizon.
std::optional<Vec3> ray_to_plane(const Sensor& sensor, const Environment& env,
                                 const Rotation& r, const Vec3& image_point) {
  const double delta = env.gamma - sensor.position.z();
  const Vec3 d = r.matrix() * image_point;
  const double t = d.z();
  if (t * delta <= 0.0) return std::nullopt;
  if (std::abs(t) <= kHorizonTol * image_point.norm()) return std::nullopt;
  return sensor.position + (delta / t) * d;
}

double coverage_cost(const Sensor& sensor, const AmbientMatrix& w_metric, const Vec3& q) {
  const Vec3 d = q - sensor.position;
  return d.dot(w_metric * d) / sensor.focal_length;
}

}  // namespace

Sensor make_sensor(const SensorConfig& config) {
  if (config.id < 0) throw std::invalid_argument("make_sensor: id must be nonnegative");
  if (!(config.focal_length > 0.0))
    throw std::invalid_argument("make_sensor: focal_length must be positive");
  if (!(config.plane_width > 0.0) || !(config.plane_height > 0.0))
    throw std::invalid_argument("make_sensor: image plane dimensions must be positive");
  if (config.cols < 1 || config.rows < 1)
    throw std::invalid_argument("make_sensor: pixel grid must be at least 1x1");
  if (config.eval_stride < 1)
    throw std::invalid_argument("make_sensor: eval_stride must be at least 1");

  Sensor s;
  s.id = config.id;
  s.position = config.position;
  s.focal_length = config.focal_length;
  s.plane_width = config.plane_width;
  s.plane_height = config.plane_height;
  s.cols = config.cols;
  s.rows = config.rows;
  s.axes = config.axes;

  const double hw = 0.5 * config.plane_width;
  const double hh = 0.5 * config.plane_height;
  const double pw = config.plane_width / config.cols;
  const double ph = config.plane_height / config.rows;
  s.pixels.reserve(static_cast<std::size_t>(config.cols) * config.rows);
  for (int row = 0; row < config.rows; ++row) {
    const double y = hh - (row + 0.5) * ph;
    for (int col = 0; col < config.cols; ++col) {
      const double x = -hw + (col + 0.5) * pw;
      s.pixels.emplace_back(x, y, config.focal_length);
    }
  }
  s.corners = {Vec3(-hw, -hh, config.focal_length), Vec3(hw, -hh, config.focal_length),
               Vec3(hw, hh, config.focal_length), Vec3(-hw, hh, config.focal_length)};

  s.weights.reserve(s.pixels.size());
  const double corner_norm = s.corners[0].norm();
  for (const Vec3& p : s.pixels) {
    s.weights.push_back(config.weight_rule == WeightRule::Uniform
                            ? 1.0
                            : (corner_norm + kWeightBias) / (p.norm() + kWeightBias));
  }

  const int offset = (config.eval_stride - 1) / 2;
  for (int row = offset; row < config.rows; row += config.eval_stride) {
    for (int col = offset; col < config.cols; col += config.eval_stride) {
      s.eval_ids.push_back(row * config.cols + col);
    }
  }
  if (s.eval_ids.empty())
    throw std::invalid_argument("make_sensor: eval_stride leaves no evaluation pixels");
  return s;
}

const std::vector<Vec3>& pixel_centers(const Sensor& sensor) { return sensor.pixels; }

Environment make_environment(double gamma, std::vector<Vec2> mission, double phi_bar) {
  if (!std::isfinite(gamma)) throw std::invalid_argument("make_environment: gamma must be finite");
  if (!(phi_bar > 0.0)) throw std::invalid_argument("make_environment: phi_bar must be positive");
  const std::size_t n = mission.size();
  if (n < 3) throw std::invalid_argument("make_environment: mission polygon needs 3+ vertices");
  double area2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = mission[k];
    const Vec2& b = mission[(k + 1) % n];
    const Vec2& c = mission[(k + 2) % n];
    const Vec2 e1 = b - a;
    const Vec2 e2 = c - b;
    if (e1.norm() == 0.0)
      throw std::invalid_argument("make_environment: mission polygon repeats a vertex");
    const double cross = e1.x() * e2.y() - e1.y() * e2.x();
    if (cross < -kDegenerateTol * e1.norm() * e2.norm())
      throw std::invalid_argument("make_environment: mission polygon is not convex CCW");
    area2 += a.x() * b.y() - b.x() * a.y();
  }
  if (!(area2 > 0.0))
    throw std::invalid_argument("make_environment: mission polygon is not counterclockwise");
  Environment env;
  env.gamma = gamma;
  env.mission = std::move(mission);
  env.phi_bar = phi_bar;
  return env;
}

bool contains(const Environment& env, const Vec2& q) {
  const std::size_t n = env.mission.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = env.mission[k];
    const Vec2 e = env.mission[(k + 1) % n] - a;
    const Vec2 d = q - a;
    const double cross = e.x() * d.y() - e.y() * d.x();
    if (cross < -kDegenerateTol * e.norm() * (1.0 + d.norm())) return false;
  }
  return true;
}

double plane_offset(const Sensor& sensor, const Environment& env) {
  return env.gamma - sensor.position.z();
}

Vec3 transform(const Sensor& sensor, const Rotation& r, const Vec3& p) {
  return r.matrix() * p + sensor.position;
}

Vec3 inverse_transform(const Sensor& sensor, const Rotation& r, const Vec3& q) {
  return r.matrix().transpose() * (q - sensor.position);
}

Vec3 project_to_image(const Sensor& sensor, const Rotation& r, const Vec3& q) {
  const Vec3 p = inverse_transform(sensor, r, q);
  if (p.z() <= kHorizonTol * p.norm())
    throw FovError("project_to_image: point is at or behind the camera");
  return (sensor.focal_length / p.z()) * p;
}

Vec3 back_project(const Sensor& sensor, const Environment& env, const Rotation& r,
                  const Vec3& image_point) {
  const std::optional<Vec3> q = ray_to_plane(sensor, env, r, image_point);
  if (!q) throw FovError("back_project: ray does not reach the monitored plane");
  return *q;
}

Vec3 pixel_world_point(const Sensor& sensor, const Environment& env, const Rotation& r,
                       int pixel_id) {
  if (pixel_id < 0 || pixel_id >= static_cast<int>(sensor.pixels.size()))
    throw std::out_of_range("pixel_world_point: pixel id out of range");
  return back_project(sensor, env, r, sensor.pixels[static_cast<std::size_t>(pixel_id)]);
}

FovPolytope fov(const Sensor& sensor, const Environment& env, const Rotation& r) {
  const double delta = plane_offset(sensor, env);
  if (std::abs(delta) <= kDegenerateTol * (1.0 + std::abs(env.gamma)))
    throw FovError("fov: sensor lies on the monitored plane");

  FovPolytope f;
  for (int l = 0; l < 4; ++l) {
    const std::optional<Vec3> v = ray_to_plane(sensor, env, r, sensor.corners[l]);
    if (!v) throw FovError("fov: image corner ray does not reach the monitored plane");
    f.vertices[static_cast<std::size_t>(l)] = *v;
  }
  const std::optional<Vec3> center =
      ray_to_plane(sensor, env, r, Vec3(0.0, 0.0, sensor.focal_length));
  if (!center) throw FovError("fov: optical axis does not reach the monitored plane");
  const Vec2 p0 = center->head<2>();

  for (int l = 0; l < 4; ++l) {
    const Vec2 a = f.vertices[static_cast<std::size_t>(l)].head<2>();
    const Vec2 b = f.vertices[static_cast<std::size_t>((l + 1) % 4)].head<2>();
    const double det = a.x() * b.y() - a.y() * b.x();
    const double scale = std::max(a.norm() * b.norm(), std::numeric_limits<double>::min());
    bool placed = false;
    if (std::abs(det) > kDegenerateTol * scale) {
      // Row A with A*a = A*b = 1, oriented so the halfspace holds the
      // interior point.
      const Vec2 arow((b.y() - a.y()) / det, (a.x() - b.x()) / det);
      const double side = 1.0 - arow.dot(p0);
      if (std::abs(side) > kDegenerateTol * (1.0 + std::abs(arow.dot(p0)))) {
        const double sign = side > 0.0 ? 1.0 : -1.0;
        f.halfspaces.row(l) = sign * arow.transpose();
        f.offsets(l) = sign;
        placed = true;
      }
    }
    if (!placed) {
      // Supporting line passes through the plane origin; fall back to the
      // unit edge normal.
      const Vec2 e = b - a;
      const double len = e.norm();
      if (len <= kDegenerateTol * (1.0 + a.norm()))
        throw FovError("fov: degenerate footprint side");
      Vec2 n(-e.y() / len, e.x() / len);
      double o = n.dot(a);
      if (n.dot(p0) > o) {
        n = -n;
        o = -o;
      }
      f.halfspaces.row(l) = n.transpose();
      f.offsets(l) = o;
    }
  }

  for (const Vec3& v : f.vertices) {
    for (int l = 0; l < 4; ++l) {
      if (f.halfspaces.row(l).dot(v.head<2>()) >
          f.offsets(l) + kVertexCheckTol * (1.0 + std::abs(f.offsets(l))))
        throw FovError("fov: footprint halfspaces exclude a vertex");
    }
  }
  return f;
}

bool contains(const FovPolytope& f, const Vec2& q, double tol) {
  for (int l = 0; l < 4; ++l) {
    if (f.halfspaces.row(l).dot(q) > f.offsets(l) + tol) return false;
  }
  return true;
}

Vec2 centroid(const FovPolytope& f) {
  Vec2 c = Vec2::Zero();
  for (const Vec3& v : f.vertices) c += v.head<2>();
  return 0.25 * c;
}

bool dominates(const Sensor& a, const Sensor& b, const AmbientMatrix& w_metric, const Vec3& q) {
  const Vec3 da = q - a.position;
  const Vec3 db = q - b.position;
  return b.focal_length * da.dot(w_metric * da) < a.focal_length * db.dot(w_metric * db);
}

std::vector<std::uint8_t> active_pixels(std::size_t self, std::span<const Sensor> sensors,
                                        std::span<const Rotation> rotations,
                                        std::span<const FovPolytope> fovs,
                                        const Environment& env, const AmbientMatrix& w_metric,
                                        std::span<const int> pixel_ids, Exec exec) {
  if (sensors.size() != rotations.size() || sensors.size() != fovs.size())
    throw std::invalid_argument("active_pixels: sensors, rotations and fovs must align");
  if (self >= sensors.size()) throw std::out_of_range("active_pixels: sensor index out of range");

  const Sensor& s = sensors[self];
  std::vector<std::uint8_t> mask(pixel_ids.size(), 0);
  parallel_for(
      static_cast<std::ptrdiff_t>(pixel_ids.size()),
      [&](std::ptrdiff_t k) {
        const int l = pixel_ids[static_cast<std::size_t>(k)];
        const std::optional<Vec3> q =
            ray_to_plane(s, env, rotations[self], s.pixels[static_cast<std::size_t>(l)]);
        if (!q) return;
        const Vec2 q2 = q->head<2>();
        if (!contains(env, q2)) return;
        double best_cost = coverage_cost(s, w_metric, *q);
        int best_id = s.id;
        std::size_t best_index = self;
        for (std::size_t j = 0; j < sensors.size(); ++j) {
          if (j == self) continue;
          if (!contains(fovs[j], q2)) continue;
          const double cost = coverage_cost(sensors[j], w_metric, *q);
          if (cost < best_cost || (cost == best_cost && sensors[j].id < best_id)) {
            best_cost = cost;
            best_id = sensors[j].id;
            best_index = j;
          }
        }
        if (best_index == self) mask[static_cast<std::size_t>(k)] = 1;
      },
      exec);
  return mask;
}

}  // namespace coverage
