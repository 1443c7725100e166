#pragma once

#include <coverage/exec.hpp>
#include <coverage/so3.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace coverage {

using Vec2 = Eigen::Vector2d;

/// Raised when a field of view cannot be constructed (rays near the horizon,
/// sensor on the monitored plane, degenerate side).
struct FovError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WeightRule { Uniform, VertexRatio };

struct SensorConfig {
  int id = 0;
  Vec3 position = Vec3::Zero();
  double focal_length = 0.0;
  double plane_width = 0.0;
  double plane_height = 0.0;
  int cols = 0;
  int rows = 0;
  WeightRule weight_rule = WeightRule::VertexRatio;
  int eval_stride = 1;
  std::optional<AxisPair> axes;
};

/// A fixed-position pinhole camera. Orientation is a separate decision
/// variable and is passed alongside the sensor to every geometric query.
/// Immutable after make_sensor.
struct Sensor {
  int id = 0;
  Vec3 position = Vec3::Zero();
  double focal_length = 0.0;
  double plane_width = 0.0;
  double plane_height = 0.0;
  int cols = 0;
  int rows = 0;
  std::optional<AxisPair> axes;
  std::vector<Vec3> pixels;     // centers on the image plane, row-major from top-left
  std::array<Vec3, 4> corners;  // image-plane corners, counterclockwise
  std::vector<double> weights;  // per-pixel objective weights
  std::vector<int> eval_ids;    // pixel ids sampled for objective evaluation
};

Sensor make_sensor(const SensorConfig& config);

/// Pixel centers in the sensor frame; id l = row * cols + col.
const std::vector<Vec3>& pixel_centers(const Sensor& sensor);

/// The planar region to monitor, at height gamma, with the price paid per
/// pixel that falls outside it.
struct Environment {
  double gamma = 0.0;
  std::vector<Vec2> mission;  // convex polygon, counterclockwise
  double phi_bar = 0.0;
};

Environment make_environment(double gamma, std::vector<Vec2> mission, double phi_bar);

bool contains(const Environment& env, const Vec2& q);

/// Height of the monitored plane above the sensor.
double plane_offset(const Sensor& sensor, const Environment& env);

/// Sensor frame to world.
Vec3 transform(const Sensor& sensor, const Rotation& r, const Vec3& p);

/// World to sensor frame.
Vec3 inverse_transform(const Sensor& sensor, const Rotation& r, const Vec3& q);

/// Perspective projection of a world point onto the image plane (sensor
/// frame, z = focal length). Throws FovError for points at or behind the
/// camera.
Vec3 project_to_image(const Sensor& sensor, const Rotation& r, const Vec3& q);

/// World point where the ray through an image-plane point meets the
/// monitored plane. Throws FovError when the ray misses it.
Vec3 back_project(const Sensor& sensor, const Environment& env, const Rotation& r,
                  const Vec3& image_point);

/// back_project of pixel center l.
Vec3 pixel_world_point(const Sensor& sensor, const Environment& env, const Rotation& r,
                       int pixel_id);

/// Footprint of the field of view on the monitored plane: the projected
/// image corners plus one halfspace per side. Membership is
/// halfspaces.row(l) * q <= offsets(l) for all l.
struct FovPolytope {
  std::array<Vec3, 4> vertices;  // on the monitored plane, counterclockwise
  Eigen::Matrix<double, 4, 2> halfspaces;
  Eigen::Vector4d offsets;
};

FovPolytope fov(const Sensor& sensor, const Environment& env, const Rotation& r);

bool contains(const FovPolytope& f, const Vec2& q, double tol = 0.0);

Vec2 centroid(const FovPolytope& f);

/// True when sensor a covers q strictly better than sensor b, from the
/// cross-multiplied comparison of their coverage costs.
bool dominates(const Sensor& a, const Sensor& b, const AmbientMatrix& w_metric, const Vec3& q);

/// Flags, per entry of pixel_ids, whether that pixel of sensors[self] is
/// active: its world point lies in the mission region and sensors[self]
/// wins the assignment against every other sensor whose field of view
/// covers the point (ties go to the lower id). Pixels whose rays miss the
/// plane are inactive.
std::vector<std::uint8_t> active_pixels(std::size_t self, std::span<const Sensor> sensors,
                                        std::span<const Rotation> rotations,
                                        std::span<const FovPolytope> fovs,
                                        const Environment& env, const AmbientMatrix& w_metric,
                                        std::span<const int> pixel_ids, Exec exec);

}  // namespace coverage
