#pragma once

#include <Eigen/Dense>

namespace coverage {

using AmbientMatrix = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Frobenius distance from the rotation group accepted by the Rotation
/// constructor.
inline constexpr double kRotationTol = 1e-9;

/// A 3x3 special-orthogonal matrix. The constructor rejects matrices that
/// are not orthogonal with determinant +1; orthonormalized() projects a
/// drifted matrix back onto the group first.
class Rotation {
 public:
  Rotation();
  explicit Rotation(const AmbientMatrix& m);

  const AmbientMatrix& matrix() const { return m_; }

  /// Nearest rotation in Frobenius norm (polar factor via SVD).
  static Rotation orthonormalized(const AmbientMatrix& m);

 private:
  AmbientMatrix m_;
};

/// An element of the tangent space at a base rotation R, stored as the
/// ambient matrix R*X with X skew-symmetric.
class TangentAtR {
 public:
  TangentAtR(const Rotation& base, const AmbientMatrix& delta);

  const Rotation& base() const { return base_; }
  const AmbientMatrix& delta() const { return delta_; }

  /// The skew factor X = R^T * delta.
  AmbientMatrix body() const { return base_.matrix().transpose() * delta_; }

 private:
  Rotation base_;
  AmbientMatrix delta_;
};

/// One or two unit rotation axes restricting an underactuated sensor.
/// The second axis is optional; when present it must not be (anti)parallel
/// to the first.
class AxisPair {
 public:
  explicit AxisPair(const Vec3& primary);
  AxisPair(const Vec3& primary, const Vec3& secondary);

  const Vec3& primary() const { return primary_; }
  const Vec3& secondary() const { return secondary_; }
  bool single_axis() const { return single_; }

 private:
  Vec3 primary_;
  Vec3 secondary_;
  bool single_;
};

/// Skew-symmetric matrix of w, i.e. hat(w) * v = w x v.
AmbientMatrix hat(const Vec3& w);

/// Inverse of hat. The argument must be skew-symmetric.
Vec3 vee(const AmbientMatrix& s);

/// Skew-symmetric part (m - m^T) / 2.
AmbientMatrix sk(const AmbientMatrix& m);

/// Trace inner product tr(a^T b).
double inner(const AmbientMatrix& a, const AmbientMatrix& b);

/// Orthogonal projection of an ambient matrix onto the tangent space at R.
TangentAtR project_tangent(const Rotation& r, const AmbientMatrix& m);

/// Rotation exp(hat(w)) by Rodrigues' formula, with a series expansion for
/// small angles.
AmbientMatrix rodrigues(const Vec3& w);

/// Moves from the base of g along g by the given step:
/// R * expm(step * R^T delta).
Rotation retract(const TangentAtR& g, double step);

/// Projects g onto the span of the rotations generated by the given axes,
/// i.e. the velocities an underactuated sensor can realize. For two axes
/// this solves the 2x2 normal equations of the trace inner product; since
/// <hat(a), hat(b)> = 2 a.b, that reduces to projecting vee(X) onto
/// span{axes} in R^3.
TangentAtR project_underactuated(const TangentAtR& g, const AxisPair& axes);

}  // namespace coverage
