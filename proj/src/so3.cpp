#include <coverage/so3.hpp>

#include <cmath>
#include <stdexcept>

namespace coverage {

namespace {

constexpr double kSkewTol = 1e-9;
constexpr double kAxisUnitTol = 1e-9;
constexpr double kAxisParallelTol = 1e-9;
constexpr double kSmallAngle = 1e-8;

}  // namespace

Rotation::Rotation() : m_(AmbientMatrix::Identity()) {}

Rotation::Rotation(const AmbientMatrix& m) : m_(m) {
  const double ortho_err = (m.transpose() * m - AmbientMatrix::Identity()).norm();
  if (!(ortho_err <= kRotationTol)) {
    throw std::invalid_argument("Rotation: matrix is not orthogonal");
  }
  if (!(m.determinant() > 0.0)) {
    throw std::invalid_argument("Rotation: determinant is not +1");
  }
}

Rotation Rotation::orthonormalized(const AmbientMatrix& m) {
  Eigen::JacobiSVD<AmbientMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AmbientMatrix r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    AmbientMatrix u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return Rotation(r);
}

TangentAtR::TangentAtR(const Rotation& base, const AmbientMatrix& delta)
    : base_(base), delta_(delta) {
  const AmbientMatrix x = base.matrix().transpose() * delta;
  if ((x + x.transpose()).norm() > kSkewTol * (1.0 + delta.norm())) {
    throw std::invalid_argument("TangentAtR: delta is not tangent at base");
  }
}

AxisPair::AxisPair(const Vec3& primary)
    : primary_(primary), secondary_(Vec3::Zero()), single_(true) {
  if (std::abs(primary.norm() - 1.0) > kAxisUnitTol) {
    throw std::invalid_argument("AxisPair: primary axis is not unit length");
  }
}

AxisPair::AxisPair(const Vec3& primary, const Vec3& secondary)
    : primary_(primary), secondary_(secondary), single_(false) {
  if (std::abs(primary.norm() - 1.0) > kAxisUnitTol) {
    throw std::invalid_argument("AxisPair: primary axis is not unit length");
  }
  if (secondary.norm() == 0.0) {
    secondary_ = Vec3::Zero();
    single_ = true;
    return;
  }
  if (std::abs(secondary.norm() - 1.0) > kAxisUnitTol) {
    throw std::invalid_argument("AxisPair: secondary axis is not unit length");
  }
  if (std::abs(primary.dot(secondary)) > 1.0 - kAxisParallelTol) {
    throw std::invalid_argument("AxisPair: axes are parallel");
  }
}

AmbientMatrix hat(const Vec3& w) {
  AmbientMatrix s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return s;
}

Vec3 vee(const AmbientMatrix& s) {
  if ((s + s.transpose()).norm() > kSkewTol * (1.0 + s.norm())) {
    throw std::invalid_argument("vee: matrix is not skew-symmetric");
  }
  return Vec3(s(2, 1), s(0, 2), s(1, 0));
}

AmbientMatrix sk(const AmbientMatrix& m) { return 0.5 * (m - m.transpose()); }

double inner(const AmbientMatrix& a, const AmbientMatrix& b) {
  return (a.transpose() * b).trace();
}

TangentAtR project_tangent(const Rotation& r, const AmbientMatrix& m) {
  return TangentAtR(r, r.matrix() * sk(r.matrix().transpose() * m));
}

AmbientMatrix rodrigues(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // sin(theta) / theta
  double b;  // (1 - cos(theta)) / theta^2
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const AmbientMatrix k = hat(w);
  return AmbientMatrix::Identity() + a * k + b * (k * k);
}

Rotation retract(const TangentAtR& g, double step) {
  const Vec3 w = vee(sk(g.body()));
  return Rotation(g.base().matrix() * rodrigues(step * w));
}

TangentAtR project_underactuated(const TangentAtR& g, const AxisPair& axes) {
  const Vec3 w = vee(sk(g.body()));
  Vec3 projected;
  if (axes.single_axis()) {
    projected = w.dot(axes.primary()) * axes.primary();
  } else {
    const double c = axes.primary().dot(axes.secondary());
    const double det = 1.0 - c * c;
    if (det <= kAxisParallelTol) {
      throw std::invalid_argument("project_underactuated: axes are numerically parallel");
    }
    const double r1 = w.dot(axes.primary());
    const double r2 = w.dot(axes.secondary());
    const double b1 = (r1 - c * r2) / det;
    const double b2 = (r2 - c * r1) / det;
    projected = b1 * axes.primary() + b2 * axes.secondary();
  }
  return TangentAtR(g.base(), g.base().matrix() * hat(projected));
}

}  // namespace coverage
