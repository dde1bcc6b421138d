#include "ncmap/geometry/camera.h"

#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace ncmap {

bool Pose::IsValid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::LookAt(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                  const Eigen::Vector3d& up) {
  const Eigen::Vector3d z = (target - center).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Eigen::Vector3d::UnitX());
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Pose pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * center;
  return pose;
}

bool Intrinsics::IsValid() const {
  return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx <= width && cy >= 0.0 &&
         cy <= height && width > 0 && height > 0;
}

Eigen::Matrix3d Intrinsics::Matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

bool Intrinsics::InImage(const Eigen::Vector2d& px, double margin) const {
  return px.x() >= margin && px.y() >= margin && px.x() <= width - margin &&
         px.y() <= height - margin;
}

std::optional<Eigen::Vector2d> Project(const Pose& pose, const Intrinsics& K,
                                       const Eigen::Vector3d& world) {
  const Eigen::Vector3d c = pose.ToCamera(world);
  if (!(c.z() > kMinProjectionDepth)) return std::nullopt;
  return Eigen::Vector2d(K.fx * c.x() / c.z() + K.cx,
                         K.fy * c.y() / c.z() + K.cy);
}

Eigen::Vector3d BackProject(const Pose& pose, const Intrinsics& K,
                            const Eigen::Vector2d& pixel, double depth) {
  const Eigen::Vector3d cam((pixel.x() - K.cx) / K.fx * depth,
                            (pixel.y() - K.cy) / K.fy * depth, depth);
  return pose.rotation.transpose() * (cam - pose.translation);
}

Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d k = Skew(omega);
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

}  // namespace ncmap
