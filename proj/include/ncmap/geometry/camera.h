#pragma once

#include <optional>

#include <Eigen/Core>

namespace ncmap {

// Camera-from-world rigid transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d Center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d ToCamera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  // Checks orthonormality and det = 1 to within tol.
  bool IsValid(double tol = 1e-9) const;

  // Camera at `center` looking at `target` with the image y axis pointing
  // roughly along -up.
  static Pose LookAt(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                     const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());
};

struct Intrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  bool IsValid() const;
  Eigen::Matrix3d Matrix() const;
  bool InImage(const Eigen::Vector2d& px, double margin = 0.0) const;
};

inline constexpr double kMinProjectionDepth = 1e-6;

// Pinhole projection. Returns nullopt when the point's camera-frame depth is
// at most kMinProjectionDepth.
std::optional<Eigen::Vector2d> Project(const Pose& pose, const Intrinsics& K,
                                       const Eigen::Vector3d& world);

// World-frame point at camera depth `depth` along the ray through `pixel`.
Eigen::Vector3d BackProject(const Pose& pose, const Intrinsics& K,
                            const Eigen::Vector2d& pixel, double depth);

// Nearest rotation to `m` in the Frobenius sense.
Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m);

Eigen::Matrix3d Skew(const Eigen::Vector3d& v);
// Rodrigues exponential map.
Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega);

}  // namespace ncmap
