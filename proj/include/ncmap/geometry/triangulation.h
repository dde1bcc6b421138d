#pragma once

#include <span>

#include <Eigen/Core>

#include "ncmap/geometry/camera.h"

namespace ncmap {

struct Point3D {
  int id = -1;
  // Meaningful only when valid.
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool valid = false;
};

struct Observation {
  const Pose* pose = nullptr;
  const Intrinsics* intrinsics = nullptr;
  int view_id = -1;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct TriangulationOptions {
  double max_reprojection_error = 2.0;  // pixels
  double min_angle_deg = 0.5;
};

// Linear (DLT) multi-view triangulation. The result is marked invalid when
// the point falls behind any camera, its largest reprojection error exceeds
// the tolerance, or the widest pair of viewing rays is below the minimum
// triangulation angle. Throws InvalidArgument for fewer than two distinct
// views.
Point3D TriangulateDlt(std::span<const Observation> observations,
                       const TriangulationOptions& options = {});

}  // namespace ncmap
