#include "ncmap/geometry/pose_error.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ncmap {

PoseError ComputePoseError(const Pose& estimate, const Pose& truth) {
  PoseError err;
  err.translation_m = (estimate.Center() - truth.Center()).norm();
  const double c = std::clamp(
      ((truth.rotation.transpose() * estimate.rotation).trace() - 1.0) / 2.0,
      -1.0, 1.0);
  err.rotation_deg = std::clamp(std::acos(c) * 180.0 / std::numbers::pi, 0.0,
                                180.0);
  return err;
}

}  // namespace ncmap
