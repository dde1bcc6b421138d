#pragma once

#include "ncmap/geometry/camera.h"

namespace ncmap {

struct PoseError {
  double translation_m = 0.0;  // distance between camera centers
  double rotation_deg = 0.0;   // geodesic angle, in [0, 180]
};

PoseError ComputePoseError(const Pose& estimate, const Pose& truth);

}  // namespace ncmap
