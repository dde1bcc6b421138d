#pragma once

#include <vector>

#include <Eigen/Core>

#include "ncmap/diff/tensor.h"
#include "ncmap/geometry/camera.h"
#include "ncmap/geometry/triangulation.h"

namespace ncmap {

// Keypoints of one image, stored column-wise: pixels, raw descriptors (one
// unit-norm row per keypoint) and the id of the observed 3D point.
struct Keypoints {
  std::vector<Eigen::Vector2d> pixels;
  diff::Matrix descriptors;
  std::vector<int> point_ids;

  size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
};

struct ReferenceView {
  int id = -1;
  Pose pose;
  Intrinsics intrinsics;
  Keypoints keypoints;
};

// A query image as the localizer sees it: no pose, point ids set to -1.
struct QueryView {
  int id = -1;
  Intrinsics intrinsics;
  Keypoints keypoints;
};

// Training-facing reference data. `points[i].id == i`; positions come from
// triangulation, never from ground truth.
struct ReferenceDataset {
  int descriptor_dim = 0;
  std::vector<ReferenceView> views;
  std::vector<Point3D> points;

  const Point3D* FindPoint(int id) const {
    if (id < 0 || id >= static_cast<int>(points.size())) return nullptr;
    return &points[id];
  }
};

// Evaluation-only ground truth.
struct GroundTruth {
  std::vector<Eigen::Vector3d> point_positions;
  std::vector<Pose> query_poses;
  // Observed point id per query keypoint.
  std::vector<std::vector<int>> query_point_ids;
};

}  // namespace ncmap
