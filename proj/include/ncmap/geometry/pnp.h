#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ncmap/geometry/camera.h"

namespace ncmap {

struct Correspondence {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d world = Eigen::Vector3d::Zero();
  double confidence = 1.0;
};

inline constexpr size_t kPnpMinimalSample = 6;

struct PnpOptions {
  int max_iterations = 20;
  double step_tolerance = 1e-10;
};

// DLT initialization followed by Gauss-Newton refinement of the
// reprojection error on SE(3). Throws InvalidArgument for fewer than six
// correspondences and DegenerateError for a rank-deficient design matrix.
Pose PnpSolve(std::span<const Correspondence> corrs, const Intrinsics& K,
              const PnpOptions& options = {});

// Linear pose only, no refinement.
Pose PnpDlt(std::span<const Correspondence> corrs, const Intrinsics& K);

// Pixel reprojection error, or +inf when the point is behind the camera.
double ReprojectionError(const Pose& pose, const Intrinsics& K,
                         const Correspondence& c);

struct RansacOptions {
  double inlier_tolerance = 3.0;  // pixels
  int max_iterations = 1000;
  // Early exit once this probability of having drawn an all-inlier sample
  // is reached.
  double confidence = 0.9999;
  uint64_t seed = 0;
};

struct RansacResult {
  // Empty when fewer than six inliers support the best model.
  std::optional<Pose> pose;
  std::vector<bool> inliers;
  size_t num_inliers = 0;
  int iterations = 0;
};

// Seeded RANSAC over six-point hypotheses (PnpSolve on the sample). A
// hypothesis that beats the current best is refit once on its inliers. The
// best hypothesis (most inliers, earliest trial on ties) is refined with
// PnpSolve on its inliers and the inlier set recomputed until it stops
// changing. Every returned
// inlier has reprojection error <= inlier_tolerance under the returned pose.
// Throws InvalidArgument for fewer than six correspondences.
RansacResult RansacPnp(std::span<const Correspondence> corrs,
                       const Intrinsics& K, const RansacOptions& options = {});

}  // namespace ncmap
