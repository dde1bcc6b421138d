#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ncmap/diff/tensor.h"
#include "ncmap/geometry/camera.h"
#include "ncmap/geometry/triangulation.h"
#include "ncmap/synth/dataset.h"

namespace ncmap {

struct WorldConfig {
  int num_points = 2000;
  Eigen::Vector3d box_min = Eigen::Vector3d(0.0, 0.0, 0.0);  // meters
  Eigen::Vector3d extent = Eigen::Vector3d(8.0, 8.0, 4.0);   // meters
  int num_ref_views = 100;
  int num_query_views = 20;
  Intrinsics intrinsics;

  double pixel_noise = 0.5;  // pixels, per axis
  int descriptor_dim = 64;
  // Expected norm of the per-observation descriptor noise vector.
  double descriptor_noise = 0.05;
  // Expected norm of the per-view illumination shift.
  double illumination_shift = 0.1;
  // Appearance field wavelength range, meters.
  double appearance_min_wavelength = 8.0;
  double appearance_max_wavelength = 64.0;
  // Seeds the appearance field and illumination subspace. Shared across
  // worlds so that one feature encoder applies to all of them.
  uint64_t appearance_seed = 7;

  double min_depth = 0.5;   // meters
  double max_depth = 40.0;  // meters
  double frustum_margin = 0.0;  // pixels

  double ref_orbit_radius = 10.0;
  double ref_orbit_height = 3.0;  // above the box center
  double ref_jitter = 0.3;        // meters, applied to center and target
  double query_radius_min = 7.0;
  double query_radius_max = 12.0;
  double query_height_min = 1.0;
  double query_height_max = 5.0;
  double query_min_baseline = 0.5;  // meters from every reference center

  uint64_t seed = 1;

  // Throws InvalidArgument on a degenerate or inconsistent configuration.
  void Validate() const;
  Eigen::Vector3d BoxCenter() const { return box_min + 0.5 * extent; }
};

// Fixed map from scene position to a unit-norm descriptor: a sum of random
// plane waves embedded in a subspace orthogonal to the illumination basis.
struct AppearanceModel {
  Eigen::MatrixXd frequencies;  // M x 3, radians per meter
  Eigen::VectorXd phases;       // M
  Eigen::MatrixXd field_basis;  // D x 2M, orthonormal columns
  Eigen::MatrixXd illumination_basis;  // D x k, orthonormal columns

  static AppearanceModel Create(int descriptor_dim, double min_wavelength,
                                double max_wavelength, uint64_t seed);
  Eigen::VectorXd Descriptor(const Eigen::Vector3d& position) const;
};

struct World {
  std::vector<Eigen::Vector3d> points;
  diff::Matrix descriptors;  // ground-truth unit-norm descriptor per point
  std::vector<Pose> ref_poses;
  std::vector<Pose> query_poses;
  AppearanceModel appearance;
};

World GenerateWorld(const WorldConfig& config);

// Visible points (depth window and frustum) of the camera, with pixel noise,
// descriptor noise and a per-view illumination shift drawn from the
// generator for (config.seed, stream).
Keypoints Observe(const Pose& pose, const Intrinsics& intrinsics,
                  const World& world, const WorldConfig& config,
                  uint64_t stream);

struct SyntheticData {
  ReferenceDataset reference;
  std::vector<QueryView> queries;
  GroundTruth truth;
};

// Observes every camera, assembles tracks by shared point id and
// triangulates each track with TriangulateDlt.
SyntheticData BuildDataset(const World& world, const WorldConfig& config,
                           const TriangulationOptions& tri = {});

// Observation streams used by BuildDataset.
inline uint64_t ReferenceStream(int view) { return 1000000 + view; }
inline uint64_t QueryStream(int view) { return 2000000 + view; }

}  // namespace ncmap
