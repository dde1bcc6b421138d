#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ncmap/scene/code_bank.h"
#include "ncmap/scene/voxel_grid.h"
#include "ncmap/synth/dataset.h"

namespace ncmap {

struct Voxel {
  VoxelId id;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // mean of members
  std::vector<int> members;         // point ids, ascending
  std::vector<int> covering_views;  // view ids, ascending
  CodeBank bank;

  bool operator==(const Voxel&) const = default;
};

inline constexpr uint32_t kSceneFormatVersion = 1;

// The compressible map: one code bank per occupied cell.
struct SceneRepresentation {
  double side_length = 4.0;
  CodeBankDims dims;
  std::map<VoxelId, Voxel> voxels;
  uint32_t format_version = kSceneFormatVersion;

  bool operator==(const SceneRepresentation&) const = default;

  const Voxel& at(const VoxelId& id) const;
  Voxel& at(const VoxelId& id);
  int TotalCodes() const;
  int RetainedCodes() const;
};

struct SceneBuildOptions {
  double side_length = 4.0;
  CodeBankDims dims;
  int min_points = 20;
  uint64_t seed = 0;
  double code_init_std = 0.02;
  // Drop voxels no reference view covers instead of failing.
  bool drop_uncovered = false;
};

// Voxelizes the valid triangulated points, computes origins, initializes
// fresh code banks and assigns coverage. Throws DataError if a voxel has no
// covering view and drop_uncovered is false.
SceneRepresentation BuildScene(const ReferenceDataset& dataset,
                               const SceneBuildOptions& options);

// Sets every origin to the mean of its members' positions. Throws DataError
// on an empty voxel or a member that is not a valid point.
void ComputeOrigins(SceneRepresentation& scene, const ReferenceDataset& dataset);

// covering_views(V) = views observing at least min_points valid members of V.
void AssignCoverage(SceneRepresentation& scene, const ReferenceDataset& dataset,
                    int min_points = 20);

struct PruneReportRow {
  VoxelId voxel;
  int block = 0;
  int retained = 0;
  int total = 0;
};

struct PruneReport {
  std::vector<PruneReportRow> rows;
  int pruned_codes = 0;
  int retained_codes = 0;
  uint64_t bytes_before = 0;
  uint64_t bytes_after = 0;

  std::string ToCsv() const;
};

// Prunes every code whose |scale| is below the threshold. Throws
// InvalidArgument for a negative threshold.
PruneReport Prune(SceneRepresentation& scene, double threshold);

// Bytes of per-voxel fixed header: lattice id (3 x int32), origin
// (3 x float64), one float32 scale and one mask byte per code.
uint64_t VoxelHeaderBytes(const CodeBankDims& dims);

// Map payload: per voxel, the fixed header plus retained codes x D x
// scalar_width. Decoder weights are not included.
uint64_t SizeBytes(const SceneRepresentation& scene, int scalar_width = 4);

// File bytes beyond SizeBytes(scene, 4): the 32-byte file header plus, per
// voxel, two uint32 counts and one uint32 per member and covering view.
uint64_t SceneFileOverheadBytes(const SceneRepresentation& scene);

}  // namespace ncmap
