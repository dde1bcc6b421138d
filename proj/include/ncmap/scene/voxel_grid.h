#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ncmap/geometry/triangulation.h"

namespace ncmap {

// Integer lattice coordinates of the half-open cell
// [ix*l, (ix+1)*l) x [iy*l, (iy+1)*l) x [iz*l, (iz+1)*l).
struct VoxelId {
  int ix = 0;
  int iy = 0;
  int iz = 0;

  auto operator<=>(const VoxelId&) const = default;
  std::string ToString() const;
};

VoxelId VoxelOf(const Eigen::Vector3d& position, double side_length);

// Partitions the valid points into occupied cells. Invalid points are
// skipped; empty cells are absent. Member ids are in ascending order.
// Throws InvalidArgument if side_length <= 0.
std::map<VoxelId, std::vector<int>> Voxelize(std::span<const Point3D> points,
                                             double side_length);

}  // namespace ncmap
