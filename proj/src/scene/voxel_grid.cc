#include "ncmap/scene/voxel_grid.h"

#include <algorithm>
#include <cmath>

#include "ncmap/util/error.h"

namespace ncmap {

std::string VoxelId::ToString() const {
  return "(" + std::to_string(ix) + "," + std::to_string(iy) + "," +
         std::to_string(iz) + ")";
}

VoxelId VoxelOf(const Eigen::Vector3d& position, double side_length) {
  return VoxelId{static_cast<int>(std::floor(position.x() / side_length)),
                 static_cast<int>(std::floor(position.y() / side_length)),
                 static_cast<int>(std::floor(position.z() / side_length))};
}

std::map<VoxelId, std::vector<int>> Voxelize(std::span<const Point3D> points,
                                             double side_length) {
  if (!(side_length > 0.0)) {
    throw InvalidArgument("voxelize: side length must be > 0, got " +
                          std::to_string(side_length));
  }
  std::map<VoxelId, std::vector<int>> cells;
  for (const Point3D& p : points) {
    if (!p.valid) continue;
    cells[VoxelOf(p.position, side_length)].push_back(p.id);
  }
  for (auto& [id, members] : cells) std::sort(members.begin(), members.end());
  return cells;
}

}  // namespace ncmap
