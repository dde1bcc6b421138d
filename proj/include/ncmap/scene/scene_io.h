#pragma once

#include <string>
#include <string_view>

#include "ncmap/scene/scene.h"

namespace ncmap {

// Scene container, all fields little-endian:
//
//   "NMAP" | u32 version | f64 side_length | u32 T | u32 N | u32 D |
//   u32 voxel_count
//   per voxel, in VoxelId order:
//     i32 ix, iy, iz | f64 origin[3] | f32 scale[T*N] | u8 pruned[T*N] |
//     f32 code[D] for every unpruned (block, code) in row-major order |
//     u32 member_count | u32 member[...] | u32 view_count | u32 view[...]
//
// Codes and scales are stored as 32-bit reals; this is the map size that
// SizeBytes reports. Pruned codes are not stored and load as zeros.
std::string SerializeScene(const SceneRepresentation& scene);
SceneRepresentation DeserializeScene(std::string_view bytes);

void SaveScene(const SceneRepresentation& scene, const std::string& path);
// Throws DataError naming the byte offset on bad magic, version or
// truncation; no partial scene is returned.
SceneRepresentation LoadScene(const std::string& path);

}  // namespace ncmap
