#include "ncmap/scene/scene.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

uint64_t VoxelSeed(uint64_t seed, const VoxelId& id) {
  auto mix = [](uint64_t h, int64_t v) {
    h ^= static_cast<uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  };
  uint64_t h = mix(seed, id.ix);
  h = mix(h, id.iy);
  return mix(h, id.iz);
}

}  // namespace

const Voxel& SceneRepresentation::at(const VoxelId& id) const {
  auto it = voxels.find(id);
  if (it == voxels.end()) throw InvalidArgument("no voxel " + id.ToString());
  return it->second;
}

Voxel& SceneRepresentation::at(const VoxelId& id) {
  auto it = voxels.find(id);
  if (it == voxels.end()) throw InvalidArgument("no voxel " + id.ToString());
  return it->second;
}

int SceneRepresentation::TotalCodes() const {
  return static_cast<int>(voxels.size()) * dims.blocks * dims.codes;
}

int SceneRepresentation::RetainedCodes() const {
  int n = 0;
  for (const auto& [id, voxel] : voxels) n += voxel.bank.RetainedCodes();
  return n;
}

SceneRepresentation BuildScene(const ReferenceDataset& dataset,
                               const SceneBuildOptions& options) {
  options.dims.Validate();
  SceneRepresentation scene;
  scene.side_length = options.side_length;
  scene.dims = options.dims;
  for (auto& [id, members] : Voxelize(dataset.points, options.side_length)) {
    Voxel voxel;
    voxel.id = id;
    voxel.members = std::move(members);
    voxel.bank = CodeBank(options.dims, VoxelSeed(options.seed, id),
                          options.code_init_std, "voxel" + id.ToString());
    scene.voxels.emplace(id, std::move(voxel));
  }
  ComputeOrigins(scene, dataset);
  AssignCoverage(scene, dataset, options.min_points);
  for (auto it = scene.voxels.begin(); it != scene.voxels.end();) {
    if (!it->second.covering_views.empty()) {
      ++it;
      continue;
    }
    if (!options.drop_uncovered) {
      throw DataError("voxel " + it->first.ToString() + " with " +
                      std::to_string(it->second.members.size()) +
                      " members has no covering view (min_points=" +
                      std::to_string(options.min_points) + ")");
    }
    it = scene.voxels.erase(it);
  }
  return scene;
}

void ComputeOrigins(SceneRepresentation& scene,
                    const ReferenceDataset& dataset) {
  for (auto& [id, voxel] : scene.voxels) {
    if (voxel.members.empty()) {
      throw DataError("compute_origins: voxel " + id.ToString() +
                      " has no members");
    }
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (int m : voxel.members) {
      const Point3D* p = dataset.FindPoint(m);
      if (p == nullptr || !p->valid) {
        throw DataError("compute_origins: member " + std::to_string(m) +
                        " of voxel " + id.ToString() + " is not a valid point");
      }
      sum += p->position;
    }
    voxel.origin = sum / static_cast<double>(voxel.members.size());
  }
}

void AssignCoverage(SceneRepresentation& scene, const ReferenceDataset& dataset,
                    int min_points) {
  std::map<int, VoxelId> owner;
  for (const auto& [id, voxel] : scene.voxels) {
    for (int m : voxel.members) owner.emplace(m, id);
  }
  for (auto& [id, voxel] : scene.voxels) voxel.covering_views.clear();
  for (const ReferenceView& view : dataset.views) {
    std::map<VoxelId, int> counts;
    for (int pid : view.keypoints.point_ids) {
      const Point3D* p = dataset.FindPoint(pid);
      if (p == nullptr || !p->valid) continue;
      auto it = owner.find(pid);
      if (it != owner.end()) ++counts[it->second];
    }
    for (const auto& [vid, count] : counts) {
      if (count >= min_points) scene.voxels.at(vid).covering_views.push_back(view.id);
    }
  }
  for (auto& [id, voxel] : scene.voxels) {
    std::sort(voxel.covering_views.begin(), voxel.covering_views.end());
  }
}

std::string PruneReport::ToCsv() const {
  std::ostringstream os;
  os << "voxel_id,block,retained,total\n";
  for (const PruneReportRow& row : rows) {
    os << row.voxel.ix << ":" << row.voxel.iy << ":" << row.voxel.iz << ","
       << row.block << "," << row.retained << "," << row.total << "\n";
  }
  return os.str();
}

PruneReport Prune(SceneRepresentation& scene, double threshold) {
  if (!(threshold >= 0.0)) {
    throw InvalidArgument("prune: threshold must be >= 0, got " +
                          std::to_string(threshold));
  }
  PruneReport report;
  report.bytes_before = SizeBytes(scene, 4);
  for (auto& [id, voxel] : scene.voxels) {
    CodeBank& bank = voxel.bank;
    for (int t = 0; t < scene.dims.blocks; ++t) {
      for (int j = 0; j < scene.dims.codes; ++j) {
        if (bank.pruned(t, j)) continue;
        if (std::abs(bank.scales(t).value()(j, 0)) < threshold) {
          bank.PruneCode(t, j);
          ++report.pruned_codes;
        }
      }
      report.rows.push_back(
          {id, t, bank.RetainedCodes(t), scene.dims.codes});
      report.retained_codes += bank.RetainedCodes(t);
    }
  }
  report.bytes_after = SizeBytes(scene, 4);
  return report;
}

uint64_t VoxelHeaderBytes(const CodeBankDims& dims) {
  return 3 * 4 + 3 * 8 +
         static_cast<uint64_t>(dims.blocks) * dims.codes * (4 + 1);
}

uint64_t SizeBytes(const SceneRepresentation& scene, int scalar_width) {
  uint64_t total = 0;
  for (const auto& [id, voxel] : scene.voxels) {
    total += VoxelHeaderBytes(scene.dims);
    total += static_cast<uint64_t>(voxel.bank.RetainedCodes()) *
             scene.dims.dim * scalar_width;
  }
  return total;
}

uint64_t SceneFileOverheadBytes(const SceneRepresentation& scene) {
  uint64_t total = 32;
  for (const auto& [id, voxel] : scene.voxels) {
    total += 8 + 4 * (voxel.members.size() + voxel.covering_views.size());
  }
  return total;
}

}  // namespace ncmap
