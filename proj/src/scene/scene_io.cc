#include "ncmap/scene/scene_io.h"

#include "ncmap/util/binary_io.h"

namespace ncmap {

std::string SerializeScene(const SceneRepresentation& scene) {
  BinaryWriter w;
  w.PutMagic("NMAP");
  w.PutU32(kSceneFormatVersion);
  w.PutF64(scene.side_length);
  w.PutU32(static_cast<uint32_t>(scene.dims.blocks));
  w.PutU32(static_cast<uint32_t>(scene.dims.codes));
  w.PutU32(static_cast<uint32_t>(scene.dims.dim));
  w.PutU32(static_cast<uint32_t>(scene.voxels.size()));
  const int T = scene.dims.blocks;
  const int N = scene.dims.codes;
  for (const auto& [id, voxel] : scene.voxels) {
    w.PutI32(id.ix);
    w.PutI32(id.iy);
    w.PutI32(id.iz);
    for (int a = 0; a < 3; ++a) w.PutF64(voxel.origin(a));
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < N; ++j) {
        w.PutF32(static_cast<float>(voxel.bank.scales(t).value()(j, 0)));
      }
    }
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < N; ++j) w.PutU8(voxel.bank.pruned(t, j) ? 1 : 0);
    }
    for (int t = 0; t < T; ++t) {
      const diff::Matrix& codes = voxel.bank.codes(t).value();
      for (int j = 0; j < N; ++j) {
        if (voxel.bank.pruned(t, j)) continue;
        for (int d = 0; d < scene.dims.dim; ++d) {
          w.PutF32(static_cast<float>(codes(j, d)));
        }
      }
    }
    w.PutU32(static_cast<uint32_t>(voxel.members.size()));
    for (int m : voxel.members) w.PutU32(static_cast<uint32_t>(m));
    w.PutU32(static_cast<uint32_t>(voxel.covering_views.size()));
    for (int v : voxel.covering_views) w.PutU32(static_cast<uint32_t>(v));
  }
  return w.Release();
}

SceneRepresentation DeserializeScene(std::string_view bytes) {
  BinaryReader r(bytes, "scene");
  r.ExpectMagic("NMAP");
  const uint32_t version = r.GetU32();
  if (version != kSceneFormatVersion) {
    r.Fail("unsupported scene format version " + std::to_string(version));
  }
  SceneRepresentation scene;
  scene.format_version = version;
  scene.side_length = r.GetF64();
  if (!(scene.side_length > 0.0)) r.Fail("non-positive side length");
  scene.dims.blocks = static_cast<int>(r.GetU32());
  scene.dims.codes = static_cast<int>(r.GetU32());
  scene.dims.dim = static_cast<int>(r.GetU32());
  try {
    scene.dims.Validate();
  } catch (const InvalidArgument& e) {
    r.Fail(e.what());
  }
  const int T = scene.dims.blocks;
  const int N = scene.dims.codes;
  const int D = scene.dims.dim;
  const uint32_t count = r.GetCount(VoxelHeaderBytes(scene.dims) + 8);
  for (uint32_t v = 0; v < count; ++v) {
    Voxel voxel;
    voxel.id.ix = r.GetI32();
    voxel.id.iy = r.GetI32();
    voxel.id.iz = r.GetI32();
    for (int a = 0; a < 3; ++a) voxel.origin(a) = r.GetF64();
    CodeBank bank(scene.dims, 0, 0.0, "voxel" + voxel.id.ToString());
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < N; ++j) {
        bank.mutable_scales(t).mutable_value()(j, 0) = r.GetF32();
      }
    }
    for (int t = 0; t < T; ++t) {
      std::vector<bool> mask(N);
      for (int j = 0; j < N; ++j) {
        const uint8_t flag = r.GetU8();
        if (flag > 1) r.Fail("invalid pruned flag");
        mask[j] = flag == 1;
      }
      bank.SetPrunedMask(t, mask);
    }
    for (int t = 0; t < T; ++t) {
      diff::Matrix& codes = bank.mutable_codes(t).mutable_value();
      codes.setZero();
      for (int j = 0; j < N; ++j) {
        if (bank.pruned(t, j)) continue;
        for (int d = 0; d < D; ++d) codes(j, d) = r.GetF32();
      }
    }
    voxel.bank = std::move(bank);
    const uint32_t members = r.GetCount(4);
    for (uint32_t i = 0; i < members; ++i) {
      voxel.members.push_back(static_cast<int>(r.GetU32()));
    }
    const uint32_t views = r.GetCount(4);
    for (uint32_t i = 0; i < views; ++i) {
      voxel.covering_views.push_back(static_cast<int>(r.GetU32()));
    }
    if (voxel.members.empty()) r.Fail("voxel without members");
    const VoxelId id = voxel.id;
    if (!scene.voxels.emplace(id, std::move(voxel)).second) {
      r.Fail("duplicate voxel " + id.ToString());
    }
  }
  r.ExpectEnd();
  return scene;
}

void SaveScene(const SceneRepresentation& scene, const std::string& path) {
  WriteFileBytes(path, SerializeScene(scene));
}

SceneRepresentation LoadScene(const std::string& path) {
  return DeserializeScene(ReadFileBytes(path));
}

}  // namespace ncmap
