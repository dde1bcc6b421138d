#include "ncmap/synth/dataset_io.h"

#include <cmath>

#include <json.hpp>

#include "ncmap/util/binary_io.h"

namespace ncmap {
namespace {

constexpr uint32_t kKindLocalization = 1;
constexpr uint32_t kKindTruth = 2;

void PutPose(BinaryWriter& w, const Pose& pose) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.PutF64(pose.rotation(r, c));
  for (int a = 0; a < 3; ++a) w.PutF64(pose.translation(a));
}

Pose GetPose(BinaryReader& r) {
  Pose pose;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) pose.rotation(i, c) = r.GetF64();
  for (int a = 0; a < 3; ++a) pose.translation(a) = r.GetF64();
  if (!pose.IsValid(1e-6)) r.Fail("pose rotation is not orthonormal");
  return pose;
}

void PutIntrinsics(BinaryWriter& w, const Intrinsics& k) {
  w.PutF64(k.fx);
  w.PutF64(k.fy);
  w.PutF64(k.cx);
  w.PutF64(k.cy);
  w.PutU32(static_cast<uint32_t>(k.width));
  w.PutU32(static_cast<uint32_t>(k.height));
}

Intrinsics GetIntrinsics(BinaryReader& r) {
  Intrinsics k;
  k.fx = r.GetF64();
  k.fy = r.GetF64();
  k.cx = r.GetF64();
  k.cy = r.GetF64();
  k.width = static_cast<int>(r.GetU32());
  k.height = static_cast<int>(r.GetU32());
  if (!k.IsValid()) r.Fail("invalid intrinsics");
  return k;
}

void PutKeypoints(BinaryWriter& w, const Keypoints& kp) {
  w.PutU32(static_cast<uint32_t>(kp.size()));
  for (size_t i = 0; i < kp.size(); ++i) {
    w.PutF64(kp.pixels[i].x());
    w.PutF64(kp.pixels[i].y());
    w.PutI32(kp.point_ids[i]);
    for (Eigen::Index d = 0; d < kp.descriptors.cols(); ++d) {
      w.PutF64(kp.descriptors(static_cast<Eigen::Index>(i), d));
    }
  }
}

Keypoints GetKeypoints(BinaryReader& r, int dim) {
  Keypoints kp;
  const uint32_t n = r.GetCount(20 + 8 * static_cast<size_t>(dim));
  kp.descriptors.resize(n, dim);
  for (uint32_t i = 0; i < n; ++i) {
    const double x = r.GetF64();
    const double y = r.GetF64();
    kp.pixels.emplace_back(x, y);
    kp.point_ids.push_back(r.GetI32());
    for (int d = 0; d < dim; ++d) {
      const double v = r.GetF64();
      if (!std::isfinite(v)) r.Fail("non-finite descriptor");
      kp.descriptors(i, d) = v;
    }
  }
  return kp;
}

}  // namespace

std::string SerializeDataset(const ReferenceDataset& reference,
                             const std::vector<QueryView>& queries) {
  BinaryWriter w;
  w.PutMagic("NMDS");
  w.PutU32(kDatasetFormatVersion);
  w.PutU32(kKindLocalization);
  w.PutU32(static_cast<uint32_t>(reference.descriptor_dim));
  w.PutU32(static_cast<uint32_t>(reference.views.size()));
  for (const ReferenceView& v : reference.views) {
    w.PutI32(v.id);
    PutPose(w, v.pose);
    PutIntrinsics(w, v.intrinsics);
    PutKeypoints(w, v.keypoints);
  }
  w.PutU32(static_cast<uint32_t>(reference.points.size()));
  for (const Point3D& p : reference.points) {
    w.PutI32(p.id);
    w.PutU8(p.valid ? 1 : 0);
    for (int a = 0; a < 3; ++a) w.PutF64(p.position(a));
  }
  w.PutU32(static_cast<uint32_t>(queries.size()));
  for (const QueryView& q : queries) {
    w.PutI32(q.id);
    PutIntrinsics(w, q.intrinsics);
    PutKeypoints(w, q.keypoints);
  }
  return w.Release();
}

LocalizationData DeserializeDataset(std::string_view bytes) {
  BinaryReader r(bytes, "dataset");
  r.ExpectMagic("NMDS");
  const uint32_t version = r.GetU32();
  if (version != kDatasetFormatVersion) {
    r.Fail("unsupported dataset format version " + std::to_string(version));
  }
  if (r.GetU32() != kKindLocalization) r.Fail("not a localization dataset");
  LocalizationData data;
  ReferenceDataset& ref = data.reference;
  const uint32_t dim = r.GetU32();
  if (dim < 1 || dim > 65536) r.Fail("invalid descriptor dim");
  ref.descriptor_dim = static_cast<int>(dim);
  const uint32_t views = r.GetCount(4 + 96 + 40 + 4);
  for (uint32_t v = 0; v < views; ++v) {
    ReferenceView view;
    view.id = r.GetI32();
    view.pose = GetPose(r);
    view.intrinsics = GetIntrinsics(r);
    view.keypoints = GetKeypoints(r, ref.descriptor_dim);
    ref.views.push_back(std::move(view));
  }
  const uint32_t points = r.GetCount(4 + 1 + 24);
  for (uint32_t i = 0; i < points; ++i) {
    Point3D p;
    p.id = r.GetI32();
    if (p.id != static_cast<int>(i)) r.Fail("point ids must equal their index");
    const uint8_t valid = r.GetU8();
    if (valid > 1) r.Fail("invalid point flag");
    p.valid = valid == 1;
    for (int a = 0; a < 3; ++a) p.position(a) = r.GetF64();
    ref.points.push_back(p);
  }
  const uint32_t queries = r.GetCount(4 + 40 + 4);
  for (uint32_t q = 0; q < queries; ++q) {
    QueryView view;
    view.id = r.GetI32();
    view.intrinsics = GetIntrinsics(r);
    view.keypoints = GetKeypoints(r, ref.descriptor_dim);
    data.queries.push_back(std::move(view));
  }
  r.ExpectEnd();
  return data;
}

std::string SerializeGroundTruth(const GroundTruth& truth) {
  BinaryWriter w;
  w.PutMagic("NMDS");
  w.PutU32(kDatasetFormatVersion);
  w.PutU32(kKindTruth);
  w.PutU32(static_cast<uint32_t>(truth.point_positions.size()));
  for (const Eigen::Vector3d& p : truth.point_positions) {
    for (int a = 0; a < 3; ++a) w.PutF64(p(a));
  }
  w.PutU32(static_cast<uint32_t>(truth.query_poses.size()));
  for (size_t q = 0; q < truth.query_poses.size(); ++q) {
    PutPose(w, truth.query_poses[q]);
    const std::vector<int> empty;
    const std::vector<int>& ids =
        q < truth.query_point_ids.size() ? truth.query_point_ids[q] : empty;
    w.PutU32(static_cast<uint32_t>(ids.size()));
    for (int id : ids) w.PutI32(id);
  }
  return w.Release();
}

GroundTruth DeserializeGroundTruth(std::string_view bytes) {
  BinaryReader r(bytes, "ground truth");
  r.ExpectMagic("NMDS");
  const uint32_t version = r.GetU32();
  if (version != kDatasetFormatVersion) {
    r.Fail("unsupported dataset format version " + std::to_string(version));
  }
  if (r.GetU32() != kKindTruth) r.Fail("not a ground-truth file");
  GroundTruth truth;
  const uint32_t points = r.GetCount(24);
  for (uint32_t i = 0; i < points; ++i) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) p(a) = r.GetF64();
    truth.point_positions.push_back(p);
  }
  const uint32_t queries = r.GetCount(96 + 4);
  for (uint32_t q = 0; q < queries; ++q) {
    truth.query_poses.push_back(GetPose(r));
    const uint32_t n = r.GetCount(4);
    std::vector<int> ids;
    for (uint32_t i = 0; i < n; ++i) ids.push_back(r.GetI32());
    truth.query_point_ids.push_back(std::move(ids));
  }
  r.ExpectEnd();
  return truth;
}

void SaveDataset(const ReferenceDataset& reference,
                 const std::vector<QueryView>& queries, const std::string& path) {
  WriteFileBytes(path, SerializeDataset(reference, queries));
}

LocalizationData LoadDataset(const std::string& path) {
  return DeserializeDataset(ReadFileBytes(path));
}

void SaveGroundTruth(const GroundTruth& truth, const std::string& path) {
  WriteFileBytes(path, SerializeGroundTruth(truth));
}

GroundTruth LoadGroundTruth(const std::string& path) {
  return DeserializeGroundTruth(ReadFileBytes(path));
}

std::string DatasetManifest(const SyntheticData& data, const WorldConfig& config) {
  nlohmann::ordered_json j;
  j["format"] = "NMDS";
  j["version"] = kDatasetFormatVersion;
  j["seed"] = config.seed;
  size_t keypoints = 0;
  for (const ReferenceView& v : data.reference.views) keypoints += v.keypoints.size();
  size_t valid = 0;
  for (const Point3D& p : data.reference.points) valid += p.valid ? 1 : 0;
  j["counts"] = {{"points", data.reference.points.size()},
                 {"valid_points", valid},
                 {"reference_views", data.reference.views.size()},
                 {"query_views", data.queries.size()},
                 {"reference_keypoints", keypoints}};
  j["config"] = {
      {"num_points", config.num_points},
      {"box_min", {config.box_min.x(), config.box_min.y(), config.box_min.z()}},
      {"extent", {config.extent.x(), config.extent.y(), config.extent.z()}},
      {"num_ref_views", config.num_ref_views},
      {"num_query_views", config.num_query_views},
      {"pixel_noise", config.pixel_noise},
      {"descriptor_dim", config.descriptor_dim},
      {"descriptor_noise", config.descriptor_noise},
      {"illumination_shift", config.illumination_shift},
      {"appearance_min_wavelength", config.appearance_min_wavelength},
      {"appearance_max_wavelength", config.appearance_max_wavelength},
      {"appearance_seed", config.appearance_seed},
      {"min_depth", config.min_depth},
      {"max_depth", config.max_depth},
      {"frustum_margin", config.frustum_margin},
      {"seed", config.seed}};
  return j.dump(2) + "\n";
}

}  // namespace ncmap
