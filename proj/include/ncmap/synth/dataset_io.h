#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ncmap/synth/dataset.h"
#include "ncmap/synth/world.h"

namespace ncmap {

inline constexpr uint32_t kDatasetFormatVersion = 1;

// Dataset containers, little-endian, all reals as f64:
//
//   "NMDS" | u32 version | u32 kind
//   kind 1 (localization data):
//     u32 descriptor_dim | u32 view_count | views | u32 point_count |
//     points (i32 id, u8 valid, f64 xyz) | u32 query_count | queries
//     view:  i32 id | f64 R[9] (row-major) | f64 t[3] | intrinsics | keypoints
//     query: i32 id | intrinsics | keypoints
//     intrinsics: f64 fx, fy, cx, cy | u32 width, height
//     keypoints:  u32 n | per keypoint f64 px, py | i32 point_id |
//                 f64 descriptor[descriptor_dim]
//   kind 2 (ground truth, evaluation only):
//     u32 point_count | f64 xyz per point | u32 query_count |
//     per query f64 R[9] | f64 t[3] | u32 n | i32 point_id[n]
struct LocalizationData {
  ReferenceDataset reference;
  std::vector<QueryView> queries;
};

std::string SerializeDataset(const ReferenceDataset& reference,
                             const std::vector<QueryView>& queries);
LocalizationData DeserializeDataset(std::string_view bytes);
std::string SerializeGroundTruth(const GroundTruth& truth);
GroundTruth DeserializeGroundTruth(std::string_view bytes);

void SaveDataset(const ReferenceDataset& reference,
                 const std::vector<QueryView>& queries, const std::string& path);
LocalizationData LoadDataset(const std::string& path);
void SaveGroundTruth(const GroundTruth& truth, const std::string& path);
GroundTruth LoadGroundTruth(const std::string& path);

// Human-readable JSON summary: counts, configuration and seed.
std::string DatasetManifest(const SyntheticData& data, const WorldConfig& config);

}  // namespace ncmap
