#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncmap/decoder/decoder.h"
#include "ncmap/geometry/pnp.h"
#include "ncmap/scene/scene.h"
#include "ncmap/synth/dataset.h"

namespace ncmap {

// Mean-descriptor cosine retrieval over reference views.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  explicit RetrievalIndex(const ReferenceDataset& dataset);

  // Up to top_k view ids by decreasing similarity, ties by ascending id.
  // Empty for empty keypoints. Throws InvalidArgument if top_k < 1.
  std::vector<int> Retrieve(const Keypoints& query, int top_k) const;
  // Cosine similarity to every indexed view, in index order.
  std::vector<double> Similarities(const Keypoints& query) const;

  const std::vector<int>& view_ids() const { return ids_; }

 private:
  std::vector<int> ids_;
  diff::Matrix means_;  // unit-norm rows
};

std::vector<int> RetrieveViews(const Keypoints& query,
                               const ReferenceDataset& dataset, int top_k);

// Voxels covered by any of `views`, in VoxelId order; every voxel if
// `bypass` is set.
std::vector<VoxelId> ActivateVoxels(std::span<const int> views,
                                    const SceneRepresentation& scene,
                                    bool bypass = false);

struct LocalizeOptions {
  int top_k = 10;
  bool bypass_retrieval = false;
  double min_confidence = 0.5;
  RansacOptions ransac;
};

struct LocalizationResult {
  std::optional<Pose> pose;  // empty on failure
  std::string failure;       // reason when pose is empty
  int num_activated_voxels = 0;
  int num_candidate_points = 0;
  int num_confident_points = 0;
  int num_inliers = 0;
  double wall_time_s = 0.0;

  bool ok() const { return pose.has_value(); }
};

// Decodes every keypoint in every activated voxel, keeps candidates with
// confidence >= min_confidence and estimates the pose with RANSAC-PnP.
// Failure is reported in the result, not thrown.
LocalizationResult Localize(const QueryView& query,
                            const SceneRepresentation& scene,
                            const DecoderParams& params,
                            const RetrievalIndex& index,
                            const LocalizeOptions& options);

// Localizes every query in order; query q uses RANSAC seed
// options.ransac.seed + q.id.
std::vector<LocalizationResult> LocalizeAll(std::span<const QueryView> queries,
                                            const SceneRepresentation& scene,
                                            const DecoderParams& params,
                                            const ReferenceDataset& dataset,
                                            const LocalizeOptions& options);

// Candidate correspondences for `query` over `voxels`, in (voxel, keypoint)
// order, before the confidence filter.
std::vector<Correspondence> DecodeCandidates(const QueryView& query,
                                             const SceneRepresentation& scene,
                                             const DecoderParams& params,
                                             std::span<const VoxelId> voxels);

}  // namespace ncmap
