#include "ncmap/pipeline/localizer.h"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

Eigen::RowVectorXd UnitMean(const diff::Matrix& descriptors) {
  Eigen::RowVectorXd mean = descriptors.colwise().mean();
  const double norm = mean.norm();
  if (norm > 0.0) mean /= norm;
  return mean;
}

}  // namespace

RetrievalIndex::RetrievalIndex(const ReferenceDataset& dataset) {
  means_ = diff::Matrix::Zero(static_cast<Eigen::Index>(dataset.views.size()),
                              dataset.descriptor_dim);
  for (size_t v = 0; v < dataset.views.size(); ++v) {
    ids_.push_back(dataset.views[v].id);
    const diff::Matrix& d = dataset.views[v].keypoints.descriptors;
    if (d.rows() > 0) means_.row(static_cast<Eigen::Index>(v)) = UnitMean(d);
  }
}

std::vector<double> RetrievalIndex::Similarities(const Keypoints& query) const {
  std::vector<double> sims(ids_.size(), 0.0);
  if (query.empty()) return sims;
  if (query.descriptors.cols() != means_.cols()) {
    throw DimensionError("query descriptor width " +
                         std::to_string(query.descriptors.cols()) + " != " +
                         std::to_string(means_.cols()));
  }
  const Eigen::RowVectorXd q = UnitMean(query.descriptors);
  for (size_t v = 0; v < ids_.size(); ++v) {
    sims[v] = means_.row(static_cast<Eigen::Index>(v)).dot(q);
  }
  return sims;
}

std::vector<int> RetrievalIndex::Retrieve(const Keypoints& query,
                                          int top_k) const {
  if (top_k < 1) throw InvalidArgument("top_k must be >= 1");
  if (query.empty()) return {};
  const std::vector<double> sims = Similarities(query);
  std::vector<size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return ids_[a] < ids_[b];
  });
  order.resize(std::min(order.size(), static_cast<size_t>(top_k)));
  std::vector<int> out;
  for (size_t i : order) out.push_back(ids_[i]);
  return out;
}

std::vector<int> RetrieveViews(const Keypoints& query,
                               const ReferenceDataset& dataset, int top_k) {
  return RetrievalIndex(dataset).Retrieve(query, top_k);
}

std::vector<VoxelId> ActivateVoxels(std::span<const int> views,
                                    const SceneRepresentation& scene,
                                    bool bypass) {
  std::vector<VoxelId> out;
  for (const auto& [id, voxel] : scene.voxels) {
    if (bypass) {
      out.push_back(id);
      continue;
    }
    const bool covered =
        std::any_of(views.begin(), views.end(), [&](int v) {
          return std::binary_search(voxel.covering_views.begin(),
                                    voxel.covering_views.end(), v);
        });
    if (covered) out.push_back(id);
  }
  return out;
}

std::vector<Correspondence> DecodeCandidates(const QueryView& query,
                                             const SceneRepresentation& scene,
                                             const DecoderParams& params,
                                             std::span<const VoxelId> voxels) {
  std::vector<Correspondence> out;
  if (query.keypoints.empty() || voxels.empty()) return out;
  const diff::Matrix features =
      EncodeFeatures(params, query.keypoints.descriptors);
  out.reserve(voxels.size() * query.keypoints.size());
  for (const VoxelId& id : voxels) {
    const Voxel& voxel = scene.at(id);
    const std::vector<Prediction> preds =
        Decode(params, features, voxel.bank, id, voxel.origin);
    for (size_t i = 0; i < preds.size(); ++i) {
      out.push_back(Correspondence{query.keypoints.pixels[i], preds[i].world,
                                   preds[i].confidence});
    }
  }
  return out;
}

LocalizationResult Localize(const QueryView& query,
                            const SceneRepresentation& scene,
                            const DecoderParams& params,
                            const RetrievalIndex& index,
                            const LocalizeOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  LocalizationResult result;
  auto finish = [&](std::string failure) {
    result.failure = std::move(failure);
    result.wall_time_s = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    return result;
  };
  if (query.keypoints.empty()) return finish("query has no keypoints");

  std::vector<VoxelId> voxels;
  if (options.bypass_retrieval) {
    voxels = ActivateVoxels({}, scene, true);
  } else {
    const std::vector<int> views = index.Retrieve(query.keypoints, options.top_k);
    voxels = ActivateVoxels(views, scene, false);
  }
  result.num_activated_voxels = static_cast<int>(voxels.size());
  if (voxels.empty()) return finish("no voxel activated");

  std::vector<Correspondence> candidates =
      DecodeCandidates(query, scene, params, voxels);
  result.num_candidate_points = static_cast<int>(candidates.size());
  std::vector<Correspondence> confident;
  for (const Correspondence& c : candidates) {
    if (!(c.confidence < options.min_confidence)) confident.push_back(c);
  }
  result.num_confident_points = static_cast<int>(confident.size());
  if (confident.size() < kPnpMinimalSample) {
    return finish("only " + std::to_string(confident.size()) +
                  " confident points");
  }
  const RansacResult ransac =
      RansacPnp(confident, query.intrinsics, options.ransac);
  result.num_inliers = static_cast<int>(ransac.num_inliers);
  if (!ransac.pose) return finish("RANSAC found no pose");
  result.pose = ransac.pose;
  return finish({});
}

std::vector<LocalizationResult> LocalizeAll(std::span<const QueryView> queries,
                                            const SceneRepresentation& scene,
                                            const DecoderParams& params,
                                            const ReferenceDataset& dataset,
                                            const LocalizeOptions& options) {
  const RetrievalIndex index(dataset);
  std::vector<LocalizationResult> results;
  results.reserve(queries.size());
  for (const QueryView& q : queries) {
    LocalizeOptions per_query = options;
    per_query.ransac.seed = options.ransac.seed + static_cast<uint64_t>(q.id);
    results.push_back(Localize(q, scene, params, index, per_query));
  }
  return results;
}

}  // namespace ncmap
