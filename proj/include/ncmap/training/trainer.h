#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncmap/decoder/decoder.h"
#include "ncmap/diff/optimizer.h"
#include "ncmap/scene/scene.h"
#include "ncmap/synth/dataset.h"
#include "ncmap/util/random.h"

namespace ncmap {

struct TrainConfig {
  double lambda_x = 1.0;
  double lambda_c = 1.0;
  double lambda_l1 = 1.0;
  double lr_agnostic = 0.002;
  double lr_codes = 0.0001;
  int epochs_stage1 = 60;
  int epochs_stage2 = 30;
  int epochs_adapt = 60;
  int batch_voxels = 8;  // B
  int lr_halving_period = 15;
  double prune_threshold = 0.05;
  uint64_t seed = 1;
  int min_points = 20;
  diff::OptimizerKind optimizer = diff::OptimizerKind::kAdam;
  // Adaptation also learns scales under the L1 term.
  bool adapt_scales = false;

  void Validate() const;
};

// One (voxel, view) training pair.
struct Sample {
  VoxelId voxel;
  int view_id = -1;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  diff::Matrix descriptors;  // [n x D_raw]
  diff::Matrix targets;      // [n x 3] triangulated K*, 0 where invalid
  diff::Matrix labels;       // [n x 1] y: 1 iff the point is a voxel member
  std::vector<int> in_voxel; // rows with y = 1
};

struct LossTerms {
  diff::Tensor coord;     // L_x
  diff::Tensor conf;      // L_c
  diff::Tensor sparsity;  // L_L1
  diff::Tensor total;
};

// Mean over y=1 rows of ||local + origin - target||_2; 0 if there are none.
diff::Tensor CoordinateLoss(diff::Tape& tape, std::span<const diff::Tensor> local,
                            std::span<const Sample* const> samples);
// Mean BCE over all keypoints of the batch.
diff::Tensor ConfidenceLoss(diff::Tape& tape,
                            std::span<const diff::Tensor> confidence,
                            std::span<const Sample* const> samples);
// Sum of |w| over the banks, divided by the number of banks.
diff::Tensor SparsityLoss(diff::Tape& tape, std::span<const CodeBank* const> banks);
diff::Tensor TotalLoss(diff::Tape& tape, const diff::Tensor& coord,
                       const diff::Tensor& conf, const diff::Tensor& sparsity,
                       double lambda_x, double lambda_c, double lambda_l1);

// Training pair for `voxel` observed from reference view `view_id`.
Sample MakeSample(const SceneRepresentation& scene, const Voxel& voxel,
                  const ReferenceDataset& dataset, int view_id);

struct SampleRef {
  VoxelId voxel;
  int view_id = -1;
};

// A seeded permutation of all voxels cut into batches of at most B, with one
// uniformly drawn covering view per voxel. Throws DataError for a voxel
// without covering views.
std::vector<std::vector<SampleRef>> SampleEpoch(const SceneRepresentation& scene,
                                                int batch_voxels, Rng& rng);

// Forward pass and losses for one batch.
LossTerms BatchLoss(diff::Tape& tape, const DecoderParams& params,
                    const SceneRepresentation& scene,
                    std::span<const Sample* const> samples, double lambda_x,
                    double lambda_c, double lambda_l1);

struct EpochLog {
  int epoch = 0;  // global, counting from 0
  int stage = 1;  // 1, 2, or 0 for adaptation
  double coord = 0.0;
  double conf = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
  double lr_agnostic = 0.0;
  double lr_codes = 0.0;
  int retained_codes = 0;
  // Fewest and most optimizer updates any voxel's codes received this epoch.
  long min_voxel_updates = 0;
  long max_voxel_updates = 0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::string ToCsv() const;
};

// Called after each epoch.
using EpochCallback = std::function<void(const EpochLog&)>;

// Stage 1: decoder and all codes and scales with the L1 term.
TrainingLog TrainStage1(DecoderParams& params, SceneRepresentation& scene,
                        const ReferenceDataset& dataset, const TrainConfig& config,
                        const EpochCallback& callback = {});
// Stage 2: fine-tune decoder and unpruned codes with scales frozen and no L1
// term, starting at global epoch `first_epoch`. Throws InvalidArgument if
// every code of the scene is pruned.
TrainingLog TrainStage2(DecoderParams& params, SceneRepresentation& scene,
                        const ReferenceDataset& dataset, const TrainConfig& config,
                        int first_epoch, const EpochCallback& callback = {});

struct TrainingResult {
  TrainingLog log;
  PruneReport prune;
};

// Stage 1, prune at config.prune_threshold, stage 2.
TrainingResult RunTraining(DecoderParams& params, SceneRepresentation& scene,
                           const ReferenceDataset& dataset,
                           const TrainConfig& config,
                           const EpochCallback& callback = {});

// Optimizes the codes (and scales if config.adapt_scales) of `scene` for
// config.epochs_adapt epochs with `params` frozen. Returns the adapted copy.
SceneRepresentation AdaptScene(const SceneRepresentation& scene,
                               const ReferenceDataset& dataset,
                               const DecoderParams& params,
                               const TrainConfig& config,
                               TrainingLog* log = nullptr,
                               const EpochCallback& callback = {});

}  // namespace ncmap
