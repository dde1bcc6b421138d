#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "ncmap/decoder/params.h"
#include "ncmap/diff/tape.h"
#include "ncmap/scene/code_bank.h"
#include "ncmap/scene/voxel_grid.h"

namespace ncmap {

struct DecodeStats {
  // Blocks skipped because every code in them was inactive.
  int skipped_blocks = 0;
};

struct Prediction {
  Eigen::Vector3d local_coord = Eigen::Vector3d::Zero();  // voxel frame, m
  Eigen::Vector3d world = Eigen::Vector3d::Zero();        // local + origin
  double confidence = 0.0;
  VoxelId voxel;
};

struct DecoderOutput {
  diff::Tensor local;       // [n x 3]
  diff::Tensor logit;       // [n x 1]
  diff::Tensor confidence;  // [n x 1], sigmoid(logit)
};

diff::Tensor ApplyLinear(diff::Tape& tape, const Linear& layer,
                         const diff::Tensor& x);
diff::Tensor ApplyMlp(diff::Tape& tape, const Mlp& mlp, const diff::Tensor& x);

// Raw descriptors [n x D_raw] to features [n x D].
diff::Tensor EncodeFeatures(diff::Tape& tape, const DecoderParams& params,
                            const diff::Tensor& raw);
diff::Matrix EncodeFeatures(const DecoderParams& params,
                            const diff::Matrix& raw);

// Active codes of a block in a content-defined order, so that the result of
// attention does not depend on how codes are stored.
std::vector<int> CanonicalCodeOrder(const CodeBank& bank, int block);

// One cross-attention block over features f [n x D]:
//   A = softmax(Q K^T / sqrt(D)), Q = f Wq^T, K = (w*codes) Wk^T,
//   V = (w*codes) Wv^T over active codes,
//   f' = LN(f + A V), f'' = LN(f' + MLP(f')).
// A block without active codes returns f unchanged and bumps
// stats->skipped_blocks. If `attention` is given it receives A, with columns
// in CanonicalCodeOrder.
diff::Tensor CrossAttentionBlock(diff::Tape& tape, const BlockParams& block,
                                 const diff::Tensor& f, const CodeBank& bank,
                                 int block_index, DecodeStats* stats = nullptr,
                                 diff::Tensor* attention = nullptr);

// Runs all blocks and the head on encoded features [n x D].
DecoderOutput DecodeFeatures(diff::Tape& tape, const DecoderParams& params,
                             const diff::Tensor& features,
                             const CodeBank& bank,
                             DecodeStats* stats = nullptr);

// Inference on encoded features for one voxel.
std::vector<Prediction> Decode(const DecoderParams& params,
                               const diff::Matrix& features,
                               const CodeBank& bank, const VoxelId& voxel,
                               const Eigen::Vector3d& origin,
                               DecodeStats* stats = nullptr);

struct AttentionScores {
  std::vector<double> raw;         // s
  std::vector<double> normalized;  // (s - min) / (max - min), 0 if constant
};

// Min-max normalization to [0, 1]; a constant input maps to all zeros.
std::vector<double> NormalizeScores(std::span<const double> s);

// Column `code` of the block-`block` attention matrix for a batch of encoded
// features. Throws InvalidArgument if the code is pruned or has zero scale.
AttentionScores ComputeAttentionScores(const DecoderParams& params,
                                       const diff::Matrix& features,
                                       const CodeBank& bank, int block,
                                       int code);

// Throws DimensionError unless bank and params agree on T and D.
void CheckCompatible(const DecoderParams& params, const CodeBankDims& dims);

}  // namespace ncmap
