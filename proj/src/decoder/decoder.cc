#include "ncmap/decoder/decoder.h"

#include <algorithm>
#include <cmath>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

// Lexicographic order on (scale, code row).
bool CodeLess(const CodeBank& bank, int block, int a, int b) {
  const double sa = bank.scales(block).value()(a, 0);
  const double sb = bank.scales(block).value()(b, 0);
  if (sa != sb) return sa < sb;
  const diff::Matrix& codes = bank.codes(block).value();
  for (Eigen::Index d = 0; d < codes.cols(); ++d) {
    if (codes(a, d) != codes(b, d)) return codes(a, d) < codes(b, d);
  }
  return false;
}

}  // namespace

void CheckCompatible(const DecoderParams& params, const CodeBankDims& dims) {
  const DecoderDims& d = params.dims();
  if (d.blocks != dims.blocks || d.dim != dims.dim) {
    throw DimensionError("code bank (T=" + std::to_string(dims.blocks) +
                         ", D=" + std::to_string(dims.dim) +
                         ") does not match decoder (T=" +
                         std::to_string(d.blocks) +
                         ", D=" + std::to_string(d.dim) + ")");
  }
}

diff::Tensor ApplyLinear(diff::Tape& tape, const Linear& layer,
                         const diff::Tensor& x) {
  if (x.cols() != layer.weight.cols()) {
    throw DimensionError("linear " + layer.weight.name() + " expects width " +
                         std::to_string(layer.weight.cols()) + ", got " +
                         std::to_string(x.cols()));
  }
  return tape.AddRow(tape.MatMulT(x, layer.weight), layer.bias);
}

diff::Tensor ApplyMlp(diff::Tape& tape, const Mlp& mlp, const diff::Tensor& x) {
  diff::Tensor h = x;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    h = ApplyLinear(tape, mlp.layers[i], h);
    if (i + 1 < mlp.layers.size()) h = tape.Relu(h);
  }
  return h;
}

diff::Tensor EncodeFeatures(diff::Tape& tape, const DecoderParams& params,
                            const diff::Tensor& raw) {
  if (raw.cols() != params.dims().raw_dim) {
    throw DimensionError("descriptor width " + std::to_string(raw.cols()) +
                         " != " + std::to_string(params.dims().raw_dim));
  }
  return ApplyMlp(tape, params.encoder, raw);
}

diff::Matrix EncodeFeatures(const DecoderParams& params,
                            const diff::Matrix& raw) {
  diff::Tape tape;
  tape.set_recording(false);
  return EncodeFeatures(tape, params, diff::Tensor::Leaf(raw)).value();
}

std::vector<int> CanonicalCodeOrder(const CodeBank& bank, int block) {
  std::vector<int> order = bank.ActiveCodes(block);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return CodeLess(bank, block, a, b);
  });
  return order;
}

diff::Tensor CrossAttentionBlock(diff::Tape& tape, const BlockParams& block,
                                 const diff::Tensor& f, const CodeBank& bank,
                                 int block_index, DecodeStats* stats,
                                 diff::Tensor* attention) {
  const int dim = bank.dims().dim;
  if (f.cols() != dim) {
    throw DimensionError("feature width " + std::to_string(f.cols()) +
                         " != code width " + std::to_string(dim));
  }
  const std::vector<int> active = CanonicalCodeOrder(bank, block_index);
  if (active.empty()) {
    if (stats != nullptr) ++stats->skipped_blocks;
    if (attention != nullptr) *attention = diff::Tensor::Zeros(f.rows(), 0);
    return f;
  }
  const diff::Tensor codes = tape.GatherRows(bank.codes(block_index), active);
  const diff::Tensor scales = tape.GatherRows(bank.scales(block_index), active);
  const diff::Tensor scaled = tape.ScaleRows(codes, scales);

  const diff::Tensor q = tape.MatMulT(f, block.wq);
  const diff::Tensor k = tape.MatMulT(scaled, block.wk);
  const diff::Tensor v = tape.MatMulT(scaled, block.wv);
  const diff::Tensor a = tape.SoftmaxRows(
      tape.Scale(tape.MatMulT(q, k), 1.0 / std::sqrt(static_cast<double>(dim))));
  if (attention != nullptr) *attention = a;

  const diff::Tensor h =
      tape.LayerNorm(tape.Add(f, tape.MatMul(a, v)), block.norm_attention.gain,
                     block.norm_attention.bias);
  return tape.LayerNorm(tape.Add(h, ApplyMlp(tape, block.mlp, h)),
                        block.norm_mlp.gain, block.norm_mlp.bias);
}

DecoderOutput DecodeFeatures(diff::Tape& tape, const DecoderParams& params,
                             const diff::Tensor& features,
                             const CodeBank& bank, DecodeStats* stats) {
  CheckCompatible(params, bank.dims());
  diff::Tensor f = features;
  for (int t = 0; t < params.dims().blocks; ++t) {
    f = CrossAttentionBlock(tape, params.blocks[t], f, bank, t, stats);
  }
  const diff::Tensor out = ApplyMlp(tape, params.head, f);
  DecoderOutput result;
  result.local = tape.Columns(out, 0, 3);
  result.logit = tape.Columns(out, 3, 1);
  result.confidence = tape.Sigmoid(result.logit);
  return result;
}

std::vector<Prediction> Decode(const DecoderParams& params,
                               const diff::Matrix& features,
                               const CodeBank& bank, const VoxelId& voxel,
                               const Eigen::Vector3d& origin,
                               DecodeStats* stats) {
  diff::Tape tape;
  tape.set_recording(false);
  const DecoderOutput out =
      DecodeFeatures(tape, params, diff::Tensor::Leaf(features), bank, stats);
  std::vector<Prediction> preds(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Prediction& p = preds[static_cast<size_t>(i)];
    p.local_coord = out.local.value().row(i).transpose();
    p.world = p.local_coord + origin;
    p.confidence = out.confidence.value()(i, 0);
    p.voxel = voxel;
  }
  return preds;
}

std::vector<double> NormalizeScores(std::span<const double> s) {
  std::vector<double> out(s.size(), 0.0);
  if (s.empty()) return out;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double a = *lo;
  const double b = *hi;
  if (!(b > a)) return out;
  for (size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - a) / (b - a);
  return out;
}

AttentionScores ComputeAttentionScores(const DecoderParams& params,
                                       const diff::Matrix& features,
                                       const CodeBank& bank, int block,
                                       int code) {
  CheckCompatible(params, bank.dims());
  if (block < 0 || block >= bank.dims().blocks || code < 0 ||
      code >= bank.dims().codes) {
    throw InvalidArgument("code (" + std::to_string(block) + ", " +
                          std::to_string(code) + ") out of range");
  }
  const std::vector<int> order = CanonicalCodeOrder(bank, block);
  const auto it = std::find(order.begin(), order.end(), code);
  if (it == order.end()) {
    throw InvalidArgument("code (" + std::to_string(block) + ", " +
                          std::to_string(code) + ") is pruned or has zero scale");
  }
  const Eigen::Index column = it - order.begin();

  diff::Tape tape;
  tape.set_recording(false);
  diff::Tensor f = diff::Tensor::Leaf(features);
  for (int t = 0; t < block; ++t) {
    f = CrossAttentionBlock(tape, params.blocks[t], f, bank, t);
  }
  diff::Tensor a;
  CrossAttentionBlock(tape, params.blocks[block], f, bank, block, nullptr, &a);

  AttentionScores scores;
  scores.raw.resize(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    scores.raw[static_cast<size_t>(i)] = a.value()(i, column);
  }
  scores.normalized = NormalizeScores(scores.raw);
  return scores;
}

}  // namespace ncmap
