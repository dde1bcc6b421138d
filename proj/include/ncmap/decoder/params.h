#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ncmap/diff/tensor.h"

namespace ncmap {

struct DecoderDims {
  int raw_dim = 64;  // D_raw, input descriptor width
  int dim = 32;      // D, feature and code width
  int blocks = 6;    // T
  int encoder_hidden = 64;
  int block_hidden = 64;
  int head_hidden = 64;

  bool operator==(const DecoderDims&) const = default;
  void Validate() const;
};

// Affine map y = x W^T + b with W [out x in] and b [1 x out].
struct Linear {
  diff::Tensor weight;
  diff::Tensor bias;
};

// Affine layers with ReLU between consecutive layers (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  int in_width() const { return static_cast<int>(layers.front().weight.cols()); }
  int out_width() const { return static_cast<int>(layers.back().weight.rows()); }
};

struct LayerNormParams {
  diff::Tensor gain;
  diff::Tensor bias;
};

struct BlockParams {
  diff::Tensor wq;  // [D x D]
  diff::Tensor wk;
  diff::Tensor wv;
  Mlp mlp;  // D -> block_hidden -> D
  LayerNormParams norm_attention;
  LayerNormParams norm_mlp;
};

// Scene-agnostic weights: feature encoder, T cross-attention blocks and the
// output head (D -> 4). Copies are deep.
class DecoderParams {
 public:
  DecoderParams() = default;
  // Weights ~ U(+-sqrt(6 / (fan_in + fan_out))), biases 0, norm gains 1.
  DecoderParams(const DecoderDims& dims, uint64_t seed);

  DecoderParams(const DecoderParams& other);
  DecoderParams& operator=(const DecoderParams& other);
  DecoderParams(DecoderParams&&) = default;
  DecoderParams& operator=(DecoderParams&&) = default;

  const DecoderDims& dims() const { return dims_; }

  Mlp encoder;
  std::vector<BlockParams> blocks;
  Mlp head;

  // Every tensor in a fixed order (encoder, blocks, head).
  std::vector<diff::Tensor> Tensors() const;
  void SetRequiresGrad(bool flag);
  size_t NumScalars() const;

 private:
  DecoderDims dims_;
};

// Weights container, little-endian:
//   "NMWT" | u32 version | u32 raw_dim, dim, blocks, encoder_hidden,
//   block_hidden, head_hidden | u32 tensor_count |
//   per tensor (Tensors() order): u32 rows | u32 cols | f64 values (row-major)
std::string SerializeParams(const DecoderParams& params);
DecoderParams DeserializeParams(std::string_view bytes);
void SaveParams(const DecoderParams& params, const std::string& path);
DecoderParams LoadParams(const std::string& path);

inline constexpr uint32_t kWeightsFormatVersion = 1;

}  // namespace ncmap
