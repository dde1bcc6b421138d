#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncmap/diff/tensor.h"

namespace ncmap {

struct CodeBankDims {
  int blocks = 6;  // T
  int codes = 16;  // N per block
  int dim = 32;    // D

  bool operator==(const CodeBankDims&) const = default;
  void Validate() const;
};

// Learnable per-voxel latent codes: for each block a [N x D] code matrix and
// a [N x 1] column of scaling factors. Copies are deep.
class CodeBank {
 public:
  CodeBank() = default;
  // Codes ~ N(0, init_std^2), scales = 1, nothing pruned.
  CodeBank(const CodeBankDims& dims, uint64_t seed, double init_std = 0.02,
           const std::string& name = "bank");

  CodeBank(const CodeBank& other);
  CodeBank& operator=(const CodeBank& other);
  CodeBank(CodeBank&&) = default;
  CodeBank& operator=(CodeBank&&) = default;

  const CodeBankDims& dims() const { return dims_; }

  const diff::Tensor& codes(int block) const { return codes_.at(block); }
  const diff::Tensor& scales(int block) const { return scales_.at(block); }
  diff::Tensor& mutable_codes(int block) { return codes_.at(block); }
  diff::Tensor& mutable_scales(int block) { return scales_.at(block); }

  bool pruned(int block, int code) const { return pruned_.at(block).at(code); }
  // Sets the scale to exactly 0, zeroes the stored code and marks it pruned.
  void PruneCode(int block, int code);
  void SetPrunedMask(int block, const std::vector<bool>& mask);

  // Codes taking part in attention: not pruned and scale != 0. Ascending.
  std::vector<int> ActiveCodes(int block) const;
  int RetainedCodes(int block) const;
  int RetainedCodes() const;

  // All learnable tensors, codes then scales per block.
  std::vector<diff::Tensor> Tensors() const;
  std::vector<diff::Tensor> CodeTensors() const { return codes_; }
  std::vector<diff::Tensor> ScaleTensors() const { return scales_; }

  void SetRequiresGrad(bool flag);

  bool operator==(const CodeBank& other) const;

 private:
  CodeBankDims dims_;
  std::vector<diff::Tensor> codes_;
  std::vector<diff::Tensor> scales_;
  std::vector<std::vector<bool>> pruned_;
};

}  // namespace ncmap
