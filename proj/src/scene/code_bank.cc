#include "ncmap/scene/code_bank.h"

#include "ncmap/util/error.h"
#include "ncmap/util/random.h"

namespace ncmap {

void CodeBankDims::Validate() const {
  if (blocks < 1 || codes < 1 || dim < 2) {
    throw InvalidArgument("code bank dims need T >= 1, N >= 1, D >= 2; got T=" +
                          std::to_string(blocks) + " N=" +
                          std::to_string(codes) + " D=" + std::to_string(dim));
  }
}

CodeBank::CodeBank(const CodeBankDims& dims, uint64_t seed, double init_std,
                   const std::string& name)
    : dims_(dims) {
  dims_.Validate();
  Rng rng = MakeRng(seed, 0xC0DE);
  for (int t = 0; t < dims_.blocks; ++t) {
    diff::Matrix codes(dims_.codes, dims_.dim);
    for (Eigen::Index i = 0; i < codes.size(); ++i) {
      codes.data()[i] = Gaussian(rng, init_std);
    }
    const std::string suffix = "[" + std::to_string(t) + "]";
    codes_.push_back(
        diff::Tensor::Leaf(std::move(codes), true, name + "/codes" + suffix));
    scales_.push_back(diff::Tensor::Leaf(
        diff::Matrix::Ones(dims_.codes, 1), true, name + "/scales" + suffix));
    pruned_.emplace_back(dims_.codes, false);
  }
}

CodeBank::CodeBank(const CodeBank& other)
    : dims_(other.dims_), pruned_(other.pruned_) {
  for (const auto& c : other.codes_) codes_.push_back(c.Clone());
  for (const auto& s : other.scales_) scales_.push_back(s.Clone());
}

CodeBank& CodeBank::operator=(const CodeBank& other) {
  if (this != &other) {
    CodeBank copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void CodeBank::PruneCode(int block, int code) {
  scales_.at(block).mutable_value()(code, 0) = 0.0;
  codes_.at(block).mutable_value().row(code).setZero();
  pruned_.at(block).at(code) = true;
}

void CodeBank::SetPrunedMask(int block, const std::vector<bool>& mask) {
  if (static_cast<int>(mask.size()) != dims_.codes) {
    throw DimensionError("pruned mask size mismatch");
  }
  pruned_.at(block) = mask;
}

std::vector<int> CodeBank::ActiveCodes(int block) const {
  std::vector<int> active;
  const diff::Matrix& w = scales_.at(block).value();
  for (int j = 0; j < dims_.codes; ++j) {
    if (!pruned_[block][j] && w(j, 0) != 0.0) active.push_back(j);
  }
  return active;
}

int CodeBank::RetainedCodes(int block) const {
  int n = 0;
  for (bool p : pruned_.at(block)) n += p ? 0 : 1;
  return n;
}

int CodeBank::RetainedCodes() const {
  int n = 0;
  for (int t = 0; t < dims_.blocks; ++t) n += RetainedCodes(t);
  return n;
}

std::vector<diff::Tensor> CodeBank::Tensors() const {
  std::vector<diff::Tensor> all;
  for (int t = 0; t < dims_.blocks; ++t) {
    all.push_back(codes_[t]);
    all.push_back(scales_[t]);
  }
  return all;
}

void CodeBank::SetRequiresGrad(bool flag) {
  for (auto& c : codes_) c.set_requires_grad(flag);
  for (auto& s : scales_) s.set_requires_grad(flag);
}

bool CodeBank::operator==(const CodeBank& other) const {
  if (!(dims_ == other.dims_) || pruned_ != other.pruned_) return false;
  for (int t = 0; t < dims_.blocks; ++t) {
    if (codes_[t].value() != other.codes_[t].value()) return false;
    if (scales_[t].value() != other.scales_[t].value()) return false;
  }
  return true;
}

}  // namespace ncmap
