#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncmap/diff/tensor.h"

namespace ncmap::diff {

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Step-decay schedule: base * factor^floor(epoch / period).
struct StepSchedule {
  double base_lr = 0.002;
  int period = 30;
  double factor = 0.5;

  double At(int epoch) const;
};

// First-order optimizer over named parameter groups. Each group carries its
// own learning rate. Frozen tensors, and frozen rows of a tensor, are never
// written. Gradients of the stepped tensors are zeroed after each step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerOptions options = {}) : options_(options) {}

  // Registers `params` under `group`. A tensor may belong to one group only.
  void AddGroup(const std::string& group, std::span<const Tensor> params,
                double lr);
  void SetLearningRate(const std::string& group, double lr);
  double LearningRate(const std::string& group) const;

  void Freeze(const Tensor& param);
  // Rows listed in `rows` of `param` stay bit-identical.
  void FreezeRows(const Tensor& param, std::vector<int> rows);
  bool IsFrozen(const Tensor& param) const;

  // Updates every registered tensor. Throws NumericError naming the
  // parameter if any gradient is non-finite; nothing is written in that case.
  void Step();
  // Updates only `active` (which must be registered); other tensors keep
  // their values, moments and gradients.
  void Step(std::span<const Tensor> active);

  void ZeroGrads();

  long step_count() const { return step_count_; }
  // Number of steps in which `param` was updated.
  long Touches(const Tensor& param) const;

 private:
  struct Slot {
    Tensor param;
    std::string group;
    Matrix m;
    Matrix v;
    long updates = 0;
    bool frozen = false;
    std::vector<int> frozen_rows;
  };

  Slot& Find(const Tensor& param);
  const Slot* FindConst(const Tensor& param) const;
  void Update(Slot& slot);

  OptimizerOptions options_;
  std::map<std::string, double> lrs_;
  std::vector<Slot> slots_;
  std::map<const Node*, size_t> index_;
  long step_count_ = 0;
};

}  // namespace ncmap::diff
