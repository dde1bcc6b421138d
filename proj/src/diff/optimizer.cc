#include "ncmap/diff/optimizer.h"

#include <cmath>

#include "ncmap/util/error.h"

namespace ncmap::diff {

double StepSchedule::At(int epoch) const {
  if (period <= 0) return base_lr;
  return base_lr * std::pow(factor, epoch / period);
}

void Optimizer::AddGroup(const std::string& group,
                         std::span<const Tensor> params, double lr) {
  lrs_[group] = lr;
  for (const Tensor& p : params) {
    if (index_.count(p.node())) {
      throw InvalidArgument("optimizer: parameter '" + p.name() +
                            "' registered twice");
    }
    Slot slot;
    slot.param = p;
    slot.group = group;
    if (options_.kind == OptimizerKind::kAdam) {
      slot.m = Matrix::Zero(p.rows(), p.cols());
      slot.v = Matrix::Zero(p.rows(), p.cols());
    }
    index_[p.node()] = slots_.size();
    slots_.push_back(std::move(slot));
  }
}

void Optimizer::SetLearningRate(const std::string& group, double lr) {
  auto it = lrs_.find(group);
  if (it == lrs_.end()) throw InvalidArgument("optimizer: no group " + group);
  it->second = lr;
}

double Optimizer::LearningRate(const std::string& group) const {
  auto it = lrs_.find(group);
  if (it == lrs_.end()) throw InvalidArgument("optimizer: no group " + group);
  return it->second;
}

Optimizer::Slot& Optimizer::Find(const Tensor& param) {
  auto it = index_.find(param.node());
  if (it == index_.end()) {
    throw InvalidArgument("optimizer: unregistered parameter '" +
                          param.name() + "'");
  }
  return slots_[it->second];
}

const Optimizer::Slot* Optimizer::FindConst(const Tensor& param) const {
  auto it = index_.find(param.node());
  return it == index_.end() ? nullptr : &slots_[it->second];
}

void Optimizer::Freeze(const Tensor& param) { Find(param).frozen = true; }

void Optimizer::FreezeRows(const Tensor& param, std::vector<int> rows) {
  Find(param).frozen_rows = std::move(rows);
}

bool Optimizer::IsFrozen(const Tensor& param) const {
  const Slot* slot = FindConst(param);
  return slot != nullptr && slot->frozen;
}

long Optimizer::Touches(const Tensor& param) const {
  const Slot* slot = FindConst(param);
  return slot == nullptr ? 0 : slot->updates;
}

void Optimizer::ZeroGrads() {
  for (Slot& slot : slots_) slot.param.ZeroGrad();
}

void Optimizer::Step() {
  std::vector<Tensor> all;
  all.reserve(slots_.size());
  for (const Slot& slot : slots_) all.push_back(slot.param);
  Step(all);
}

void Optimizer::Step(std::span<const Tensor> active) {
  std::vector<Slot*> selected;
  selected.reserve(active.size());
  for (const Tensor& p : active) {
    Slot& slot = Find(p);
    if (!slot.param.grad().allFinite()) {
      throw NumericError("optimizer: non-finite gradient in parameter '" +
                         p.name() + "'");
    }
    selected.push_back(&slot);
  }
  ++step_count_;
  for (Slot* slot : selected) {
    if (!slot->frozen) Update(*slot);
    slot->param.ZeroGrad();
  }
}

void Optimizer::Update(Slot& slot) {
  const double lr = lrs_.at(slot.group);
  Matrix& value = slot.param.mutable_value();
  Matrix grad = slot.param.grad();
  for (int r : slot.frozen_rows) grad.row(r).setZero();

  ++slot.updates;
  if (options_.kind == OptimizerKind::kSgd) {
    Matrix step = lr * grad;
    for (int r : slot.frozen_rows) step.row(r).setZero();
    value -= step;
    return;
  }
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  slot.m = b1 * slot.m + (1.0 - b1) * grad;
  slot.v = b2 * slot.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.updates));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.updates));
  Matrix step = (lr * (slot.m.array() / c1) /
                 ((slot.v.array() / c2).sqrt() + options_.epsilon))
                    .matrix();
  for (int r : slot.frozen_rows) {
    step.row(r).setZero();
    slot.m.row(r).setZero();
    slot.v.row(r).setZero();
  }
  value -= step;
}

}  // namespace ncmap::diff
