#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncmap/diff/tensor.h"

namespace ncmap::diff {

// Records primitive operations in execution order and replays them in
// reverse to accumulate gradients into requires_grad leaves.
//
// Every forward op checks its output for NaN/Inf and throws NumericError
// with the op name. Gradient accumulation is additive: calling Backward()
// twice without re-running the forward pass leaves exactly twice the
// gradient in every leaf.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When recording is off ops compute values only and Backward() is a no-op.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  size_t num_ops() const { return ops_.size(); }
  void Clear();

  // a[m x k] * b[k x n].
  Tensor MatMul(const Tensor& a, const Tensor& b);
  // a[m x k] * b[n x k]^T.
  Tensor MatMulT(const Tensor& a, const Tensor& b);
  Tensor Add(const Tensor& a, const Tensor& b);
  Tensor Sub(const Tensor& a, const Tensor& b);
  // a[m x n] + row[1 x n] broadcast over rows.
  Tensor AddRow(const Tensor& a, const Tensor& row);
  // a[m x n] with row i multiplied by s[i] for s[m x 1].
  Tensor ScaleRows(const Tensor& a, const Tensor& s);
  Tensor Scale(const Tensor& a, double c);
  Tensor Relu(const Tensor& x);
  Tensor Sigmoid(const Tensor& x);
  // Row-wise softmax with max subtraction.
  Tensor SoftmaxRows(const Tensor& x);
  // Row-wise normalization to zero mean / unit variance followed by
  // gain[1 x D] and bias[1 x D]. Requires D >= 2.
  Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                   double eps = 1e-6);
  Tensor GatherRows(const Tensor& a, std::span<const int> rows);
  Tensor Columns(const Tensor& a, Eigen::Index start, Eigen::Index count);
  // Euclidean norm of every row as a column vector. The subgradient at a
  // zero row is taken to be zero.
  Tensor RowNorms(const Tensor& a);
  Tensor Sum(const Tensor& a);
  Tensor AbsSum(const Tensor& a);
  // Sum of -[y ln p + (1-y) ln(1-p)] over entries, with p clamped to
  // [clamp, 1-clamp]. Labels must match the shape of p.
  Tensor BceSum(const Tensor& p, const Matrix& labels, double clamp = 1e-7);

  // Populates grad of every requires_grad leaf reachable from `loss`.
  // Throws InvalidArgument if loss is not 1x1.
  void Backward(const Tensor& loss);

 private:
  struct Op {
    std::vector<Node*> inputs;
    Node* output = nullptr;
    std::function<void()> backward;
  };

  Tensor Record(std::string_view op_name, Matrix value,
                std::vector<Tensor> inputs,
                std::function<void(Node* out)> backward);

  bool recording_ = true;
  std::vector<Op> ops_;
  std::vector<Tensor> keep_alive_;
};

// Scalar-valued function of a tape, for finite-difference checking.
using LossFn = std::function<Tensor(Tape&)>;

struct GradientCheckResult {
  size_t checked = 0;
  size_t failed = 0;
  // Largest relative error among slots above the absolute floor.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_slot;
};

// Compares analytic gradients against central differences for every scalar
// slot of every tensor in `params`. A slot passes if its relative error is
// below rel_tol or its absolute error is below abs_tol.
GradientCheckResult CheckGradients(const LossFn& loss_fn,
                                   std::span<Tensor> params, double h = 1e-5,
                                   double rel_tol = 1e-4,
                                   double abs_tol = 1e-7);

}  // namespace ncmap::diff
