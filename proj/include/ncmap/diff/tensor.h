#pragma once

#include <memory>
#include <string>

#include <Eigen/Core>

namespace ncmap::diff {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  // Accumulated gradient. Only leaves with requires_grad receive one.
  Matrix grad;
  // Scratch adjoint of the current reverse sweep.
  Matrix adjoint;
  bool requires_grad = false;
  std::string name;
};

// Shared handle to a dense 2-D array of 64-bit reals. Scalars are 1x1.
// Copying a Tensor copies the handle; use Clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  // Creates a leaf. Throws NumericError if any entry is non-finite.
  static Tensor Leaf(Matrix value, bool requires_grad = false,
                     std::string name = {});
  static Tensor Zeros(Eigen::Index rows, Eigen::Index cols,
                      bool requires_grad = false, std::string name = {});
  static Tensor Scalar(double value);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  const std::string& name() const { return node_->name; }

  void ZeroGrad() { node_->grad.setZero(); }

  // Deep copy of value, grad and flags into a fresh node.
  Tensor Clone() const;

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend class Tape;

  std::shared_ptr<Node> node_;
};

std::string ShapeString(const Matrix& m);

// Throws NumericError naming `what` if `m` has a NaN or Inf entry.
void CheckFinite(const Matrix& m, const std::string& what);

}  // namespace ncmap::diff
