#include "ncmap/diff/tensor.h"

#include <sstream>

#include "ncmap/util/error.h"

namespace ncmap::diff {

Tensor Tensor::Leaf(Matrix value, bool requires_grad, std::string name) {
  CheckFinite(value, name.empty() ? std::string("leaf") : name);
  auto node = std::make_shared<Node>();
  node->grad = Matrix::Zero(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return Tensor(std::move(node));
}

Tensor Tensor::Zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad,
                     std::string name) {
  return Leaf(Matrix::Zero(rows, cols), requires_grad, std::move(name));
}

Tensor Tensor::Scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return Leaf(std::move(m));
}

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw DimensionError("item() on non-scalar tensor of shape " +
                         ShapeString(node_->value));
  }
  return node_->value(0, 0);
}

Tensor Tensor::Clone() const {
  auto node = std::make_shared<Node>();
  node->value = node_->value;
  node->grad = node_->grad;
  node->requires_grad = node_->requires_grad;
  node->name = node_->name;
  return Tensor(std::move(node));
}

std::string ShapeString(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

void CheckFinite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite value in " + what + " " + ShapeString(m));
  }
}

}  // namespace ncmap::diff
