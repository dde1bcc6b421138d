#include "ncmap/diff/tape.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ncmap/util/error.h"

namespace ncmap::diff {
namespace {

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeString(a.value()) + " vs " +
                         ShapeString(b.value()));
  }
}

}  // namespace

void Tape::Clear() {
  ops_.clear();
  keep_alive_.clear();
}

Tensor Tape::Record(std::string_view op_name, Matrix value,
                    std::vector<Tensor> inputs,
                    std::function<void(Node* out)> backward) {
  CheckFinite(value, "output of " + std::string(op_name));
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->name = std::string(op_name);
  Tensor out(std::move(node));
  if (!recording_) return out;

  Op op;
  op.output = out.node();
  for (const Tensor& in : inputs) op.inputs.push_back(in.node());
  Node* out_node = out.node();
  op.backward = [backward = std::move(backward), out_node]() {
    backward(out_node);
  };
  ops_.push_back(std::move(op));
  for (Tensor& in : inputs) keep_alive_.push_back(std::move(in));
  keep_alive_.push_back(out);
  return out;
}

Tensor Tape::MatMul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " +
                         ShapeString(a.value()) + " * " +
                         ShapeString(b.value()));
  }
  Node* na = a.node();
  Node* nb = b.node();
  return Record("matmul", a.value() * b.value(), {a, b}, [na, nb](Node* out) {
    na->adjoint.noalias() += out->adjoint * nb->value.transpose();
    nb->adjoint.noalias() += na->value.transpose() * out->adjoint;
  });
}

Tensor Tape::MatMulT(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_t: inner dimensions disagree " +
                         ShapeString(a.value()) + " * " +
                         ShapeString(b.value()) + "^T");
  }
  Node* na = a.node();
  Node* nb = b.node();
  return Record("matmul_t", a.value() * b.value().transpose(), {a, b},
                [na, nb](Node* out) {
                  na->adjoint.noalias() += out->adjoint * nb->value;
                  nb->adjoint.noalias() += out->adjoint.transpose() * na->value;
                });
}

Tensor Tape::Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "add");
  Node* na = a.node();
  Node* nb = b.node();
  return Record("add", a.value() + b.value(), {a, b}, [na, nb](Node* out) {
    na->adjoint += out->adjoint;
    nb->adjoint += out->adjoint;
  });
}

Tensor Tape::Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "sub");
  Node* na = a.node();
  Node* nb = b.node();
  return Record("sub", a.value() - b.value(), {a, b}, [na, nb](Node* out) {
    na->adjoint += out->adjoint;
    nb->adjoint -= out->adjoint;
  });
}

Tensor Tape::AddRow(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: " + ShapeString(a.value()) + " + " +
                         ShapeString(row.value()));
  }
  Node* na = a.node();
  Node* nr = row.node();
  Matrix value = a.value().rowwise() + row.value().row(0);
  return Record("add_row", std::move(value), {a, row}, [na, nr](Node* out) {
    na->adjoint += out->adjoint;
    nr->adjoint += out->adjoint.colwise().sum();
  });
}

Tensor Tape::ScaleRows(const Tensor& a, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw DimensionError("scale_rows: " + ShapeString(a.value()) + " by " +
                         ShapeString(s.value()));
  }
  Node* na = a.node();
  Node* ns = s.node();
  Matrix value = s.value().col(0).asDiagonal() * a.value();
  return Record("scale_rows", std::move(value), {a, s}, [na, ns](Node* out) {
    na->adjoint += ns->value.col(0).asDiagonal() * out->adjoint;
    ns->adjoint.col(0) +=
        out->adjoint.cwiseProduct(na->value).rowwise().sum();
  });
}

Tensor Tape::Scale(const Tensor& a, double c) {
  Node* na = a.node();
  return Record("scale", a.value() * c, {a},
                [na, c](Node* out) { na->adjoint += out->adjoint * c; });
}

Tensor Tape::Relu(const Tensor& x) {
  Node* nx = x.node();
  Matrix value = x.value().cwiseMax(0.0);
  return Record("relu", std::move(value), {x}, [nx](Node* out) {
    nx->adjoint += (nx->value.array() > 0.0)
                       .select(out->adjoint.array(), 0.0)
                       .matrix();
  });
}

Tensor Tape::Sigmoid(const Tensor& x) {
  Node* nx = x.node();
  Matrix value = x.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return Record("sigmoid", std::move(value), {x}, [nx](Node* out) {
    const auto y = out->value.array();
    nx->adjoint.array() += out->adjoint.array() * y * (1.0 - y);
  });
}

Tensor Tape::SoftmaxRows(const Tensor& x) {
  if (x.cols() < 1) throw DimensionError("softmax_rows: empty row dimension");
  Node* nx = x.node();
  Matrix value(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double e = std::exp(x.value()(i, j) - m);
      value(i, j) = e;
      total += e;
    }
    value.row(i) /= total;
  }
  return Record("softmax_rows", std::move(value), {x}, [nx](Node* out) {
    const Matrix& y = out->value;
    const Matrix& dy = out->adjoint;
    Eigen::VectorXd dot = dy.cwiseProduct(y).rowwise().sum();
    nx->adjoint.array() +=
        y.array() * (dy.colwise() - dot).array();
  });
}

Tensor Tape::LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  const Eigen::Index d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: need D >= 2, got " +
                                  std::to_string(d));
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d) {
    throw DimensionError("layer_norm: gain/bias must be [1x" +
                         std::to_string(d) + "], got " +
                         ShapeString(gain.value()) + " and " +
                         ShapeString(bias.value()));
  }
  const Eigen::Index n = x.rows();
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.value().row(i).mean();
    const auto centered = x.value().row(i).array() - mean;
    const double var = centered.square().mean();
    (*inv_std)(i) = 1.0 / std::sqrt(var + eps);
    xhat->row(i) = centered * (*inv_std)(i);
  }
  Matrix value =
      (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() +
      bias.value().row(0).array();
  Node* nx = x.node();
  Node* ng = gain.node();
  Node* nb = bias.node();
  return Record(
      "layer_norm", std::move(value), {x, gain, bias},
      [nx, ng, nb, xhat, inv_std, d](Node* out) {
        const Matrix& dy = out->adjoint;
        ng->adjoint.row(0) += dy.cwiseProduct(*xhat).colwise().sum();
        nb->adjoint.row(0) += dy.colwise().sum();
        Matrix dxhat = dy.array().rowwise() * ng->value.row(0).array();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
          const double mean_dxhat = dxhat.row(i).sum() * inv_d;
          const double mean_dxhat_xhat =
              dxhat.row(i).dot(xhat->row(i)) * inv_d;
          nx->adjoint.row(i).array() +=
              (*inv_std)(i) * (dxhat.row(i).array() - mean_dxhat -
                               xhat->row(i).array() * mean_dxhat_xhat);
        }
      });
}

Tensor Tape::GatherRows(const Tensor& a, std::span<const int> rows) {
  Matrix value(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) +
                           " out of range for " + ShapeString(a.value()));
    }
    value.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  Node* na = a.node();
  std::vector<int> idx(rows.begin(), rows.end());
  return Record("gather_rows", std::move(value), {a},
                [na, idx = std::move(idx)](Node* out) {
                  for (size_t i = 0; i < idx.size(); ++i) {
                    na->adjoint.row(idx[i]) +=
                        out->adjoint.row(static_cast<Eigen::Index>(i));
                  }
                });
}

Tensor Tape::Columns(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("columns: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         ShapeString(a.value()));
  }
  Node* na = a.node();
  Matrix value = a.value().middleCols(start, count);
  return Record("columns", std::move(value), {a},
                [na, start, count](Node* out) {
                  na->adjoint.middleCols(start, count) += out->adjoint;
                });
}

Tensor Tape::RowNorms(const Tensor& a) {
  Node* na = a.node();
  Matrix value = a.value().rowwise().norm();
  return Record("row_norms", std::move(value), {a}, [na](Node* out) {
    for (Eigen::Index i = 0; i < na->value.rows(); ++i) {
      const double norm = out->value(i, 0);
      if (norm > 0.0) {
        na->adjoint.row(i) += na->value.row(i) * (out->adjoint(i, 0) / norm);
      }
    }
  });
}

Tensor Tape::Sum(const Tensor& a) {
  Node* na = a.node();
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  return Record("sum", std::move(value), {a}, [na](Node* out) {
    na->adjoint.array() += out->adjoint(0, 0);
  });
}

Tensor Tape::AbsSum(const Tensor& a) {
  Node* na = a.node();
  Matrix value(1, 1);
  value(0, 0) = a.value().cwiseAbs().sum();
  return Record("abs_sum", std::move(value), {a}, [na](Node* out) {
    const double g = out->adjoint(0, 0);
    na->adjoint.array() += g * na->value.array().sign();
  });
}

Tensor Tape::BceSum(const Tensor& p, const Matrix& labels, double clamp) {
  if (labels.rows() != p.rows() || labels.cols() != p.cols()) {
    throw DimensionError("bce: labels " + ShapeString(labels) +
                         " vs probabilities " + ShapeString(p.value()));
  }
  const double lo = clamp;
  const double hi = 1.0 - clamp;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p.value().data()[i], lo, hi);
    const double y = labels.data()[i];
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  Matrix value(1, 1);
  value(0, 0) = total;
  Node* np = p.node();
  return Record("bce_sum", std::move(value), {p},
                [np, labels, lo, hi](Node* out) {
                  const double g = out->adjoint(0, 0);
                  for (Eigen::Index i = 0; i < np->value.size(); ++i) {
                    const double pv = np->value.data()[i];
                    if (pv < lo || pv > hi) continue;
                    const double y = labels.data()[i];
                    np->adjoint.data()[i] +=
                        g * (-y / pv + (1.0 - y) / (1.0 - pv));
                  }
                });
}

void Tape::Backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw InvalidArgument("backward: loss must be scalar, got " +
                          ShapeString(loss.value()));
  }
  if (!recording_) return;

  std::unordered_set<Node*> produced;
  produced.reserve(ops_.size());
  std::vector<Node*> leaves;
  std::unordered_set<Node*> leaf_set;
  std::unordered_set<Node*> seen;
  auto touch = [&](Node* n) {
    if (seen.insert(n).second) {
      n->adjoint = Matrix::Zero(n->value.rows(), n->value.cols());
    }
  };
  for (const Op& op : ops_) {
    for (Node* in : op.inputs) touch(in);
    touch(op.output);
    produced.insert(op.output);
  }
  Node* root = loss.node();
  touch(root);
  for (const Op& op : ops_) {
    for (Node* in : op.inputs) {
      if (!produced.count(in) && in->requires_grad &&
          leaf_set.insert(in).second) {
        leaves.push_back(in);
      }
    }
  }
  if (!produced.count(root) && root->requires_grad &&
      leaf_set.insert(root).second) {
    leaves.push_back(root);
  }

  root->adjoint(0, 0) = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->output->adjoint.isZero(0.0)) continue;
    it->backward();
  }
  for (Node* leaf : leaves) {
    if (leaf->grad.rows() != leaf->value.rows() ||
        leaf->grad.cols() != leaf->value.cols()) {
      leaf->grad = Matrix::Zero(leaf->value.rows(), leaf->value.cols());
    }
    leaf->grad += leaf->adjoint;
  }
}

GradientCheckResult CheckGradients(const LossFn& loss_fn,
                                   std::span<Tensor> params, double h,
                                   double rel_tol, double abs_tol) {
  for (Tensor& p : params) p.ZeroGrad();
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.Backward(loss);
  }
  GradientCheckResult result;
  for (Tensor& p : params) {
    const Matrix analytic = p.grad();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      double& slot = p.mutable_value().data()[i];
      const double saved = slot;
      slot = saved + h;
      double plus;
      {
        Tape tape;
        tape.set_recording(false);
        plus = loss_fn(tape).item();
      }
      slot = saved - h;
      double minus;
      {
        Tape tape;
        tape.set_recording(false);
        minus = loss_fn(tape).item();
      }
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      ++result.checked;
      const bool ok = rel_err < rel_tol || abs_err < abs_tol;
      if (!ok) ++result.failed;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      // Near-zero slots are judged on absolute error only.
      if (abs_err >= abs_tol && rel_err > result.max_rel_error) {
        result.max_rel_error = rel_err;
        result.worst_slot = p.name() + "[" + std::to_string(i) + "]";
      }
    }
  }
  for (Tensor& p : params) p.ZeroGrad();
  return result;
}

}  // namespace ncmap::diff
