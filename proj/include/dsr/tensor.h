// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors and a define-by-run reverse-mode tape.
// The tape is rebuilt every training step; ops record just enough forward
// state to run their backward rule. Gradient reversal is an op like any
// other, which is what turns the adversarial min-max into one minimization.

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsr/errors.h"

namespace dsr {

// Row-major dense array of doubles. Copies alias the same buffer (parameters
// rely on this: the optimizer writes through, every holder sees the update).
// `node` is only meaningful for the tape currently in scope; a fresh tape
// re-registers leaves and overwrites it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  // Extents for the common 2-D case; a rank-1 tensor is one row.
  int rows() const { return rank() == 2 ? shape_[0] : 1; }
  int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }
  std::int64_t size() const;
  bool defined() const { return data_ != nullptr; }
  bool is_scalar() const { return size() == 1; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  double& at(std::int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  double at(std::int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return (*data_)[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return (*data_)[static_cast<size_t>(r) * cols() + c]; }

  // Value of a scalar tensor; ContractError otherwise.
  double value() const;

  // Deep copy (fresh buffer).
  Tensor clone() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool requires_grad = false;
  int node = -1;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

enum class OpKind {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kScale,
  kAddScalar,
  kSumAll,
  kMeanAll,
  kSumAxis,
  kMeanAxis,
  kSoftmaxRows,
  kGradReverse,
  kSelectCols,
  kClampMin,
  kClamp,
  kConcatCols,
  kSliceCols,
  kSliceRows,
};

// Append-only record of forward ops plus one gradient slot per node.
// Node ids are topologically ordered by construction; backward walks them
// once in descending order. Single-threaded; two tapes never share nodes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a gradient leaf. Sets t.requires_grad and assigns its node id.
  int watch(Tensor& t);

  size_t num_nodes() const { return nodes_.size(); }

  // a[m×k] * b[k×n] -> [m×n]
  Tensor matmul(const Tensor& a, const Tensor& b);

  // Elementwise binary ops; b may be a row vector broadcast over a's rows.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);

  Tensor neg(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);

  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor sum(const Tensor& a, int axis);
  Tensor mean(const Tensor& a, int axis);

  Tensor softmax_rows(const Tensor& a);

  // Identity forward; backward multiplies the incoming gradient by -lambda.
  Tensor grad_reverse(const Tensor& a, double lambda);

  // v[i] = a[i, idx[i]] for a row-wise class pick.
  Tensor select_cols(const Tensor& a, const std::vector<int>& idx);

  Tensor clamp_min(const Tensor& a, double lo);
  Tensor clamp(const Tensor& a, double lo, double hi);

  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor slice_cols(const Tensor& a, int c0, int c1);
  Tensor slice_rows(const Tensor& a, int r0, int r1);

  // Reverse sweep from a scalar loss; seeds d(loss)/d(loss) = 1.
  void backward(const Tensor& loss);

  // Gradient accumulated for a watched or derived tensor. Zeros if the
  // tensor never influenced the loss; ContractError if it is off-tape.
  Tensor grad(const Tensor& t) const;

 private:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    Tensor va;  // saved forward values, meaning depends on kind
    Tensor vb;
    std::vector<int> idx;
    double c0 = 0.0;
    double c1 = 0.0;
    int axis = -1;
    std::vector<int> shape;  // output shape
  };

  int push(Node n);
  void accumulate(int node_id, const Tensor& g);
  Tensor& slot(int node_id, const std::vector<int>& shape);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Shape formatting for error messages.
std::string shape_str(const std::vector<int>& shape);

}  // namespace dsr
