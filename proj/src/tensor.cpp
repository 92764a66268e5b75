// SPDX-License-Identifier: Apache-2.0

#include "dsr/tensor.h"

#include <cmath>
#include <sstream>

namespace dsr {

namespace {

std::int64_t product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void check_positive_extents(const std::vector<int>& shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
  }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  check_positive_extents(shape_);
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(product(shape_)), 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  check_positive_extents(shape);
  if (product(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

std::int64_t Tensor::size() const {
  if (!data_) return 0;
  return static_cast<std::int64_t>(data_->size());
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw ContractError("expected a scalar tensor, got shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  if (data_) t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {

// Broadcast classification for binary elementwise ops.
enum class Bcast { kNone, kRow };

Bcast binary_bcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kNone;
  const bool row_vec = (a.rank() == 2) &&
                       ((b.rank() == 1 && b.dim(0) == a.dim(1)) ||
                        (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)));
  if (row_vec) return Bcast::kRow;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " do not match or row-broadcast");
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::watch(Tensor& t) {
  if (!t.defined()) throw ContractError("cannot watch an undefined tensor");
  Node n;
  n.kind = OpKind::kLeaf;
  n.shape = t.shape();
  t.node = push(std::move(n));
  t.requires_grad = true;
  return t.node;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      const double av = pa[static_cast<size_t>(i) * k + l];
      const double* brow = pb + static_cast<size_t>(l) * n;
      double* orow = po + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (a.node >= 0 || b.node >= 0) {
    Node rec;
    rec.kind = OpKind::kMatMul;
    rec.a = a.node;
    rec.b = b.node;
    rec.va = a;
    rec.vb = b;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "add");
  Tensor out(a.shape());
  const std::int64_t n = a.size();
  const int cols = a.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    out.at(i) = a.at(i) + (bc == Bcast::kNone ? b.at(i) : b.at(i % cols));
  }
  if (a.node >= 0 || b.node >= 0) {
    Node rec;
    rec.kind = OpKind::kAdd;
    rec.a = a.node;
    rec.b = b.node;
    rec.va = a;
    rec.vb = b;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "sub");
  Tensor out(a.shape());
  const std::int64_t n = a.size();
  const int cols = a.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    out.at(i) = a.at(i) - (bc == Bcast::kNone ? b.at(i) : b.at(i % cols));
  }
  if (a.node >= 0 || b.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSub;
    rec.a = a.node;
    rec.b = b.node;
    rec.va = a;
    rec.vb = b;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "mul");
  Tensor out(a.shape());
  const std::int64_t n = a.size();
  const int cols = a.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    out.at(i) = a.at(i) * (bc == Bcast::kNone ? b.at(i) : b.at(i % cols));
  }
  if (a.node >= 0 || b.node >= 0) {
    Node rec;
    rec.kind = OpKind::kMul;
    rec.a = a.node;
    rec.b = b.node;
    rec.va = a;
    rec.vb = b;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::neg(const Tensor& a) { return scale(a, -1.0); }

Tensor Tape::exp(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double v = std::exp(a.at(i));
    if (!std::isfinite(v)) {
      throw DomainError("exp overflow at input " + std::to_string(a.at(i)));
    }
    out.at(i) = v;
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kExp;
    rec.a = a.node;
    rec.va = out;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::log(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (!(a.at(i) > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(a.at(i)));
    }
    out.at(i) = std::log(a.at(i));
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kLog;
    rec.a = a.node;
    rec.va = a;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = std::tanh(a.at(i));
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kTanh;
    rec.a = a.node;
    rec.va = out;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) > 0.0 ? a.at(i) : 0.0;
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kRelu;
    rec.a = a.node;
    rec.va = a;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = c * a.at(i);
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kScale;
    rec.a = a.node;
    rec.c0 = c;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + c;
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kAddScalar;
    rec.a = a.node;
    rec.c0 = c;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.at(i);
  Tensor out = Tensor::scalar(acc);
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSumAll;
    rec.a = a.node;
    rec.va = a;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::mean(const Tensor& a) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.at(i);
  Tensor out = Tensor::scalar(acc / static_cast<double>(a.size()));
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kMeanAll;
    rec.a = a.node;
    rec.va = a;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::sum(const Tensor& a, int axis) {
  if (a.rank() != 2 || (axis != 0 && axis != 1)) {
    throw DimensionError("axis reduction needs a rank-2 tensor and axis 0 or 1");
  }
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({axis == 0 ? n : m});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      out.at(axis == 0 ? c : r) += a.at(r, c);
    }
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSumAxis;
    rec.a = a.node;
    rec.va = a;
    rec.axis = axis;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::mean(const Tensor& a, int axis) {
  if (a.rank() != 2 || (axis != 0 && axis != 1)) {
    throw DimensionError("axis reduction needs a rank-2 tensor and axis 0 or 1");
  }
  const int m = a.dim(0), n = a.dim(1);
  const double denom = axis == 0 ? m : n;
  Tensor out({axis == 0 ? n : m});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      out.at(axis == 0 ? c : r) += a.at(r, c);
    }
  }
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) /= denom;
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kMeanAxis;
    rec.a = a.node;
    rec.va = a;
    rec.axis = axis;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  if (a.rank() != 2 || a.dim(1) < 2) {
    throw DimensionError("softmax_rows expects [n x C] with C >= 2, got " +
                         shape_str(a.shape()));
  }
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({m, n});
  for (int r = 0; r < m; ++r) {
    double mx = a.at(r, 0);
    for (int c = 1; c < n; ++c) mx = std::max(mx, a.at(r, c));
    double denom = 0.0;
    for (int c = 0; c < n; ++c) {
      out.at(r, c) = std::exp(a.at(r, c) - mx);
      denom += out.at(r, c);
    }
    for (int c = 0; c < n; ++c) out.at(r, c) /= denom;
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSoftmaxRows;
    rec.a = a.node;
    rec.va = out;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::grad_reverse(const Tensor& a, double lambda) {
  if (!std::isfinite(lambda)) throw ContractError("grad_reverse lambda must be finite");
  // Forward is a bitwise copy of the input.
  Tensor out = a.clone();
  out.node = -1;
  out.requires_grad = false;
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kGradReverse;
    rec.a = a.node;
    rec.c0 = lambda;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::select_cols(const Tensor& a, const std::vector<int>& idx) {
  if (a.rank() != 2) throw DimensionError("select_cols expects a rank-2 tensor");
  if (static_cast<int>(idx.size()) != a.dim(0)) {
    throw DimensionError("select_cols needs one index per row");
  }
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({m});
  for (int r = 0; r < m; ++r) {
    if (idx[static_cast<size_t>(r)] < 0 || idx[static_cast<size_t>(r)] >= n) {
      throw DataError("row " + std::to_string(r) + ": class index " +
                      std::to_string(idx[static_cast<size_t>(r)]) + " out of range [0, " +
                      std::to_string(n) + ")");
    }
    out.at(r) = a.at(r, idx[static_cast<size_t>(r)]);
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSelectCols;
    rec.a = a.node;
    rec.va = a;
    rec.idx = idx;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::clamp_min(const Tensor& a, double lo) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) < lo ? lo : a.at(i);
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kClampMin;
    rec.a = a.node;
    rec.va = a;
    rec.c0 = lo;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp bounds out of order");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    out.at(i) = a.at(i) < lo ? lo : (a.at(i) > hi ? hi : a.at(i));
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kClamp;
    rec.a = a.node;
    rec.va = a;
    rec.c0 = lo;
    rec.c1 = hi;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols expects rank-2 tensors with equal row counts");
  }
  const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out({m, p + q});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < p; ++c) out.at(r, c) = a.at(r, c);
    for (int c = 0; c < q; ++c) out.at(r, p + c) = b.at(r, c);
  }
  if (a.node >= 0 || b.node >= 0) {
    Node rec;
    rec.kind = OpKind::kConcatCols;
    rec.a = a.node;
    rec.b = b.node;
    rec.va = a;
    rec.vb = b;
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, int c0, int c1) {
  if (a.rank() != 2 || c0 < 0 || c1 > a.dim(1) || c0 >= c1) {
    throw DimensionError("slice_cols range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") invalid for " + shape_str(a.shape()));
  }
  const int m = a.dim(0);
  Tensor out({m, c1 - c0});
  for (int r = 0; r < m; ++r) {
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = a.at(r, c);
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSliceCols;
    rec.a = a.node;
    rec.va = a;
    rec.idx = {c0, c1};
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, int r0, int r1) {
  if (a.rank() != 2 || r0 < 0 || r1 > a.dim(0) || r0 >= r1) {
    throw DimensionError("slice_rows range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") invalid for " + shape_str(a.shape()));
  }
  const int n = a.dim(1);
  Tensor out({r1 - r0, n});
  for (int r = r0; r < r1; ++r) {
    for (int c = 0; c < n; ++c) out.at(r - r0, c) = a.at(r, c);
  }
  if (a.node >= 0) {
    Node rec;
    rec.kind = OpKind::kSliceRows;
    rec.a = a.node;
    rec.va = a;
    rec.idx = {r0, r1};
    rec.shape = out.shape();
    out.node = push(std::move(rec));
  }
  return out;
}

Tensor& Tape::slot(int node_id, const std::vector<int>& shape) {
  auto& g = grads_[static_cast<size_t>(node_id)];
  if (!g.defined()) g = Tensor::zeros(shape);
  return g;
}

void Tape::accumulate(int node_id, const Tensor& g) {
  if (node_id < 0) return;
  Tensor& dst = slot(node_id, nodes_[static_cast<size_t>(node_id)].shape);
  for (std::int64_t i = 0; i < g.size(); ++i) dst.at(i) += g.at(i);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size())) {
    throw ContractError("loss tensor is not on this tape");
  }
  grads_.assign(nodes_.size(), Tensor());
  slot(loss.node, nodes_[static_cast<size_t>(loss.node)].shape).at(0) = 1.0;

  for (int id = loss.node; id >= 0; --id) {
    const Tensor& g = grads_[static_cast<size_t>(id)];
    if (!g.defined()) continue;
    const Node& nd = nodes_[static_cast<size_t>(id)];
    switch (nd.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        const Tensor& a = nd.va;
        const Tensor& b = nd.vb;
        const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
        if (nd.a >= 0) {
          Tensor ga({m, k});
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
              const double gv = g.at(i, j);
              for (int l = 0; l < k; ++l) ga.at(i, l) += gv * b.at(l, j);
            }
          }
          accumulate(nd.a, ga);
        }
        if (nd.b >= 0) {
          Tensor gb({k, n});
          for (int i = 0; i < m; ++i) {
            for (int l = 0; l < k; ++l) {
              const double av = a.at(i, l);
              for (int j = 0; j < n; ++j) gb.at(l, j) += av * g.at(i, j);
            }
          }
          accumulate(nd.b, gb);
        }
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub: {
        const double sgn = nd.kind == OpKind::kSub ? -1.0 : 1.0;
        if (nd.a >= 0) accumulate(nd.a, g);
        if (nd.b >= 0) {
          if (nd.vb.same_shape(nd.va)) {
            Tensor gb(nd.vb.shape());
            for (std::int64_t i = 0; i < g.size(); ++i) gb.at(i) = sgn * g.at(i);
            accumulate(nd.b, gb);
          } else {
            Tensor gb = Tensor::zeros(nd.vb.shape());
            const int cols = nd.va.cols();
            for (std::int64_t i = 0; i < g.size(); ++i) gb.at(i % cols) += sgn * g.at(i);
            accumulate(nd.b, gb);
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = nd.va;
        const Tensor& b = nd.vb;
        const bool bcast = !b.same_shape(a);
        const int cols = a.cols();
        if (nd.a >= 0) {
          Tensor ga(a.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) {
            ga.at(i) = g.at(i) * (bcast ? b.at(i % cols) : b.at(i));
          }
          accumulate(nd.a, ga);
        }
        if (nd.b >= 0) {
          Tensor gb = Tensor::zeros(b.shape());
          for (std::int64_t i = 0; i < g.size(); ++i) {
            gb.at(bcast ? (i % cols) : i) += g.at(i) * a.at(i);
          }
          accumulate(nd.b, gb);
        }
        break;
      }
      case OpKind::kExp: {
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) * nd.va.at(i);
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kLog: {
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) / nd.va.at(i);
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kTanh: {
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) {
          ga.at(i) = g.at(i) * (1.0 - nd.va.at(i) * nd.va.at(i));
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kRelu: {
        // Subgradient 0 at exactly 0.
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) {
          ga.at(i) = nd.va.at(i) > 0.0 ? g.at(i) : 0.0;
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kScale: {
        Tensor ga(nd.shape);
        for (std::int64_t i = 0; i < g.size(); ++i) ga.at(i) = nd.c0 * g.at(i);
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kAddScalar:
        accumulate(nd.a, g);
        break;
      case OpKind::kSumAll: {
        accumulate(nd.a, Tensor::full(nd.va.shape(), g.at(0)));
        break;
      }
      case OpKind::kMeanAll: {
        const double v = g.at(0) / static_cast<double>(nd.va.size());
        accumulate(nd.a, Tensor::full(nd.va.shape(), v));
        break;
      }
      case OpKind::kSumAxis:
      case OpKind::kMeanAxis: {
        const int m = nd.va.dim(0), n = nd.va.dim(1);
        const double denom =
            nd.kind == OpKind::kMeanAxis ? (nd.axis == 0 ? m : n) : 1.0;
        Tensor ga({m, n});
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) {
            ga.at(r, c) = g.at(nd.axis == 0 ? c : r) / denom;
          }
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Tensor& y = nd.va;
        const int m = y.dim(0), n = y.dim(1);
        Tensor ga({m, n});
        for (int r = 0; r < m; ++r) {
          double dot = 0.0;
          for (int c = 0; c < n; ++c) dot += g.at(r, c) * y.at(r, c);
          for (int c = 0; c < n; ++c) {
            ga.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
          }
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kGradReverse: {
        Tensor ga(nd.shape);
        for (std::int64_t i = 0; i < g.size(); ++i) ga.at(i) = -nd.c0 * g.at(i);
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kSelectCols: {
        Tensor ga = Tensor::zeros(nd.va.shape());
        for (int r = 0; r < nd.va.dim(0); ++r) {
          ga.at(r, nd.idx[static_cast<size_t>(r)]) = g.at(r);
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kClampMin: {
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) {
          ga.at(i) = nd.va.at(i) > nd.c0 ? g.at(i) : 0.0;
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kClamp: {
        Tensor ga(nd.va.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) {
          const double v = nd.va.at(i);
          ga.at(i) = (v >= nd.c0 && v <= nd.c1) ? g.at(i) : 0.0;
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kConcatCols: {
        const int m = nd.va.dim(0), p = nd.va.dim(1), q = nd.vb.dim(1);
        if (nd.a >= 0) {
          Tensor ga({m, p});
          for (int r = 0; r < m; ++r) {
            for (int c = 0; c < p; ++c) ga.at(r, c) = g.at(r, c);
          }
          accumulate(nd.a, ga);
        }
        if (nd.b >= 0) {
          Tensor gb({m, q});
          for (int r = 0; r < m; ++r) {
            for (int c = 0; c < q; ++c) gb.at(r, c) = g.at(r, p + c);
          }
          accumulate(nd.b, gb);
        }
        break;
      }
      case OpKind::kSliceCols: {
        Tensor ga = Tensor::zeros(nd.va.shape());
        const int c0 = nd.idx[0], c1 = nd.idx[1];
        for (int r = 0; r < nd.va.dim(0); ++r) {
          for (int c = c0; c < c1; ++c) ga.at(r, c) = g.at(r, c - c0);
        }
        accumulate(nd.a, ga);
        break;
      }
      case OpKind::kSliceRows: {
        Tensor ga = Tensor::zeros(nd.va.shape());
        const int r0 = nd.idx[0], r1 = nd.idx[1];
        for (int r = r0; r < r1; ++r) {
          for (int c = 0; c < nd.va.dim(1); ++c) ga.at(r, c) = g.at(r - r0, c);
        }
        accumulate(nd.a, ga);
        break;
      }
    }
  }
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.node < 0) {
    throw ContractError("tensor is not on this tape; no gradient available");
  }
  if (t.node >= static_cast<int>(grads_.size()) ||
      !grads_[static_cast<size_t>(t.node)].defined()) {
    return Tensor::zeros(t.shape());
  }
  return grads_[static_cast<size_t>(t.node)];
}

}  // namespace dsr
