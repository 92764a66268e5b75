// SPDX-License-Identifier: Apache-2.0
//
// MLP building blocks on top of the tape: layers, Glorot init, a named
// parameter registry, SGD-momentum and Adam, and the binary checkpoint format.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dsr/rng.h"
#include "dsr/tensor.h"

namespace dsr {

enum class Activation { kNone, kTanh, kRelu };
enum class OutputActivation { kNone, kSoftmax };

struct LinearLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
  std::string name;

  int in_dim() const { return weight.dim(0); }
  int out_dim() const { return weight.dim(1); }
};

// Plain feed-forward stack. Hidden activations between layers, optional
// softmax on the last one.
struct Mlp {
  std::vector<LinearLayer> layers;
  Activation activation = Activation::kTanh;
  OutputActivation output_activation = OutputActivation::kNone;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  Tensor forward(Tape& tape, const Tensor& x) const;
};

// Glorot-uniform weights, zero biases, deterministic per rng stream.
// dims lists layer widths, e.g. {16, 64, 8} builds two layers.
Mlp make_mlp(const std::vector<int>& dims, Activation activation,
             OutputActivation output_activation, const std::string& name_prefix,
             Rng& rng);

// Ordered name -> parameter registry. Non-owning: entries point into the
// model that registered them, so optimizer writes are visible everywhere.
class ModelParams {
 public:
  void add(const std::string& name, Tensor* t);
  void add_mlp(Mlp& mlp);

  Tensor* find(const std::string& name) const;
  size_t size() const { return items_.size(); }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor*>> items_;
};

enum class OptimizerKind { kSgdMomentum, kAdam };

// Moment buffers are keyed by registry order, allocated on the first step.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  // Applies one update to every registered parameter, reading gradients off
  // the tape. Parameters must have been watched before the forward pass.
  void step(ModelParams& params, const Tape& tape);

  int steps() const { return steps_; }
  double learning_rate() const { return lr_; }

  static constexpr double kMomentum = 0.9;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  int steps_ = 0;
  std::vector<Tensor> m_;  // momentum / first moment
  std::vector<Tensor> v_;  // second moment (adam only)
};

// Checkpoint file: magic "DSR1", version u32, then per-parameter records
// (name length u32, name utf-8, rank u32, dims u32[], f64 payload), all
// little-endian. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);
// Copies checkpoint values into an existing registry; throws DataError on
// missing names or shape mismatches, naming the offending group.
void load_checkpoint_into(const std::string& path, ModelParams& params);

}  // namespace dsr
