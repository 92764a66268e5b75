// SPDX-License-Identifier: Apache-2.0

#include "dsr/nn.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dsr/errors.h"

namespace dsr {

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim()) {
    throw DimensionError("mlp input " + shape_str(x.shape()) + " does not match first layer width " +
                         std::to_string(in_dim()));
  }
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = tape.matmul(h, layers[i].weight);
    h = tape.add(h, layers[i].bias);
    const bool last = i + 1 == layers.size();
    if (!last) {
      if (activation == Activation::kTanh) h = tape.tanh(h);
      else if (activation == Activation::kRelu) h = tape.relu(h);
    } else if (output_activation == OutputActivation::kSoftmax) {
      h = tape.softmax_rows(h);
    }
  }
  return h;
}

Mlp make_mlp(const std::vector<int>& dims, Activation activation,
             OutputActivation output_activation, const std::string& name_prefix,
             Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp needs at least one layer (two dims)");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("mlp layer width must be positive, got " + std::to_string(d));
  }
  Mlp mlp;
  mlp.activation = activation;
  mlp.output_activation = output_activation;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i], out = dims[i + 1];
    LinearLayer layer;
    layer.name = name_prefix + "/" + std::to_string(i);
    layer.weight = Tensor({in, out});
    layer.bias = Tensor({out});
    const double limit = std::sqrt(6.0 / (in + out));
    for (std::int64_t j = 0; j < layer.weight.size(); ++j) {
      layer.weight.at(j) = rng.uniform(-limit, limit);
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

void ModelParams::add(const std::string& name, Tensor* t) {
  if (find(name) != nullptr) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  items_.emplace_back(name, t);
}

void ModelParams::add_mlp(Mlp& mlp) {
  for (auto& layer : mlp.layers) {
    add(layer.name + "/W", &layer.weight);
    add(layer.name + "/b", &layer.bias);
  }
}

Tensor* ModelParams::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  return nullptr;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

void Optimizer::step(ModelParams& params, const Tape& tape) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  } else if (m_.size() != params.size()) {
    throw ContractError("optimizer was initialized for a different parameter set");
  }
  ++steps_;
  size_t i = 0;
  for (const auto& [name, p] : params) {
    Tensor g = tape.grad(*p);  // ContractError if the parameter was not watched
    if (!g.same_shape(*p)) {
      throw ContractError("gradient shape mismatch for " + name);
    }
    if (!m_[i].defined()) m_[i] = Tensor::zeros(p->shape());
    if (kind_ == OptimizerKind::kSgdMomentum) {
      for (std::int64_t j = 0; j < p->size(); ++j) {
        m_[i].at(j) = kMomentum * m_[i].at(j) + g.at(j);
        p->at(j) -= lr_ * m_[i].at(j);
      }
    } else {
      if (!v_[i].defined()) v_[i] = Tensor::zeros(p->shape());
      const double bc1 = 1.0 - std::pow(kBeta1, steps_);
      const double bc2 = 1.0 - std::pow(kBeta2, steps_);
      for (std::int64_t j = 0; j < p->size(); ++j) {
        m_[i].at(j) = kBeta1 * m_[i].at(j) + (1.0 - kBeta1) * g.at(j);
        v_[i].at(j) = kBeta2 * v_[i].at(j) + (1.0 - kBeta2) * g.at(j) * g.at(j);
        const double mhat = m_[i].at(j) / bc1;
        const double vhat = v_[i].at(j) / bc2;
        p->at(j) -= lr_ * mhat / (std::sqrt(vhat) + kEpsilon);
      }
    }
    ++i;
  }
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'R', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  for (const auto& [name, t] : params) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (int i = 0; i < t->rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t->dim(i)));
    for (std::int64_t i = 0; i < t->size(); ++i) put_f64(os, t->at(i));
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<std::pair<std::string, Tensor>> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("checkpoint truncated");
    const std::uint32_t rank = get_u32(is);
    std::vector<int> shape;
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<int>(get_u32(is)));
      count *= shape.back();
    }
    std::vector<double> values(static_cast<size_t>(count));
    for (auto& v : values) v = get_f64(is);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint_into(const std::string& path, ModelParams& params) {
  auto records = load_checkpoint(path);
  for (const auto& [name, value] : records) {
    Tensor* dst = params.find(name);
    if (dst == nullptr) {
      throw DataError("checkpoint has unknown parameter group: " + name);
    }
    if (!dst->same_shape(value)) {
      throw DataError("checkpoint shape mismatch for " + name + ": file " +
                      shape_str(value.shape()) + " vs model " + shape_str(dst->shape()));
    }
    for (std::int64_t i = 0; i < value.size(); ++i) dst->at(i) = value.at(i);
  }
  for (const auto& [name, t] : params) {
    (void)t;
    bool found = false;
    for (const auto& [rname, rt] : records) {
      (void)rt;
      if (rname == name) { found = true; break; }
    }
    if (!found) throw DataError("checkpoint missing parameter group: " + name);
  }
}

}  // namespace dsr
