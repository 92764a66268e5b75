// SPDX-License-Identifier: Apache-2.0
//
// Synthetic data from the two-latent causal model (class clusters in z_y,
// domain clusters in z_d, mixed through a random tanh map), plus CSV
// ingestion of precomputed features and the mixed-domain batch iterator.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsr/rng.h"
#include "dsr/tensor.h"

namespace dsr {

// Training-facing view: no target labels, by construction.
struct TrainView {
  Tensor source_x;
  std::vector<int> source_y;
  Tensor target_x;
  int dim = 0;
  int classes = 0;
};

struct Dataset {
  Tensor source_x;            // [n_S x d]
  std::vector<int> source_y;  // labels in [0, C)
  Tensor target_x;            // [n_T x d]
  std::vector<int> target_y;  // held-out ground truth; empty when unknown
  int dim = 0;
  int classes = 0;

  // True generative latents, synthetic data only (undefined otherwise).
  Tensor source_zy, source_zd;
  Tensor target_zy, target_zd;

  int n_source() const { return source_x.dim(0); }
  int n_target() const { return target_x.dim(0); }
  bool has_target_labels() const { return !target_y.empty(); }

  TrainView train_view() const;
  void validate() const;
};

struct GenSpec {
  int classes = 2;
  int k_y = 2;  // true semantic latent dim
  int k_d = 2;  // true domain latent dim
  std::vector<std::vector<double>> class_means;   // classes x k_y
  std::vector<std::vector<double>> domain_means;  // 2 x k_d
  double sigma = 0.5;
  std::uint64_t mixing_seed = 4242;  // fixes the random map A, b
  int n_source = 2000;
  int n_target = 2000;
  int dim = 16;

  // The default task: two classes at distance ~4.2 sigma in z_y, domains
  // separated by `domain_gap` along the first z_d axis.
  static GenSpec defaults(double domain_gap = 4.0);
  void validate() const;
};

// Draws the dataset: per sample a uniform class, z_y ~ N(mean_c, sigma^2 I),
// z_d ~ N(mean_domain, sigma^2 I), x = tanh(A [z_y ; z_d] + b).
// Deterministic per (spec.mixing_seed, seed).
Dataset generate(const GenSpec& spec, std::uint64_t seed);

// CSV round trip. Source files carry a `label` column, target files do not;
// target files in labeled format are accepted and their labels become the
// held-out target_y (only if every label is >= 0).
void save_source_csv(const std::string& path, const Tensor& x, const std::vector<int>& y);
void save_target_csv(const std::string& path, const Tensor& x);
// Oracle latents: domain,label,zy...,zd... one row per sample, source first.
void save_latents_csv(const std::string& path, const Dataset& ds);

Dataset load_features(const std::string& source_path, const std::string& target_path);

// Reads target labels back from an oracle-latents CSV written by
// save_latents_csv; returns one label per target row.
std::vector<int> load_target_labels_from_latents(const std::string& path, int n_target);

// One mixed batch: the first n_src rows are source, the rest target.
struct Batch {
  Tensor x;
  std::vector<int> source_labels;  // for rows [0, n_src)
  std::vector<int> domain_tags;    // 0 = source, 1 = target, all rows
  int n_src = 0;
};

// Equal halves from each domain, shuffled per call, deterministic per rng
// state. The short tail is dropped. batch_size must be even.
std::vector<Batch> make_batches(const TrainView& view, int batch_size, Rng& rng);

}  // namespace dsr
