// SPDX-License-Identifier: Apache-2.0
//
// Training loop: one optimizer step per mixed batch over a single scalar
// loss. The adversarial argmax never appears explicitly; the cross heads'
// GRLs deliver reversed gradients to the encoders while the heads themselves
// receive plain ones. Also trains the source-only and DANN-style baselines
// and the no-domain-module ablation.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsr/data.h"
#include "dsr/losses.h"
#include "dsr/model.h"
#include "dsr/nn.h"

namespace dsr {

enum class TrainMode { kDsr, kDsrNoDomainModule, kSourceOnly, kDannBaseline };

const char* train_mode_name(TrainMode m);
TrainMode parse_train_mode(const std::string& name);  // ConfigError on unknown

struct TrainConfig {
  int epochs = 120;
  int batch_size = 64;
  double learning_rate = 5e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  double delta = 1.0;   // weight of the source label loss inside l_sem
  double omega = 0.1;   // weight of the entropy term inside l_dom
  double beta = 1.0;    // weight of l_sem in the total
  double gamma = 1.0;   // weight of l_dom in the total

  double lambda_max = 1.0;  // shared GRL ceiling
  double ramp = 10.0;
  // Optional per-module overrides; negative means "use lambda_max".
  double lambda_sem_max = -1.0;
  double lambda_dom_max = -1.0;

  int k_y = 2;
  int k_d = 2;
  int hidden = 64;
  int feature_dim = 32;

  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kDsr;
  bool eq6_literal_sign = false;
  // The backbone is frozen by default: the reconstruction target is G(x),
  // and a trainable G collapses the VAE by shrinking its own features.
  bool freeze_g = true;

  int checkpoint_every = 25;  // epochs
  std::string out_dir;        // empty: keep everything in memory

  void validate() const;
  double effective_lambda_sem_max() const { return lambda_sem_max < 0 ? lambda_max : lambda_sem_max; }
  double effective_lambda_dom_max() const { return lambda_dom_max < 0 ? lambda_max : lambda_dom_max; }
};

struct MetricsRecord {
  int epoch = 0;
  LossBreakdown losses;
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;  // absent when target labels are unknown
  double lambda = 0.0;
  double wall_seconds = 0.0;  // in-memory only; kept out of the metrics file
};

struct TrainResult {
  DsrModel model;
  std::vector<MetricsRecord> history;
  std::string final_checkpoint;  // empty when out_dir is unset
  std::string metrics_path;
};

// The usual adversarial warm-up: 2*lambda_max / (1 + exp(-ramp*p)) - lambda_max.
double lambda_at(double progress, double lambda_max, double ramp);

TrainResult train(const TrainConfig& config, const Dataset& data);

// Resumes a converged DSR checkpoint with the domain module weight forced to
// zero. config.mode must be kDsrNoDomainModule.
TrainResult train_ablation(const TrainConfig& config, const Dataset& data,
                           const std::string& checkpoint_path);

// One metrics line, stable field order (no wall clock).
std::string metrics_to_json(const MetricsRecord& rec);

}  // namespace dsr
