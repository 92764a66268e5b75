// SPDX-License-Identifier: Apache-2.0
//
// Inference and diagnostics over a trained model: target classification from
// encoder means, linear probes that measure what the latents expose, and a
// 2-D PCA embedding export.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsr/data.h"
#include "dsr/model.h"
#include "dsr/tensor.h"

namespace dsr {

// argmax over C_y_sem(mu_y(G(x))). No sampling; ties go to the lower index.
std::vector<int> predict(const DsrModel& model, const Tensor& x);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

enum class ProbeTarget { kDomainFromZy, kLabelFromZd, kLabelFromZy, kDomainFromZd };

const char* probe_target_name(ProbeTarget t);

struct ProbeResult {
  ProbeTarget target;
  double accuracy = 0.0;
  double chance = 0.0;  // 1 / number of probe classes
  int n_eval = 0;
};

// Trains a fresh linear softmax classifier on standardized latents (70% of
// rows, 200 adam steps) and reports held-out accuracy on the other 30%.
ProbeResult probe(const Tensor& latents, const std::vector<int>& targets,
                  ProbeTarget kind, std::uint64_t seed);

// The four standard probes over encoder means of source + target rows.
// Label probes need target labels; throws DataError if they are missing.
std::vector<ProbeResult> run_probes(const DsrModel& model, const Dataset& data,
                                    std::uint64_t seed);

// Top-2 principal components by power iteration with deflation.
struct Pca2 {
  std::vector<double> pc1, pc2;       // projected coordinates
  std::vector<double> axis1, axis2;   // orthonormal components
  double var1 = 0.0, var2 = 0.0;      // explained variances
  double total_variance = 0.0;
};

Pca2 compute_pca2(const Tensor& latents);

// CSV with columns pc1,pc2,label,domain.
void export_embedding(const Tensor& latents, const std::vector<int>& labels,
                      const std::vector<int>& domains, const std::string& out_path);

}  // namespace dsr
