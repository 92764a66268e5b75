// SPDX-License-Identifier: Apache-2.0
//
// Scalar objectives: the decomposed negative ELBO pieces, the two adversarial
// module losses, and their weighted total. The paper's min-max split is not
// visible here: the gradient reversal layers inside heads() carry all the
// sign flips, so every scalar below is a plain minimization target.

#pragma once

#include <vector>

#include "dsr/tensor.h"

namespace dsr {

// Probabilities are clamped here before any log.
constexpr double kProbFloor = 1e-12;

struct LossBreakdown {
  double kl_y = 0.0;
  double kl_d = 0.0;
  double recon = 0.0;
  double elbo_neg = 0.0;  // kl_y + kl_d + recon
  double l_y = 0.0;       // source label cross-entropy
  double l_d_sem = 0.0;   // domain cross-entropy on z_y's head
  double l_d_dom = 0.0;   // domain cross-entropy on z_d's head
  double l_entropy = 0.0; // entropy of the label head on z_d
  double l_sem = 0.0;
  double l_dom = 0.0;
  double total = 0.0;
};

// Batch-mean KL(N(mu, diag exp(logvar)) || N(0, I)).
Tensor kl_std_normal(Tape& tape, const Tensor& mu, const Tensor& logvar);

// Unit-variance Gaussian reconstruction likelihood up to constants:
// batch-mean of 0.5 * ||x_feat - x_hat||^2.
Tensor recon_nll(Tape& tape, const Tensor& x_feat, const Tensor& x_hat);

// -mean log p[i, labels[i]] over probability rows.
Tensor cross_entropy(Tape& tape, const Tensor& p, const std::vector<int>& labels);

// Mean Shannon entropy of probability rows, with 0 log 0 := 0.
Tensor entropy(Tape& tape, const Tensor& p);

struct SemLoss {
  Tensor value;       // delta * CE(labels) + CE(domains)
  double ce_label = 0.0;
  double ce_domain = 0.0;
};

// Label-adversarial module loss. p_y_sem_src holds the source rows only;
// p_d_sem covers source + target.
SemLoss l_sem(Tape& tape, const Tensor& p_y_sem_src, const std::vector<int>& source_labels,
              const Tensor& p_d_sem, const std::vector<int>& domain_tags, double delta);

struct DomLoss {
  Tensor value;
  double ce_domain = 0.0;
  double entropy_value = 0.0;  // S(p_y_dom), sign-free
};

// Domain-adversarial module loss: CE(p_d_dom, d) + sign * omega * S(p_y_dom).
// Default sign +1 makes the label head on z_d confident while H_d maximizes
// its entropy through the GRL; eq6_literal_sign flips to the paper's literal
// Eq. 6 reading where the entropy enters negated.
DomLoss l_dom(Tape& tape, const Tensor& p_d_dom, const std::vector<int>& domain_tags,
              const Tensor& p_y_dom, double omega, bool eq6_literal_sign = false);

struct TotalLoss {
  Tensor value;  // scalar on tape
  LossBreakdown parts;
};

// total = (kl_y + kl_d + recon) + beta * l_sem + gamma * l_dom.
// Throws NumericError naming the first non-finite component.
TotalLoss total_loss(Tape& tape, const Tensor& kl_y, const Tensor& kl_d,
                     const Tensor& recon, const SemLoss& sem, const DomLoss& dom,
                     double beta, double gamma);

}  // namespace dsr
