// SPDX-License-Identifier: Apache-2.0
//
// The DSR computation graph: backbone G, variational encoders H_y/H_d with
// reparameterized sampling, a decoder over [z_y ; z_d], and the two
// adversarial classifier pairs. The gradient reversal layers sit in front of
// the cross heads (domain-from-z_y, label-from-z_d).

#pragma once

#include "dsr/nn.h"
#include "dsr/rng.h"
#include "dsr/tensor.h"

namespace dsr {

struct ModelSpec {
  int in_dim = 16;       // raw feature width of the data
  int feature_dim = 32;  // width of G's output (the reconstruction target)
  int hidden = 64;
  int k_y = 2;
  int k_d = 2;
  int classes = 2;
};

// Eight disjoint parameter groups; no weight sharing anywhere.
struct DsrModel {
  Mlp g;        // in_dim -> hidden -> feature_dim, tanh hidden
  Mlp h_y;      // feature_dim -> hidden -> 2*k_y (mean ++ log-variance)
  Mlp h_d;      // feature_dim -> hidden -> 2*k_d
  Mlp decoder;  // k_y + k_d -> hidden -> feature_dim
  Mlp c_y_sem;  // label head on z_y
  Mlp c_d_sem;  // domain head on z_y, behind a GRL
  Mlp c_d_dom;  // domain head on z_d
  Mlp c_y_dom;  // label head on z_d, behind a GRL
  ModelSpec spec;

  // Registry with the fixed group names G, Hy, Hd, dec, Cy_sem, Cd_sem,
  // Cd_dom, Cy_dom. Rebuilt on demand; valid while the model lives.
  ModelParams params();
};

DsrModel make_dsr_model(const ModelSpec& spec, Rng& rng);

// Log-variances are clamped here before exponentiation.
constexpr double kLogVarMin = -8.0;
constexpr double kLogVarMax = 8.0;

struct LatentSample {
  Tensor features;  // G(x), on tape
  Tensor mu_y, logvar_y;
  Tensor mu_d, logvar_d;
  Tensor z_y, z_d;
  Tensor eps_y, eps_d;  // the standard-normal draws used
};

// Reparameterized encode: z = mu + exp(logvar/2) * eps, all on tape.
LatentSample encode(Tape& tape, const DsrModel& model, const Tensor& x, Rng& rng);
// Same with caller-supplied noise (tests force eps = 0).
LatentSample encode_with_eps(Tape& tape, const DsrModel& model, const Tensor& x,
                             const Tensor& eps_y, const Tensor& eps_d);

// Decoder applied to the concatenation [z_y ; z_d].
Tensor decode(Tape& tape, const DsrModel& model, const Tensor& z_y, const Tensor& z_d);

struct HeadOutputs {
  Tensor p_y_sem;  // C_y_sem(z_y)
  Tensor p_d_sem;  // C_d_sem(grad_reverse(z_y, lambda_sem))
  Tensor p_d_dom;  // C_d_dom(z_d)
  Tensor p_y_dom;  // C_y_dom(grad_reverse(z_d, lambda_dom))
};

HeadOutputs heads(Tape& tape, const DsrModel& model, const LatentSample& latents,
                  double lambda_sem, double lambda_dom);

// Deterministic encoder means (no sampling); used for inference and probes.
struct EncodedMeans {
  Tensor features;
  Tensor mu_y, mu_d;
};
EncodedMeans encode_means(Tape& tape, const DsrModel& model, const Tensor& x);

}  // namespace dsr
