// SPDX-License-Identifier: Apache-2.0

#include "dsr/model.h"

#include "dsr/errors.h"

namespace dsr {

DsrModel make_dsr_model(const ModelSpec& spec, Rng& rng) {
  if (spec.in_dim <= 0 || spec.feature_dim <= 0 || spec.hidden <= 0 || spec.k_y <= 0 ||
      spec.k_d <= 0 || spec.classes < 2) {
    throw ConfigError("model dims must be positive and classes >= 2");
  }
  DsrModel m;
  m.spec = spec;
  m.g = make_mlp({spec.in_dim, spec.hidden, spec.feature_dim}, Activation::kTanh,
                 OutputActivation::kNone, "G", rng);
  m.h_y = make_mlp({spec.feature_dim, spec.hidden, 2 * spec.k_y}, Activation::kTanh,
                   OutputActivation::kNone, "Hy", rng);
  m.h_d = make_mlp({spec.feature_dim, spec.hidden, 2 * spec.k_d}, Activation::kTanh,
                   OutputActivation::kNone, "Hd", rng);
  m.decoder = make_mlp({spec.k_y + spec.k_d, spec.hidden, spec.feature_dim},
                       Activation::kTanh, OutputActivation::kNone, "dec", rng);
  m.c_y_sem = make_mlp({spec.k_y, spec.classes}, Activation::kNone,
                       OutputActivation::kSoftmax, "Cy_sem", rng);
  m.c_d_sem = make_mlp({spec.k_y, 2}, Activation::kNone, OutputActivation::kSoftmax,
                       "Cd_sem", rng);
  m.c_d_dom = make_mlp({spec.k_d, 2}, Activation::kNone, OutputActivation::kSoftmax,
                       "Cd_dom", rng);
  m.c_y_dom = make_mlp({spec.k_d, spec.classes}, Activation::kNone,
                       OutputActivation::kSoftmax, "Cy_dom", rng);
  return m;
}

ModelParams DsrModel::params() {
  ModelParams p;
  p.add_mlp(g);
  p.add_mlp(h_y);
  p.add_mlp(h_d);
  p.add_mlp(decoder);
  p.add_mlp(c_y_sem);
  p.add_mlp(c_d_sem);
  p.add_mlp(c_d_dom);
  p.add_mlp(c_y_dom);
  return p;
}

namespace {

struct EncoderHalves {
  Tensor mu;
  Tensor logvar;
};

EncoderHalves split_encoder_output(Tape& tape, const Tensor& out, int k) {
  EncoderHalves h;
  h.mu = tape.slice_cols(out, 0, k);
  h.logvar = tape.clamp(tape.slice_cols(out, k, 2 * k), kLogVarMin, kLogVarMax);
  return h;
}

Tensor reparameterize(Tape& tape, const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps) {
  Tensor std = tape.exp(tape.scale(logvar, 0.5));
  return tape.add(mu, tape.mul(std, eps));
}

Tensor draw_eps(int n, int k, Rng& rng) {
  Tensor eps({n, k});
  for (std::int64_t i = 0; i < eps.size(); ++i) eps.at(i) = rng.normal();
  return eps;
}

}  // namespace

LatentSample encode_with_eps(Tape& tape, const DsrModel& model, const Tensor& x,
                             const Tensor& eps_y, const Tensor& eps_d) {
  LatentSample s;
  s.features = model.g.forward(tape, x);
  auto hy = split_encoder_output(tape, model.h_y.forward(tape, s.features), model.spec.k_y);
  auto hd = split_encoder_output(tape, model.h_d.forward(tape, s.features), model.spec.k_d);
  s.mu_y = hy.mu;
  s.logvar_y = hy.logvar;
  s.mu_d = hd.mu;
  s.logvar_d = hd.logvar;
  s.eps_y = eps_y;
  s.eps_d = eps_d;
  s.z_y = reparameterize(tape, s.mu_y, s.logvar_y, eps_y);
  s.z_d = reparameterize(tape, s.mu_d, s.logvar_d, eps_d);
  return s;
}

LatentSample encode(Tape& tape, const DsrModel& model, const Tensor& x, Rng& rng) {
  const int n = x.dim(0);
  return encode_with_eps(tape, model, x, draw_eps(n, model.spec.k_y, rng),
                         draw_eps(n, model.spec.k_d, rng));
}

Tensor decode(Tape& tape, const DsrModel& model, const Tensor& z_y, const Tensor& z_d) {
  if (z_y.cols() != model.spec.k_y || z_d.cols() != model.spec.k_d) {
    throw DimensionError("latent widths " + shape_str(z_y.shape()) + ", " +
                         shape_str(z_d.shape()) + " do not match K_y=" +
                         std::to_string(model.spec.k_y) + ", K_d=" +
                         std::to_string(model.spec.k_d));
  }
  return model.decoder.forward(tape, tape.concat_cols(z_y, z_d));
}

HeadOutputs heads(Tape& tape, const DsrModel& model, const LatentSample& latents,
                  double lambda_sem, double lambda_dom) {
  HeadOutputs h;
  h.p_y_sem = model.c_y_sem.forward(tape, latents.z_y);
  h.p_d_sem = model.c_d_sem.forward(tape, tape.grad_reverse(latents.z_y, lambda_sem));
  h.p_d_dom = model.c_d_dom.forward(tape, latents.z_d);
  h.p_y_dom = model.c_y_dom.forward(tape, tape.grad_reverse(latents.z_d, lambda_dom));
  return h;
}

EncodedMeans encode_means(Tape& tape, const DsrModel& model, const Tensor& x) {
  EncodedMeans e;
  e.features = model.g.forward(tape, x);
  e.mu_y = tape.slice_cols(model.h_y.forward(tape, e.features), 0, model.spec.k_y);
  e.mu_d = tape.slice_cols(model.h_d.forward(tape, e.features), 0, model.spec.k_d);
  return e;
}

}  // namespace dsr
