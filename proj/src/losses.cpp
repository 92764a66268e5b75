// SPDX-License-Identifier: Apache-2.0

#include "dsr/losses.h"

#include <cmath>

#include "dsr/errors.h"

namespace dsr {

Tensor kl_std_normal(Tape& tape, const Tensor& mu, const Tensor& logvar) {
  if (!mu.same_shape(logvar)) {
    throw DimensionError("kl_std_normal: mu " + shape_str(mu.shape()) + " vs logvar " +
                         shape_str(logvar.shape()));
  }
  const double n = static_cast<double>(mu.dim(0));
  // 0.5 * (mu^2 + exp(logvar) - 1 - logvar), summed and batch-averaged.
  Tensor inner = tape.sub(tape.add_scalar(tape.add(tape.mul(mu, mu), tape.exp(logvar)), -1.0),
                          logvar);
  return tape.scale(tape.sum(inner), 0.5 / n);
}

Tensor recon_nll(Tape& tape, const Tensor& x_feat, const Tensor& x_hat) {
  if (!x_feat.same_shape(x_hat)) {
    throw DimensionError("recon_nll: shapes " + shape_str(x_feat.shape()) + " vs " +
                         shape_str(x_hat.shape()));
  }
  const double n = static_cast<double>(x_feat.dim(0));
  Tensor diff = tape.sub(x_feat, x_hat);
  return tape.scale(tape.sum(tape.mul(diff, diff)), 0.5 / n);
}

Tensor cross_entropy(Tape& tape, const Tensor& p, const std::vector<int>& labels) {
  Tensor picked = tape.select_cols(p, labels);
  return tape.neg(tape.mean(tape.log(tape.clamp_min(picked, kProbFloor))));
}

Tensor entropy(Tape& tape, const Tensor& p) {
  const double n = static_cast<double>(p.dim(0));
  Tensor logp = tape.log(tape.clamp_min(p, kProbFloor));
  return tape.scale(tape.sum(tape.mul(p, logp)), -1.0 / n);
}

SemLoss l_sem(Tape& tape, const Tensor& p_y_sem_src, const std::vector<int>& source_labels,
              const Tensor& p_d_sem, const std::vector<int>& domain_tags, double delta) {
  if (p_y_sem_src.rank() != 2 || p_y_sem_src.dim(0) == 0 || source_labels.empty()) {
    throw ContractError("l_sem needs a non-empty source batch");
  }
  SemLoss out;
  Tensor ce_y = cross_entropy(tape, p_y_sem_src, source_labels);
  Tensor ce_d = cross_entropy(tape, p_d_sem, domain_tags);
  out.ce_label = ce_y.value();
  out.ce_domain = ce_d.value();
  out.value = tape.add(tape.scale(ce_y, delta), ce_d);
  return out;
}

DomLoss l_dom(Tape& tape, const Tensor& p_d_dom, const std::vector<int>& domain_tags,
              const Tensor& p_y_dom, double omega, bool eq6_literal_sign) {
  DomLoss out;
  Tensor ce_d = cross_entropy(tape, p_d_dom, domain_tags);
  Tensor ent = entropy(tape, p_y_dom);
  out.ce_domain = ce_d.value();
  out.entropy_value = ent.value();
  const double sign = eq6_literal_sign ? -1.0 : 1.0;
  out.value = tape.add(ce_d, tape.scale(ent, sign * omega));
  return out;
}

TotalLoss total_loss(Tape& tape, const Tensor& kl_y, const Tensor& kl_d,
                     const Tensor& recon, const SemLoss& sem, const DomLoss& dom,
                     double beta, double gamma) {
  TotalLoss out;
  out.parts.kl_y = kl_y.value();
  out.parts.kl_d = kl_d.value();
  out.parts.recon = recon.value();
  out.parts.elbo_neg = out.parts.kl_y + out.parts.kl_d + out.parts.recon;
  out.parts.l_y = sem.ce_label;
  out.parts.l_d_sem = sem.ce_domain;
  out.parts.l_d_dom = dom.ce_domain;
  out.parts.l_entropy = dom.entropy_value;
  out.parts.l_sem = sem.value.value();
  out.parts.l_dom = dom.value.value();

  const std::pair<const char*, double> components[] = {
      {"kl_y", out.parts.kl_y},     {"kl_d", out.parts.kl_d},
      {"recon", out.parts.recon},   {"l_sem", out.parts.l_sem},
      {"l_dom", out.parts.l_dom},
  };
  for (const auto& [name, v] : components) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("loss component is not finite: ") + name);
    }
  }

  Tensor elbo_neg = tape.add(tape.add(kl_y, kl_d), recon);
  out.value = tape.add(elbo_neg,
                       tape.add(tape.scale(sem.value, beta), tape.scale(dom.value, gamma)));
  out.parts.total = out.value.value();
  return out;
}

}  // namespace dsr
