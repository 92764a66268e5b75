// SPDX-License-Identifier: Apache-2.0

#include "dsr/trainer.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dsr/errors.h"
#include "dsr/eval.h"

namespace dsr {

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kDsr: return "dsr";
    case TrainMode::kDsrNoDomainModule: return "dsr_no_domain_module";
    case TrainMode::kSourceOnly: return "source_only";
    case TrainMode::kDannBaseline: return "dann_baseline";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "dsr") return TrainMode::kDsr;
  if (name == "dsr_no_domain_module") return TrainMode::kDsrNoDomainModule;
  if (name == "source_only") return TrainMode::kSourceOnly;
  if (name == "dann_baseline") return TrainMode::kDannBaseline;
  throw ConfigError("unknown mode: '" + name +
                    "' (expected dsr | dsr_no_domain_module | source_only | dann_baseline)");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (delta < 0.0) throw ConfigError("delta must be non-negative");
  if (omega < 0.0) throw ConfigError("omega must be non-negative");
  if (beta < 0.0 || gamma < 0.0) throw ConfigError("beta and gamma must be non-negative");
  if (lambda_max < 0.0) throw ConfigError("lambda_max must be non-negative");
  if (!(ramp > 0.0)) throw ConfigError("ramp must be positive");
  if (k_y <= 0 || k_d <= 0 || hidden <= 0 || feature_dim <= 0) {
    throw ConfigError("model dims must be positive");
  }
  if (checkpoint_every <= 0) throw ConfigError("checkpoint_every must be positive");
}

double lambda_at(double progress, double lambda_max, double ramp) {
  return 2.0 * lambda_max / (1.0 + std::exp(-ramp * progress)) - lambda_max;
}

std::string metrics_to_json(const MetricsRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["kl_y"] = rec.losses.kl_y;
  j["kl_d"] = rec.losses.kl_d;
  j["recon"] = rec.losses.recon;
  j["elbo_neg"] = rec.losses.elbo_neg;
  j["l_y"] = rec.losses.l_y;
  j["l_d_sem"] = rec.losses.l_d_sem;
  j["l_d_dom"] = rec.losses.l_d_dom;
  j["l_entropy"] = rec.losses.l_entropy;
  j["l_sem"] = rec.losses.l_sem;
  j["l_dom"] = rec.losses.l_dom;
  j["total"] = rec.losses.total;
  j["source_acc"] = rec.source_accuracy;
  if (rec.target_accuracy.has_value()) {
    j["target_acc"] = *rec.target_accuracy;
  } else {
    j["target_acc"] = nullptr;
  }
  j["lambda"] = rec.lambda;
  return j.dump();
}

namespace {

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
  acc.kl_y += b.kl_y;
  acc.kl_d += b.kl_d;
  acc.recon += b.recon;
  acc.elbo_neg += b.elbo_neg;
  acc.l_y += b.l_y;
  acc.l_d_sem += b.l_d_sem;
  acc.l_d_dom += b.l_d_dom;
  acc.l_entropy += b.l_entropy;
  acc.l_sem += b.l_sem;
  acc.l_dom += b.l_dom;
  acc.total += b.total;
}

void scale_breakdown(LossBreakdown& acc, double s) {
  acc.kl_y *= s;
  acc.kl_d *= s;
  acc.recon *= s;
  acc.elbo_neg *= s;
  acc.l_y *= s;
  acc.l_d_sem *= s;
  acc.l_d_dom *= s;
  acc.l_entropy *= s;
  acc.l_sem *= s;
  acc.l_dom *= s;
  acc.total *= s;
}

// Loss for one mixed batch in the given mode. Everything ends on the tape.
LossBreakdown batch_loss(Tape& tape, const DsrModel& model, const Batch& batch,
                         const TrainConfig& cfg, double lam_sem, double lam_dom,
                         double gamma_eff, Rng& eps_rng, Tensor* out_total) {
  if (cfg.mode == TrainMode::kSourceOnly) {
    Tensor x_src = tape.slice_rows(batch.x, 0, batch.n_src);
    EncodedMeans means = encode_means(tape, model, x_src);
    Tensor probs = model.c_y_sem.forward(tape, means.mu_y);
    Tensor ce = cross_entropy(tape, probs, batch.source_labels);
    LossBreakdown parts;
    parts.l_y = ce.value();
    parts.l_sem = parts.l_y;
    parts.total = parts.l_y;
    if (!std::isfinite(parts.total)) throw NumericError("loss component is not finite: l_y");
    *out_total = ce;
    return parts;
  }

  if (cfg.mode == TrainMode::kDannBaseline) {
    EncodedMeans means = encode_means(tape, model, batch.x);
    Tensor p_y = model.c_y_sem.forward(tape, tape.slice_rows(means.mu_y, 0, batch.n_src));
    Tensor p_d = model.c_d_sem.forward(tape, tape.grad_reverse(means.mu_y, lam_sem));
    SemLoss sem = l_sem(tape, p_y, batch.source_labels, p_d, batch.domain_tags, cfg.delta);
    LossBreakdown parts;
    parts.l_y = sem.ce_label;
    parts.l_d_sem = sem.ce_domain;
    parts.l_sem = sem.value.value();
    parts.total = parts.l_sem;
    if (!std::isfinite(parts.total)) throw NumericError("loss component is not finite: l_sem");
    *out_total = sem.value;
    return parts;
  }

  // Full DSR graph (the ablation runs it with gamma_eff == 0).
  LatentSample latents = encode(tape, model, batch.x, eps_rng);
  Tensor x_hat = decode(tape, model, latents.z_y, latents.z_d);
  HeadOutputs h = heads(tape, model, latents, lam_sem, lam_dom);

  Tensor kl_y = kl_std_normal(tape, latents.mu_y, latents.logvar_y);
  Tensor kl_d = kl_std_normal(tape, latents.mu_d, latents.logvar_d);
  Tensor recon = recon_nll(tape, latents.features, x_hat);

  Tensor p_y_src = tape.slice_rows(h.p_y_sem, 0, batch.n_src);
  SemLoss sem = l_sem(tape, p_y_src, batch.source_labels, h.p_d_sem, batch.domain_tags,
                      cfg.delta);
  DomLoss dom = l_dom(tape, h.p_d_dom, batch.domain_tags, h.p_y_dom, cfg.omega,
                      cfg.eq6_literal_sign);
  TotalLoss total = total_loss(tape, kl_y, kl_d, recon, sem, dom, cfg.beta, gamma_eff);
  *out_total = total.value;
  return total.parts;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.dsr", epoch);
  return buf;
}

TrainResult train_impl(const TrainConfig& cfg, const Dataset& data,
                       const std::string* init_checkpoint) {
  cfg.validate();
  data.validate();

  Rng init_rng = Rng::child(cfg.seed, "init");
  Rng eps_rng = Rng::child(cfg.seed, "eps");
  Rng batch_rng = Rng::child(cfg.seed, "batches");

  ModelSpec spec;
  spec.in_dim = data.dim;
  spec.feature_dim = cfg.feature_dim;
  spec.hidden = cfg.hidden;
  spec.k_y = cfg.k_y;
  spec.k_d = cfg.k_d;
  spec.classes = data.classes;

  TrainResult result{make_dsr_model(spec, init_rng), {}, "", ""};
  DsrModel& model = result.model;
  ModelParams all_params = model.params();
  if (init_checkpoint != nullptr) {
    load_checkpoint_into(*init_checkpoint, all_params);
  }

  ModelParams trainable;
  for (const auto& [name, t] : all_params) {
    if (cfg.freeze_g && name.rfind("G/", 0) == 0) continue;
    trainable.add(name, t);
  }

  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  TrainView view = data.train_view();

  const bool writing = !cfg.out_dir.empty();
  std::ofstream metrics_os;
  if (writing) {
    std::filesystem::create_directories(cfg.out_dir);
    result.metrics_path = cfg.out_dir + "/metrics.jsonl";
    metrics_os.open(result.metrics_path, std::ios::trunc);
    if (!metrics_os) throw DataError("cannot open metrics file: " + result.metrics_path);
  }

  const double gamma_eff = cfg.mode == TrainMode::kDsrNoDomainModule ? 0.0 : cfg.gamma;
  const int batches_per_epoch =
      std::min(data.n_source(), data.n_target()) / (cfg.batch_size / 2);
  if (batches_per_epoch == 0) {
    throw ConfigError("batch_size too large for the dataset");
  }
  const long total_steps = static_cast<long>(batches_per_epoch) * cfg.epochs;
  std::string last_checkpoint = "none";
  long step = 0;

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(view, cfg.batch_size, batch_rng);
    LossBreakdown epoch_losses;
    double lam_shared = 0.0;
    for (const Batch& batch : batches) {
      const double progress =
          total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 1.0;
      const double lam_sem = lambda_at(progress, cfg.effective_lambda_sem_max(), cfg.ramp);
      const double lam_dom = lambda_at(progress, cfg.effective_lambda_dom_max(), cfg.ramp);
      lam_shared = lambda_at(progress, cfg.lambda_max, cfg.ramp);

      Tape tape;
      for (const auto& [name, t] : all_params) {
        (void)name;
        tape.watch(*t);
      }
      Tensor total;
      LossBreakdown parts;
      try {
        parts = batch_loss(tape, model, batch, cfg, lam_sem, lam_dom, gamma_eff, eps_rng,
                           &total);
        if (parts.total > 1e6) {
          throw NumericError("loss diverged past 1e6 (value " + std::to_string(parts.total) + ")");
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last_checkpoint);
      }
      tape.backward(total);
      opt.step(trainable, tape);
      add_breakdown(epoch_losses, parts);
      ++step;
    }
    scale_breakdown(epoch_losses, 1.0 / static_cast<double>(batches.size()));

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.losses = epoch_losses;
    rec.lambda = lam_shared;
    rec.source_accuracy = accuracy(predict(model, data.source_x), data.source_y);
    if (data.has_target_labels()) {
      rec.target_accuracy = accuracy(predict(model, data.target_x), data.target_y);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (writing) {
      metrics_os << metrics_to_json(rec) << "\n";
      metrics_os.flush();
    }
    result.history.push_back(std::move(rec));

    if (writing && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
      const std::string path = cfg.out_dir + "/" + checkpoint_name(epoch + 1);
      save_checkpoint(path, all_params);
      last_checkpoint = path;
    }
  }

  if (writing) {
    result.final_checkpoint = cfg.out_dir + "/checkpoint.dsr";
    save_checkpoint(result.final_checkpoint, all_params);
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data) {
  if (config.mode == TrainMode::kDsrNoDomainModule) {
    throw ConfigError("mode dsr_no_domain_module resumes a checkpoint; use train_ablation");
  }
  return train_impl(config, data, nullptr);
}

TrainResult train_ablation(const TrainConfig& config, const Dataset& data,
                           const std::string& checkpoint_path) {
  if (config.mode != TrainMode::kDsrNoDomainModule) {
    throw ConfigError("train_ablation requires mode dsr_no_domain_module");
  }
  if (checkpoint_path.empty() || !std::filesystem::exists(checkpoint_path)) {
    throw ConfigError("ablation needs an existing DSR checkpoint, got '" + checkpoint_path + "'");
  }
  return train_impl(config, data, &checkpoint_path);
}

}  // namespace dsr
