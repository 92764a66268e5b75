// SPDX-License-Identifier: Apache-2.0

#include "dsr/cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsr/errors.h"
#include "dsr/eval.h"

namespace dsr {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("DSR_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "error") return LogLevel::kError;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

void log_error(const std::string& msg) { std::cerr << "[error] " << msg << "\n"; }

template <typename T>
T get_field(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

GenSpec generator_from_json(const json& j) {
  const double gap = get_field<double>(j, "domain_gap", 4.0);
  GenSpec spec = GenSpec::defaults(gap);
  spec.classes = get_field<int>(j, "classes", spec.classes);
  spec.k_y = get_field<int>(j, "k_y", spec.k_y);
  spec.k_d = get_field<int>(j, "k_d", spec.k_d);
  spec.sigma = get_field<double>(j, "sigma", spec.sigma);
  spec.mixing_seed = get_field<std::uint64_t>(j, "mixing_seed", spec.mixing_seed);
  spec.n_source = get_field<int>(j, "n_source", spec.n_source);
  spec.n_target = get_field<int>(j, "n_target", spec.n_target);
  spec.dim = get_field<int>(j, "dim", spec.dim);
  if (j.contains("class_means")) {
    spec.class_means = get_field<std::vector<std::vector<double>>>(j, "class_means", {});
  }
  if (j.contains("domain_means")) {
    spec.domain_means = get_field<std::vector<std::vector<double>>>(j, "domain_means", {});
  }
  return spec;
}

ojson generator_to_json(const GenSpec& s) {
  ojson j;
  j["classes"] = s.classes;
  j["k_y"] = s.k_y;
  j["k_d"] = s.k_d;
  j["class_means"] = s.class_means;
  j["domain_means"] = s.domain_means;
  j["sigma"] = s.sigma;
  j["mixing_seed"] = s.mixing_seed;
  j["n_source"] = s.n_source;
  j["n_target"] = s.n_target;
  j["dim"] = s.dim;
  return j;
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  throw ConfigError("config field 'optimizer': unknown value '" + name + "'");
}

}  // namespace

void ExperimentConfig::validate_data_source() const {
  const bool has_gen = generator.has_value();
  const bool has_files = !source_csv.empty() || !target_csv.empty();
  if (has_gen && has_files) {
    throw ConfigError("config declares both a generator spec and csv paths; pick one");
  }
  if (!has_gen && !has_files) {
    throw ConfigError("config needs a data source: a generator spec or csv paths");
  }
  if (has_files && (source_csv.empty() || target_csv.empty())) {
    throw ConfigError("file-based runs need both source_csv and target_csv");
  }
}

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  TrainConfig& t = cfg.train;
  t.seed = get_field<std::uint64_t>(j, "seed", t.seed);
  t.mode = parse_train_mode(get_field<std::string>(j, "mode", "dsr"));
  t.epochs = get_field<int>(j, "epochs", t.epochs);
  t.batch_size = get_field<int>(j, "batch_size", t.batch_size);
  t.learning_rate = get_field<double>(j, "learning_rate", t.learning_rate);
  t.optimizer = parse_optimizer(get_field<std::string>(j, "optimizer", "adam"));
  t.delta = get_field<double>(j, "delta", t.delta);
  t.omega = get_field<double>(j, "omega", t.omega);
  t.beta = get_field<double>(j, "beta", t.beta);
  t.gamma = get_field<double>(j, "gamma", t.gamma);
  t.lambda_max = get_field<double>(j, "lambda_max", t.lambda_max);
  t.ramp = get_field<double>(j, "ramp", t.ramp);
  t.lambda_sem_max = get_field<double>(j, "lambda_sem_max", t.lambda_sem_max);
  t.lambda_dom_max = get_field<double>(j, "lambda_dom_max", t.lambda_dom_max);
  t.k_y = get_field<int>(j, "k_y", t.k_y);
  t.k_d = get_field<int>(j, "k_d", t.k_d);
  t.hidden = get_field<int>(j, "hidden", t.hidden);
  t.feature_dim = get_field<int>(j, "feature_dim", t.feature_dim);
  t.eq6_literal_sign = get_field<bool>(j, "eq6_literal_sign", t.eq6_literal_sign);
  t.freeze_g = get_field<bool>(j, "freeze_g", t.freeze_g);
  t.checkpoint_every = get_field<int>(j, "checkpoint_every", t.checkpoint_every);

  if (j.contains("generator") && !j.at("generator").is_null()) {
    cfg.generator = generator_from_json(j.at("generator"));
  }
  cfg.source_csv = get_field<std::string>(j, "source_csv", "");
  cfg.target_csv = get_field<std::string>(j, "target_csv", "");
  cfg.oracle_csv = get_field<std::string>(j, "oracle_csv", "");
  cfg.checkpoint = get_field<std::string>(j, "checkpoint", "");
  cfg.out_dir = get_field<std::string>(j, "out", "");
  if (j.contains("evaluations")) {
    cfg.evaluations = get_field<std::vector<std::string>>(j, "evaluations", cfg.evaluations);
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  ojson j;
  j["seed"] = t.seed;
  j["mode"] = train_mode_name(t.mode);
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["optimizer"] = t.optimizer == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
  j["delta"] = t.delta;
  j["omega"] = t.omega;
  j["beta"] = t.beta;
  j["gamma"] = t.gamma;
  j["lambda_max"] = t.lambda_max;
  j["ramp"] = t.ramp;
  j["lambda_sem_max"] = t.lambda_sem_max;
  j["lambda_dom_max"] = t.lambda_dom_max;
  j["k_y"] = t.k_y;
  j["k_d"] = t.k_d;
  j["hidden"] = t.hidden;
  j["feature_dim"] = t.feature_dim;
  j["eq6_literal_sign"] = t.eq6_literal_sign;
  j["freeze_g"] = t.freeze_g;
  j["checkpoint_every"] = t.checkpoint_every;
  if (cfg.generator.has_value()) {
    j["generator"] = generator_to_json(*cfg.generator);
  } else {
    j["generator"] = nullptr;
  }
  j["source_csv"] = cfg.source_csv;
  j["target_csv"] = cfg.target_csv;
  j["oracle_csv"] = cfg.oracle_csv;
  j["checkpoint"] = cfg.checkpoint;
  j["out"] = cfg.out_dir;
  j["evaluations"] = cfg.evaluations;
  return j.dump(2);
}

namespace {

void require_out_dir(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("an output directory is required (--out)");
  fs::create_directories(cfg.out_dir);
}

void write_resolved_config(const ExperimentConfig& cfg) {
  const std::string path = cfg.out_dir + "/resolved_config.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  os << config_to_json(cfg) << "\n";
}

Dataset load_dataset(const ExperimentConfig& cfg, bool keep_target_labels) {
  cfg.validate_data_source();
  Dataset ds;
  if (cfg.generator.has_value()) {
    ds = generate(*cfg.generator, splitmix64(cfg.train.seed ^ hash_tag("data")));
  } else {
    ds = load_features(cfg.source_csv, cfg.target_csv);
    if (keep_target_labels && !ds.has_target_labels() && !cfg.oracle_csv.empty()) {
      ds.target_y = load_target_labels_from_latents(cfg.oracle_csv, ds.n_target());
    }
  }
  if (!keep_target_labels) {
    ds.target_y.clear();
  }
  return ds;
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg) {
  if (!cfg.generator.has_value()) {
    throw ConfigError("generate needs a generator spec (config field 'generator')");
  }
  require_out_dir(cfg);
  const std::string src = cfg.out_dir + "/source.csv";
  const std::string tgt = cfg.out_dir + "/target.csv";
  const std::string lat = cfg.out_dir + "/latents.csv";
  if (!cfg.force) {
    for (const auto& p : {src, tgt, lat}) {
      if (fs::exists(p)) {
        throw ConfigError(p + " already exists; pass --force to overwrite");
      }
    }
  }
  Dataset ds = generate(*cfg.generator, splitmix64(cfg.train.seed ^ hash_tag("data")));
  save_source_csv(src, ds.source_x, ds.source_y);
  save_target_csv(tgt, ds.target_x);
  save_latents_csv(lat, ds);
  write_resolved_config(cfg);
  std::cout << "wrote " << ds.n_source() << " source rows, " << ds.n_target()
            << " target rows, d=" << ds.dim << ", classes=" << ds.classes << " under "
            << cfg.out_dir << "\n";
}

void cmd_train(const ExperimentConfig& cfg) {
  require_out_dir(cfg);
  ExperimentConfig resolved = cfg;
  resolved.train.out_dir = cfg.out_dir;
  write_resolved_config(resolved);
  // Training never sees target labels; they stay in the oracle file.
  Dataset ds = load_dataset(cfg, /*keep_target_labels=*/false);
  log_info("training mode=" + std::string(train_mode_name(cfg.train.mode)) + " on " +
           std::to_string(ds.n_source()) + "+" + std::to_string(ds.n_target()) + " samples");
  TrainResult result = train(resolved.train, ds);
  const auto& last = result.history.back();
  log_info("done: source_acc=" + std::to_string(last.source_accuracy) + ", total=" +
           std::to_string(last.losses.total));
  std::cout << "checkpoint: " << result.final_checkpoint << "\n"
            << "metrics: " << result.metrics_path << "\n";
}

void cmd_ablate(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) {
    throw ConfigError("ablate needs --checkpoint pointing at a converged DSR run");
  }
  require_out_dir(cfg);
  ExperimentConfig resolved = cfg;
  resolved.train.mode = TrainMode::kDsrNoDomainModule;
  resolved.train.out_dir = cfg.out_dir;
  write_resolved_config(resolved);
  Dataset ds = load_dataset(cfg, /*keep_target_labels=*/false);
  TrainResult result = train_ablation(resolved.train, ds, cfg.checkpoint);
  std::cout << "checkpoint: " << result.final_checkpoint << "\n"
            << "metrics: " << result.metrics_path << "\n";
}

void cmd_eval(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  require_out_dir(cfg);
  write_resolved_config(cfg);
  Dataset ds = load_dataset(cfg, /*keep_target_labels=*/true);

  ModelSpec spec;
  spec.in_dim = ds.dim;
  spec.feature_dim = cfg.train.feature_dim;
  spec.hidden = cfg.train.hidden;
  spec.k_y = cfg.train.k_y;
  spec.k_d = cfg.train.k_d;
  spec.classes = ds.classes;
  Rng init_rng = Rng::child(cfg.train.seed, "init");
  DsrModel model = make_dsr_model(spec, init_rng);
  ModelParams params = model.params();
  load_checkpoint_into(cfg.checkpoint, params);

  auto wants = [&](const std::string& name) {
    for (const auto& e : cfg.evaluations) {
      if (e == name) return true;
    }
    return false;
  };

  ojson report;
  report["checkpoint"] = cfg.checkpoint;

  if (wants("target_accuracy")) {
    if (!ds.has_target_labels()) {
      throw DataError("target accuracy needs ground truth; pass a labeled target file or --oracle");
    }
    report["target_accuracy"] = accuracy(predict(model, ds.target_x), ds.target_y);
    report["source_accuracy"] = accuracy(predict(model, ds.source_x), ds.source_y);
  }

  std::ofstream metrics_os(cfg.out_dir + "/metrics.jsonl", std::ios::app);
  if (wants("probes")) {
    auto probes = run_probes(model, ds, splitmix64(cfg.train.seed ^ hash_tag("probes")));
    ojson plist = ojson::array();
    for (const auto& p : probes) {
      ojson pj;
      pj["kind"] = "probe";
      pj["target"] = probe_target_name(p.target);
      pj["accuracy"] = p.accuracy;
      pj["chance"] = p.chance;
      pj["n_eval"] = p.n_eval;
      plist.push_back(pj);
      metrics_os << pj.dump() << "\n";
    }
    report["probes"] = plist;
  }

  if (wants("embedding")) {
    const int n = ds.n_source() + ds.n_target();
    Tensor x({n, ds.dim});
    std::vector<int> labels(static_cast<size_t>(n), -1);
    std::vector<int> domains(static_cast<size_t>(n), 0);
    for (int i = 0; i < ds.n_source(); ++i) {
      for (int j = 0; j < ds.dim; ++j) x.at(i, j) = ds.source_x.at(i, j);
      labels[static_cast<size_t>(i)] = ds.source_y[static_cast<size_t>(i)];
    }
    for (int i = 0; i < ds.n_target(); ++i) {
      const int r = ds.n_source() + i;
      for (int j = 0; j < ds.dim; ++j) x.at(r, j) = ds.target_x.at(i, j);
      if (ds.has_target_labels()) labels[static_cast<size_t>(r)] = ds.target_y[static_cast<size_t>(i)];
      domains[static_cast<size_t>(r)] = 1;
    }
    Tape tape;
    EncodedMeans means = encode_means(tape, model, x);
    const std::string emb = cfg.out_dir + "/embedding.csv";
    export_embedding(means.mu_y, labels, domains, emb);
    report["embedding_csv"] = emb;
  }

  const std::string report_path = cfg.out_dir + "/report.json";
  std::ofstream os(report_path, std::ios::trunc);
  os << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Disentangled semantic representation lab"};
  app.require_subcommand(1);

  std::string config_path, mode_flag, out_flag, source_flag, target_flag, oracle_flag,
      checkpoint_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<double> delta_flag, omega_flag;
  std::optional<int> epochs_flag;
  bool force_flag = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed_flag, "top-level seed");
    sub->add_option("--mode", mode_flag, "dsr | dsr_no_domain_module | source_only | dann_baseline");
    sub->add_option("--delta", delta_flag, "label loss weight");
    sub->add_option("--omega", omega_flag, "entropy term weight");
    sub->add_option("--epochs", epochs_flag, "training epochs");
    sub->add_option("--out", out_flag, "output directory");
    sub->add_flag("--force", force_flag, "overwrite existing files");
    sub->add_option("--source", source_flag, "source feature csv");
    sub->add_option("--target", target_flag, "target feature csv");
    sub->add_option("--oracle", oracle_flag, "oracle latents csv (ground truth)");
    sub->add_option("--checkpoint", checkpoint_flag, "model checkpoint path");
  };

  CLI::App* cmd_gen = app.add_subcommand("generate", "write a synthetic dataset");
  CLI::App* cmd_tr = app.add_subcommand("train", "train a model");
  CLI::App* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* cmd_ab = app.add_subcommand("ablate", "resume a checkpoint without the domain module");
  for (CLI::App* sub : {cmd_gen, cmd_tr, cmd_ev, cmd_ab}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = config_from_json_file(config_path);
    } else if (cmd_gen->parsed() || (source_flag.empty() && target_flag.empty())) {
      cfg.generator = GenSpec::defaults();
    }
    // Flags win over the config file.
    if (seed_flag) cfg.train.seed = *seed_flag;
    if (!mode_flag.empty()) cfg.train.mode = parse_train_mode(mode_flag);
    if (delta_flag) cfg.train.delta = *delta_flag;
    if (omega_flag) cfg.train.omega = *omega_flag;
    if (epochs_flag) cfg.train.epochs = *epochs_flag;
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    if (!source_flag.empty()) {
      cfg.source_csv = source_flag;
      cfg.generator.reset();
    }
    if (!target_flag.empty()) {
      cfg.target_csv = target_flag;
      cfg.generator.reset();
    }
    if (!oracle_flag.empty()) cfg.oracle_csv = oracle_flag;
    if (!checkpoint_flag.empty()) cfg.checkpoint = checkpoint_flag;
    if (force_flag) cfg.force = true;

    if (cmd_gen->parsed()) cmd_generate(cfg);
    if (cmd_tr->parsed()) cmd_train(cfg);
    if (cmd_ev->parsed()) cmd_eval(cfg);
    if (cmd_ab->parsed()) cmd_ablate(cfg);
    return 0;
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const DataError& e) {
    log_error(e.what());
    return 3;
  } catch (const NumericError& e) {
    log_error(e.what());
    return 4;
  } catch (const Error& e) {
    log_error(e.what());
    return 1;
  }
}

}  // namespace dsr
