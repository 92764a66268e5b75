// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dsr/trainer.h"
#include "fd_check.h"

using namespace dsr;
using dsr::test::bitwise_equal;

namespace fs = std::filesystem;

namespace {

GenSpec quick_data(double gap = 4.0, int n = 128) {
  GenSpec s = GenSpec::defaults(gap);
  s.n_source = n;
  s.n_target = n;
  return s;
}

TrainConfig quick_config(TrainMode mode, int epochs = 3) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.batch_size = 32;
  c.hidden = 16;
  c.k_y = 4;
  c.k_d = 4;
  c.feature_dim = 8;
  c.seed = 11;
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("lambda schedule: endpoints and monotonicity") {
  CHECK(lambda_at(0.0, 1.0, 10.0) == 0.0);
  CHECK(std::abs(lambda_at(1.0, 1.0, 10.0) - 0.99991) < 1e-5);
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = lambda_at(i / 100.0, 1.0, 10.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(lambda_at(0.5, 0.0, 10.0) == 0.0);
}

TEST_CASE("config validation names the offence") {
  TrainConfig c = quick_config(TrainMode::kDsr);
  c.batch_size = 33;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = quick_config(TrainMode::kDsr);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_train_mode("nonsense"), ConfigError);
  CHECK(parse_train_mode("dann_baseline") == TrainMode::kDannBaseline);
}

TEST_CASE("training runs in every standalone mode and records metrics") {
  Dataset ds = generate(quick_data(), 21);
  for (TrainMode mode : {TrainMode::kDsr, TrainMode::kSourceOnly, TrainMode::kDannBaseline}) {
    TrainConfig cfg = quick_config(mode);
    TrainResult res = train(cfg, ds);
    CHECK(res.history.size() == 3);
    for (const auto& rec : res.history) {
      CHECK(std::isfinite(rec.losses.total));
      CHECK(rec.source_accuracy >= 0.0);
      CHECK(rec.source_accuracy <= 1.0);
      REQUIRE(rec.target_accuracy.has_value());
      CHECK(*rec.target_accuracy >= 0.0);
      CHECK(*rec.target_accuracy <= 1.0);
    }
  }
}

TEST_CASE("identical seeds give bitwise-identical histories and checkpoints") {
  Dataset ds = generate(quick_data(), 22);
  const auto dir1 = fs::temp_directory_path() / "dsr_det_a";
  const auto dir2 = fs::temp_directory_path() / "dsr_det_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  TrainConfig cfg = quick_config(TrainMode::kDsr, 4);
  cfg.out_dir = dir1.string();
  TrainResult r1 = train(cfg, ds);
  cfg.out_dir = dir2.string();
  TrainResult r2 = train(cfg, ds);

  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(metrics_to_json(r1.history[i]) == metrics_to_json(r2.history[i]));
  }
  CHECK(read_file(r1.metrics_path) == read_file(r2.metrics_path));
  CHECK(read_file(r1.final_checkpoint) == read_file(r2.final_checkpoint));
  CHECK(!read_file(r1.final_checkpoint).empty());

  // metrics lines do not leak wall-clock time
  CHECK(read_file(r1.metrics_path).find("wall") == std::string::npos);

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("with lambda = beta = gamma = 0 the classifiers receive no updates") {
  Dataset ds = generate(quick_data(), 23);
  TrainConfig cfg = quick_config(TrainMode::kDsr, 2);
  cfg.lambda_max = 0.0;
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  cfg.freeze_g = false;  // exercise the trainable-backbone path

  // re-create the init to capture the classifier weights the run starts from
  Rng init_rng = Rng::child(cfg.seed, "init");
  ModelSpec spec;
  spec.in_dim = ds.dim;
  spec.feature_dim = cfg.feature_dim;
  spec.hidden = cfg.hidden;
  spec.k_y = cfg.k_y;
  spec.k_d = cfg.k_d;
  spec.classes = ds.classes;
  DsrModel reference = make_dsr_model(spec, init_rng);

  TrainResult res = train(cfg, ds);
  for (const char* head : {"Cy_sem", "Cd_sem", "Cd_dom", "Cy_dom"}) {
    Tensor* trained = res.model.params().find(std::string(head) + "/0/W");
    Tensor* init = reference.params().find(std::string(head) + "/0/W");
    REQUIRE(trained != nullptr);
    CHECK(bitwise_equal(*trained, *init));
  }
  // the VAE path still trains
  Tensor* g_trained = res.model.params().find("G/0/W");
  Tensor* g_init = reference.params().find("G/0/W");
  CHECK_FALSE(bitwise_equal(*g_trained, *g_init));
}

TEST_CASE("freeze_g pins the backbone") {
  Dataset ds = generate(quick_data(), 29);
  TrainConfig cfg = quick_config(TrainMode::kDsr, 2);
  cfg.freeze_g = true;
  Rng init_rng = Rng::child(cfg.seed, "init");
  ModelSpec spec;
  spec.in_dim = ds.dim;
  spec.feature_dim = cfg.feature_dim;
  spec.hidden = cfg.hidden;
  spec.k_y = cfg.k_y;
  spec.k_d = cfg.k_d;
  spec.classes = ds.classes;
  DsrModel reference = make_dsr_model(spec, init_rng);
  TrainResult res = train(cfg, ds);
  CHECK(bitwise_equal(*res.model.params().find("G/0/W"), *reference.params().find("G/0/W")));
  CHECK_FALSE(bitwise_equal(*res.model.params().find("Hy/0/W"),
                            *reference.params().find("Hy/0/W")));
}

TEST_CASE("ablation resumes a checkpoint and keeps the domain heads frozen") {
  Dataset ds = generate(quick_data(), 24);
  const auto dir = fs::temp_directory_path() / "dsr_ablate_test";
  fs::remove_all(dir);

  TrainConfig cfg = quick_config(TrainMode::kDsr, 3);
  cfg.out_dir = dir.string();
  TrainResult full = train(cfg, ds);

  TrainConfig ab = quick_config(TrainMode::kDsrNoDomainModule, 2);
  TrainResult resumed = train_ablation(ab, ds, full.final_checkpoint);

  // gamma forced to zero: the domain-side heads get exactly zero gradients,
  // so they stay at their checkpointed values
  for (const char* head : {"Cd_dom", "Cy_dom"}) {
    Tensor* before = full.model.params().find(std::string(head) + "/0/W");
    Tensor* after = resumed.model.params().find(std::string(head) + "/0/W");
    CHECK(bitwise_equal(*before, *after));
  }
  // while the semantic path continues to move
  CHECK_FALSE(bitwise_equal(*full.model.params().find("Hy/0/W"),
                            *resumed.model.params().find("Hy/0/W")));

  CHECK_THROWS_AS(train_ablation(ab, ds, (dir / "missing.dsr").string()), ConfigError);
  TrainConfig wrong = quick_config(TrainMode::kDsr, 2);
  CHECK_THROWS_AS(train_ablation(wrong, ds, full.final_checkpoint), ConfigError);
  CHECK_THROWS_AS(train(ab, ds), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("divergence aborts with a checkpoint reference") {
  Dataset ds = generate(quick_data(), 25);
  TrainConfig cfg = quick_config(TrainMode::kDsr, 4);
  cfg.optimizer = OptimizerKind::kSgdMomentum;
  cfg.learning_rate = 1e5;  // guaranteed blow-up
  CHECK_THROWS_WITH_AS(train(cfg, ds), doctest::Contains("checkpoint"), NumericError);
}

TEST_CASE("source-only training learns the source task") {
  Dataset ds = generate(quick_data(4.0, 256), 26);
  TrainConfig cfg = quick_config(TrainMode::kSourceOnly, 30);
  TrainResult res = train(cfg, ds);
  CHECK(res.history.back().source_accuracy > 0.9);
}

TEST_CASE("dsr training without target labels reports no target accuracy") {
  Dataset ds = generate(quick_data(), 27);
  ds.target_y.clear();
  TrainConfig cfg = quick_config(TrainMode::kDsr, 2);
  TrainResult res = train(cfg, ds);
  CHECK_FALSE(res.history.back().target_accuracy.has_value());
  CHECK(metrics_to_json(res.history.back()).find("\"target_acc\":null") != std::string::npos);
}
