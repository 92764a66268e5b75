// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsr/losses.h"
#include "dsr/model.h"
#include "fd_check.h"

using namespace dsr;
using dsr::test::bitwise_equal;
using dsr::test::fd_gradient;
using dsr::test::max_rel_err;
using dsr::test::random_tensor;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.in_dim = 5;
  s.feature_dim = 6;
  s.hidden = 8;
  s.k_y = 3;
  s.k_d = 3;
  s.classes = 2;
  return s;
}

void zero_mlp(Mlp& mlp) {
  for (auto& layer : mlp.layers) {
    for (std::int64_t i = 0; i < layer.weight.size(); ++i) layer.weight.at(i) = 0.0;
    for (std::int64_t i = 0; i < layer.bias.size(); ++i) layer.bias.at(i) = 0.0;
  }
}

}  // namespace

TEST_CASE("parameter groups are disjoint and fully named") {
  Rng rng(1);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  ModelParams params = model.params();
  // two layers for each of G/Hy/Hd/dec, one for each head; W and b each
  CHECK(params.size() == 4 * 4 + 4 * 2);
  for (const char* group : {"G", "Hy", "Hd", "dec", "Cy_sem", "Cd_sem", "Cd_dom", "Cy_dom"}) {
    CHECK(params.find(std::string(group) + "/0/W") != nullptr);
  }
}

TEST_CASE("reparameterization: eps = 0 gives z == mu exactly") {
  Rng rng(2);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({4, 5}, rng);
  Tape tape;
  LatentSample s = encode_with_eps(tape, model, x, Tensor::zeros({4, 3}),
                                   Tensor::zeros({4, 3}));
  CHECK(bitwise_equal(s.z_y, s.mu_y));
  CHECK(bitwise_equal(s.z_d, s.mu_d));
}

TEST_CASE("latent sample identity z = mu + exp(logvar/2) * eps holds elementwise") {
  Rng rng(3);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({3, 5}, rng);
  Tape tape;
  Rng eps_rng(17);
  LatentSample s = encode(tape, model, x, eps_rng);
  for (std::int64_t i = 0; i < s.z_y.size(); ++i) {
    const double expect = s.mu_y.at(i) + std::exp(0.5 * s.logvar_y.at(i)) * s.eps_y.at(i);
    CHECK(s.z_y.at(i) == expect);
  }
}

TEST_CASE("sampled latents have standard-normal moments when mu=0, logvar=0") {
  Rng rng(4);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  zero_mlp(model.h_y);  // forces mu = 0, logvar = 0
  Tensor x = random_tensor({500, 5}, rng);
  Rng eps_rng(99);
  double sum = 0.0, sum_sq = 0.0;
  std::int64_t count = 0;
  for (int rep = 0; rep < 70; ++rep) {
    Tape tape;
    LatentSample s = encode(tape, model, x, eps_rng);
    for (std::int64_t i = 0; i < s.z_y.size(); ++i) {
      sum += s.z_y.at(i);
      sum_sq += s.z_y.at(i) * s.z_y.at(i);
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sum_sq / static_cast<double>(count) - mean * mean;
  CHECK(count >= 100000);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("encoder gradients flow through the reparameterized sample") {
  Rng rng(5);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor eps_y = random_tensor({4, 3}, rng, -1.0, 1.0);
  Tensor eps_d = random_tensor({4, 3}, rng, -1.0, 1.0);

  auto loss = [&]() {
    Tape t;
    LatentSample s = encode_with_eps(t, model, x, eps_y, eps_d);
    return t.sum(s.z_y).value();
  };

  for (auto* layer : {&model.h_y.layers[0], &model.h_y.layers[1], &model.g.layers[0]}) {
    Tape tape;
    for (const auto& [name, t] : model.params()) {
      (void)name;
      tape.watch(*t);
    }
    LatentSample s = encode_with_eps(tape, model, x, eps_y, eps_d);
    tape.backward(tape.sum(s.z_y));
    CHECK(max_rel_err(tape.grad(layer->weight), fd_gradient(layer->weight, loss)) < 1e-4);
  }
}

TEST_CASE("decode: zero weights, shape contract, width mismatch") {
  Rng rng(6);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  zero_mlp(model.decoder);
  Tape tape;
  Tensor z_y = random_tensor({7, 3}, rng);
  Tensor z_d = random_tensor({7, 3}, rng);
  Tensor x_hat = decode(tape, model, z_y, z_d);
  CHECK(x_hat.shape() == std::vector<int>{7, 6});
  for (std::int64_t i = 0; i < x_hat.size(); ++i) CHECK(x_hat.at(i) == 0.0);

  CHECK_THROWS_AS(decode(tape, model, z_y, random_tensor({7, 2}, rng)), DimensionError);
}

TEST_CASE("heads emit probability rows") {
  Rng rng(7);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({6, 5}, rng);
  Tape tape;
  Rng eps_rng(1);
  LatentSample s = encode(tape, model, x, eps_rng);
  HeadOutputs h = heads(tape, model, s, 0.5, 0.5);
  for (const Tensor* p : {&h.p_y_sem, &h.p_d_sem, &h.p_d_dom, &h.p_y_dom}) {
    for (int r = 0; r < p->dim(0); ++r) {
      double sum = 0.0;
      for (int c = 0; c < p->dim(1); ++c) sum += p->at(r, c);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("lambda_sem = 0 blocks the domain head's influence on the encoder") {
  Rng rng(8);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({6, 5}, rng);
  Tensor eps = Tensor::zeros({6, 3});
  Tape tape;
  for (const auto& [name, t] : model.params()) {
    (void)name;
    tape.watch(*t);
  }
  LatentSample s = encode_with_eps(tape, model, x, eps, eps);
  HeadOutputs h = heads(tape, model, s, 0.0, 0.0);
  tape.backward(cross_entropy(tape, h.p_d_sem, {0, 0, 0, 1, 1, 1}));
  for (auto& layer : model.h_y.layers) {
    Tensor g = tape.grad(layer.weight);
    for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g.at(i) == 0.0);
  }
  // the head itself still learns
  double head_norm = 0.0;
  Tensor gh = tape.grad(model.c_d_sem.layers[0].weight);
  for (std::int64_t i = 0; i < gh.size(); ++i) head_norm += std::abs(gh.at(i));
  CHECK(head_norm > 0.0);
}

TEST_CASE("GRL equivalence on the semantic domain head across the lambda grid") {
  Rng rng(9);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({6, 5}, rng);
  Tensor eps = Tensor::zeros({6, 3});
  const std::vector<int> tags = {0, 0, 0, 1, 1, 1};

  // identity-graph reference: the same loss with the GRL left out
  Tensor ref;
  {
    Tape tape;
    for (const auto& [name, t] : model.params()) {
      (void)name;
      tape.watch(*t);
    }
    LatentSample s = encode_with_eps(tape, model, x, eps, eps);
    Tensor p = model.c_d_sem.forward(tape, s.z_y);
    tape.backward(cross_entropy(tape, p, tags));
    ref = tape.grad(model.h_y.layers[0].weight);
  }

  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    Tape tape;
    for (const auto& [name, t] : model.params()) {
      (void)name;
      tape.watch(*t);
    }
    LatentSample s = encode_with_eps(tape, model, x, eps, eps);
    HeadOutputs h = heads(tape, model, s, lambda, 0.0);
    tape.backward(cross_entropy(tape, h.p_d_sem, tags));
    Tensor g = tape.grad(model.h_y.layers[0].weight);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      CHECK(g.at(i) == -lambda * ref.at(i));
    }
  }
}

TEST_CASE("parameter-group isolation: a p_d_dom loss leaves the semantic path alone") {
  Rng rng(10);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({6, 5}, rng);
  Tape tape;
  for (const auto& [name, t] : model.params()) {
    (void)name;
    tape.watch(*t);
  }
  Rng eps_rng(2);
  LatentSample s = encode(tape, model, x, eps_rng);
  HeadOutputs h = heads(tape, model, s, 1.0, 1.0);
  tape.backward(cross_entropy(tape, h.p_d_dom, {0, 0, 0, 1, 1, 1}));

  auto all_zero = [&](Mlp& mlp) {
    for (auto& layer : mlp.layers) {
      Tensor gw = tape.grad(layer.weight);
      for (std::int64_t i = 0; i < gw.size(); ++i) {
        if (gw.at(i) != 0.0) return false;
      }
      Tensor gb = tape.grad(layer.bias);
      for (std::int64_t i = 0; i < gb.size(); ++i) {
        if (gb.at(i) != 0.0) return false;
      }
    }
    return true;
  };
  CHECK(all_zero(model.h_y));
  CHECK(all_zero(model.c_y_sem));
  CHECK(all_zero(model.c_d_sem));
  CHECK(all_zero(model.decoder));
  CHECK(all_zero(model.c_y_dom));
  CHECK_FALSE(all_zero(model.h_d));
  CHECK_FALSE(all_zero(model.c_d_dom));
}

TEST_CASE("encode-decode is deterministic given seed, input, and parameters") {
  Rng rng(11);
  DsrModel model = make_dsr_model(tiny_spec(), rng);
  Tensor x = random_tensor({5, 5}, rng);
  auto run = [&]() {
    Tape tape;
    Rng eps_rng(4242);
    LatentSample s = encode(tape, model, x, eps_rng);
    return decode(tape, model, s.z_y, s.z_d);
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("training on the ELBO alone reduces reconstruction error") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    DsrModel model = make_dsr_model(tiny_spec(), rng);
    Tensor x = random_tensor({20, 5}, rng);
    Rng eps_rng(seed + 100);
    ModelParams params = model.params();
    Optimizer opt(OptimizerKind::kAdam, 1e-3);

    auto recon_value = [&]() {
      Tape tape;
      LatentSample s = encode_with_eps(tape, model, x, Tensor::zeros({20, 3}),
                                       Tensor::zeros({20, 3}));
      Tensor x_hat = decode(tape, model, s.z_y, s.z_d);
      return recon_nll(tape, s.features, x_hat).value();
    };

    const double before = recon_value();
    for (int step = 0; step < 200; ++step) {
      Tape tape;
      for (const auto& [name, t] : params) {
        (void)name;
        tape.watch(*t);
      }
      LatentSample s = encode(tape, model, x, eps_rng);
      Tensor x_hat = decode(tape, model, s.z_y, s.z_d);
      Tensor loss = tape.add(tape.add(kl_std_normal(tape, s.mu_y, s.logvar_y),
                                      kl_std_normal(tape, s.mu_d, s.logvar_d)),
                             recon_nll(tape, s.features, x_hat));
      tape.backward(loss);
      opt.step(params, tape);
    }
    const double after = recon_value();
    CHECK(after < before);
  }
}
