// SPDX-License-Identifier: Apache-2.0

#include "dsr/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "dsr/errors.h"
#include "dsr/losses.h"
#include "dsr/nn.h"

namespace dsr {

std::vector<int> predict(const DsrModel& model, const Tensor& x) {
  Tape tape;
  EncodedMeans means = encode_means(tape, model, x);
  Tensor probs = model.c_y_sem.forward(tape, means.mu_y);
  std::vector<int> labels(static_cast<size_t>(probs.dim(0)));
  for (int r = 0; r < probs.dim(0); ++r) {
    int best = 0;
    for (int c = 1; c < probs.dim(1); ++c) {
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    }
    labels[static_cast<size_t>(r)] = best;
  }
  return labels;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw ContractError("accuracy needs equally sized, non-empty label vectors");
  }
  int hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

const char* probe_target_name(ProbeTarget t) {
  switch (t) {
    case ProbeTarget::kDomainFromZy: return "domain_from_zy";
    case ProbeTarget::kLabelFromZd: return "label_from_zd";
    case ProbeTarget::kLabelFromZy: return "label_from_zy";
    case ProbeTarget::kDomainFromZd: return "domain_from_zd";
  }
  return "?";
}

namespace {

constexpr int kProbeSteps = 200;
constexpr double kProbeLr = 0.05;

// Column-wise standardization with train-split statistics.
struct Standardizer {
  std::vector<double> mean, stddev;

  static Standardizer fit(const Tensor& x, const std::vector<int>& rows) {
    const int d = x.dim(1);
    Standardizer s;
    s.mean.assign(static_cast<size_t>(d), 0.0);
    s.stddev.assign(static_cast<size_t>(d), 0.0);
    for (int r : rows) {
      for (int c = 0; c < d; ++c) s.mean[static_cast<size_t>(c)] += x.at(r, c);
    }
    for (int c = 0; c < d; ++c) s.mean[static_cast<size_t>(c)] /= static_cast<double>(rows.size());
    for (int r : rows) {
      for (int c = 0; c < d; ++c) {
        const double diff = x.at(r, c) - s.mean[static_cast<size_t>(c)];
        s.stddev[static_cast<size_t>(c)] += diff * diff;
      }
    }
    for (int c = 0; c < d; ++c) {
      s.stddev[static_cast<size_t>(c)] =
          std::sqrt(s.stddev[static_cast<size_t>(c)] / static_cast<double>(rows.size()));
      if (s.stddev[static_cast<size_t>(c)] < 1e-12) s.stddev[static_cast<size_t>(c)] = 1.0;
    }
    return s;
  }

  Tensor apply(const Tensor& x, const std::vector<int>& rows) const {
    const int d = x.dim(1);
    Tensor out({static_cast<int>(rows.size()), d});
    for (size_t i = 0; i < rows.size(); ++i) {
      for (int c = 0; c < d; ++c) {
        out.at(static_cast<int>(i), c) =
            (x.at(rows[i], c) - mean[static_cast<size_t>(c)]) / stddev[static_cast<size_t>(c)];
      }
    }
    return out;
  }
};

std::vector<int> pick(const std::vector<int>& v, const std::vector<int>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(v[static_cast<size_t>(r)]);
  return out;
}

}  // namespace

ProbeResult probe(const Tensor& latents, const std::vector<int>& targets,
                  ProbeTarget kind, std::uint64_t seed) {
  if (latents.rank() != 2 || latents.dim(0) != static_cast<int>(targets.size())) {
    throw ContractError("probe needs one target per latent row");
  }
  const int n = latents.dim(0);
  int n_classes = 0;
  for (int t : targets) n_classes = std::max(n_classes, t + 1);
  if (n_classes < 2) throw DataError("probe targets must span at least two classes");

  std::map<int, int> counts;
  for (int t : targets) ++counts[t];
  for (const auto& [cls, cnt] : counts) {
    if (cnt < 20) {
      throw DataError("probe class " + std::to_string(cls) + " has only " +
                      std::to_string(cnt) + " samples (need >= 20)");
    }
  }

  Rng rng = Rng::child(seed, "probe");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);
  }
  const int n_train = (n * 7) / 10;
  std::vector<int> train_rows(order.begin(), order.begin() + n_train);
  std::vector<int> eval_rows(order.begin() + n_train, order.end());

  const auto train_targets = pick(targets, train_rows);
  for (int c = 0; c < n_classes; ++c) {
    if (std::find(train_targets.begin(), train_targets.end(), c) == train_targets.end()) {
      throw DataError("probe class " + std::to_string(c) + " absent from the train split");
    }
  }

  Standardizer std_fit = Standardizer::fit(latents, train_rows);
  Tensor x_train = std_fit.apply(latents, train_rows);
  Tensor x_eval = std_fit.apply(latents, eval_rows);

  Mlp head = make_mlp({latents.dim(1), n_classes}, Activation::kNone,
                      OutputActivation::kSoftmax, "probe", rng);
  ModelParams params;
  params.add_mlp(head);
  Optimizer opt(OptimizerKind::kAdam, kProbeLr);
  for (int step = 0; step < kProbeSteps; ++step) {
    Tape tape;
    for (const auto& [name, t] : params) {
      (void)name;
      tape.watch(*t);
    }
    Tensor probs = head.forward(tape, x_train);
    Tensor loss = cross_entropy(tape, probs, train_targets);
    tape.backward(loss);
    opt.step(params, tape);
  }

  Tape tape;
  Tensor probs = head.forward(tape, x_eval);
  std::vector<int> pred(static_cast<size_t>(probs.dim(0)));
  for (int r = 0; r < probs.dim(0); ++r) {
    int best = 0;
    for (int c = 1; c < probs.dim(1); ++c) {
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    }
    pred[static_cast<size_t>(r)] = best;
  }

  ProbeResult res;
  res.target = kind;
  res.accuracy = accuracy(pred, pick(targets, eval_rows));
  res.chance = 1.0 / static_cast<double>(n_classes);
  res.n_eval = static_cast<int>(eval_rows.size());
  return res;
}

std::vector<ProbeResult> run_probes(const DsrModel& model, const Dataset& data,
                                    std::uint64_t seed) {
  if (!data.has_target_labels()) {
    throw DataError("label probes need target ground truth (oracle labels missing)");
  }
  const int n = data.n_source() + data.n_target();
  Tensor x({n, data.dim});
  std::vector<int> labels(static_cast<size_t>(n));
  std::vector<int> domains(static_cast<size_t>(n));
  for (int i = 0; i < data.n_source(); ++i) {
    for (int j = 0; j < data.dim; ++j) x.at(i, j) = data.source_x.at(i, j);
    labels[static_cast<size_t>(i)] = data.source_y[static_cast<size_t>(i)];
    domains[static_cast<size_t>(i)] = 0;
  }
  for (int i = 0; i < data.n_target(); ++i) {
    const int r = data.n_source() + i;
    for (int j = 0; j < data.dim; ++j) x.at(r, j) = data.target_x.at(i, j);
    labels[static_cast<size_t>(r)] = data.target_y[static_cast<size_t>(i)];
    domains[static_cast<size_t>(r)] = 1;
  }

  Tape tape;
  EncodedMeans means = encode_means(tape, model, x);

  std::vector<ProbeResult> out;
  out.push_back(probe(means.mu_y, domains, ProbeTarget::kDomainFromZy,
                      splitmix64(seed ^ hash_tag("domain_from_zy"))));
  out.push_back(probe(means.mu_d, labels, ProbeTarget::kLabelFromZd,
                      splitmix64(seed ^ hash_tag("label_from_zd"))));
  out.push_back(probe(means.mu_y, labels, ProbeTarget::kLabelFromZy,
                      splitmix64(seed ^ hash_tag("label_from_zy"))));
  out.push_back(probe(means.mu_d, domains, ProbeTarget::kDomainFromZd,
                      splitmix64(seed ^ hash_tag("domain_from_zd"))));
  return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void normalize(std::vector<double>& v) {
  const double n = norm(v);
  for (double& x : v) x /= n;
}

std::vector<double> mat_vec(const std::vector<double>& m, int k, const std::vector<double>& v) {
  std::vector<double> out(static_cast<size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      out[static_cast<size_t>(i)] += m[static_cast<size_t>(i * k + j)] * v[static_cast<size_t>(j)];
    }
  }
  return out;
}

constexpr double kPowerTol = 1e-9;
constexpr int kPowerMaxIters = 1000;

// Leading eigenvector of a PSD matrix; `against` (if non-empty) is projected
// out every iteration to keep the second component orthogonal.
std::vector<double> power_iterate(const std::vector<double>& m, int k,
                                  const std::vector<double>& against, double scale) {
  // Deterministic start: the largest column, which cannot be orthogonal to
  // the leading eigenspace unless the matrix is (numerically) zero.
  std::vector<double> v(static_cast<size_t>(k), 0.0);
  double best = -1.0;
  for (int j = 0; j < k; ++j) {
    double cn = 0.0;
    for (int i = 0; i < k; ++i) {
      const double x = m[static_cast<size_t>(i * k + j)];
      cn += x * x;
    }
    if (cn > best) {
      best = cn;
      for (int i = 0; i < k; ++i) v[static_cast<size_t>(i)] = m[static_cast<size_t>(i * k + j)];
    }
  }
  if (std::sqrt(best) <= 1e-14 * std::max(scale, 1.0)) {
    // Deflated matrix is numerically zero (rank-deficient data): return a
    // deterministic unit vector orthogonal to `against`.
    std::vector<double> u(static_cast<size_t>(k), 0.0);
    int pick = 0;
    if (!against.empty()) {
      for (int i = 1; i < k; ++i) {
        if (std::abs(against[static_cast<size_t>(i)]) <
            std::abs(against[static_cast<size_t>(pick)])) {
          pick = i;
        }
      }
    }
    u[static_cast<size_t>(pick)] = 1.0;
    if (!against.empty()) {
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += u[static_cast<size_t>(i)] * against[static_cast<size_t>(i)];
      for (int i = 0; i < k; ++i) u[static_cast<size_t>(i)] -= dot * against[static_cast<size_t>(i)];
      normalize(u);
    }
    return u;
  }
  normalize(v);
  for (int it = 0; it < kPowerMaxIters; ++it) {
    std::vector<double> next = mat_vec(m, k, v);
    if (!against.empty()) {
      double dot = 0.0;
      for (int i = 0; i < k; ++i) {
        dot += next[static_cast<size_t>(i)] * against[static_cast<size_t>(i)];
      }
      for (int i = 0; i < k; ++i) next[static_cast<size_t>(i)] -= dot * against[static_cast<size_t>(i)];
    }
    const double nn = norm(next);
    if (nn <= 1e-14 * std::max(scale, 1.0)) break;  // nothing left after deflation
    for (double& x : next) x /= nn;
    double diff = 0.0;
    for (int i = 0; i < k; ++i) {
      const double d = next[static_cast<size_t>(i)] - v[static_cast<size_t>(i)];
      diff += d * d;
    }
    v = next;
    if (std::sqrt(diff) < kPowerTol) break;
  }
  return v;
}

void fix_sign(std::vector<double>& v) {
  int arg = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[static_cast<size_t>(arg)])) arg = static_cast<int>(i);
  }
  if (v[static_cast<size_t>(arg)] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

Pca2 compute_pca2(const Tensor& latents) {
  if (latents.rank() != 2 || latents.dim(0) < 3) {
    throw DataError("PCA needs at least 3 samples of rank-2 data");
  }
  const int n = latents.dim(0), k = latents.dim(1);
  std::vector<double> mean(static_cast<size_t>(k), 0.0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < k; ++c) mean[static_cast<size_t>(c)] += latents.at(r, c);
  }
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(k * k), 0.0);
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < k; ++i) {
      const double xi = latents.at(r, i) - mean[static_cast<size_t>(i)];
      for (int j = i; j < k; ++j) {
        cov[static_cast<size_t>(i * k + j)] +=
            xi * (latents.at(r, j) - mean[static_cast<size_t>(j)]);
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      cov[static_cast<size_t>(i * k + j)] /= static_cast<double>(n - 1);
      cov[static_cast<size_t>(j * k + i)] = cov[static_cast<size_t>(i * k + j)];
    }
  }

  Pca2 out;
  for (int i = 0; i < k; ++i) out.total_variance += cov[static_cast<size_t>(i * k + i)];
  if (out.total_variance <= 1e-300) throw DataError("PCA input has zero variance");

  out.axis1 = power_iterate(cov, k, {}, out.total_variance);
  fix_sign(out.axis1);
  std::vector<double> cv = mat_vec(cov, k, out.axis1);
  for (int i = 0; i < k; ++i) out.var1 += out.axis1[static_cast<size_t>(i)] * cv[static_cast<size_t>(i)];

  std::vector<double> deflated = cov;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      deflated[static_cast<size_t>(i * k + j)] -=
          out.var1 * out.axis1[static_cast<size_t>(i)] * out.axis1[static_cast<size_t>(j)];
    }
  }
  out.axis2 = power_iterate(deflated, k, out.axis1, out.total_variance);
  fix_sign(out.axis2);
  cv = mat_vec(cov, k, out.axis2);
  for (int i = 0; i < k; ++i) out.var2 += out.axis2[static_cast<size_t>(i)] * cv[static_cast<size_t>(i)];

  out.pc1.resize(static_cast<size_t>(n));
  out.pc2.resize(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    double p1 = 0.0, p2 = 0.0;
    for (int c = 0; c < k; ++c) {
      const double xc = latents.at(r, c) - mean[static_cast<size_t>(c)];
      p1 += xc * out.axis1[static_cast<size_t>(c)];
      p2 += xc * out.axis2[static_cast<size_t>(c)];
    }
    out.pc1[static_cast<size_t>(r)] = p1;
    out.pc2[static_cast<size_t>(r)] = p2;
  }
  return out;
}

void export_embedding(const Tensor& latents, const std::vector<int>& labels,
                      const std::vector<int>& domains, const std::string& out_path) {
  if (latents.dim(0) != static_cast<int>(labels.size()) ||
      labels.size() != domains.size()) {
    throw ContractError("export_embedding needs one label and domain per row");
  }
  Pca2 pca = compute_pca2(latents);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + out_path);
  os << "pc1,pc2,label,domain\n";
  char buf[32];
  for (size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", pca.pc1[i]);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", pca.pc2[i]);
    os << buf << "," << labels[i] << "," << domains[i] << "\n";
  }
}

}  // namespace dsr
