// SPDX-License-Identifier: Apache-2.0

#include "dsr/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dsr/errors.h"

namespace dsr {

namespace {

// Shortest representation that parses back to the identical double.
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
}

}  // namespace

TrainView Dataset::train_view() const {
  TrainView v;
  v.source_x = source_x;
  v.source_y = source_y;
  v.target_x = target_x;
  v.dim = dim;
  v.classes = classes;
  return v;
}

void Dataset::validate() const {
  if (!source_x.defined() || !target_x.defined()) throw DataError("dataset has no features");
  if (n_target() < 1) throw DataError("n_T >= 1 required, target set is empty");
  if (source_x.dim(1) != target_x.dim(1)) {
    throw DataError("feature width mismatch: source d=" + std::to_string(source_x.dim(1)) +
                    " vs target d=" + std::to_string(target_x.dim(1)));
  }
  if (static_cast<int>(source_y.size()) != n_source()) {
    throw DataError("source label count does not match source rows");
  }
  if (n_source() < 2 * classes) {
    throw DataError("need at least two source samples per class (n_S >= 2C)");
  }
  for (size_t i = 0; i < source_y.size(); ++i) {
    if (source_y[i] < 0 || source_y[i] >= classes) {
      throw DataError("source label out of range at row " + std::to_string(i + 1));
    }
  }
}

GenSpec GenSpec::defaults(double domain_gap) {
  GenSpec s;
  // Classes exactly 4 sigma apart: hard enough that residual domain
  // distortion actually costs accuracy.
  const double h = 1.0 / std::sqrt(2.0);
  s.class_means = {{-h, -h}, {h, h}};
  s.domain_means = {{-domain_gap / 2.0, 0.0}, {domain_gap / 2.0, 0.0}};
  return s;
}

void GenSpec::validate() const {
  if (classes < 2) throw ConfigError("generator needs at least two classes");
  if (k_y <= 0 || k_d <= 0 || dim <= 0) throw ConfigError("generator dims must be positive");
  if (!(sigma > 0.0)) throw ConfigError("generator sigma must be positive");
  if (n_source < 2 * classes) throw ConfigError("n_source must be at least 2 per class");
  if (n_target < 1) throw ConfigError("n_target must be at least 1");
  if (static_cast<int>(class_means.size()) != classes) {
    throw ConfigError("class_means must have one row per class");
  }
  for (const auto& m : class_means) {
    if (static_cast<int>(m.size()) != k_y) throw ConfigError("class mean width must equal k_y");
  }
  if (domain_means.size() != 2) throw ConfigError("domain_means must have two rows");
  for (const auto& m : domain_means) {
    if (static_cast<int>(m.size()) != k_d) throw ConfigError("domain mean width must equal k_d");
  }
  // Separable semantics: class clusters at least 4 sigma apart.
  for (size_t a = 0; a < class_means.size(); ++a) {
    for (size_t b = a + 1; b < class_means.size(); ++b) {
      double d2 = 0.0;
      for (int k = 0; k < k_y; ++k) {
        const double diff = class_means[a][static_cast<size_t>(k)] -
                            class_means[b][static_cast<size_t>(k)];
        d2 += diff * diff;
      }
      if (std::sqrt(d2) < 4.0 * sigma - 1e-9) {
        throw ConfigError("class means " + std::to_string(a) + " and " + std::to_string(b) +
                          " are closer than 4 sigma");
      }
    }
  }
}

Dataset generate(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int k = spec.k_y + spec.k_d;

  // Mixing map is pinned by its own seed so different data seeds share the
  // same manifold.
  Rng mix_rng = Rng::child(spec.mixing_seed, "mixing-map");
  Tensor a_map({spec.dim, k});
  const double a_std = 1.0 / std::sqrt(std::sqrt(static_cast<double>(k)));  // variance 1/sqrt(K)
  for (std::int64_t i = 0; i < a_map.size(); ++i) a_map.at(i) = mix_rng.normal(0.0, a_std);
  // Wide biases park most units off-center, so which units saturate depends
  // on the domain offset. That is what breaks naive source-to-target transfer.
  Tensor bias({spec.dim});
  for (std::int64_t i = 0; i < bias.size(); ++i) bias.at(i) = mix_rng.normal(0.0, 2.0);

  Rng rng = Rng::child(seed, "generate");

  Dataset ds;
  ds.dim = spec.dim;
  ds.classes = spec.classes;

  auto draw_domain = [&](int n, int domain, Tensor& x, std::vector<int>& labels,
                         Tensor& zy_out, Tensor& zd_out) {
    x = Tensor({n, spec.dim});
    zy_out = Tensor({n, spec.k_y});
    zd_out = Tensor({n, spec.k_d});
    labels.resize(static_cast<size_t>(n));
    std::vector<double> z(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
      const int c = rng.uniform_int(spec.classes);
      labels[static_cast<size_t>(i)] = c;
      for (int j = 0; j < spec.k_y; ++j) {
        const double v = rng.normal(spec.class_means[static_cast<size_t>(c)][static_cast<size_t>(j)],
                                    spec.sigma);
        zy_out.at(i, j) = v;
        z[static_cast<size_t>(j)] = v;
      }
      for (int j = 0; j < spec.k_d; ++j) {
        const double v = rng.normal(
            spec.domain_means[static_cast<size_t>(domain)][static_cast<size_t>(j)], spec.sigma);
        zd_out.at(i, j) = v;
        z[static_cast<size_t>(spec.k_y + j)] = v;
      }
      for (int j = 0; j < spec.dim; ++j) {
        double acc = bias.at(j);
        for (int l = 0; l < k; ++l) acc += a_map.at(j, l) * z[static_cast<size_t>(l)];
        x.at(i, j) = std::tanh(acc);
      }
    }
  };

  std::vector<int> target_labels;
  draw_domain(spec.n_source, 0, ds.source_x, ds.source_y, ds.source_zy, ds.source_zd);
  draw_domain(spec.n_target, 1, ds.target_x, target_labels, ds.target_zy, ds.target_zd);
  ds.target_y = std::move(target_labels);  // held out; ever used for evaluation only
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// CSV IO
// ---------------------------------------------------------------------------

void save_source_csv(const std::string& path, const Tensor& x, const std::vector<int>& y) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "label";
  for (int j = 0; j < x.dim(1); ++j) os << ",f" << j;
  os << "\n";
  for (int i = 0; i < x.dim(0); ++i) {
    os << y[static_cast<size_t>(i)];
    for (int j = 0; j < x.dim(1); ++j) os << "," << fmt_double(x.at(i, j));
    os << "\n";
  }
}

void save_target_csv(const std::string& path, const Tensor& x) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  for (int j = 0; j < x.dim(1); ++j) os << (j ? "," : "") << "f" << j;
  os << "\n";
  for (int i = 0; i < x.dim(0); ++i) {
    for (int j = 0; j < x.dim(1); ++j) os << (j ? "," : "") << fmt_double(x.at(i, j));
    os << "\n";
  }
}

void save_latents_csv(const std::string& path, const Dataset& ds) {
  if (!ds.source_zy.defined()) throw DataError("dataset has no oracle latents to save");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "domain,label";
  for (int j = 0; j < ds.source_zy.dim(1); ++j) os << ",zy" << j;
  for (int j = 0; j < ds.source_zd.dim(1); ++j) os << ",zd" << j;
  os << "\n";
  auto emit = [&](int domain, const Tensor& zy, const Tensor& zd, const std::vector<int>& y) {
    for (int i = 0; i < zy.dim(0); ++i) {
      os << domain << "," << (y.empty() ? -1 : y[static_cast<size_t>(i)]);
      for (int j = 0; j < zy.dim(1); ++j) os << "," << fmt_double(zy.at(i, j));
      for (int j = 0; j < zd.dim(1); ++j) os << "," << fmt_double(zd.at(i, j));
      os << "\n";
    }
  };
  emit(0, ds.source_zy, ds.source_zd, ds.source_y);
  emit(1, ds.target_zy, ds.target_zd, ds.target_y);
}

namespace {

struct ParsedCsv {
  Tensor x;
  std::vector<int> labels;  // empty for unlabeled format
  bool labeled = false;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path, size_t line_no) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') {
    throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  return v;
}

ParsedCsv parse_feature_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  auto header = split_line(line);
  ParsedCsv out;
  out.labeled = !header.empty() && header[0] == "label";
  const size_t feature_cols = header.size() - (out.labeled ? 1 : 0);
  if (feature_cols == 0) throw DataError(path + ":1: no feature columns");

  std::vector<double> values;
  size_t rows = 0;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    size_t k = 0;
    if (out.labeled) {
      const double lv = parse_cell(cells[0], path, line_no);
      const int label = static_cast<int>(lv);
      if (lv != label || label < -1) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad label '" + cells[0] + "'");
      }
      out.labels.push_back(label);
      k = 1;
    }
    for (; k < cells.size(); ++k) values.push_back(parse_cell(cells[k], path, line_no));
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": no data rows");
  out.x = Tensor::from({static_cast<int>(rows), static_cast<int>(feature_cols)},
                       std::move(values));
  return out;
}

}  // namespace

Dataset load_features(const std::string& source_path, const std::string& target_path) {
  ParsedCsv src = parse_feature_csv(source_path);
  if (!src.labeled) throw DataError(source_path + ": source file must have a label column");
  for (size_t i = 0; i < src.labels.size(); ++i) {
    if (src.labels[i] < 0) {
      throw DataError(source_path + ":" + std::to_string(i + 2) +
                      ": unlabeled row (-1) not allowed in the source file");
    }
  }
  ParsedCsv tgt = parse_feature_csv(target_path);
  if (src.x.dim(1) != tgt.x.dim(1)) {
    throw DataError("feature width mismatch: " + source_path + " has d=" +
                    std::to_string(src.x.dim(1)) + ", " + target_path + " has d=" +
                    std::to_string(tgt.x.dim(1)));
  }
  Dataset ds;
  ds.source_x = src.x;
  ds.source_y = src.labels;
  ds.target_x = tgt.x;
  ds.dim = src.x.dim(1);
  int max_label = 1;
  for (int y : src.labels) max_label = std::max(max_label, y);
  if (tgt.labeled) {
    const bool all_known =
        std::all_of(tgt.labels.begin(), tgt.labels.end(), [](int y) { return y >= 0; });
    if (all_known) {
      ds.target_y = tgt.labels;
      for (int y : tgt.labels) max_label = std::max(max_label, y);
    }
  }
  ds.classes = max_label + 1;
  ds.validate();
  return ds;
}

std::vector<int> load_target_labels_from_latents(const std::string& path, int n_target) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": empty file");
  auto header = split_line(line);
  if (header.size() < 2 || header[0] != "domain" || header[1] != "label") {
    throw DataError(path + ": not an oracle-latents file (expected domain,label,... header)");
  }
  std::vector<int> labels;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": ragged row");
    }
    if (cells[0] == "1") {
      labels.push_back(static_cast<int>(parse_cell(cells[1], path, line_no)));
    }
  }
  if (static_cast<int>(labels.size()) != n_target) {
    throw DataError(path + ": has " + std::to_string(labels.size()) +
                    " target rows, expected " + std::to_string(n_target));
  }
  for (int y : labels) {
    if (y < 0) throw DataError(path + ": target labels are unknown (-1)");
  }
  return labels;
}

std::vector<Batch> make_batches(const TrainView& view, int batch_size, Rng& rng) {
  if (batch_size <= 0 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and positive, got " + std::to_string(batch_size));
  }
  const int half = batch_size / 2;
  const int n_src = view.source_x.dim(0);
  const int n_tgt = view.target_x.dim(0);
  const int n_batches = std::min(n_src, n_tgt) / half;

  std::vector<int> src_idx(static_cast<size_t>(n_src));
  std::vector<int> tgt_idx(static_cast<size_t>(n_tgt));
  for (int i = 0; i < n_src; ++i) src_idx[static_cast<size_t>(i)] = i;
  for (int i = 0; i < n_tgt; ++i) tgt_idx[static_cast<size_t>(i)] = i;
  shuffle_indices(src_idx, rng);
  shuffle_indices(tgt_idx, rng);

  const int d = view.source_x.dim(1);
  std::vector<Batch> batches;
  batches.reserve(static_cast<size_t>(n_batches));
  for (int b = 0; b < n_batches; ++b) {
    Batch batch;
    batch.n_src = half;
    batch.x = Tensor({batch_size, d});
    batch.domain_tags.resize(static_cast<size_t>(batch_size));
    batch.source_labels.resize(static_cast<size_t>(half));
    for (int i = 0; i < half; ++i) {
      const int row = src_idx[static_cast<size_t>(b * half + i)];
      for (int j = 0; j < d; ++j) batch.x.at(i, j) = view.source_x.at(row, j);
      batch.source_labels[static_cast<size_t>(i)] = view.source_y[static_cast<size_t>(row)];
      batch.domain_tags[static_cast<size_t>(i)] = 0;
    }
    for (int i = 0; i < half; ++i) {
      const int row = tgt_idx[static_cast<size_t>(b * half + i)];
      for (int j = 0; j < d; ++j) batch.x.at(half + i, j) = view.target_x.at(row, j);
      batch.domain_tags[static_cast<size_t>(half + i)] = 1;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace dsr
