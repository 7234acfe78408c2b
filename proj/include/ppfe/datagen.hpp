#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppfe/binary.hpp"
#include "ppfe/error.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/rng.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe::data {

/// One client's samples. Regression datasets carry `targets`; classification datasets carry
/// `labels` and a positive `num_classes`.
struct ClientDataset {
  Matrix features;
  Vector targets;
  std::vector<int> labels;
  int num_classes = 0;

  bool is_classification() const noexcept { return num_classes > 0; }
  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }

  nn::Targets as_targets() const {
    return is_classification() ? nn::Targets::classes(labels) : nn::Targets::regression(targets);
  }

  ClientDataset subset(std::span<const std::size_t> idx) const {
    ClientDataset out;
    out.features = select_rows(features, idx);
    out.num_classes = num_classes;
    if (is_classification()) {
      out.labels.reserve(idx.size());
      for (auto i : idx) out.labels.push_back(labels[i]);
    } else {
      out.targets.reserve(idx.size());
      for (auto i : idx) out.targets.push_back(targets[i]);
    }
    return out;
  }

  void validate() const {
    if (is_classification()) {
      if (labels.size() != features.rows()) throw DimensionError("dataset: label count differs from row count");
      for (int c : labels)
        if (c < 0 || c >= num_classes) throw InvalidArgument("dataset: label " + std::to_string(c) + " out of range");
    } else if (targets.size() != features.rows()) {
      throw DimensionError("dataset: target count differs from row count");
    }
  }
};

/// Concatenates datasets with identical layout.
inline ClientDataset concat(std::span<const ClientDataset> parts) {
  ClientDataset out;
  if (parts.empty()) return out;
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.size();
  out.num_classes = parts.front().num_classes;
  out.features = Matrix(rows, parts.front().dim());
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.dim() != out.dim() || p.num_classes != out.num_classes) throw DimensionError("concat: layout mismatch");
    std::copy(p.features.data().begin(), p.features.data().end(), out.features.row(r).begin());
    r += p.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.targets.insert(out.targets.end(), p.targets.begin(), p.targets.end());
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Synthetic linear regression

enum class Covariance { Identity, RandomSpd };

struct SyntheticRegressionSpec {
  std::size_t clients = 100;
  std::size_t samples_per_client = 200;
  std::size_t dim = 20;
  /// Personalization ratio r_p; nullopt draws r_p ~ U(0, 1) independently per client.
  std::optional<double> personalization_ratio = 0.5;
  double global_variance = 1.0;
  /// alpha_k per client; empty means 1.0 for every client.
  std::vector<double> local_variance_coef;
  double noise_variance = 0.25;
  Covariance covariance = Covariance::Identity;

  double alpha(std::size_t k) const { return local_variance_coef.empty() ? 1.0 : local_variance_coef[k]; }

  void validate() const {
    if (clients == 0 || samples_per_client == 0 || dim == 0) {
      throw InvalidArgument("regression spec: clients, samples and dim must be positive");
    }
    if (personalization_ratio && !(*personalization_ratio >= 0.0 && *personalization_ratio <= 1.0)) {
      throw InvalidArgument("regression spec: personalization ratio must lie in [0, 1]");
    }
    if (!(global_variance >= 0.0) || !(noise_variance >= 0.0)) {
      throw InvalidArgument("regression spec: variances must be non-negative");
    }
    if (!local_variance_coef.empty() && local_variance_coef.size() != clients) {
      throw InvalidArgument("regression spec: need one local variance coefficient per client");
    }
    for (double a : local_variance_coef)
      if (!(a >= 0.0)) throw InvalidArgument("regression spec: local variance coefficients must be >= 0");
  }
};

/// Generating parameters: W_k = (1 - r_k) W_g + r_k W_l^(k), x ~ N(0, L_k L_k^T).
struct RegressionTruth {
  Vector global_weight;
  std::vector<Vector> local_weights;
  std::vector<Vector> client_weights;
  std::vector<double> ratios;
  std::vector<Matrix> covariance_factors;  // empty for identity covariance
  double noise_std = 0.0;
};

struct RegressionTask {
  std::vector<ClientDataset> clients;
  RegressionTruth truth;
};

namespace detail {

inline Matrix cholesky_lower(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("cholesky: matrix is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

// Wishart-style SPD matrix G G^T / d plus a small ridge, returned as its Cholesky factor.
inline Matrix random_spd_factor(std::size_t d, Rng& rng) {
  const Matrix g = gaussian(rng, d, d, 0.0, 1.0);
  Matrix s = matmul_nt(g, g) * (1.0 / static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.1;
  return cholesky_lower(s);
}

}  // namespace detail

/// Draws `n` fresh samples from client k's generative model.
inline ClientDataset sample_client_regression(const RegressionTruth& truth, std::size_t k, std::size_t n, Rng& rng) {
  const std::size_t d = truth.global_weight.size();
  ClientDataset ds;
  ds.features = gaussian(rng, n, d, 0.0, 1.0);
  if (!truth.covariance_factors.empty()) ds.features = matmul_nt(ds.features, truth.covariance_factors[k]);
  ds.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.targets[i] = dot(ds.features.row(i), truth.client_weights[k]) + truth.noise_std * rng.normal();
  }
  return ds;
}

inline RegressionTask gen_synthetic_regression(const SyntheticRegressionSpec& spec, const Rng& rng) {
  spec.validate();
  const std::size_t d = spec.dim;
  RegressionTask task;
  auto& t = task.truth;
  t.noise_std = std::sqrt(spec.noise_variance);
  {
    Rng g = rng.derive("global-weight");
    t.global_weight = gaussian(g, d, 1, 0.0, std::sqrt(spec.global_variance)).values();
  }
  for (std::size_t k = 0; k < spec.clients; ++k) {
    Rng lr = rng.derive("local-weight", k);
    Vector wl = gaussian(lr, d, 1, 0.0, std::sqrt(spec.alpha(k) * spec.global_variance)).values();
    double rp = 0.0;
    if (spec.personalization_ratio) {
      rp = *spec.personalization_ratio;
    } else {
      Rng rr = rng.derive("ratio", k);
      rp = rr.uniform();
    }
    Vector wk(d);
    for (std::size_t j = 0; j < d; ++j) wk[j] = (1.0 - rp) * t.global_weight[j] + rp * wl[j];
    t.local_weights.push_back(std::move(wl));
    t.client_weights.push_back(std::move(wk));
    t.ratios.push_back(rp);
    if (spec.covariance == Covariance::RandomSpd) {
      Rng cr = rng.derive("covariance", k);
      t.covariance_factors.push_back(detail::random_spd_factor(d, cr));
    }
  }
  for (std::size_t k = 0; k < spec.clients; ++k) {
    Rng dr = rng.derive("train-data", k);
    task.clients.push_back(sample_client_regression(t, k, spec.samples_per_client, dr));
  }
  return task;
}

// ---------------------------------------------------------------------------------------------
// Synthetic classification

/// Isotropic unit-variance Gaussian blobs. Class means are pairwise `class_sep` apart when
/// num_classes <= dim (orthonormal directions scaled by sep / sqrt 2).
struct BlobModel {
  Matrix means;  // num_classes x dim
  int num_classes() const noexcept { return static_cast<int>(means.rows()); }
};

inline BlobModel make_blobs(std::size_t dim, int num_classes, double class_sep, Rng& rng) {
  if (num_classes < 2) throw InvalidArgument("classification: need at least 2 classes");
  if (dim == 0) throw InvalidArgument("classification: dim must be positive");
  if (!(class_sep >= 0.0)) throw InvalidArgument("classification: class separation must be >= 0");
  const auto c = static_cast<std::size_t>(num_classes);
  Matrix dirs = gaussian(rng, c, dim, 0.0, 1.0);
  const std::size_t ortho = std::min(c, dim);
  for (std::size_t i = 0; i < c; ++i) {
    auto ri = dirs.row(i);
    if (i < ortho) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          const double p = dot(ri, dirs.row(j));
          auto rj = dirs.row(j);
          for (std::size_t k = 0; k < dim; ++k) ri[k] -= p * rj[k];
        }
      }
    }
    const double n = std::sqrt(dot(ri, ri));
    for (double& v : ri) v /= n;
  }
  dirs *= class_sep / std::sqrt(2.0);
  return BlobModel{std::move(dirs)};
}

/// `n` samples with labels cycling 0, 1, ..., C-1 (balanced), then shuffled.
inline ClientDataset sample_blobs(const BlobModel& model, std::size_t n, Rng& rng) {
  const std::size_t dim = model.means.cols();
  ClientDataset ds;
  ds.num_classes = model.num_classes();
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % model.means.rows());
  rng.shuffle(std::span<int>(ds.labels));
  ds.features = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.features.row(i);
    auto mean = model.means.row(static_cast<std::size_t>(ds.labels[i]));
    for (std::size_t j = 0; j < dim; ++j) row[j] = mean[j] + rng.normal();
  }
  return ds;
}

/// Labeled pool of ceil(headroom * clients * samples_per_client) blob samples, to be split by a
/// partitioner. Headroom > 1 leaves slack for class-restricted partitions.
inline ClientDataset gen_synthetic_classification(std::size_t clients, std::size_t samples_per_client, std::size_t dim,
                                                  int num_classes, double class_sep, const Rng& rng,
                                                  double headroom = 1.0, BlobModel* model_out = nullptr) {
  if (clients == 0 || samples_per_client == 0) throw InvalidArgument("classification: counts must be positive");
  if (!(headroom >= 1.0)) throw InvalidArgument("classification: headroom must be >= 1");
  Rng mr = rng.derive("class-means");
  BlobModel model = make_blobs(dim, num_classes, class_sep, mr);
  Rng sr = rng.derive("pool");
  const auto n = static_cast<std::size_t>(std::ceil(headroom * static_cast<double>(clients * samples_per_client)));
  ClientDataset pool = sample_blobs(model, n, sr);
  if (model_out) *model_out = std::move(model);
  return pool;
}

// ---------------------------------------------------------------------------------------------
// Partitioners

struct PartitionSpec {
  enum class Mode { ClassRestriction, Dirichlet };
  Mode mode = Mode::ClassRestriction;
  std::size_t clients = 1;
  /// S, classes per client (class restriction).
  std::size_t classes_per_client = 2;
  /// Dirichlet concentration.
  double alpha = 1.0;
  /// Class restriction: samples per client; 0 spreads the whole pool evenly.
  std::size_t samples_per_client = 0;
  std::uint64_t seed = 0;

  void validate(int num_classes) const {
    if (clients == 0) throw InvalidArgument("partition: need at least one client");
    if (mode == Mode::ClassRestriction) {
      if (classes_per_client < 1 || classes_per_client > static_cast<std::size_t>(num_classes)) {
        throw InvalidArgument("partition: classes per client must be in [1, " + std::to_string(num_classes) + "]");
      }
    } else if (!(alpha > 0.0)) {
      throw InvalidArgument("partition: Dirichlet alpha must be positive");
    }
  }
};

using IndexPartition = std::vector<std::vector<std::size_t>>;

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const ClientDataset& pool) {
  std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(pool.num_classes));
  for (std::size_t i = 0; i < pool.labels.size(); ++i) by[static_cast<std::size_t>(pool.labels[i])].push_back(i);
  return by;
}

inline std::vector<ClientDataset> materialize(const ClientDataset& pool, const IndexPartition& parts) {
  std::vector<ClientDataset> out;
  out.reserve(parts.size());
  for (const auto& idx : parts) out.push_back(pool.subset(idx));
  return out;
}

}  // namespace detail

/// Each client sees exactly S classes drawn uniformly (subsets may overlap across clients) with
/// a balanced number of samples per class. Pool samples are used at most once.
inline IndexPartition class_restriction_indices(const ClientDataset& pool, const PartitionSpec& spec, Rng& rng) {
  if (!pool.is_classification()) throw InvalidArgument("partition: pool has no class labels");
  spec.validate(pool.num_classes);
  const auto num_classes = static_cast<std::size_t>(pool.num_classes);
  auto by_class = detail::indices_by_class(pool);
  for (auto& v : by_class) rng.shuffle(std::span<std::size_t>(v));
  std::vector<std::size_t> cursor(num_classes, 0);
  const std::size_t per_client = spec.samples_per_client > 0 ? spec.samples_per_client : pool.size() / spec.clients;
  const std::size_t s = spec.classes_per_client;
  if (per_client < s) {
    throw InvalidArgument("partition: " + std::to_string(per_client) + " samples per client cannot cover " +
                          std::to_string(s) + " classes");
  }
  IndexPartition parts(spec.clients);
  std::vector<std::size_t> classes(num_classes);
  for (std::size_t k = 0; k < spec.clients; ++k) {
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t j = i + rng.uniform_index(num_classes - i);
      std::swap(classes[i], classes[j]);
    }
    auto& mine = parts[k];
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t c = classes[i];
      const std::size_t take = per_client / s + (i < per_client % s ? 1 : 0);
      if (cursor[c] + take > by_class[c].size()) {
        throw InvalidArgument("partition: insufficient samples of class " + std::to_string(c) + " for client " +
                              std::to_string(k));
      }
      mine.insert(mine.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(cursor[c]),
                  by_class[c].begin() + static_cast<std::ptrdiff_t>(cursor[c] + take));
      cursor[c] += take;
    }
    rng.shuffle(std::span<std::size_t>(mine));
  }
  return parts;
}

/// Per-class client shares drawn from Dir(alpha); every pool sample is assigned exactly once.
/// A client that would end up empty has its row of the allocation redrawn.
inline IndexPartition dirichlet_indices(const ClientDataset& pool, const PartitionSpec& spec, Rng& rng) {
  if (!pool.is_classification()) throw InvalidArgument("partition: pool has no class labels");
  spec.validate(pool.num_classes);
  const std::size_t k_clients = spec.clients;
  if (pool.size() < k_clients) throw InvalidArgument("partition: fewer samples than clients");
  const auto num_classes = static_cast<std::size_t>(pool.num_classes);
  auto by_class = detail::indices_by_class(pool);
  for (auto& v : by_class) rng.shuffle(std::span<std::size_t>(v));

  Matrix draws(k_clients, num_classes);
  auto redraw_row = [&](std::size_t k) {
    for (std::size_t c = 0; c < num_classes; ++c) draws(k, c) = rng.gamma(spec.alpha);
  };
  for (std::size_t k = 0; k < k_clients; ++k) redraw_row(k);

  std::vector<std::vector<std::size_t>> counts;
  auto allocate = [&]() {
    counts.assign(k_clients, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t c = 0; c < num_classes; ++c) {
      const std::size_t nc = by_class[c].size();
      if (nc == 0) continue;
      double total = 0.0;
      for (std::size_t k = 0; k < k_clients; ++k) total += draws(k, c);
      std::vector<double> frac(k_clients);
      std::size_t assigned = 0;
      for (std::size_t k = 0; k < k_clients; ++k) {
        const double share = total > 0.0 ? draws(k, c) / total * static_cast<double>(nc)
                                         : static_cast<double>(nc) / static_cast<double>(k_clients);
        const auto base = static_cast<std::size_t>(std::floor(share));
        counts[k][c] = base;
        frac[k] = share - static_cast<double>(base);
        assigned += base;
      }
      std::vector<std::size_t> order(k_clients);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
      for (std::size_t i = 0; assigned < nc; ++i, ++assigned) ++counts[order[i % k_clients]][c];
    }
  };

  constexpr int kMaxRedraws = 10000;
  for (int attempt = 0;; ++attempt) {
    allocate();
    bool any_empty = false;
    for (std::size_t k = 0; k < k_clients; ++k) {
      std::size_t tot = 0;
      for (auto v : counts[k]) tot += v;
      if (tot == 0) {
        any_empty = true;
        redraw_row(k);
      }
    }
    if (!any_empty) break;
    if (attempt >= kMaxRedraws) throw ConvergenceError("partition: could not give every client a sample", attempt);
  }

  IndexPartition parts(k_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t k = 0; k < k_clients; ++k) {
      const std::size_t take = counts[k][c];
      parts[k].insert(parts[k].end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(pos),
                      by_class[c].begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
  }
  for (auto& p : parts) rng.shuffle(std::span<std::size_t>(p));
  return parts;
}

inline std::vector<ClientDataset> partition_class_restriction(const ClientDataset& pool, const PartitionSpec& spec,
                                                              Rng& rng) {
  return detail::materialize(pool, class_restriction_indices(pool, spec, rng));
}

inline std::vector<ClientDataset> partition_dirichlet(const ClientDataset& pool, const PartitionSpec& spec, Rng& rng) {
  return detail::materialize(pool, dirichlet_indices(pool, spec, rng));
}

inline IndexPartition partition_indices(const ClientDataset& pool, const PartitionSpec& spec, Rng& rng) {
  return spec.mode == PartitionSpec::Mode::ClassRestriction ? class_restriction_indices(pool, spec, rng)
                                                            : dirichlet_indices(pool, spec, rng);
}

/// Shannon entropy (nats) of a client's empirical label distribution.
inline double label_entropy(std::span<const int> labels, int num_classes) {
  if (labels.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int c : labels) counts[static_cast<std::size_t>(c)] += 1.0;
  double h = 0.0;
  for (double n : counts) {
    if (n == 0.0) continue;
    const double p = n / static_cast<double>(labels.size());
    h -= p * std::log(p);
  }
  return h;
}

inline std::size_t distinct_labels(std::span<const int> labels) {
  std::vector<int> v(labels.begin(), labels.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

// ---------------------------------------------------------------------------------------------
// File formats

/// Lossless text rendering of a double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

/// CSV layout: header "f0,...,f{d-1},label", one sample per line. Classification labels are
/// written as integers, regression targets as round-trippable decimals.
inline void save_csv(const ClientDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row(i)) out << format_double(v) << ',';
    if (ds.is_classification()) out << ds.labels[i];
    else out << format_double(ds.targets[i]);
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Parses the CSV layout above. `num_classes` forces classification (> 0) or regression (0);
/// when absent, integer-valued non-negative labels are read as classes.
inline ClientDataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::vector<double> feats;
  std::vector<double> labels;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (columns == 0) {
      if (cells.size() < 2 || cells.back() != "label") {
        throw ParseError("header must list feature columns followed by 'label'", line_no);
      }
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, found " + std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t j = 0; j < columns; ++j) {
      double v = 0.0;
      const auto& c = cells[j];
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size()) {
        throw ParseError("cannot parse number '" + c + "' in column " + std::to_string(j + 1), line_no);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite value in column " + std::to_string(j + 1), line_no);
      (j + 1 == columns ? labels : feats).push_back(v);
    }
  }
  if (labels.empty()) throw ParseError("empty dataset: '" + path.string() + "' has no samples", 0);
  ClientDataset ds;
  const std::size_t d = columns - 1;
  ds.features = Matrix(labels.size(), d, std::move(feats));
  bool integral = true;
  double max_label = 0.0;
  for (double v : labels) {
    if (v < 0.0 || v != std::floor(v)) integral = false;
    max_label = std::max(max_label, v);
  }
  const int classes = num_classes ? *num_classes : (integral ? static_cast<int>(max_label) + 1 : 0);
  if (classes > 0) {
    if (!integral) throw ParseError("classification labels must be non-negative integers", 0);
    ds.num_classes = std::max(classes, 2);
    for (double v : labels) ds.labels.push_back(static_cast<int>(v));
  } else {
    ds.targets = std::move(labels);
  }
  ds.validate();
  return ds;
}

inline std::vector<std::uint8_t> encode_dataset(const ClientDataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.header(io::PayloadKind::Dataset);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.i32(ds.num_classes);
  w.f64s(ds.features.data());
  if (ds.is_classification()) {
    for (int c : ds.labels) w.i32(c);
  } else {
    w.f64s(ds.targets);
  }
  return w.take();
}

inline ClientDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.header(io::PayloadKind::Dataset);
  const auto rows = r.u32();
  const auto cols = r.u32();
  ClientDataset ds;
  ds.num_classes = r.i32();
  if (rows == 0) throw ParseError("empty dataset", 0);
  ds.features = Matrix(rows, cols);
  r.f64s(ds.features.data());
  if (ds.num_classes > 0) {
    ds.labels.resize(rows);
    for (auto& c : ds.labels) c = r.i32();
  } else {
    ds.targets.resize(rows);
    r.f64s(ds.targets);
  }
  if (!r.at_end()) throw ParseError("trailing bytes after dataset payload", 0);
  ds.validate();
  return ds;
}

/// Binary fixture when the extension is ".bin", CSV otherwise.
inline void save_dataset(const ClientDataset& ds, const std::filesystem::path& path) {
  if (path.extension() == ".bin") io::write_file(path, encode_dataset(ds));
  else save_csv(ds, path);
}

inline ClientDataset load_dataset(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt) {
  if (path.extension() == ".bin") {
    const auto bytes = io::read_file(path);
    if (bytes.empty()) throw ParseError("empty dataset: '" + path.string() + "' is empty", 0);
    return decode_dataset(bytes);
  }
  return load_csv(path, num_classes);
}

}  // namespace ppfe::data
