#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ppfe/baselines.hpp"
#include "ppfe/binary.hpp"
#include "ppfe/config.hpp"
#include "ppfe/datagen.hpp"
#include "ppfe/diagnostics.hpp"
#include "ppfe/error.hpp"
#include "ppfe/fedcore.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/ppfe.hpp"
#include "ppfe/ridge.hpp"
#include "ppfe/svg.hpp"

namespace ppfe::exp {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::TaskKind;

struct RunOptions {
  fs::path out = "out";
  std::size_t threads = 1;
  bool verbose = false;
  std::ostream* log = &std::cerr;
};

// ---------------------------------------------------------------------------------------------
// Metrics

/// Sum_k n_k m_k / Sum_k n_k.
inline double weighted_mean(std::span<const double> values, std::span<const double> counts) {
  if (values.size() != counts.size()) throw DimensionError("weighted_mean: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += counts[i] * values[i];
    den += counts[i];
  }
  if (!(den > 0.0)) throw InvalidArgument("weighted_mean: total count is zero");
  return num / den;
}

struct MetricsRow {
  std::uint64_t seed = 0;
  std::string method;
  Vector client_metric;
  Vector client_n;

  double weighted() const { return weighted_mean(client_metric, client_n); }
};

/// Per-client accuracy (classification) or MSE (regression) of the first `upto` members.
inline Vector client_metric(const Ensemble& ens, const data::ClientDataset& ds, std::size_t upto = 0) {
  if (ds.is_classification()) {
    const auto pred = ensemble_classify(ens, ds.features, upto);
    double hits = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i] ? 1.0 : 0.0;
    return {hits / static_cast<double>(pred.size())};
  }
  const Matrix s = ensemble_scores(ens, ds.features, upto);
  double sse = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double e = s(i, 0) - ds.targets[i];
    sse += e * e;
  }
  return {sse / static_cast<double>(s.rows())};
}

inline MetricsRow evaluate(const std::vector<Ensemble>& ens, const std::vector<data::ClientDataset>& sets,
                           std::size_t upto = 0) {
  MetricsRow r;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    if (sets[k].size() == 0) continue;
    r.client_metric.push_back(client_metric(ens[k], sets[k], upto)[0]);
    r.client_n.push_back(static_cast<double>(sets[k].size()));
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// CSV helpers

inline std::string num(double v) { return data::format_double(v); }

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("missing column '" + name + "'", 1);
  }
  bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }
};

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(path.filename().string() + ": expected " + std::to_string(t.header.size()) + " cells, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ParseError(path.filename().string() + ": empty file", 0);
  return t;
}

inline double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("not a number: '" + s + "'", 0);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("not a number: '" + s + "'", 0);
  }
}

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
 private:
  fs::path path_;
  std::ofstream out_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
}

// ---------------------------------------------------------------------------------------------
// Federated data and models

struct FederatedData {
  std::vector<data::ClientDataset> train;
  std::vector<data::ClientDataset> test;
  std::size_t dim = 0;
  int num_classes = 0;  // 0 for regression
};

namespace detail {

inline void split_train_test(const data::ClientDataset& pool, const data::IndexPartition& parts, double test_fraction,
                             FederatedData& out) {
  for (const auto& p : parts) {
    if (p.empty()) throw InvalidArgument("partition produced an empty client");
    auto ntest = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(p.size())));
    ntest = std::min(ntest, p.size() - 1);
    const std::vector<std::size_t> a(p.begin(), p.end() - static_cast<std::ptrdiff_t>(ntest));
    const std::vector<std::size_t> b(p.end() - static_cast<std::ptrdiff_t>(ntest), p.end());
    out.train.push_back(pool.subset(a));
    out.test.push_back(pool.subset(b));
  }
}

inline data::IndexPartition iid_indices(std::size_t n, std::size_t clients, std::size_t per_client, Rng& rng) {
  if (clients == 0 || n < clients) throw InvalidArgument("partition: fewer samples than clients");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  const std::size_t each = per_client > 0 ? per_client : n / clients;
  if (each * clients > n) throw InvalidArgument("partition: not enough samples for the requested client size");
  data::IndexPartition parts(clients);
  for (std::size_t k = 0; k < clients; ++k) parts[k].assign(perm.begin() + k * each, perm.begin() + (k + 1) * each);
  return parts;
}

inline data::IndexPartition partition_pool(const data::ClientDataset& pool, const config::PartitionConfig& pc,
                                           std::size_t clients, std::size_t per_client, Rng& rng) {
  using Mode = config::PartitionConfig::Mode;
  if (pc.mode == Mode::Iid) return iid_indices(pool.size(), clients, per_client, rng);
  if (!pool.is_classification()) throw ConfigError("/partition/mode", "label-based partitions need a classification dataset");
  data::PartitionSpec ps;
  ps.clients = clients;
  ps.classes_per_client = pc.classes_per_client;
  ps.alpha = pc.alpha;
  ps.samples_per_client = per_client;
  ps.mode = pc.mode == Mode::Dirichlet ? data::PartitionSpec::Mode::Dirichlet : data::PartitionSpec::Mode::ClassRestriction;
  if (ps.mode == data::PartitionSpec::Mode::ClassRestriction &&
      pc.classes_per_client > static_cast<std::size_t>(pool.num_classes)) {
    throw ConfigError("/partition/classes_per_client", "exceeds the number of classes");
  }
  return data::partition_indices(pool, ps, rng);
}

}  // namespace detail

/// Client train and test sets for one seed. Synthetic pools come from Rng(seed); the partition
/// uses its "partition" stream.
inline FederatedData make_federated_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Rng root(seed);
  Rng pr = root.derive("partition");
  FederatedData d;
  if (cfg.task == TaskKind::SyntheticClassification) {
    const auto& c = cfg.classification;
    const std::size_t per = c.train_per_client + c.test_per_client;
    const bool dirichlet = cfg.partition.mode == config::PartitionConfig::Mode::Dirichlet;
    const data::ClientDataset pool = data::gen_synthetic_classification(c.clients, per, c.dim, c.classes, c.class_sep, root,
                                                                        dirichlet ? 1.0 : c.headroom);
    const auto parts = detail::partition_pool(pool, cfg.partition, c.clients, dirichlet ? 0 : per, pr);
    if (dirichlet) {
      detail::split_train_test(pool, parts, static_cast<double>(c.test_per_client) / static_cast<double>(per), d);
    } else {
      for (const auto& p : parts) {
        const std::vector<std::size_t> a(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(c.train_per_client));
        const std::vector<std::size_t> b(p.begin() + static_cast<std::ptrdiff_t>(c.train_per_client), p.end());
        d.train.push_back(pool.subset(a));
        d.test.push_back(pool.subset(b));
      }
    }
    d.dim = c.dim;
    d.num_classes = c.classes;
  } else if (cfg.task == TaskKind::File) {
    const auto& f = cfg.file;
    const data::ClientDataset pool = data::load_csv(f.path, f.num_classes);
    const auto parts = detail::partition_pool(pool, cfg.partition, f.clients, cfg.partition.samples_per_client, pr);
    detail::split_train_test(pool, parts, f.test_fraction, d);
    d.dim = pool.dim();
    d.num_classes = pool.num_classes;
  } else {
    throw ConfigError("/task", "this subcommand needs a classification or file task");
  }
  return d;
}

inline nn::Model make_model(const ExperimentConfig& cfg, const FederatedData& d, std::uint64_t seed) {
  std::vector<std::size_t> widths{d.dim};
  widths.insert(widths.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  widths.push_back(d.num_classes > 0 ? static_cast<std::size_t>(d.num_classes) : 1);
  Rng ir = Rng(seed).derive("init");
  return nn::make_mlp(widths, cfg.model.activation, ir);
}

/// Rejects plans the architecture cannot carry, pointing at the offending config node.
inline void check_plan(const StagePlan& plan, const nn::Model& model, const std::string& ptr) {
  const auto lin = nn::linear_layer_indices(model);
  try {
    plan.validate(lin.size());
  } catch (const InvalidArgument& e) {
    throw ConfigError(ptr, e.what());
  }
  for (std::size_t t = 0; t < plan.size(); ++t) {
    const auto& s = plan.stages[t];
    const auto& r = s.reduction;
    if (r.kind != Reduction::Kind::LowRank) continue;
    const std::string p = ptr + "/" + std::to_string(t) + "/reduction/ranks";
    if (r.ranks.size() > s.personal_layers) throw ConfigError(p, "more ranks than personalized layers");
    for (std::size_t i = 0; i < r.ranks.size(); ++i) {
      const auto& layer = model.layers[lin[lin.size() - s.personal_layers + i]];
      if (r.ranks[i] > std::min(nn::out_dim(layer), nn::in_dim(layer))) {
        throw ConfigError(p + "/" + std::to_string(i), "rank exceeds the layer's smaller dimension");
      }
    }
  }
}

inline fed::FedConfig fed_config(const ExperimentConfig& cfg, const FederatedData& d, std::uint64_t seed,
                                 std::size_t threads) {
  fed::FedConfig f = cfg.fed;
  f.seed = seed;
  f.threads = threads;
  f.rounds = cfg.round_budget;
  f.loss = d.num_classes > 0 ? nn::LossKind::CrossEntropy : nn::LossKind::MSE;
  return f;
}

inline PpfeOptions ppfe_options(const ExperimentConfig& cfg, const config::MethodConfig& m, const FederatedData& d) {
  PpfeOptions o = m.options;
  if (d.num_classes == 0) {
    if (cfg.explicit_loss && *cfg.explicit_loss != ReweightLoss::Squared) {
      throw ConfigError("/ppfe/reweight_loss", "regression data needs the squared reweight loss");
    }
    o.loss = ReweightLoss::Squared;
  } else if (o.loss == ReweightLoss::Squared) {
    throw ConfigError("/ppfe/reweight_loss", "classification data needs zero-one or cross-entropy");
  }
  return o;
}

inline baselines::MethodResult run_method(const ExperimentConfig& cfg, const config::MethodConfig& m,
                                          const FederatedData& d, const nn::Model& init, const fed::FedConfig& f) {
  if (m.is_ppfe || m.baseline.kind == baselines::Kind::AblationWP || m.baseline.kind == baselines::Kind::AblationWPW) {
    check_plan(m.plan, init, m.plan_pointer);
  }
  if (m.baseline.kind == baselines::Kind::FixedHead && !m.is_ppfe &&
      m.baseline.personal_depth > nn::linear_layer_indices(init).size()) {
    throw ConfigError(m.pointer + "/depth", "head depth exceeds the number of layers");
  }
  const PpfeOptions o = ppfe_options(cfg, m, d);
  baselines::MethodResult r = m.is_ppfe ? baselines::run_ppfe_method(d.train, init, m.plan, f, o, m.name)
                                        : baselines::run_baseline(d.train, init, m.baseline, f, &m.plan, o);
  r.name = m.name;
  // Every federated method must have consumed exactly the round budget.
  if (m.baseline.kind != baselines::Kind::LocalOnly || m.is_ppfe) {
    std::set<std::size_t> rounds;
    for (const auto& rep : r.rounds) rounds.insert(rep.round);
    if (rounds.size() != cfg.round_budget) {
      throw Error("method '" + m.name + "' ran " + std::to_string(rounds.size()) + " rounds, budget is " +
                  std::to_string(cfg.round_budget));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Ensemble checkpoints

/// Writes member_<t>.bin for every stage plus betas.csv (stage,beta) into `dir`.
inline void save_ensemble(const Ensemble& ens, const fs::path& dir) {
  fs::create_directories(dir);
  CsvWriter betas(dir / "betas.csv");
  betas.row({"stage", "beta"});
  for (std::size_t t = 0; t < ens.stages.size(); ++t) {
    io::save_model(ens.stages[t], dir / ("member_" + std::to_string(t + 1) + ".bin"));
    betas.row({std::to_string(t + 1), num(ens.betas[t])});
  }
}

inline Ensemble load_ensemble(const fs::path& dir) {
  const Table t = read_table(dir / "betas.csv");
  const std::size_t cs = t.column("stage"), cb = t.column("beta");
  Ensemble ens;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][cs] != std::to_string(i + 1)) throw ParseError("betas.csv: stages must be 1, 2, ...", i + 2);
    ens.betas.push_back(to_double(t.rows[i][cb]));
    ens.stages.push_back(io::load_model(dir / ("member_" + std::to_string(i + 1) + ".bin")));
  }
  if (ens.stages.empty()) throw ParseError("betas.csv: no stages", 0);
  return ens;
}

// ---------------------------------------------------------------------------------------------
// Rendering from CSV outputs

namespace detail {

struct Stat {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline Stat stat_of(const std::vector<double>& v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

/// Methods in order of first appearance.
inline std::vector<std::string> method_order(const Table& t) {
  std::vector<std::string> out;
  const std::size_t cm = t.column("method");
  for (const auto& r : t.rows)
    if (std::find(out.begin(), out.end(), r[cm]) == out.end()) out.push_back(r[cm]);
  return out;
}

inline std::string metric_column(const Table& t) {
  for (const char* c : {"test_mse", "test_accuracy"})
    if (t.has(c)) return c;
  throw ParseError("metrics.csv: no test metric column", 1);
}

inline void render_sweep(const Table& m, const fs::path& out) {
  const std::string metric = metric_column(m);
  const std::size_t cm = m.column("method"), ck = m.column("K"), cr = m.column("r_p"), cc = m.column("client_id"),
                    cv = m.column(metric);
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> cells;
  std::vector<std::string> ks, rps;
  for (const auto& r : m.rows) {
    if (r[cc] != "weighted_mean") continue;
    cells[{r[cm], r[ck], r[cr]}].push_back(to_double(r[cv]));
    if (std::find(ks.begin(), ks.end(), r[ck]) == ks.end()) ks.push_back(r[ck]);
    if (std::find(rps.begin(), rps.end(), r[cr]) == rps.end()) rps.push_back(r[cr]);
  }
  const auto methods = method_order(m);
  CsvWriter sum(out / "summary.csv");
  sum.row({"method", "K", "r_p", "mean_" + metric, "std_" + metric, "seeds"});
  for (const auto& meth : methods)
    for (const auto& k : ks)
      for (const auto& rp : rps) {
        auto it = cells.find({meth, k, rp});
        if (it == cells.end()) continue;
        const Stat s = stat_of(it->second);
        sum.row({meth, k, rp, num(s.mean), num(s.sd), std::to_string(s.n)});
      }

  fs::create_directories(out / "plots");
  auto plot = [&](bool over_k, const std::string& fixed, const std::string& file) {
    std::vector<svg::Series> series;
    for (const auto& meth : methods) {
      svg::Series s;
      s.name = meth;
      for (const auto& v : over_k ? ks : rps) {
        if (!over_k && v == "random") continue;
        auto it = cells.find(over_k ? std::make_tuple(meth, v, fixed) : std::make_tuple(meth, fixed, v));
        if (it == cells.end()) continue;
        const Stat st = stat_of(it->second);
        s.x.push_back(to_double(v));
        s.y.push_back(st.mean);
        s.err.push_back(st.sd);
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    if (series.empty()) return;
    svg::PlotMeta meta;
    meta.title = over_k ? "Test MSE vs number of clients (r_p = " + fixed + ")" : "Test MSE vs personalization ratio (K = " + fixed + ")";
    meta.xlabel = over_k ? "clients K" : "personalization ratio r_p";
    meta.ylabel = "test MSE";
    write_text(out / "plots" / file, svg::plot_svg(series, meta));
  };
  if (ks.size() > 1)
    for (const auto& rp : rps) plot(true, rp, rps.size() == 1 ? "mse_vs_clients.svg" : "mse_vs_clients_rp" + rp + ".svg");
  if (rps.size() > 1)
    for (const auto& k : ks) plot(false, k, ks.size() == 1 ? "mse_vs_ratio.svg" : "mse_vs_ratio_K" + k + ".svg");
  if (ks.size() == 1 && rps.size() == 1) plot(true, rps.front(), "mse_vs_clients.svg");
}

inline void render_federated(const Table& m, const fs::path& out) {
  const std::string metric = metric_column(m);
  const std::size_t cm = m.column("method"), cc = m.column("client_id"), cv = m.column(metric);
  std::map<std::string, std::vector<double>> finals;
  for (const auto& r : m.rows)
    if (r[cc] == "weighted_mean") finals[r[cm]].push_back(to_double(r[cv]));
  const auto methods = method_order(m);
  CsvWriter sum(out / "summary.csv");
  sum.row({"method", "mean_" + metric, "std_" + metric, "seeds"});
  for (const auto& meth : methods) {
    const Stat s = stat_of(finals[meth]);
    sum.row({meth, num(s.mean), num(s.sd), std::to_string(s.n)});
  }
  fs::create_directories(out / "plots");

  if (fs::exists(out / "stages.csv")) {
    const Table st = read_table(out / "stages.csv");
    const std::size_t sm = st.column("method"), ss = st.column("stage"), sv = st.column(metric);
    std::map<std::string, std::map<std::size_t, std::vector<double>>> by;
    std::size_t tmax = 1;
    for (const auto& r : st.rows) {
      const auto t = static_cast<std::size_t>(to_double(r[ss]));
      by[r[sm]][t].push_back(to_double(r[sv]));
      tmax = std::max(tmax, t);
    }
    std::vector<svg::Series> series;
    for (const auto& meth : method_order(st)) {
      svg::Series s;
      s.name = meth;
      const auto& per = by[meth];
      for (std::size_t t = 1; t <= tmax; ++t) {
        // Single-stage methods are drawn flat across the stage axis.
        auto it = per.size() == 1 ? per.begin() : per.find(t);
        if (it == per.end()) continue;
        const Stat x = stat_of(it->second);
        s.x.push_back(static_cast<double>(t));
        s.y.push_back(x.mean);
        s.err.push_back(x.sd);
      }
      series.push_back(std::move(s));
    }
    svg::PlotMeta meta;
    meta.title = "Test metric of the partial ensemble by stage";
    meta.xlabel = "stage";
    meta.ylabel = metric == "test_accuracy" ? "weighted test accuracy" : "weighted test MSE";
    write_text(out / "plots" / "stages.svg", svg::plot_svg(series, meta));
  }

  if (fs::exists(out / "rounds.csv")) {
    const Table rt = read_table(out / "rounds.csv");
    if (!rt.rows.empty()) {
      const std::size_t rm = rt.column("method"), rr = rt.column("round"), rl = rt.column("mean_weighted_loss");
      std::map<std::string, std::map<double, std::vector<double>>> by;
      for (const auto& r : rt.rows) by[r[rm]][to_double(r[rr])].push_back(to_double(r[rl]));
      std::vector<svg::Series> series;
      for (const auto& meth : method_order(rt)) {
        svg::Series s;
        s.name = meth;
        for (const auto& [round, v] : by[meth]) {
          const Stat x = stat_of(v);
          s.x.push_back(round + 1.0);
          s.y.push_back(x.mean);
          s.err.push_back(x.sd);
        }
        series.push_back(std::move(s));
      }
      svg::PlotMeta meta;
      meta.title = "Mean weighted training loss of participants";
      meta.xlabel = "round";
      meta.ylabel = "training loss";
      write_text(out / "plots" / "rounds.svg", svg::plot_svg(series, meta));
    }
  }
}

}  // namespace detail

/// Writes summary.csv and plots/*.svg from the CSV files already in `out`.
inline void render_outputs(const fs::path& out) {
  const Table m = read_table(out / "metrics.csv");
  if (m.has("K")) detail::render_sweep(m, out);
  else detail::render_federated(m, out);
}

// ---------------------------------------------------------------------------------------------
// Subcommands

inline void log_line(const RunOptions& ro, const std::string& s) {
  if (ro.verbose && ro.log) *ro.log << s << '\n';
}

inline std::string ratio_label(const std::optional<double>& r) { return r ? num(*r) : "random"; }

/// Ridge sweep over client counts and personalization ratios.
inline void run_synthetic(const ExperimentConfig& cfg, const RunOptions& ro) {
  if (cfg.task != TaskKind::SyntheticRegression) throw ConfigError("/task", "synthetic needs the synthetic-regression task");
  fs::create_directories(ro.out);
  const auto& rs = cfg.regression;
  {
  CsvWriter metrics(ro.out / "metrics.csv");
  metrics.row({"seed", "method", "K", "r_p", "client_id", "n", "test_mse"});
  for (const auto seed : cfg.seeds)
    for (const auto k : rs.clients)
      for (const auto& rp : rs.ratios) {
        data::SyntheticRegressionSpec spec = rs.base;
        spec.clients = k;
        spec.personalization_ratio = rp;
        const auto d = ridge::make_linear_data(spec, Rng(seed));
        for (const auto& name : rs.methods) {
          ridge::LinearMethod m = name == "local" ? ridge::LinearMethod::local()
                                  : name == "fedavg" ? ridge::LinearMethod::fedavg()
                                                     : ridge::LinearMethod::ppfe(rs.stages);
          m.schedule_factor = rs.schedule_factor;
          m.reweighting = rs.reweighting;
          const auto r = ridge::run_linear_method(d, m, rs.options);
          const std::vector<std::string> key{std::to_string(seed), name, std::to_string(k), ratio_label(rp)};
          for (std::size_t c = 0; c < r.client_mse.size(); ++c) {
            auto row = key;
            row.insert(row.end(), {std::to_string(c), num(r.client_n[c]), num(r.client_mse[c])});
            metrics.row(row);
          }
          auto row = key;
          row.insert(row.end(), {"weighted_mean", num(std::accumulate(r.client_n.begin(), r.client_n.end(), 0.0)),
                                 num(weighted_mean(r.client_mse, r.client_n))});
          metrics.row(row);
          log_line(ro, "seed " + std::to_string(seed) + " K=" + std::to_string(k) + " r_p=" + ratio_label(rp) + " " +
                           name + " mse=" + num(r.mean_mse));
        }
      }
  }
  render_outputs(ro.out);
}

/// Federated comparison of the configured methods over all seeds. `ablation` only changes the
/// default method list (resolved at config load).
inline void run_federated(const ExperimentConfig& cfg, const RunOptions& ro) {
  fs::create_directories(ro.out);
  const bool cls = cfg.task != TaskKind::SyntheticRegression;
  if (!cls) throw ConfigError("/task", "federated runs need a classification or file task");
  std::string metric;
  {
    std::ofstream metrics_f(ro.out / "metrics.csv", std::ios::binary), stages_f(ro.out / "stages.csv", std::ios::binary),
        rounds_f(ro.out / "rounds.csv", std::ios::binary);
    if (!metrics_f || !stages_f || !rounds_f) throw IoError("cannot write into '" + ro.out.string() + "'");
    auto put = [](std::ofstream& o, const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? "," : "") << cells[i];
      o << '\n';
    };
    bool header = false;
    for (const auto seed : cfg.seeds) {
      const auto d = make_federated_data(cfg, seed);
      if (!header) {
        metric = d.num_classes > 0 ? "test_accuracy" : "test_mse";
        const std::string train_metric = d.num_classes > 0 ? "train_accuracy" : "train_mse";
        put(metrics_f, {"seed", "method", "client_id", "n", metric});
        put(stages_f, {"seed", "method", "stage", "personal_layers", "shared_params", "personal_params", "shared_fraction",
                       "mean_beta", train_metric, metric});
        put(rounds_f, {"seed", "method", "stage", "round", "participants", "shared_params_per_client",
                       "mean_weighted_loss"});
        header = true;
      }
      const nn::Model init = make_model(cfg, d, seed);
      const fed::FedConfig f = fed_config(cfg, d, seed, ro.threads);
      for (const auto& m : cfg.methods) {
        const auto r = run_method(cfg, m, d, init, f);
        const std::string s = std::to_string(seed);
        const MetricsRow row = [&] {
          MetricsRow x = evaluate(r.ensembles, d.test);
          x.seed = seed;
          x.method = r.name;
          return x;
        }();
        std::size_t c = 0;
        for (std::size_t k = 0; k < d.test.size(); ++k) {
          if (d.test[k].size() == 0) continue;
          put(metrics_f, {s, r.name, std::to_string(k), num(row.client_n[c]), num(row.client_metric[c])});
          ++c;
        }
        put(metrics_f, {s, r.name, "weighted_mean",
                        num(std::accumulate(row.client_n.begin(), row.client_n.end(), 0.0)), num(row.weighted())});

        const std::size_t stages = r.ensembles.front().stages.size();
        for (std::size_t t = 1; t <= stages; ++t) {
          const nn::Model& mt = r.ensembles.front().stages[t - 1];
          const auto shared = nn::parameter_count(mt, nn::Partition::Shared);
          const auto personal = nn::parameter_count(mt, nn::Partition::Personal);
          double beta = 1.0;
          if (!r.stages.empty()) beta = r.stages[t - 1].mean_beta;
          const double tr = evaluate(r.ensembles, d.train, t).weighted();
          const double te = evaluate(r.ensembles, d.test, t).weighted();
          put(stages_f, {s, r.name, std::to_string(t), std::to_string(nn::personal_depth(mt)), std::to_string(shared),
                         std::to_string(personal),
                         num(static_cast<double>(shared) / static_cast<double>(shared + personal)), num(beta), num(tr),
                         num(te)});
        }
        for (const auto& rep : r.rounds) {
          put(rounds_f, {s, r.name, std::to_string(rep.stage), std::to_string(rep.round),
                         std::to_string(rep.participants.size()), std::to_string(rep.shared_params_per_client),
                         num(rep.mean_weighted_loss)});
        }
        if (cfg.save_ensembles) {
          for (std::size_t k = 0; k < r.ensembles.size(); ++k) {
            save_ensemble(r.ensembles[k],
                          ro.out / "checkpoints" / ("seed_" + s) / r.name / ("client_" + std::to_string(k)));
          }
        }
        log_line(ro, "seed " + s + " " + r.name + " " + metric + "=" + num(row.weighted()));
      }
    }
  }
  render_outputs(ro.out);
}

/// Per-client sample and label statistics of the partition for every seed.
inline void run_partition_stats(const ExperimentConfig& cfg, const RunOptions& ro, std::ostream& os) {
  fs::create_directories(ro.out);
  CsvWriter csv(ro.out / "partition.csv");
  csv.row({"seed", "client_id", "n_train", "n_test", "distinct_labels", "label_entropy"});
  for (const auto seed : cfg.seeds) {
    const auto d = make_federated_data(cfg, seed);
    double ent = 0.0, distinct = 0.0, total = 0.0;
    for (std::size_t k = 0; k < d.train.size(); ++k) {
      const auto& tr = d.train[k];
      const auto& te = d.test[k];
      std::vector<int> all = tr.labels;
      all.insert(all.end(), te.labels.begin(), te.labels.end());
      const double e = d.num_classes > 0 ? data::label_entropy(all, d.num_classes) : 0.0;
      const double u = d.num_classes > 0 ? static_cast<double>(data::distinct_labels(all)) : 0.0;
      ent += e;
      distinct += u;
      total += static_cast<double>(tr.size() + te.size());
      csv.row({std::to_string(seed), std::to_string(k), std::to_string(tr.size()), std::to_string(te.size()), num(u),
               num(e)});
    }
    const double kc = static_cast<double>(d.train.size());
    os << "seed " << seed << ": clients " << d.train.size() << ", samples " << num(total) << ", mean distinct labels "
       << num(distinct / kc) << ", mean label entropy " << num(ent / kc) << '\n';
  }
}

/// Capacity terms of the configured plan on the configured architecture.
inline void run_bound(const ExperimentConfig& cfg, const RunOptions& ro, std::ostream& os) {
  fs::create_directories(ro.out);
  const std::uint64_t seed = cfg.seeds.front();
  const auto d = make_federated_data(cfg, seed);
  const nn::Model base = make_model(cfg, d, seed);
  StagePlan plan = cfg.plan;
  if (cfg.bound.base_width) {
    std::vector<std::size_t> rounds;
    for (const auto& s : plan.stages) rounds.push_back(s.rounds);
    plan = diagnostics::width_schedule_plan(base, rounds, *cfg.bound.base_width, cfg.bound.alpha);
  }
  check_plan(plan, base, "/ppfe/stages");
  std::vector<std::size_t> sizes;
  for (const auto& t : d.train) sizes.push_back(t.size());
  const double nh = diagnostics::harmonic_mean(sizes);
  const auto rep = diagnostics::capacity_report(plan, base, sizes);
  os << "clients " << sizes.size() << '\n';
  os << "n_harm " << num(nh) << '\n';
  if (cfg.bound.base_width) {
    os << "width schedule (W_b=" << *cfg.bound.base_width << ", alpha=" << num(cfg.bound.alpha) << "):";
    for (auto w : diagnostics::width_schedule(*cfg.bound.base_width, cfg.bound.alpha, plan.size())) os << ' ' << w;
    os << '\n';
  }
  os << "stage personal_layers D_t D'_t personal_params shared_params sqrt(D_t/n_harm) sqrt(D'_t/(K*n_harm))\n";
  CsvWriter csv(ro.out / "bound.csv");
  csv.row({"stage", "personal_layers", "D_t", "D_prime_t", "personal_params", "shared_params", "personal_term",
           "shared_term"});
  for (const auto& c : rep) {
    const std::vector<std::string> cells{std::to_string(c.stage), std::to_string(c.personal_layers),
                                         std::to_string(c.personal_dense), std::to_string(c.shared_dense),
                                         std::to_string(c.personal_actual), std::to_string(c.shared_actual),
                                         num(c.personal_term), num(c.shared_term)};
    csv.row(cells);
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? " " : "") << cells[i];
    os << '\n';
  }
  if (cfg.bound.gamma) {
    os << "bias bound exp(-2 gamma^2 T) = " << num(bias_bound(*cfg.bound.gamma, plan.size())) << '\n';
  }
}

}  // namespace ppfe::exp
