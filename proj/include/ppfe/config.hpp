#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppfe/baselines.hpp"
#include "ppfe/datagen.hpp"
#include "ppfe/error.hpp"
#include "ppfe/fedcore.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/ppfe.hpp"
#include "ppfe/ridge.hpp"

namespace ppfe::config {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Strict JSON object reader

inline std::string pointer_escape(const std::string& key) {
  std::string o;
  for (char c : key) {
    if (c == '~') o += "~0";
    else if (c == '/') o += "~1";
    else o += c;
  }
  return o;
}

/// Reads one JSON object, remembering which keys were consumed so that `finish` can reject
/// the rest.
class Obj {
 public:
  Obj(const json& j, std::string ptr) : j_(&j), ptr_(std::move(ptr)) {
    if (!j.is_object()) throw ConfigError(where(), "expected an object");
  }

  const std::string& pointer() const noexcept { return ptr_; }
  std::string where() const { return ptr_.empty() ? "/" : ptr_; }
  std::string at(const std::string& key) const { return ptr_ + "/" + pointer_escape(key); }

  bool has(const std::string& key) const { return j_->contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_->at(key);
  }

  template <typename T>
  T req(const std::string& key) {
    if (!has(key)) throw ConfigError(at(key), "required key is missing");
    return convert<T>(raw(key), at(key));
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(raw(key), at(key));
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(raw(key), at(key));
  }

  Obj child(const std::string& key) { return Obj(raw(key), at(key)); }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& ptr);

 private:
  const json* j_;
  std::string ptr_;
  std::set<std::string> used_;
};

template <typename T>
T Obj::convert(const json& v, const std::string& ptr) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(ptr, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(ptr, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) throw ConfigError(ptr, "expected a non-negative integer");
      return static_cast<T>(v.get<std::int64_t>());
    }
    throw ConfigError(ptr, "expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(ptr, "expected a number");
    return static_cast<T>(v.get<double>());
  } else {
    // std::vector<U>; a scalar is accepted as a one-element list.
    using U = typename T::value_type;
    T out;
    if (!v.is_array()) {
      out.push_back(convert<U>(v, ptr));
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<U>(v[i], ptr + "/" + std::to_string(i)));
    return out;
  }
}

// ---------------------------------------------------------------------------------------------
// Experiment configuration

enum class TaskKind { SyntheticRegression, SyntheticClassification, File };

struct RegressionSweep {
  data::SyntheticRegressionSpec base;
  std::vector<std::size_t> clients{100};
  std::vector<std::optional<double>> ratios{0.5};  // nullopt: r_p ~ U(0, 1) per client
  std::size_t stages = 4;
  double schedule_factor = 4.0;
  bool reweighting = true;
  ridge::LinearOptions options;
  std::vector<std::string> methods{"local", "fedavg", "ppfe"};
};

struct ClassificationData {
  std::size_t clients = 100;
  std::size_t train_per_client = 150;
  std::size_t test_per_client = 50;
  std::size_t dim = 60;
  int classes = 10;
  double class_sep = 3.0;
  double headroom = 2.0;
};

struct FileData {
  std::filesystem::path path;
  std::optional<int> num_classes;
  std::size_t clients = 10;
  double test_fraction = 0.25;
};

struct PartitionConfig {
  enum class Mode { ClassRestriction, Dirichlet, Iid };
  Mode mode = Mode::ClassRestriction;
  std::size_t classes_per_client = 2;
  double alpha = 1.0;
  /// File task with class restriction: samples per client (0 spreads the pool evenly).
  std::size_t samples_per_client = 0;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 32, 16};
  nn::Activation activation = nn::Activation::ReLU;
};

struct MethodConfig {
  std::string name;
  bool is_ppfe = false;
  baselines::BaselineSpec baseline;
  StagePlan plan;
  PpfeOptions options;
  std::string pointer;  // where the method was declared
  std::string plan_pointer;
};

struct BoundConfig {
  std::optional<std::size_t> base_width;
  double alpha = 0.0;
  std::optional<double> gamma;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::SyntheticClassification;
  std::vector<std::uint64_t> seeds;
  std::optional<std::filesystem::path> output;
  RegressionSweep regression;
  ClassificationData classification;
  FileData file;
  PartitionConfig partition;
  ModelConfig model;
  fed::FedConfig fed;
  std::size_t round_budget = 40;
  StagePlan plan;
  PpfeOptions ppfe;
  std::optional<ReweightLoss> explicit_loss;
  std::vector<MethodConfig> methods;
  bool methods_given = false;
  bool save_ensembles = false;
  BoundConfig bound;
};

/// Seed used when the config has no seed list: PPFE_SEED if set, else 0.
inline std::uint64_t default_seed() {
  if (const char* s = std::getenv("PPFE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw ConfigError("/seeds", "PPFE_SEED is not a non-negative integer");
    return v;
  }
  return 0;
}

namespace detail {

inline nn::Activation parse_activation(const std::string& s, const std::string& ptr) {
  if (s == "relu") return nn::Activation::ReLU;
  if (s == "tanh") return nn::Activation::Tanh;
  if (s == "identity") return nn::Activation::Identity;
  throw ConfigError(ptr, "unknown activation '" + s + "' (relu, tanh, identity)");
}

inline ReweightLoss parse_loss(const std::string& s, const std::string& ptr) {
  if (s == "zero-one") return ReweightLoss::ZeroOne;
  if (s == "cross-entropy") return ReweightLoss::CrossEntropy;
  if (s == "squared") return ReweightLoss::Squared;
  throw ConfigError(ptr, "unknown reweight loss '" + s + "' (zero-one, cross-entropy, squared)");
}

inline WeightUpdateSign parse_sign(const std::string& s, const std::string& ptr) {
  if (s == "upweight") return WeightUpdateSign::UpweightLoss;
  if (s == "downweight") return WeightUpdateSign::DownweightLoss;
  throw ConfigError(ptr, "unknown weight update sign '" + s + "' (upweight, downweight)");
}

inline void positive(double v, const std::string& ptr) {
  if (!(v > 0.0)) throw ConfigError(ptr, "must be positive");
}

inline void positive(std::size_t v, const std::string& ptr) {
  if (v == 0) throw ConfigError(ptr, "must be positive");
}

inline Reduction parse_reduction(Obj o) {
  Reduction r;
  const auto kind = o.get<std::string>("kind", "none");
  if (kind == "none") r.kind = Reduction::Kind::None;
  else if (kind == "low-rank") r.kind = Reduction::Kind::LowRank;
  else if (kind == "mask") r.kind = Reduction::Kind::Mask;
  else throw ConfigError(o.at("kind"), "unknown reduction '" + kind + "' (none, low-rank, mask)");
  r.ranks = o.get<std::vector<std::size_t>>("ranks", {});
  r.initial_fraction = o.get<double>("initial_fraction", r.initial_fraction);
  r.increment_fraction = o.get<double>("increment_fraction", r.increment_fraction);
  r.mask_seed = o.get<std::uint64_t>("mask_seed", 0);
  for (double f : {r.initial_fraction, r.increment_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(o.where(), "mask fractions must lie in [0, 1]");
  }
  o.finish();
  return r;
}

inline StagePlan parse_stages(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) throw ConfigError(ptr, "expected a non-empty list of stages");
  StagePlan plan;
  for (std::size_t t = 0; t < v.size(); ++t) {
    Obj s(v[t], ptr + "/" + std::to_string(t));
    StageSpec spec;
    spec.rounds = s.req<std::size_t>("rounds");
    positive(spec.rounds, s.at("rounds"));
    spec.personal_layers = s.get<std::size_t>("personal_layers", t);
    if (s.has("reduction")) spec.reduction = parse_reduction(s.child("reduction"));
    spec.lr = s.opt<double>("lr");
    spec.body_lr = s.opt<double>("body_lr");
    if (spec.lr) positive(*spec.lr, s.at("lr"));
    if (spec.body_lr && !(*spec.body_lr >= 0.0)) throw ConfigError(s.at("body_lr"), "must be non-negative");
    s.finish();
    if (t == 0 && spec.personal_layers != 0) throw ConfigError(s.at("personal_layers"), "stage 1 must be fully shared");
    if (t > 0 && spec.personal_layers < plan.stages.back().personal_layers) {
      throw ConfigError(s.at("personal_layers"), "personal depth must be non-decreasing");
    }
    plan.stages.push_back(std::move(spec));
  }
  return plan;
}

inline PpfeOptions parse_ppfe_options(Obj& o, PpfeOptions base, std::optional<ReweightLoss>& explicit_loss) {
  base.reweighting = o.get<bool>("reweighting", base.reweighting);
  if (o.has("reweight_loss")) {
    base.loss = parse_loss(o.req<std::string>("reweight_loss"), o.at("reweight_loss"));
    explicit_loss = base.loss;
  }
  if (o.has("sign")) base.sign = parse_sign(o.req<std::string>("sign"), o.at("sign"));
  base.eps_clamp = o.get<double>("eps_clamp", base.eps_clamp);
  if (!(base.eps_clamp > 0.0 && base.eps_clamp < 0.5)) throw ConfigError(o.at("eps_clamp"), "must lie in (0, 0.5)");
  base.ce_clip = o.get<double>("ce_clip", base.ce_clip);
  return base;
}

inline StagePlan default_plan() {
  const std::vector<std::size_t> rounds{20, 10, 5, 5};
  return progressive_plan(rounds);
}

inline MethodConfig parse_method(const json& v, const std::string& ptr, const ExperimentConfig& cfg) {
  MethodConfig m;
  m.pointer = ptr;
  m.plan = cfg.plan;
  m.options = cfg.ppfe;
  m.plan_pointer = "/ppfe/stages";
  std::string kind;
  std::optional<Obj> o;
  if (v.is_string()) {
    kind = v.get<std::string>();
  } else if (v.is_object()) {
    o.emplace(v, ptr);
    kind = o->req<std::string>("kind");
  } else {
    throw ConfigError(ptr, "expected a method name or object");
  }
  using baselines::BaselineSpec;
  if (kind == "ppfe") {
    m.is_ppfe = true;
    m.name = "ppfe";
    if (o && o->has("stages")) {
      m.plan = parse_stages(o->raw("stages"), o->at("stages"));
      m.plan_pointer = o->at("stages");
    }
    if (o) {
      std::optional<ReweightLoss> unused;
      m.options = parse_ppfe_options(*o, m.options, unused);
    }
  } else if (kind == "local") {
    m.baseline = BaselineSpec::local_only();
  } else if (kind == "fedavg") {
    m.baseline = BaselineSpec::fedavg();
  } else if (kind == "fedavg-ft") {
    m.baseline = BaselineSpec::fedavg_ft(o ? o->get<std::size_t>("ft_epochs", 5) : 5);
  } else if (kind == "fixed-head") {
    if (!o) throw ConfigError(ptr, "fixed-head needs an object with a depth");
    const auto depth = o->req<std::size_t>("depth");
    const auto mode_s = o->get<std::string>("mode", "joint");
    baselines::HeadMode mode;
    if (mode_s == "joint") mode = baselines::HeadMode::Joint;
    else if (mode_s == "alternating") mode = baselines::HeadMode::Alternating;
    else throw ConfigError(o->at("mode"), "unknown head mode '" + mode_s + "' (joint, alternating)");
    m.baseline = BaselineSpec::fixed_head(depth, mode, o->get<std::size_t>("warmup_rounds", 0));
    m.baseline.head_epochs = o->get<std::size_t>("head_epochs", 0);
    m.baseline.body_epochs = o->get<std::size_t>("body_epochs", 1);
  } else if (kind == "wp" || kind == "wpw") {
    m.baseline = BaselineSpec::ablation(kind == "wp");
    if (o && o->has("stages")) {
      m.plan = parse_stages(o->raw("stages"), o->at("stages"));
      m.plan_pointer = o->at("stages");
    }
  } else {
    throw ConfigError(o ? o->at("kind") : ptr,
                      "unknown method '" + kind + "' (ppfe, local, fedavg, fedavg-ft, fixed-head, wp, wpw)");
  }
  if (!m.is_ppfe) m.name = m.baseline.name();
  if (o) {
    if (o->has("name")) m.name = o->req<std::string>("name");
    o->finish();
  }
  if (m.name.empty() || m.name.find_first_of(",\"\n/\\") != std::string::npos) {
    throw ConfigError(ptr, "method name must be non-empty and free of ',', quotes, slashes and newlines");
  }
  return m;
}

inline std::vector<MethodConfig> default_methods(const ExperimentConfig& cfg, bool ablation) {
  json list = ablation ? json::array({"ppfe", "wp", "wpw", json{{"kind", "fixed-head"}, {"depth", 1}},
                                      json{{"kind", "fixed-head"}, {"depth", 2}},
                                      json{{"kind", "fixed-head"}, {"depth", 3}}})
                       : json::array({"ppfe", "local", "fedavg", "fedavg-ft"});
  std::vector<MethodConfig> out;
  for (std::size_t i = 0; i < list.size(); ++i) out.push_back(parse_method(list[i], "/methods/" + std::to_string(i), cfg));
  return out;
}

inline void parse_regression(Obj o, RegressionSweep& r) {
  auto& b = r.base;
  r.clients = o.get<std::vector<std::size_t>>("clients", r.clients);
  if (r.clients.empty()) throw ConfigError(o.at("clients"), "needs at least one client count");
  for (std::size_t i = 0; i < r.clients.size(); ++i) positive(r.clients[i], o.at("clients"));
  if (o.has("personalization_ratio")) {
    const json& v = o.raw("personalization_ratio");
    const std::string ptr = o.at("personalization_ratio");
    r.ratios.clear();
    auto one = [&](const json& e, const std::string& p) -> std::optional<double> {
      if (e.is_string() && e.get<std::string>() == "random") return std::nullopt;
      const double x = Obj::convert<double>(e, p);
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(p, "must lie in [0, 1] or be \"random\"");
      return x;
    };
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) r.ratios.push_back(one(v[i], ptr + "/" + std::to_string(i)));
    } else {
      r.ratios.push_back(one(v, ptr));
    }
    if (r.ratios.empty()) throw ConfigError(ptr, "needs at least one ratio");
  }
  b.samples_per_client = o.get<std::size_t>("samples_per_client", b.samples_per_client);
  positive(b.samples_per_client, o.at("samples_per_client"));
  b.dim = o.get<std::size_t>("dim", b.dim);
  positive(b.dim, o.at("dim"));
  b.global_variance = o.get<double>("global_variance", b.global_variance);
  b.noise_variance = o.get<double>("noise_variance", b.noise_variance);
  if (!(b.global_variance >= 0.0)) throw ConfigError(o.at("global_variance"), "must be non-negative");
  if (!(b.noise_variance >= 0.0)) throw ConfigError(o.at("noise_variance"), "must be non-negative");
  const auto cov = o.get<std::string>("covariance", "identity");
  if (cov == "identity") b.covariance = data::Covariance::Identity;
  else if (cov == "random-spd") b.covariance = data::Covariance::RandomSpd;
  else throw ConfigError(o.at("covariance"), "unknown covariance '" + cov + "' (identity, random-spd)");
  r.stages = o.get<std::size_t>("stages", r.stages);
  positive(r.stages, o.at("stages"));
  r.schedule_factor = o.get<double>("schedule_factor", r.schedule_factor);
  positive(r.schedule_factor, o.at("schedule_factor"));
  r.reweighting = o.get<bool>("reweighting", r.reweighting);
  if (o.has("lambda_grid")) {
    r.options.grid = o.req<std::vector<double>>("lambda_grid");
    if (r.options.grid.empty()) throw ConfigError(o.at("lambda_grid"), "needs at least one value");
    for (double l : r.options.grid) positive(l, o.at("lambda_grid"));
  }
  r.options.holdout = o.get<double>("holdout", r.options.holdout);
  if (!(r.options.holdout > 0.0 && r.options.holdout < 1.0)) throw ConfigError(o.at("holdout"), "must lie in (0, 1)");
  r.options.eps_clamp = o.get<double>("eps_clamp", r.options.eps_clamp);
  if (!(r.options.eps_clamp > 0.0 && r.options.eps_clamp < 0.5)) {
    throw ConfigError(o.at("eps_clamp"), "must lie in (0, 0.5)");
  }
  o.finish();
}

}  // namespace detail

/// Validates and resolves a configuration document. `ablation` picks the default method list.
inline ExperimentConfig parse_config(const json& doc, bool ablation = false) {
  Obj root(doc, "");
  ExperimentConfig cfg;

  const auto task = root.req<std::string>("task");
  if (task == "synthetic-regression") cfg.task = TaskKind::SyntheticRegression;
  else if (task == "synthetic-classification") cfg.task = TaskKind::SyntheticClassification;
  else if (task == "file") cfg.task = TaskKind::File;
  else throw ConfigError("/task", "unknown task '" + task + "' (synthetic-regression, synthetic-classification, file)");

  if (root.has("seeds")) {
    cfg.seeds = root.req<std::vector<std::uint64_t>>("seeds");
    if (!root.raw("seeds").is_array()) throw ConfigError("/seeds", "expected a list of seeds");
    if (cfg.seeds.empty()) throw ConfigError("/seeds", "seed list is empty");
  } else {
    cfg.seeds = {default_seed()};
  }
  root.get<std::string>("description", "");
  if (root.has("output")) cfg.output = root.req<std::string>("output");
  cfg.save_ensembles = root.get<bool>("save_ensembles", false);

  if (cfg.task == TaskKind::SyntheticRegression) {
    if (root.has("regression")) detail::parse_regression(root.child("regression"), cfg.regression);
  } else if (root.has("regression")) {
    throw ConfigError("/regression", "only valid for the synthetic-regression task");
  }

  if (cfg.task == TaskKind::SyntheticClassification && root.has("classification")) {
    Obj o = root.child("classification");
    auto& c = cfg.classification;
    c.clients = o.get<std::size_t>("clients", c.clients);
    detail::positive(c.clients, o.at("clients"));
    c.train_per_client = o.get<std::size_t>("train_per_client", c.train_per_client);
    detail::positive(c.train_per_client, o.at("train_per_client"));
    c.test_per_client = o.get<std::size_t>("test_per_client", c.test_per_client);
    detail::positive(c.test_per_client, o.at("test_per_client"));
    c.dim = o.get<std::size_t>("dim", c.dim);
    detail::positive(c.dim, o.at("dim"));
    c.classes = static_cast<int>(o.get<std::size_t>("classes", static_cast<std::size_t>(c.classes)));
    if (c.classes < 2) throw ConfigError(o.at("classes"), "need at least two classes");
    c.class_sep = o.get<double>("class_sep", c.class_sep);
    if (!(c.class_sep >= 0.0)) throw ConfigError(o.at("class_sep"), "must be non-negative");
    c.headroom = o.get<double>("headroom", c.headroom);
    if (!(c.headroom >= 1.0)) throw ConfigError(o.at("headroom"), "must be at least 1");
    o.finish();
  } else if (cfg.task != TaskKind::SyntheticClassification && root.has("classification")) {
    throw ConfigError("/classification", "only valid for the synthetic-classification task");
  }

  if (cfg.task == TaskKind::File) {
    Obj o = root.child("file");
    auto& f = cfg.file;
    f.path = o.req<std::string>("path");
    if (o.has("num_classes")) f.num_classes = static_cast<int>(o.req<std::size_t>("num_classes"));
    f.clients = o.req<std::size_t>("clients");
    detail::positive(f.clients, o.at("clients"));
    f.test_fraction = o.get<double>("test_fraction", f.test_fraction);
    if (!(f.test_fraction >= 0.0 && f.test_fraction < 1.0)) throw ConfigError(o.at("test_fraction"), "must lie in [0, 1)");
    o.finish();
  } else if (root.has("file")) {
    throw ConfigError("/file", "only valid for the file task");
  }

  if (root.has("partition")) {
    if (cfg.task == TaskKind::SyntheticRegression) throw ConfigError("/partition", "not used by the regression task");
    Obj o = root.child("partition");
    auto& p = cfg.partition;
    const auto mode = o.get<std::string>("mode", "class-restriction");
    if (mode == "class-restriction") p.mode = PartitionConfig::Mode::ClassRestriction;
    else if (mode == "dirichlet") p.mode = PartitionConfig::Mode::Dirichlet;
    else if (mode == "iid") p.mode = PartitionConfig::Mode::Iid;
    else throw ConfigError(o.at("mode"), "unknown partition mode '" + mode + "' (class-restriction, dirichlet, iid)");
    p.classes_per_client = o.get<std::size_t>("classes_per_client", p.classes_per_client);
    detail::positive(p.classes_per_client, o.at("classes_per_client"));
    p.alpha = o.get<double>("alpha", p.alpha);
    detail::positive(p.alpha, o.at("alpha"));
    p.samples_per_client = o.get<std::size_t>("samples_per_client", 0);
    o.finish();
    if (cfg.task == TaskKind::SyntheticClassification &&
        p.classes_per_client > static_cast<std::size_t>(cfg.classification.classes)) {
      throw ConfigError("/partition/classes_per_client", "exceeds the number of classes");
    }
  }

  if (root.has("model")) {
    if (cfg.task == TaskKind::SyntheticRegression) throw ConfigError("/model", "not used by the regression task");
    Obj o = root.child("model");
    cfg.model.hidden = o.get<std::vector<std::size_t>>("hidden", cfg.model.hidden);
    for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i) {
      detail::positive(cfg.model.hidden[i], o.at("hidden") + "/" + std::to_string(i));
    }
    if (o.has("activation")) {
      cfg.model.activation = detail::parse_activation(o.req<std::string>("activation"), o.at("activation"));
    }
    o.finish();
  }

  if (root.has("ppfe")) {
    if (cfg.task == TaskKind::SyntheticRegression) throw ConfigError("/ppfe", "use /regression for the regression task");
    Obj o = root.child("ppfe");
    cfg.plan = o.has("stages") ? detail::parse_stages(o.raw("stages"), o.at("stages")) : detail::default_plan();
    cfg.ppfe = detail::parse_ppfe_options(o, cfg.ppfe, cfg.explicit_loss);
    o.finish();
  } else {
    cfg.plan = detail::default_plan();
  }

  cfg.round_budget = cfg.plan.total_rounds();
  if (root.has("federated")) {
    if (cfg.task == TaskKind::SyntheticRegression) throw ConfigError("/federated", "not used by the regression task");
    Obj o = root.child("federated");
    auto& f = cfg.fed;
    cfg.round_budget = o.get<std::size_t>("rounds", cfg.round_budget);
    detail::positive(cfg.round_budget, o.at("rounds"));
    f.participation = o.get<double>("participation", f.participation);
    if (!(f.participation > 0.0 && f.participation <= 1.0)) throw ConfigError(o.at("participation"), "must lie in (0, 1]");
    f.local_epochs = o.get<std::size_t>("local_epochs", f.local_epochs);
    detail::positive(f.local_epochs, o.at("local_epochs"));
    f.batch_size = o.get<std::size_t>("batch_size", f.batch_size);
    detail::positive(f.batch_size, o.at("batch_size"));
    f.lr = o.get<double>("lr", f.lr);
    detail::positive(f.lr, o.at("lr"));
    f.body_lr = o.get<double>("body_lr", f.body_lr);
    if (!(f.body_lr >= 0.0)) throw ConfigError(o.at("body_lr"), "must be non-negative");
    f.momentum = o.get<double>("momentum", f.momentum);
    if (!(f.momentum >= 0.0 && f.momentum < 1.0)) throw ConfigError(o.at("momentum"), "must lie in [0, 1)");
    f.full_final_round = o.get<bool>("full_final_round", f.full_final_round);
    o.finish();
  }
  cfg.fed.rounds = cfg.round_budget;

  if (root.has("methods")) {
    const json& list = root.raw("methods");
    if (!list.is_array() || list.empty()) throw ConfigError("/methods", "expected a non-empty list of methods");
    cfg.methods_given = true;
    if (cfg.task == TaskKind::SyntheticRegression) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = "/methods/" + std::to_string(i);
        const auto name = Obj::convert<std::string>(list[i], p);
        if (name != "local" && name != "fedavg" && name != "ppfe") {
          throw ConfigError(p, "unknown regression method '" + name + "' (local, fedavg, ppfe)");
        }
      }
      cfg.regression.methods = Obj::convert<std::vector<std::string>>(list, "/methods");
    } else {
      for (std::size_t i = 0; i < list.size(); ++i) {
        cfg.methods.push_back(detail::parse_method(list[i], "/methods/" + std::to_string(i), cfg));
      }
    }
  } else if (cfg.task != TaskKind::SyntheticRegression) {
    cfg.methods = detail::default_methods(cfg, ablation);
  }

  std::set<std::string> names;
  if (cfg.task == TaskKind::SyntheticRegression) {
    for (std::size_t i = 0; i < cfg.regression.methods.size(); ++i) {
      if (!names.insert(cfg.regression.methods[i]).second) {
        throw ConfigError("/methods/" + std::to_string(i), "duplicate method '" + cfg.regression.methods[i] + "'");
      }
    }
  }
  for (auto& m : cfg.methods) {
    if (!names.insert(m.name).second) throw ConfigError(m.pointer, "duplicate method name '" + m.name + "'");
    // Every compared method consumes the same round budget.
    if (m.is_ppfe || m.baseline.kind == baselines::Kind::AblationWP || m.baseline.kind == baselines::Kind::AblationWPW) {
      if (m.plan.total_rounds() != cfg.round_budget) {
        throw ConfigError(m.plan_pointer, "stage rounds add up to " + std::to_string(m.plan.total_rounds()) +
                                              " but the round budget is " + std::to_string(cfg.round_budget));
      }
      m.plan.round_budget = cfg.round_budget;
    }
    if (m.baseline.kind == baselines::Kind::FixedHead && m.baseline.warmup_rounds > cfg.round_budget) {
      throw ConfigError(m.pointer + "/warmup_rounds", "exceeds the round budget");
    }
  }

  if (root.has("bound")) {
    Obj o = root.child("bound");
    cfg.bound.base_width = o.opt<std::size_t>("base_width");
    if (cfg.bound.base_width) detail::positive(*cfg.bound.base_width, o.at("base_width"));
    cfg.bound.alpha = o.get<double>("alpha", 0.0);
    if (!(cfg.bound.alpha >= 0.0)) throw ConfigError(o.at("alpha"), "must be non-negative");
    cfg.bound.gamma = o.opt<double>("gamma");
    if (cfg.bound.gamma && !(*cfg.bound.gamma > 0.0 && *cfg.bound.gamma <= 0.5)) {
      throw ConfigError(o.at("gamma"), "must lie in (0, 0.5]");
    }
    o.finish();
  }

  root.finish();
  return cfg;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path, bool ablation = false) {
  return parse_config(read_json(path), ablation);
}

/// Parses "a,b,c" into a seed list.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("/seeds", "--seeds expects comma-separated non-negative integers, got '" + s + "'");
    }
    out.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace ppfe::config
