#pragma once

#include <string>
#include <vector>

#include "ppfe/datagen.hpp"
#include "ppfe/error.hpp"
#include "ppfe/fedcore.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/parallel.hpp"
#include "ppfe/ppfe.hpp"

namespace ppfe::baselines {

enum class Kind { LocalOnly, FedAvg, FedAvgFT, FixedHead, AblationWP, AblationWPW };
enum class HeadMode { Joint, Alternating };

struct BaselineSpec {
  Kind kind = Kind::FedAvg;
  std::size_t ft_epochs = 5;
  std::size_t personal_depth = 1;
  HeadMode mode = HeadMode::Joint;
  /// FixedHead: rounds of plain FedAvg before the head is split off.
  std::size_t warmup_rounds = 0;
  /// Alternating mode: head epochs per round (0 = local_epochs) followed by body epochs.
  std::size_t head_epochs = 0;
  std::size_t body_epochs = 1;
  /// LocalOnly: total local epochs (0 = rounds * local_epochs).
  std::size_t local_epochs_total = 0;

  static BaselineSpec local_only() { return {Kind::LocalOnly}; }
  static BaselineSpec fedavg() { return {Kind::FedAvg}; }
  static BaselineSpec fedavg_ft(std::size_t epochs = 5) {
    BaselineSpec s{Kind::FedAvgFT};
    s.ft_epochs = epochs;
    return s;
  }
  static BaselineSpec fixed_head(std::size_t depth, HeadMode mode = HeadMode::Joint, std::size_t warmup = 0) {
    BaselineSpec s{Kind::FixedHead};
    s.personal_depth = depth;
    s.mode = mode;
    s.warmup_rounds = warmup;
    return s;
  }
  static BaselineSpec ablation(bool keep_reweighting) {
    return {keep_reweighting ? Kind::AblationWP : Kind::AblationWPW};
  }

  std::string name() const {
    switch (kind) {
      case Kind::LocalOnly: return "local";
      case Kind::FedAvg: return "fedavg";
      case Kind::FedAvgFT: return "fedavg_ft";
      case Kind::FixedHead:
        return (mode == HeadMode::Joint ? "fixed_head_m" : "fedrep_m") + std::to_string(personal_depth);
      case Kind::AblationWP: return "wp";
      case Kind::AblationWPW: break;
    }
    return "wpw";
  }
};

/// Per-client predictors as ensembles (single-member with beta 1 for non-boosted methods).
struct MethodResult {
  std::string name;
  std::vector<Ensemble> ensembles;
  std::vector<fed::RoundReport> rounds;
  std::vector<StageReport> stages;
  std::size_t total_rounds = 0;
};

inline std::vector<Ensemble> single_member(const std::vector<nn::Model>& models) {
  std::vector<Ensemble> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back({{m}, {1.0}});
  return out;
}

/// The plan without progressive growth of the head: every personal stage keeps one
/// personalized layer, with the rank the plan gives to the last layer.
inline StagePlan without_progression(const StagePlan& plan) {
  StagePlan p = plan;
  for (std::size_t t = 1; t < p.stages.size(); ++t) {
    auto& s = p.stages[t];
    s.personal_layers = std::min<std::size_t>(s.personal_layers, 1);
    auto& r = s.reduction;
    if (!r.ranks.empty()) r.ranks = {r.ranks.back()};
  }
  return p;
}

namespace detail {

inline std::vector<Vector> unit_weights(const std::vector<data::ClientDataset>& train) {
  std::vector<Vector> w;
  w.reserve(train.size());
  for (const auto& ds : train) w.emplace_back(ds.size(), 1.0);
  return w;
}

}  // namespace detail

/// Runs one comparison method. `cfg.rounds` is the round budget every method consumes; the
/// ablations also need the PPFE plan they are derived from, whose rounds must match it.
inline MethodResult run_baseline(const std::vector<data::ClientDataset>& train, const nn::Model& init,
                                 const BaselineSpec& spec, const fed::FedConfig& cfg,
                                 const StagePlan* plan = nullptr, const PpfeOptions& opt = {}) {
  cfg.validate();
  const std::size_t k = train.size();
  if (k == 0) throw InvalidArgument("run_baseline: no clients");
  MethodResult res;
  res.name = spec.name();
  res.total_rounds = cfg.rounds;
  nn::Model full = init;
  full.split = full.layers.size();

  switch (spec.kind) {
    case Kind::LocalOnly: {
      const std::size_t epochs = spec.local_epochs_total == 0 ? cfg.rounds * cfg.local_epochs : spec.local_epochs_total;
      std::vector<nn::Model> models(k, full);
      const Rng root(cfg.seed);
      parallel_for(k, cfg.threads, [&](std::size_t c) {
        // Keyed without the client id: clients holding identical data end up identical.
        Rng r = root.derive("local-only");
        const Vector w(train[c].size(), 1.0);
        const fed::LocalPass pass{nn::ParamFilter::All, epochs};
        if (epochs > 0) fed::local_train(models[c], train[c], w, cfg, r, std::span<const fed::LocalPass>(&pass, 1));
      });
      res.ensembles = single_member(models);
      res.total_rounds = 0;
      return res;
    }
    case Kind::FedAvg:
    case Kind::FedAvgFT: {
      auto fa = fed::run_fedavg(train, init, cfg);
      res.rounds = std::move(fa.reports);
      std::vector<nn::Model> models(k, fa.global);
      if (spec.kind == Kind::FedAvgFT && spec.ft_epochs > 0) {
        const Rng root(cfg.seed);
        parallel_for(k, cfg.threads, [&](std::size_t c) {
          Rng r = root.derive("fine-tune", c);
          const Vector w(train[c].size(), 1.0);
          const fed::LocalPass pass{nn::ParamFilter::All, spec.ft_epochs};
          fed::local_train(models[c], train[c], w, cfg, r, std::span<const fed::LocalPass>(&pass, 1));
        });
      }
      res.ensembles = single_member(models);
      return res;
    }
    case Kind::FixedHead: {
      if (spec.warmup_rounds > cfg.rounds) throw InvalidArgument("fixed head: warm-up exceeds the round budget");
      std::vector<nn::Model> models(k, full);
      const auto weights = detail::unit_weights(train);
      if (spec.personal_depth == 0) {
        res.rounds = fed::run_rounds(models, train, weights, cfg, {1, 0, cfg.rounds, cfg.full_final_round, {}});
        res.ensembles = single_member(models);
        return res;
      }
      if (spec.warmup_rounds > 0) {
        res.rounds = fed::run_rounds(models, train, weights, cfg, {1, 0, spec.warmup_rounds, cfg.full_final_round, {}});
      }
      const std::size_t split = nn::split_for_personal_depth(full, spec.personal_depth);
      for (auto& m : models) {
        m.split = split;
        ++m.revision;
      }
      fed::RoundBlock block{2, spec.warmup_rounds, cfg.rounds - spec.warmup_rounds, cfg.full_final_round, {}};
      if (spec.mode == HeadMode::Alternating) {
        block.passes = {{nn::ParamFilter::Personal, spec.head_epochs}, {nn::ParamFilter::Shared, spec.body_epochs}};
      }
      if (block.rounds > 0) {
        auto reps = fed::run_rounds(models, train, weights, cfg, block);
        res.rounds.insert(res.rounds.end(), reps.begin(), reps.end());
      }
      res.ensembles = single_member(models);
      return res;
    }
    case Kind::AblationWP:
    case Kind::AblationWPW: {
      if (plan == nullptr) throw InvalidArgument("ablation baselines need the PPFE stage plan");
      if (plan->total_rounds() != cfg.rounds) {
        throw InvalidArgument("ablation: plan rounds " + std::to_string(plan->total_rounds()) +
                              " differ from the round budget " + std::to_string(cfg.rounds));
      }
      PpfeOptions o = opt;
      o.reweighting = spec.kind == Kind::AblationWP;
      auto pr = run_ppfe(train, init, without_progression(*plan), cfg, o);
      res.ensembles = std::move(pr.ensembles);
      res.rounds = std::move(pr.rounds);
      res.stages = std::move(pr.stages);
      return res;
    }
  }
  throw InvalidArgument("run_baseline: unknown kind");
}

/// PPFE under the same result type as the baselines.
inline MethodResult run_ppfe_method(const std::vector<data::ClientDataset>& train, const nn::Model& init,
                                    const StagePlan& plan, const fed::FedConfig& cfg, const PpfeOptions& opt = {},
                                    std::string name = "ppfe") {
  auto pr = run_ppfe(train, init, plan, cfg, opt);
  MethodResult res;
  res.name = std::move(name);
  res.ensembles = std::move(pr.ensembles);
  res.rounds = std::move(pr.rounds);
  res.stages = std::move(pr.stages);
  res.total_rounds = plan.total_rounds();
  return res;
}

}  // namespace ppfe::baselines
