#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ppfe/datagen.hpp"
#include "ppfe/error.hpp"
#include "ppfe/fedcore.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/parallel.hpp"
#include "ppfe/rng.hpp"
#include "ppfe/svd.hpp"

namespace ppfe {

// ---------------------------------------------------------------------------------------------
// Reweighting

/// Direction of the multiplicative sample-weight update. `UpweightLoss` multiplies by
/// exp(+beta * loss) and is the default; `DownweightLoss` multiplies by exp(-beta * loss).
enum class WeightUpdateSign { UpweightLoss, DownweightLoss };

struct ReweightResult {
  double beta = 0.0;
  double epsilon = 0.0;
  Vector weights;
};

/// Boosting step on per-sample losses:
///   eps   = sum_i w_i l_i / (max_i l_i * sum_i w_i), clamped to [eps_clamp, 1 - eps_clamp]
///   beta  = 1/2 log((1 - eps) / eps)
///   w'_i  = w_i exp(beta l_i), rescaled so that sum_i w'_i = n.
/// When every loss is zero, eps takes the lower clamp.
inline ReweightResult reweight(std::span<const double> losses, std::span<const double> weights,
                               double eps_clamp = 1e-6, WeightUpdateSign sign = WeightUpdateSign::UpweightLoss) {
  const std::size_t n = losses.size();
  if (n == 0) throw InvalidArgument("reweight: empty dataset");
  if (weights.size() != n) throw DimensionError("reweight: weight and loss lengths differ");
  if (!(eps_clamp > 0.0 && eps_clamp < 0.5)) throw InvalidArgument("reweight: eps clamp must be in (0, 0.5)");
  double wsum = 0.0, weighted = 0.0, lmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] >= 0.0)) throw InvalidArgument("reweight: negative sample weight");
    if (!(losses[i] >= 0.0) || !std::isfinite(losses[i])) {
      throw InvalidArgument("reweight: losses must be finite and non-negative");
    }
    wsum += weights[i];
    weighted += weights[i] * losses[i];
    lmax = std::max(lmax, losses[i]);
  }
  if (!(wsum > 0.0)) throw InvalidArgument("reweight: weights sum to zero");

  ReweightResult r;
  const double raw = lmax > 0.0 ? weighted / (lmax * wsum) : eps_clamp;
  r.epsilon = std::clamp(raw, eps_clamp, 1.0 - eps_clamp);
  r.beta = 0.5 * std::log((1.0 - r.epsilon) / r.epsilon);

  const double dir = sign == WeightUpdateSign::UpweightLoss ? 1.0 : -1.0;
  // Shift exponents by their maximum; the common factor cancels in the normalization.
  double emax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (weights[i] > 0.0) emax = std::max(emax, dir * r.beta * losses[i]);
  r.weights.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.weights[i] = weights[i] > 0.0 ? weights[i] * std::exp(dir * r.beta * losses[i] - emax) : 0.0;
    total += r.weights[i];
  }
  const double scale = static_cast<double>(n) / total;
  for (double& w : r.weights) w *= scale;
  return r;
}

/// Upper bound exp(-2 gamma^2 T) on the training error of the ensemble when every stage has
/// weighted error at most 1/2 - gamma.
inline double bias_bound(double gamma, std::size_t stages) {
  if (!(gamma > 0.0)) throw InvalidArgument("bias_bound: gamma must be positive");
  return std::exp(-2.0 * gamma * gamma * static_cast<double>(stages));
}

// ---------------------------------------------------------------------------------------------
// Stage plans

struct Reduction {
  enum class Kind { None, LowRank, Mask };
  Kind kind = Kind::None;
  /// LowRank: rank per personalized linear layer, first personalized layer first. 0 keeps the
  /// layer dense; missing trailing entries also keep it dense.
  std::vector<std::size_t> ranks;
  /// Mask: fraction of weights zeroed in the layers personalized at the first personal stage,
  /// and in each layer that joins the head afterwards.
  double initial_fraction = 0.3;
  double increment_fraction = 0.1;
  std::uint64_t mask_seed = 0;
};

struct StageSpec {
  std::size_t personal_layers = 0;
  Reduction reduction;
  std::size_t rounds = 0;
  std::optional<double> lr;
  std::optional<double> body_lr;
};

struct StagePlan {
  std::vector<StageSpec> stages;
  /// When set, the stage round counts must add up to exactly this many rounds.
  std::optional<std::size_t> round_budget;

  std::size_t size() const noexcept { return stages.size(); }

  std::size_t total_rounds() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.rounds;
    return n;
  }

  std::size_t first_round(std::size_t stage_index) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < stage_index; ++i) n += stages[i].rounds;
    return n;
  }

  void validate(std::size_t linear_layers) const {
    if (stages.empty()) throw InvalidArgument("stage plan: need at least one stage");
    if (stages.front().personal_layers != 0) throw InvalidArgument("stage plan: stage 1 must be fully shared");
    for (std::size_t t = 0; t < stages.size(); ++t) {
      const auto& s = stages[t];
      const std::string where = "stage plan: stage " + std::to_string(t + 1) + ": ";
      if (t > 0 && s.personal_layers < stages[t - 1].personal_layers) {
        throw InvalidArgument(where + "personal depth must be non-decreasing");
      }
      if (s.personal_layers > linear_layers) throw InvalidArgument(where + "personal depth exceeds model depth");
      if (s.rounds == 0) throw InvalidArgument(where + "needs at least one round");
      const auto& r = s.reduction;
      if (r.kind == Reduction::Kind::Mask) {
        if (!(r.initial_fraction >= 0.0 && r.initial_fraction <= 1.0) ||
            !(r.increment_fraction >= 0.0 && r.increment_fraction <= 1.0)) {
          throw InvalidArgument(where + "mask fraction out of [0, 1]");
        }
      }
    }
    if (round_budget && total_rounds() != *round_budget) {
      throw InvalidArgument("stage plan: stage rounds add up to " + std::to_string(total_rounds()) +
                            " but the round budget is " + std::to_string(*round_budget));
    }
  }
};

/// Plan with personal depth t-1 at stage t and the given per-stage rounds and reductions.
inline StagePlan progressive_plan(std::span<const std::size_t> rounds, std::span<const Reduction> reductions = {}) {
  StagePlan plan;
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    StageSpec s;
    s.personal_layers = t;
    s.rounds = rounds[t];
    if (t < reductions.size()) s.reduction = reductions[t];
    plan.stages.push_back(std::move(s));
  }
  plan.round_budget = plan.total_rounds();
  return plan;
}

// ---------------------------------------------------------------------------------------------
// Stage transition

/// Binary mask with exactly round(fraction * rows * cols) zeros, chosen by a stream keyed on
/// (seed, layer). Identical on every client that shares the seed.
inline Matrix structured_mask(std::size_t rows, std::size_t cols, double fraction, std::uint64_t seed,
                              std::size_t layer) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("mask fraction out of [0, 1]");
  const std::size_t n = rows * cols;
  const auto zeros = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  Rng rng = Rng(seed).derive("mask", layer);
  for (std::size_t i = 0; i < zeros; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(pos[i], pos[j]);
  }
  Matrix mask(rows, cols, 1.0);
  for (std::size_t i = 0; i < zeros; ++i) mask.data()[pos[i]] = 0.0;
  return mask;
}

/// Moves a client's stage-(t-1) model to the stage-t architecture. Layers that join the head
/// start from the previous shared weights, layers already in the head from the client's own
/// previous head; then the stage's reduction is applied to the personalized linear layers.
inline nn::Model transition_stage(const nn::Model& prev, const StageSpec& spec) {
  nn::Model m = prev;
  const std::size_t prev_depth = nn::personal_depth(prev);
  if (spec.personal_layers < prev_depth) throw InvalidArgument("transition: personal depth cannot shrink");
  m.split = nn::split_for_personal_depth(m, spec.personal_layers);
  const auto lin = nn::linear_layer_indices(m);
  const std::size_t first_personal = lin.size() - spec.personal_layers;
  const auto& red = spec.reduction;

  for (std::size_t p = 0; p < spec.personal_layers; ++p) {
    const std::size_t li = first_personal + p;
    nn::Layer& layer = m.layers[lin[li]];
    const bool newly_personal = p < spec.personal_layers - prev_depth;
    if (red.kind == Reduction::Kind::LowRank) {
      const std::size_t rank = p < red.ranks.size() ? red.ranks[p] : 0;
      if (rank == 0) continue;
      const std::size_t out = nn::out_dim(layer), in = nn::in_dim(layer);
      if (rank > std::min(out, in)) {
        throw InvalidArgument("transition: rank " + std::to_string(rank) + " exceeds min dimension of a " +
                              std::to_string(out) + "x" + std::to_string(in) + " layer");
      }
      if (const auto* lr = std::get_if<nn::LowRankDense>(&layer); lr && lr->a.cols() == rank) continue;
      const Matrix bias = nn::bias_of(layer);
      const auto factors = truncate_svd(svd(nn::effective_weight(layer)), rank);
      layer = nn::LowRankDense{factors.first, factors.second, bias};
    } else if (red.kind == Reduction::Kind::Mask) {
      if (std::holds_alternative<nn::MaskedDense>(layer)) continue;
      const double fraction = prev_depth == 0 ? red.initial_fraction : red.increment_fraction;
      if (!newly_personal && prev_depth > 0) continue;
      Matrix w = nn::effective_weight(layer);
      const Matrix bias = nn::bias_of(layer);
      Matrix mask = structured_mask(w.rows(), w.cols(), fraction, red.mask_seed, li);
      w = hadamard(w, mask);
      layer = nn::MaskedDense{std::move(w), bias, std::move(mask)};
    }
  }
  m.validate();
  ++m.revision;
  return m;
}

/// Architecture of every stage obtained by chaining transitions from `base`.
inline std::vector<nn::Model> stage_architectures(const nn::Model& base, const StagePlan& plan) {
  plan.validate(nn::linear_layer_indices(base).size());
  std::vector<nn::Model> out;
  nn::Model m = base;
  m.split = m.layers.size();
  out.push_back(m);
  for (std::size_t t = 1; t < plan.size(); ++t) {
    m = transition_stage(m, plan.stages[t]);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Ensembles

/// Per-client additive ensemble sum_t beta_t * model_t(x).
struct Ensemble {
  std::vector<nn::Model> stages;
  std::vector<double> betas;

  std::size_t size() const noexcept { return stages.size(); }
};

/// Weighted sum of the first `upto` stage outputs (all stages when upto is 0). `provisional`
/// replaces the coefficient of the last included stage when set.
inline Matrix ensemble_scores(const Ensemble& ens, const Matrix& x, std::size_t upto = 0,
                              std::optional<double> provisional = std::nullopt) {
  if (ens.stages.empty()) throw InvalidArgument("ensemble: no stages");
  const std::size_t n = upto == 0 ? ens.stages.size() : std::min(upto, ens.stages.size());
  Matrix sum;
  for (std::size_t t = 0; t < n; ++t) {
    const double beta = (provisional && t + 1 == n) ? *provisional : ens.betas.at(t);
    Matrix out = nn::predict(ens.stages[t], x);
    if (t == 0) {
      sum = out * beta;
    } else {
      if (!out.same_shape(sum)) throw DimensionError("ensemble: stage outputs differ in shape");
      for (std::size_t i = 0; i < out.size(); ++i) sum.data()[i] += beta * out.data()[i];
    }
  }
  return sum;
}

/// Raw ensemble output: sum_t beta_t * g(f(x)).
inline Matrix ensemble_predict(const Ensemble& ens, const Matrix& x) { return ensemble_scores(ens, x); }

/// Row-wise argmax.
inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto r = scores.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

inline std::vector<int> ensemble_classify(const Ensemble& ens, const Matrix& x, std::size_t upto = 0) {
  return argmax_rows(ensemble_scores(ens, x, upto));
}

// ---------------------------------------------------------------------------------------------
// Staged training

/// Loss fed to the reweighting step.
enum class ReweightLoss {
  CrossEntropy,  // clipped negative log-likelihood of the softmax of the ensemble scores
  ZeroOne,       // misclassification indicator
  Squared,       // squared error (regression), normalized by its maximum
};

struct PpfeOptions {
  bool reweighting = true;  // false freezes all sample weights at 1 (beta is still computed)
  ReweightLoss loss = ReweightLoss::ZeroOne;
  double ce_clip = 20.0;
  double eps_clamp = 1e-6;
  WeightUpdateSign sign = WeightUpdateSign::UpweightLoss;
};

struct StageReport {
  std::size_t stage = 1;
  std::size_t personal_layers = 0;
  std::size_t shared_params = 0;
  std::size_t personal_params = 0;  // per client
  std::size_t rounds = 0;
  double mean_beta = 0.0;
  double mean_epsilon = 0.0;
};

struct PpfeResult {
  std::vector<Ensemble> ensembles;  // one per client
  std::vector<StageReport> stages;
  std::vector<fed::RoundReport> rounds;
  std::vector<Vector> final_weights;  // sample weights after the last reweight
};

/// Per-sample loss of the partial ensemble for the reweighting step.
inline Vector reweight_losses(const Matrix& scores, const data::ClientDataset& ds, const PpfeOptions& opt) {
  const auto targets = ds.as_targets();
  switch (opt.loss) {
    case ReweightLoss::CrossEntropy: {
      Vector l = nn::per_sample_loss(scores, targets, nn::LossKind::CrossEntropy);
      if (opt.ce_clip > 0.0)
        for (double& v : l) v = std::min(v, opt.ce_clip);
      return l;
    }
    case ReweightLoss::ZeroOne: {
      const auto pred = argmax_rows(scores);
      Vector l(pred.size());
      for (std::size_t i = 0; i < pred.size(); ++i) l[i] = pred[i] == ds.labels[i] ? 0.0 : 1.0;
      return l;
    }
    case ReweightLoss::Squared: break;
  }
  Vector l = nn::per_sample_loss(scores, targets, nn::LossKind::MSE);
  const double lmax = *std::max_element(l.begin(), l.end());
  if (lmax > 0.0)
    for (double& v : l) v /= lmax;
  return l;
}

namespace detail {

inline fed::FedConfig stage_config(const fed::FedConfig& cfg, const StageSpec& s) {
  fed::FedConfig c = cfg;
  if (s.lr) c.lr = *s.lr;
  if (s.body_lr) c.body_lr = *s.body_lr;
  return c;
}

}  // namespace detail

/// Progressive personalized federated ensemble training.
///
/// Stage 1 is FedAvg over the whole model with unit sample weights. Every later stage moves
/// the plan's trailing layers into per-client heads (warm-started and reduced by
/// transition_stage), trains for its round budget with the clients' current sample weights,
/// and appends the resulting per-client model to that client's ensemble. After each stage the
/// running ensemble, with coefficient 1 for the newest member, is scored on the client's
/// training data; the reweighting step yields that member's coefficient and the sample
/// weights for the next stage.
inline PpfeResult run_ppfe(const std::vector<data::ClientDataset>& train, const nn::Model& init,
                           const StagePlan& plan, const fed::FedConfig& cfg, const PpfeOptions& opt = {}) {
  const std::size_t k = train.size();
  if (k == 0) throw InvalidArgument("run_ppfe: no clients");
  plan.validate(nn::linear_layer_indices(init).size());

  PpfeResult res;
  res.ensembles.resize(k);
  std::vector<Vector> weights;
  weights.reserve(k);
  for (const auto& ds : train) weights.emplace_back(ds.size(), 1.0);

  nn::Model start = init;
  start.split = start.layers.size();
  std::vector<nn::Model> models(k, start);

  for (std::size_t t = 0; t < plan.size(); ++t) {
    const auto& spec = plan.stages[t];
    if (t > 0) {
      parallel_for(k, cfg.threads, [&](std::size_t c) { models[c] = transition_stage(models[c], spec); });
    }
    const fed::FedConfig scfg = detail::stage_config(cfg, spec);
    fed::RoundBlock block{t + 1, plan.first_round(t), spec.rounds, cfg.full_final_round, {}};
    auto reps = fed::run_rounds(models, train, weights, scfg, block);
    res.rounds.insert(res.rounds.end(), reps.begin(), reps.end());

    std::vector<double> betas(k), eps(k);
    parallel_for(k, cfg.threads, [&](std::size_t c) {
      auto& ens = res.ensembles[c];
      ens.stages.push_back(models[c]);
      ens.betas.push_back(1.0);
      const Matrix scores = ensemble_scores(ens, train[c].features, 0, 1.0);
      const Vector losses = reweight_losses(scores, train[c], opt);
      auto rw = reweight(losses, weights[c], opt.eps_clamp, opt.sign);
      ens.betas.back() = rw.beta;
      betas[c] = rw.beta;
      eps[c] = rw.epsilon;
      if (opt.reweighting) weights[c] = std::move(rw.weights);
    });

    StageReport sr;
    sr.stage = t + 1;
    sr.personal_layers = spec.personal_layers;
    sr.shared_params = nn::parameter_count(models.front(), nn::Partition::Shared);
    sr.personal_params = nn::parameter_count(models.front(), nn::Partition::Personal);
    sr.rounds = spec.rounds;
    sr.mean_beta = std::accumulate(betas.begin(), betas.end(), 0.0) / static_cast<double>(k);
    sr.mean_epsilon = std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(k);
    res.stages.push_back(sr);
  }
  res.final_weights = std::move(weights);
  return res;
}

/// Per-stage parameter traffic of a plan on a given base architecture.
inline std::vector<fed::StageTraffic> comm_account(const StagePlan& plan, const nn::Model& base, std::size_t k,
                                                   double rho, bool full_final_round = true) {
  const auto archs = stage_architectures(base, plan);
  std::vector<std::size_t> shared, rounds;
  for (std::size_t t = 0; t < plan.size(); ++t) {
    shared.push_back(nn::parameter_count(archs[t], nn::Partition::Shared));
    rounds.push_back(plan.stages[t].rounds);
  }
  nn::Model full = base;
  full.split = full.layers.size();
  return fed::comm_account(shared, rounds, k, rho, full_final_round, nn::parameter_count(full, nn::Partition::All));
}

}  // namespace ppfe
