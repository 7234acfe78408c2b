#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ppfe/error.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/ppfe.hpp"

namespace ppfe::diagnostics {

/// K / sum_k (1 / n_k).
inline double harmonic_mean(std::span<const std::size_t> n) {
  if (n.empty()) throw InvalidArgument("harmonic_mean: no sample sizes");
  double inv = 0.0;
  for (auto v : n) {
    if (v == 0) throw InvalidArgument("harmonic_mean: zero sample size");
    inv += 1.0 / static_cast<double>(v);
  }
  const double h = static_cast<double>(n.size()) / inv;
  // Equal sizes must come back exactly.
  bool equal = true;
  for (auto v : n) equal = equal && v == n.front();
  return equal ? static_cast<double>(n.front()) : h;
}

/// ceil(W_b * t^-alpha) for t = 1..T.
inline std::vector<std::size_t> width_schedule(std::size_t base_width, double alpha, std::size_t stages) {
  if (base_width == 0) throw InvalidArgument("width_schedule: base width must be positive");
  if (!(alpha >= 0.0)) throw InvalidArgument("width_schedule: alpha must be non-negative");
  std::vector<std::size_t> w;
  for (std::size_t t = 1; t <= stages; ++t) {
    const double v = static_cast<double>(base_width) * std::pow(static_cast<double>(t), -alpha);
    w.push_back(static_cast<std::size_t>(std::ceil(v - 1e-12)));
  }
  return w;
}

/// Dense parameter count (weights plus biases) of the linear layers in [first, last).
inline std::size_t dense_count(const nn::Model& m, std::size_t first, std::size_t last) {
  std::size_t n = 0;
  for (std::size_t i = first; i < last; ++i) {
    const auto& l = m.layers[i];
    if (!nn::is_linear(l)) continue;
    n += nn::out_dim(l) * nn::in_dim(l) + nn::out_dim(l);
  }
  return n;
}

struct StageCapacity {
  std::size_t stage = 1;
  std::size_t personal_layers = 0;
  std::size_t personal_dense = 0;   // D_t
  std::size_t shared_dense = 0;     // D'_t
  std::size_t personal_actual = 0;  // after reduction
  std::size_t shared_actual = 0;
  double personal_term = 0.0;       // sqrt(D_t / n_harm)
  double shared_term = 0.0;         // sqrt(D'_t / (K n_harm))
};

/// Per-stage capacity counts of a plan on an architecture. D_t sums N_l N_{l-1} + N_l over the
/// layers personalized at stage t (none at stage 1), D'_t over the layers still shared.
inline std::vector<StageCapacity> capacity_report(const StagePlan& plan, const nn::Model& base,
                                                  std::span<const std::size_t> client_sizes) {
  const auto archs = stage_architectures(base, plan);
  const double nh = client_sizes.empty() ? 0.0 : harmonic_mean(client_sizes);
  const double k = static_cast<double>(client_sizes.size());
  std::vector<StageCapacity> out;
  for (std::size_t t = 0; t < archs.size(); ++t) {
    const auto& m = archs[t];
    StageCapacity c;
    c.stage = t + 1;
    c.personal_layers = nn::personal_depth(m);
    c.personal_dense = dense_count(m, m.split, m.layers.size());
    c.shared_dense = dense_count(m, 0, m.split);
    c.personal_actual = nn::parameter_count(m, nn::Partition::Personal);
    c.shared_actual = nn::parameter_count(m, nn::Partition::Shared);
    if (nh > 0.0) {
      c.personal_term = std::sqrt(static_cast<double>(c.personal_dense) / nh);
      c.shared_term = std::sqrt(static_cast<double>(c.shared_dense) / (k * nh));
    }
    out.push_back(c);
  }
  return out;
}

/// Progressive plan whose stage-t personal layers are low-rank with rank
/// min(ceil(W_b t^-alpha), min(out, in)).
inline StagePlan width_schedule_plan(const nn::Model& base, std::span<const std::size_t> rounds,
                                     std::size_t base_width, double alpha) {
  const auto widths = width_schedule(base_width, alpha, rounds.size());
  const auto lin = nn::linear_layer_indices(base);
  std::vector<Reduction> reds(rounds.size());
  for (std::size_t t = 1; t < rounds.size(); ++t) {
    reds[t].kind = Reduction::Kind::LowRank;
    const std::size_t depth = std::min(t, lin.size());
    for (std::size_t p = 0; p < depth; ++p) {
      const auto& layer = base.layers[lin[lin.size() - depth + p]];
      reds[t].ranks.push_back(std::min(widths[t], std::min(nn::out_dim(layer), nn::in_dim(layer))));
    }
  }
  return progressive_plan(rounds, reds);
}

}  // namespace ppfe::diagnostics
