#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "ppfe/datagen.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/rng.hpp"

namespace fixture {

using namespace ppfe;

/// in -> h1 -> h2 -> out with the given hidden activation; layer kinds cycle through dense,
/// low-rank and masked according to `variant`.
inline nn::Model random_net(Rng& rng, std::size_t in, std::size_t h1, std::size_t h2, std::size_t out,
                            nn::Activation act, int variant) {
  const std::vector<std::size_t> widths{in, h1, h2, out};
  nn::Model m = nn::make_mlp(widths, act, rng);
  const auto lin = nn::linear_layer_indices(m);
  for (std::size_t i = 0; i < lin.size(); ++i) {
    auto& layer = m.layers[lin[i]];
    auto& d = std::get<nn::Dense>(layer);
    for (double& b : d.bias.data()) b = 0.1 * rng.normal();
    const int kind = (variant + static_cast<int>(i)) % 3;
    if (kind == 1) {
      const std::size_t r = std::max<std::size_t>(1, std::min(d.weight.rows(), d.weight.cols()) / 2);
      nn::LowRankDense lr{oracle::random_matrix(rng, d.weight.rows(), r) * 0.5,
                          oracle::random_matrix(rng, r, d.weight.cols()) * 0.5, d.bias};
      layer = lr;
    } else if (kind == 2) {
      nn::MaskedDense md{d.weight, d.bias, Matrix(d.weight.rows(), d.weight.cols(), 1.0)};
      for (std::size_t j = 0; j < md.mask.size(); ++j) {
        if (rng.uniform() < 0.3) {
          md.mask.data()[j] = 0.0;
          md.weight.data()[j] = 0.0;
        }
      }
      layer = md;
    }
  }
  return m;
}

/// Largest relative error between backprop and central differences over all trainable
/// entries (masked-out weights are fixed at zero and skipped).
inline double gradient_check(nn::Model model, const Matrix& x, const nn::Targets& t, std::span<const double> w,
                             nn::LossKind kind, double h = 1e-5) {
  auto fw = nn::forward(model, x);
  const auto grads = nn::backward(model, fw.cache, nn::weighted_loss_grad(fw.output, t, w, kind));
  double worst = 0.0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    auto ps = nn::params(model.layers[li]);
    const auto* masked = std::get_if<nn::MaskedDense>(&model.layers[li]);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      for (std::size_t e = 0; e < ps[k]->size(); ++e) {
        if (masked && k == 0 && masked->mask.data()[e] == 0.0) continue;
        double& p = ps[k]->data()[e];
        const double orig = p;
        p = orig + h;
        ++model.revision;
        const double up = nn::weighted_loss(nn::predict(model, x), t, w, kind);
        p = orig - h;
        ++model.revision;
        const double down = nn::weighted_loss(nn::predict(model, x), t, w, kind);
        p = orig;
        ++model.revision;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grads.layers[li][k].data()[e];
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

/// Small labelled client sets: each client holds two classes out of `classes`.
inline std::vector<data::ClientDataset> tiny_clients(std::size_t k, std::size_t n, std::size_t dim, int classes,
                                                     std::uint64_t seed) {
  const Rng root(seed);
  const auto pool = data::gen_synthetic_classification(k, n, dim, classes, 3.0, root, 2.0);
  data::PartitionSpec ps;
  ps.clients = k;
  ps.classes_per_client = 2;
  ps.samples_per_client = n;
  Rng pr = root.derive("partition");
  std::vector<data::ClientDataset> out;
  for (const auto& p : data::class_restriction_indices(pool, ps, pr)) out.push_back(pool.subset(p));
  return out;
}

inline bool same_params(const nn::Model& a, const nn::Model& b) {
  if (a.layers.size() != b.layers.size() || a.split != b.split) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].index() != b.layers[i].index()) return false;
    const auto pa = nn::params(a.layers[i]);
    const auto pb = nn::params(b.layers[i]);
    for (std::size_t k = 0; k < pa.size(); ++k)
      if (!(*pa[k] == *pb[k])) return false;
  }
  return true;
}

}  // namespace fixture
