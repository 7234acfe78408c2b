#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppfe/binary.hpp"
#include "ppfe/datagen.hpp"
#include "ppfe/error.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/parallel.hpp"
#include "ppfe/rng.hpp"

namespace ppfe::fed {

/// Sender id of a server broadcast in a message tap.
inline constexpr std::size_t kServer = std::numeric_limits<std::size_t>::max();

/// Observes every encoded message: (round, sender client id or kServer, bytes). Called from the
/// round loop's thread, uploads in ascending client order after the broadcast.
using MessageTap = std::function<void(std::size_t, std::size_t, std::span<const std::uint8_t>)>;

/// Round-engine settings. Defaults follow the reference setup: 10% participation,
/// 5 local epochs, batch 10, lr 0.01 (0.001 for the shared body once a head is personal).
struct FedConfig {
  double participation = 0.1;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 10;
  double lr = 0.01;
  double body_lr = 0.001;
  double momentum = 0.9;
  std::size_t rounds = 10;
  bool full_final_round = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  nn::LossKind loss = nn::LossKind::CrossEntropy;
  MessageTap message_tap;

  void validate() const {
    if (!(participation > 0.0 && participation <= 1.0)) {
      throw InvalidArgument("participation ratio must lie in (0, 1]");
    }
    if (local_epochs == 0 || batch_size == 0) throw InvalidArgument("local epochs and batch size must be positive");
    if (!(lr >= 0.0) || !(body_lr >= 0.0)) throw InvalidArgument("learning rates must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  }
};

struct RoundReport {
  std::size_t stage = 1;
  std::size_t round = 0;  // global round index across stages
  std::vector<std::size_t> participants;
  double mean_weighted_loss = 0.0;
  std::size_t shared_params_per_client = 0;  // up + down
  double wall_ms = 0.0;
};

/// ceil(rho * K) distinct ids, uniformly without replacement, sorted ascending.
inline std::vector<std::size_t> sample_clients(std::size_t k, double rho, Rng& rng, bool full) {
  std::vector<std::size_t> ids(k);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (full || k == 0) return ids;
  auto m = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(k) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, k);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.uniform_index(k - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Which parameters a local pass updates, and for how many epochs.
struct LocalPass {
  nn::ParamFilter filter = nn::ParamFilter::All;
  std::size_t epochs = 0;  // 0 means FedConfig::local_epochs
};

/// Weighted mini-batch SGD with momentum over the client's data, in place. Each epoch
/// reshuffles with `rng`; batches whose weights sum to zero are skipped. Layers of the shared
/// body train at `body_lr` whenever the model has a personal head. Returns the weighted loss
/// on the full local dataset after training.
inline double local_train(nn::Model& model, const data::ClientDataset& ds, std::span<const double> weights,
                          const FedConfig& cfg, Rng& rng, std::span<const LocalPass> passes = {}) {
  if (weights.size() != ds.size()) {
    throw DimensionError("local_train: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(ds.size()) + " samples");
  }
  if (ds.dim() != model.input_dim()) {
    throw DimensionError("local_train: data width " + std::to_string(ds.dim()) + " vs model input " +
                         std::to_string(model.input_dim()));
  }
  const bool has_head = model.split < model.layers.size();
  const auto targets = ds.as_targets();
  const LocalPass default_pass{nn::ParamFilter::All, cfg.local_epochs};
  const std::span<const LocalPass> schedule = passes.empty() ? std::span<const LocalPass>(&default_pass, 1) : passes;

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> wb;
  for (const auto& pass : schedule) {
    nn::SgdMomentum opt(cfg.lr, cfg.momentum, has_head ? std::optional<double>(cfg.body_lr) : std::nullopt);
    const std::size_t epochs = pass.epochs == 0 ? cfg.local_epochs : pass.epochs;
    for (std::size_t e = 0; e < epochs; ++e) {
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        wb.assign(idx.size(), 0.0);
        double wsum = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          wb[i] = weights[idx[i]];
          wsum += wb[i];
        }
        if (wsum <= 0.0) continue;
        const Matrix xb = select_rows(ds.features, idx);
        const auto tb = targets.subset(idx);
        auto fw = nn::forward(model, xb);
        const Matrix g = nn::weighted_loss_grad(fw.output, tb, wb, cfg.loss);
        const auto grads = nn::backward(model, fw.cache, g);
        nn::sgd_step(opt, model, grads, pass.filter);
      }
    }
  }
  const double loss = nn::weighted_loss(nn::predict(model, ds.features), targets, weights, cfg.loss);
  if (!std::isfinite(loss) || !nn::all_params_finite(model)) {
    throw NumericError("local_train: non-finite loss or parameters after training");
  }
  return loss;
}

/// Unweighted elementwise mean of the submitted shared bodies, reduced in ascending client-id
/// order regardless of submission order.
inline std::vector<Matrix> aggregate_shared(std::vector<std::pair<std::size_t, std::vector<Matrix>>> updates) {
  if (updates.empty()) throw InvalidArgument("aggregate_shared: no updates");
  std::sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Matrix> mean = updates.front().second;
  for (std::size_t u = 1; u < updates.size(); ++u) {
    const auto& blocks = updates[u].second;
    if (blocks.size() != mean.size()) throw DimensionError("aggregate_shared: block count mismatch");
    for (std::size_t b = 0; b < blocks.size(); ++b) mean[b] += blocks[b];
  }
  const double inv = 1.0 / static_cast<double>(updates.size());
  for (auto& m : mean) m *= inv;
  return mean;
}

/// One contiguous block of rounds at a fixed architecture.
struct RoundBlock {
  std::size_t stage = 1;
  std::size_t first_round = 0;  // global round index of the first round (keys the RNG streams)
  std::size_t rounds = 0;
  bool full_final_round = true;
  /// Empty: joint training of all parameters for local_epochs. Otherwise the passes run in order.
  std::vector<LocalPass> passes;
};

/// Federated rounds over per-client model copies that share the body [0, split).
/// Each round: sample, broadcast the server body, train locally, average the bodies.
/// Heads stay on the clients. At the end every client's body is refreshed from the server.
inline std::vector<RoundReport> run_rounds(std::vector<nn::Model>& client_models,
                                           const std::vector<data::ClientDataset>& train,
                                           const std::vector<Vector>& weights, const FedConfig& cfg,
                                           const RoundBlock& block) {
  cfg.validate();
  const std::size_t k = client_models.size();
  if (k == 0 || train.size() != k || weights.size() != k) {
    throw DimensionError("run_rounds: client models, datasets and weights must have equal, non-zero length");
  }
  const Rng root(cfg.seed);
  std::vector<Matrix> server = nn::shared_params(client_models.front());
  std::size_t shared_count = 0;
  for (const auto& m : server) shared_count += m.size();

  std::vector<RoundReport> reports;
  for (std::size_t r = 0; r < block.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t round = block.first_round + r;
    Rng prng = root.derive("participation", round);
    const bool full = block.full_final_round && r + 1 == block.rounds;
    const auto ids = sample_clients(k, cfg.participation, prng, full);

    // The body travels as an encoded message in both directions.
    const auto down = io::encode_message({static_cast<std::uint32_t>(round), server});
    if (cfg.message_tap) cfg.message_tap(round, kServer, down);
    const auto received = io::decode_message(down).shared;

    std::vector<std::vector<std::uint8_t>> uploads(ids.size());
    std::vector<double> losses(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
      const std::size_t c = ids[i];
      nn::Model& model = client_models[c];
      nn::load_shared_params(model, received);
      Rng crng = root.derive("local-train", round, c);
      try {
        losses[i] = local_train(model, train[c], weights[c], cfg, crng, block.passes);
      } catch (const NumericError& e) {
        throw NumericError("round " + std::to_string(round) + ", client " + std::to_string(c) + ": " + e.what());
      }
      uploads[i] = io::encode_message({static_cast<std::uint32_t>(round), nn::shared_params(model)});
    });

    if (cfg.message_tap)
      for (std::size_t i = 0; i < ids.size(); ++i) cfg.message_tap(round, ids[i], uploads[i]);
    if (shared_count > 0) {
      std::vector<std::pair<std::size_t, std::vector<Matrix>>> updates;
      updates.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) updates.emplace_back(ids[i], io::decode_message(uploads[i]).shared);
      server = aggregate_shared(std::move(updates));
    }

    RoundReport rep;
    rep.stage = block.stage;
    rep.round = round;
    rep.participants = ids;
    rep.mean_weighted_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    rep.shared_params_per_client = 2 * shared_count;
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    reports.push_back(std::move(rep));
  }
  for (auto& m : client_models) nn::load_shared_params(m, server);
  return reports;
}

struct FedAvgResult {
  nn::Model global;
  std::vector<RoundReport> reports;
};

/// Plain FedAvg: every parameter is shared, all clients start from `init`, uniform weights.
inline FedAvgResult run_fedavg(const std::vector<data::ClientDataset>& train, const nn::Model& init,
                               const FedConfig& cfg, std::size_t first_round = 0) {
  nn::Model shared_init = init;
  shared_init.split = shared_init.layers.size();
  std::vector<nn::Model> models(train.size(), shared_init);
  std::vector<Vector> weights;
  weights.reserve(train.size());
  for (const auto& ds : train) weights.emplace_back(ds.size(), 1.0);
  RoundBlock block{1, first_round, cfg.rounds, cfg.full_final_round, {}};
  auto reports = run_rounds(models, train, weights, cfg, block);
  return {std::move(models.front()), std::move(reports)};
}

// ---------------------------------------------------------------------------------------------
// Communication accounting

struct StageTraffic {
  std::size_t stage = 1;
  std::size_t shared_params = 0;
  std::size_t rounds = 0;
  std::size_t per_client_per_round = 0;  // 2 * |psi|
  std::size_t participant_rounds = 0;    // sum over rounds of |S_tau|
  std::size_t total = 0;                 // per_client_per_round * participant_rounds
  double shared_fraction = 0.0;          // |psi| / reference parameter count
};

/// Parameter traffic per stage given the shared-body size and round count of each stage.
inline std::vector<StageTraffic> comm_account(std::span<const std::size_t> shared_counts,
                                              std::span<const std::size_t> rounds, std::size_t k, double rho,
                                              bool full_final_round, std::size_t reference_params) {
  if (shared_counts.size() != rounds.size()) throw DimensionError("comm_account: one round count per stage");
  const auto sampled = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(rho * static_cast<double>(k) - 1e-9)), k == 0 ? 0 : 1, k);
  std::vector<StageTraffic> out;
  for (std::size_t t = 0; t < shared_counts.size(); ++t) {
    StageTraffic s;
    s.stage = t + 1;
    s.shared_params = shared_counts[t];
    s.rounds = rounds[t];
    s.per_client_per_round = 2 * shared_counts[t];
    if (s.rounds > 0) {
      s.participant_rounds = full_final_round ? (s.rounds - 1) * sampled + k : s.rounds * sampled;
    }
    s.total = s.per_client_per_round * s.participant_rounds;
    s.shared_fraction =
        reference_params > 0 ? static_cast<double>(shared_counts[t]) / static_cast<double>(reference_params) : 0.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace ppfe::fed
