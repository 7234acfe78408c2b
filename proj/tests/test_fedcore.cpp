#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "ppfe/binary.hpp"
#include "ppfe/error.hpp"
#include "ppfe/fedcore.hpp"

using namespace ppfe;

namespace {

fed::FedConfig quick_config() {
  fed::FedConfig cfg;
  cfg.participation = 0.5;
  cfg.local_epochs = 1;
  cfg.batch_size = 5;
  cfg.lr = 0.05;
  cfg.body_lr = 0.05;
  cfg.rounds = 3;
  cfg.seed = 42;
  return cfg;
}

nn::Model small_mlp(std::size_t in, int classes, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::size_t> widths{in, 6, 4, static_cast<std::size_t>(classes)};
  return nn::make_mlp(widths, nn::Activation::ReLU, rng);
}

}  // namespace

TEST(Aggregation, IsElementwiseMeanIndependentOfOrder) {
  std::vector<std::pair<std::size_t, std::vector<Matrix>>> ups;
  ups.emplace_back(2, std::vector<Matrix>{Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}})});
  ups.emplace_back(0, std::vector<Matrix>{Matrix::from_rows({{3, 0}}), Matrix::from_rows({{-1}})});
  ups.emplace_back(1, std::vector<Matrix>{Matrix::from_rows({{2, 4}}), Matrix::from_rows({{1}})});
  const auto mean = fed::aggregate_shared(ups);
  EXPECT_DOUBLE_EQ(mean[0](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(mean[0](0, 1), 2.0);
  EXPECT_DOUBLE_EQ(mean[1](0, 0), 1.0);
  auto rev = ups;
  std::reverse(rev.begin(), rev.end());
  const auto again = fed::aggregate_shared(rev);
  for (std::size_t b = 0; b < mean.size(); ++b) EXPECT_EQ(again[b], mean[b]);
  EXPECT_THROW(fed::aggregate_shared({}), InvalidArgument);
}

TEST(Sampling, DrawsCeilRhoKDistinctClients) {
  Rng rng(1);
  for (double rho : {0.01, 0.1, 0.25, 0.5, 1.0}) {
    const auto ids = fed::sample_clients(37, rho, rng, false);
    EXPECT_EQ(ids.size(), static_cast<std::size_t>(std::ceil(rho * 37 - 1e-9)));
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    EXPECT_EQ(std::set<std::size_t>(ids.begin(), ids.end()).size(), ids.size());
    for (auto i : ids) EXPECT_LT(i, 37u);
  }
  EXPECT_EQ(fed::sample_clients(10, 0.1, rng, true).size(), 10u);
}

TEST(Rounds, FinalRoundIncludesEveryClient) {
  const auto clients = fixture::tiny_clients(8, 10, 5, 4, 3);
  auto cfg = quick_config();
  cfg.participation = 0.25;
  const auto res = fed::run_fedavg(clients, small_mlp(5, 4, 1), cfg);
  ASSERT_EQ(res.reports.size(), 3u);
  EXPECT_EQ(res.reports[0].participants.size(), 2u);
  EXPECT_EQ(res.reports[2].participants.size(), 8u);
  cfg.full_final_round = false;
  EXPECT_EQ(fed::run_fedavg(clients, small_mlp(5, 4, 1), cfg).reports[2].participants.size(), 2u);
}

TEST(Rounds, ThreadCountDoesNotChangeResults) {
  const auto clients = fixture::tiny_clients(10, 12, 5, 4, 7);
  auto cfg = quick_config();
  cfg.threads = 1;
  const auto a = fed::run_fedavg(clients, small_mlp(5, 4, 2), cfg);
  cfg.threads = 4;
  const auto b = fed::run_fedavg(clients, small_mlp(5, 4, 2), cfg);
  EXPECT_TRUE(fixture::same_params(a.global, b.global));
  for (std::size_t r = 0; r < a.reports.size(); ++r) {
    EXPECT_EQ(a.reports[r].mean_weighted_loss, b.reports[r].mean_weighted_loss);
    EXPECT_EQ(a.reports[r].participants, b.reports[r].participants);
  }
}

TEST(Rounds, MessagesCarryExactlyTheSharedBody) {
  const auto clients = fixture::tiny_clients(6, 10, 5, 4, 9);
  nn::Model init = small_mlp(5, 4, 3);
  init.split = nn::split_for_personal_depth(init, 1);
  const std::size_t shared = nn::parameter_count(init, nn::Partition::Shared);
  std::vector<nn::Model> models(6, init);
  std::vector<Vector> weights;
  for (const auto& ds : clients) weights.emplace_back(ds.size(), 1.0);
  auto cfg = quick_config();
  std::size_t downs = 0, ups = 0;
  cfg.message_tap = [&](std::size_t round, std::size_t sender, std::span<const std::uint8_t> bytes) {
    const auto msg = io::decode_message(bytes);
    EXPECT_EQ(msg.round, round);
    std::size_t count = 0;
    for (const auto& m : msg.shared) count += m.size();
    EXPECT_EQ(count, shared);
    (sender == fed::kServer ? downs : ups) += 1;
  };
  const auto reps = fed::run_rounds(models, clients, weights, cfg, fed::RoundBlock{1, 0, 3, true, {}});
  EXPECT_EQ(downs, 3u);
  std::size_t participants = 0;
  for (const auto& r : reps) {
    participants += r.participants.size();
    EXPECT_EQ(r.shared_params_per_client, 2 * shared);
  }
  EXPECT_EQ(ups, participants);
}

TEST(Rounds, HeadsStayLocal) {
  const auto clients = fixture::tiny_clients(4, 10, 5, 4, 11);
  nn::Model init = small_mlp(5, 4, 4);
  init.split = nn::split_for_personal_depth(init, 1);
  std::vector<nn::Model> models(4, init);
  std::vector<Vector> weights;
  for (const auto& ds : clients) weights.emplace_back(ds.size(), 1.0);
  auto cfg = quick_config();
  cfg.participation = 1.0;
  fed::run_rounds(models, clients, weights, cfg, fed::RoundBlock{1, 0, 2, true, {}});
  for (std::size_t c = 1; c < 4; ++c) {
    EXPECT_EQ(nn::shared_params(models[c]), nn::shared_params(models[0]));
    EXPECT_NE(nn::personal_params(models[c]), nn::personal_params(models[0]));
  }
}

TEST(Rounds, LinearFullBatchMatchesGradientDescentOracle) {
  // One dense layer, squared loss, full batch, one epoch, everyone participates: each round is
  // w <- mean_k (w - lr * grad_k(w)).
  data::SyntheticRegressionSpec spec;
  spec.clients = 4;
  spec.samples_per_client = 12;
  spec.dim = 3;
  const auto task = data::gen_synthetic_regression(spec, Rng(5));
  Rng irng(6);
  const std::vector<std::size_t> widths{3, 1};
  const nn::Model init = nn::make_mlp(widths, nn::Activation::Identity, irng);

  fed::FedConfig cfg;
  cfg.participation = 1.0;
  cfg.local_epochs = 1;
  cfg.batch_size = 100;
  cfg.lr = 0.1;
  cfg.momentum = 0.0;
  cfg.rounds = 5;
  cfg.loss = nn::LossKind::MSE;
  const auto res = fed::run_fedavg(task.clients, init, cfg);

  const auto& d0 = std::get<nn::Dense>(init.layers[0]);
  std::vector<double> w{d0.weight(0, 0), d0.weight(0, 1), d0.weight(0, 2), d0.bias(0, 0)};
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> next(4, 0.0);
    for (const auto& ds : task.clients) {
      std::vector<double> g(4, 0.0);
      const double n = static_cast<double>(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) {
        double pred = w[3];
        for (std::size_t j = 0; j < 3; ++j) pred += w[j] * ds.features(i, j);
        const double e = 2.0 * (pred - ds.targets[i]) / n;
        for (std::size_t j = 0; j < 3; ++j) g[j] += e * ds.features(i, j);
        g[3] += e;
      }
      for (std::size_t j = 0; j < 4; ++j) next[j] += (w[j] - cfg.lr * g[j]) / 4.0;
    }
    w = next;
  }
  const auto& d = std::get<nn::Dense>(res.global.layers[0]);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(d.weight(0, j), w[j], 1e-12);
  EXPECT_NEAR(d.bias(0, 0), w[3], 1e-12);
}

TEST(LocalTrain, RejectsMismatchedInputs) {
  const auto clients = fixture::tiny_clients(2, 10, 5, 4, 1);
  nn::Model m = small_mlp(5, 4, 1);
  Rng rng(1);
  const auto cfg = quick_config();
  std::vector<double> short_w(3, 1.0);
  EXPECT_THROW(fed::local_train(m, clients[0], short_w, cfg, rng), DimensionError);
  nn::Model wrong = small_mlp(6, 4, 1);
  std::vector<double> w(clients[0].size(), 1.0);
  EXPECT_THROW(fed::local_train(wrong, clients[0], w, cfg, rng), DimensionError);
  auto bad = cfg;
  bad.participation = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(LocalTrain, ZeroWeightSamplesDoNotMove) {
  const auto clients = fixture::tiny_clients(1, 10, 5, 4, 2);
  nn::Model m = small_mlp(5, 4, 5);
  const nn::Model before = m;
  auto cfg = quick_config();
  cfg.batch_size = 1;
  std::vector<double> w(10, 0.0);
  Rng rng(3);
  EXPECT_THROW(fed::local_train(m, clients[0], w, cfg, rng), InvalidArgument);
  EXPECT_TRUE(fixture::same_params(m, before));
}

TEST(Comm, AccountingFormula) {
  const std::vector<std::size_t> shared{100, 60, 20}, rounds{4, 3, 1};
  const auto acc = fed::comm_account(shared, rounds, 50, 0.1, true, 120);
  ASSERT_EQ(acc.size(), 3u);
  EXPECT_EQ(acc[0].participant_rounds, 3u * 5u + 50u);
  EXPECT_EQ(acc[0].total, 200u * (15u + 50u));
  EXPECT_EQ(acc[1].per_client_per_round, 120u);
  EXPECT_EQ(acc[2].participant_rounds, 50u);
  EXPECT_DOUBLE_EQ(acc[2].shared_fraction, 20.0 / 120.0);
  const auto no_full = fed::comm_account(shared, rounds, 50, 0.1, false, 120);
  EXPECT_EQ(no_full[0].participant_rounds, 20u);
  const std::vector<std::size_t> one{1};
  EXPECT_THROW(fed::comm_account(shared, one, 50, 0.1, true, 120), DimensionError);
}
