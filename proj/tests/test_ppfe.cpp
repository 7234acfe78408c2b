#include <gtest/gtest.h>

#include <numeric>

#include "fixtures.hpp"
#include "ppfe/error.hpp"
#include "ppfe/ppfe.hpp"

using namespace ppfe;

namespace {

nn::Model mlp(std::vector<std::size_t> widths, std::uint64_t seed) {
  Rng rng(seed);
  return nn::make_mlp(widths, nn::Activation::ReLU, rng);
}

fed::FedConfig small_config() {
  fed::FedConfig cfg;
  cfg.participation = 0.5;
  cfg.local_epochs = 1;
  cfg.batch_size = 5;
  cfg.lr = 0.05;
  cfg.body_lr = 0.01;
  cfg.seed = 3;
  return cfg;
}

std::size_t zeros(const Matrix& m) {
  return static_cast<std::size_t>(std::count(m.data().begin(), m.data().end(), 0.0));
}

}  // namespace

TEST(Reweight, MatchesScalarOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<double> l(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = trial % 2 ? static_cast<double>(rng.uniform_index(2)) : 3.0 * rng.uniform();
      w[i] = 0.1 + 2.0 * rng.uniform();
    }
    const auto got = reweight(l, w);
    const auto want = oracle::reweight(l, w);
    EXPECT_NEAR(got.epsilon, want.eps, 1e-12);
    EXPECT_NEAR(got.beta, want.beta, 1e-10);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got.weights[i], want.w[i], 1e-9 * (1.0 + want.w[i]));
  }
}

TEST(Reweight, FixtureValues) {
  const std::vector<double> l{1, 1, 1, 1, 1, 0, 0, 0}, w(8, 1.0);
  const auto r = reweight(l, w);
  EXPECT_NEAR(r.epsilon, 0.625, 1e-12);
  EXPECT_NEAR(r.beta, -0.25541281188299525, 1e-6);
  EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 8.0, 1e-12);
  // beta < 0 with upweighting shrinks the misclassified samples.
  EXPECT_LT(r.weights[0], r.weights[7]);
}

TEST(Reweight, PropertiesHoldOnRandomInputs) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(30);
    std::vector<double> l(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
      w[i] = rng.uniform() + 0.05;
    }
    const auto r = reweight(l, w);
    EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), static_cast<double>(n), 1e-9);
    for (double v : r.weights) EXPECT_GT(v, 0.0);
    EXPECT_GE(r.epsilon, 1e-6);
    EXPECT_LE(r.epsilon, 1.0 - 1e-6);
    EXPECT_EQ(r.beta > 0.0, r.epsilon < 0.5);
    // Ratio between a wrong and a right sample moves by exp(beta).
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (l[i] == 1.0 && l[j] == 0.0) {
          EXPECT_NEAR((r.weights[i] / r.weights[j]) / (w[i] / w[j]), std::exp(r.beta), 1e-9);
        }
  }
}

TEST(Reweight, ClampAndSign) {
  const std::vector<double> zero(5, 0.0), w(5, 1.0);
  const auto r = reweight(zero, w, 1e-3);
  EXPECT_DOUBLE_EQ(r.epsilon, 1e-3);
  EXPECT_NEAR(r.beta, 0.5 * std::log(0.999 / 0.001), 1e-12);
  for (double v : r.weights) EXPECT_DOUBLE_EQ(v, 1.0);
  const std::vector<double> all(5, 1.0);
  EXPECT_DOUBLE_EQ(reweight(all, w, 1e-3).epsilon, 1.0 - 1e-3);

  const std::vector<double> l{1, 0, 0, 0};
  const std::vector<double> w4(4, 1.0);
  const auto up = reweight(l, w4, 1e-6, WeightUpdateSign::UpweightLoss);
  const auto down = reweight(l, w4, 1e-6, WeightUpdateSign::DownweightLoss);
  EXPECT_GT(up.weights[0], 1.0);
  EXPECT_LT(down.weights[0], 1.0);

  EXPECT_THROW(reweight(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(reweight(l, w), DimensionError);
  EXPECT_THROW(reweight(l, w4, 0.7), InvalidArgument);
  EXPECT_THROW(reweight(std::vector<double>{-1, 0, 0, 0}, w4), InvalidArgument);
}

TEST(Reweight, ZeroWeightsStayZero) {
  const std::vector<double> l{1, 0, 1, 0}, w{0, 1, 1, 1};
  const auto r = reweight(l, w);
  EXPECT_EQ(r.weights[0], 0.0);
  EXPECT_NEAR(r.epsilon, 1.0 / 3.0, 1e-15);
}

TEST(BiasBound, ClosedForm) {
  EXPECT_NEAR(bias_bound(0.1, 4), std::exp(-0.08), 1e-12);
  EXPECT_LT(bias_bound(0.2, 5), bias_bound(0.2, 4));
  EXPECT_THROW(bias_bound(0.0, 3), InvalidArgument);
}

TEST(Plan, Validation) {
  const std::vector<std::size_t> rounds{5, 3, 2};
  StagePlan plan = progressive_plan(rounds);
  EXPECT_EQ(plan.total_rounds(), 10u);
  EXPECT_EQ(plan.first_round(2), 8u);
  EXPECT_NO_THROW(plan.validate(3));
  EXPECT_THROW(plan.validate(1), InvalidArgument);
  auto p = plan;
  p.round_budget = 11;
  EXPECT_THROW(p.validate(3), InvalidArgument);
  p = plan;
  p.stages[0].personal_layers = 1;
  EXPECT_THROW(p.validate(3), InvalidArgument);
  p = plan;
  p.stages[2].personal_layers = 0;
  EXPECT_THROW(p.validate(3), InvalidArgument);
  p = plan;
  p.stages[1].rounds = 0;
  p.round_budget.reset();
  EXPECT_THROW(p.validate(3), InvalidArgument);
  EXPECT_THROW(StagePlan{}.validate(3), InvalidArgument);
}

TEST(Mask, ExactCountAndDeterminism) {
  for (double f : {0.0, 0.1, 0.3, 1.0}) {
    const Matrix m = structured_mask(7, 9, f, 11, 2);
    EXPECT_EQ(zeros(m), static_cast<std::size_t>(std::llround(f * 63)));
    EXPECT_EQ(m, structured_mask(7, 9, f, 11, 2));
  }
  EXPECT_NE(structured_mask(7, 9, 0.3, 11, 2), structured_mask(7, 9, 0.3, 12, 2));
  EXPECT_THROW(structured_mask(2, 2, 1.5, 0, 0), InvalidArgument);
}

TEST(Transition, NoReductionIsBitExact) {
  const nn::Model base = mlp({5, 8, 6, 3}, 1);
  nn::Model prev = base;
  prev.split = prev.layers.size();
  StageSpec spec;
  spec.personal_layers = 2;
  const nn::Model next = transition_stage(prev, spec);
  EXPECT_EQ(nn::personal_depth(next), 2u);
  Rng rng(2);
  const Matrix x = oracle::random_matrix(rng, 10, 5);
  EXPECT_EQ(nn::predict(next, x), nn::predict(prev, x));
}

TEST(Transition, FullRankLowRankPreservesFunction) {
  const nn::Model base = mlp({5, 8, 6, 3}, 2);
  nn::Model prev = base;
  prev.split = prev.layers.size();
  StageSpec spec;
  spec.personal_layers = 2;
  spec.reduction.kind = Reduction::Kind::LowRank;
  spec.reduction.ranks = {6, 3};
  const nn::Model next = transition_stage(prev, spec);
  const auto lin = nn::linear_layer_indices(next);
  EXPECT_TRUE(std::holds_alternative<nn::LowRankDense>(next.layers[lin[1]]));
  EXPECT_TRUE(std::holds_alternative<nn::LowRankDense>(next.layers[lin[2]]));
  Rng rng(3);
  const Matrix x = oracle::random_matrix(rng, 10, 5);
  EXPECT_LT(frobenius_norm(nn::predict(next, x) - nn::predict(prev, x)), 1e-8);

  spec.reduction.ranks = {7};
  EXPECT_THROW(transition_stage(prev, spec), InvalidArgument);
}

TEST(Transition, TruncatedRankLeavesTailEnergy) {
  const nn::Model base = mlp({5, 8, 6, 3}, 4);
  nn::Model prev = base;
  prev.split = prev.layers.size();
  StageSpec spec;
  spec.personal_layers = 1;
  spec.reduction.kind = Reduction::Kind::LowRank;
  spec.reduction.ranks = {1};
  const nn::Model next = transition_stage(prev, spec);
  const auto lin = nn::linear_layer_indices(next);
  const Matrix w = nn::effective_weight(prev.layers[lin[2]]);
  const Matrix approx = nn::effective_weight(next.layers[lin[2]]);
  const auto sv = oracle::singular_values(w);
  double tail = 0.0;
  for (std::size_t i = 1; i < sv.size(); ++i) tail += sv[i] * sv[i];
  EXPECT_NEAR(std::pow(frobenius_norm(w - approx), 2), tail, 1e-9);
}

TEST(Transition, MaskFractionsPerStage) {
  const nn::Model base = mlp({5, 10, 10, 10}, 5);
  Reduction mask;
  mask.kind = Reduction::Kind::Mask;
  mask.mask_seed = 9;
  StagePlan plan;
  for (std::size_t t = 0; t < 4; ++t) plan.stages.push_back(StageSpec{t, t == 0 ? Reduction{} : mask, 1, {}, {}});
  const auto archs = stage_architectures(base, plan);
  const auto lin = nn::linear_layer_indices(base);
  auto zero_count = [&](const nn::Model& m, std::size_t li) {
    const auto* md = std::get_if<nn::MaskedDense>(&m.layers[lin[li]]);
    return md ? zeros(md->mask) : 0u;
  };
  EXPECT_EQ(zero_count(archs[1], 2), 30u);
  EXPECT_EQ(zero_count(archs[2], 2), 30u);
  EXPECT_EQ(zero_count(archs[2], 1), 10u);
  EXPECT_EQ(zero_count(archs[3], 0), 5u);
  EXPECT_EQ(zero_count(archs[3], 1), 10u);
  for (std::size_t t = 1; t < 4; ++t) {
    EXPECT_LT(nn::parameter_count(archs[t], nn::Partition::Shared),
              nn::parameter_count(archs[t - 1], nn::Partition::Shared));
  }
}

TEST(Ensemble, ScoresAreBetaWeightedSums) {
  Ensemble ens;
  ens.stages = {mlp({4, 5, 3}, 1), mlp({4, 5, 3}, 2)};
  ens.betas = {0.7, -0.2};
  Rng rng(6);
  const Matrix x = oracle::random_matrix(rng, 6, 4);
  const Matrix a = nn::predict(ens.stages[0], x), b = nn::predict(ens.stages[1], x);
  const Matrix s = ensemble_scores(ens, x);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(s.data()[i], 0.7 * a.data()[i] - 0.2 * b.data()[i], 1e-14);
  EXPECT_EQ(ensemble_scores(ens, x, 1), a * 0.7);
  const Matrix prov = ensemble_scores(ens, x, 2, 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(prov.data()[i], 0.7 * a.data()[i] + b.data()[i], 1e-14);
  EXPECT_EQ(ensemble_classify(ens, x), argmax_rows(s));
  EXPECT_THROW(ensemble_scores(Ensemble{}, x), InvalidArgument);
}

TEST(Training, SingleStageEqualsFedAvg) {
  const auto clients = fixture::tiny_clients(6, 10, 5, 4, 2);
  const nn::Model init = mlp({5, 6, 4, 4}, 3);
  auto cfg = small_config();
  cfg.rounds = 4;
  const std::vector<std::size_t> rounds{4};
  const auto res = run_ppfe(clients, init, progressive_plan(rounds), cfg);
  const auto fa = fed::run_fedavg(clients, init, cfg);
  for (const auto& ens : res.ensembles) {
    ASSERT_EQ(ens.size(), 1u);
    EXPECT_TRUE(fixture::same_params(ens.stages[0], fa.global));
  }
}

TEST(Training, StagesShrinkSharedBodyAndSpendTheBudget) {
  const auto clients = fixture::tiny_clients(6, 10, 5, 4, 4);
  const nn::Model init = mlp({5, 6, 4, 4}, 5);
  auto cfg = small_config();
  const std::vector<std::size_t> rounds{2, 2, 1, 1};
  const auto res = run_ppfe(clients, init, progressive_plan(rounds), cfg);
  ASSERT_EQ(res.stages.size(), 4u);
  for (std::size_t t = 1; t < 4; ++t) EXPECT_LT(res.stages[t].shared_params, res.stages[t - 1].shared_params);
  EXPECT_EQ(res.stages[3].shared_params, 0u);
  EXPECT_EQ(res.rounds.size(), 6u);
  for (std::size_t r = 0; r < res.rounds.size(); ++r) EXPECT_EQ(res.rounds[r].round, r);
  for (std::size_t c = 0; c < clients.size(); ++c) {
    EXPECT_EQ(res.ensembles[c].size(), 4u);
    EXPECT_NEAR(std::accumulate(res.final_weights[c].begin(), res.final_weights[c].end(), 0.0),
                static_cast<double>(clients[c].size()), 1e-9);
  }
}

TEST(Training, ReweightingOffKeepsUnitWeights) {
  const auto clients = fixture::tiny_clients(4, 10, 5, 4, 6);
  PpfeOptions opt;
  opt.reweighting = false;
  const std::vector<std::size_t> rounds{1, 1};
  const auto res = run_ppfe(clients, mlp({5, 6, 4, 4}, 7), progressive_plan(rounds), small_config(), opt);
  for (const auto& w : res.final_weights)
    for (double v : w) EXPECT_EQ(v, 1.0);
}

TEST(Comm, PlanTrafficUsesStageBodies) {
  const nn::Model base = mlp({5, 6, 4, 3}, 1);
  const std::vector<std::size_t> rounds{3, 2};
  const auto acc = comm_account(progressive_plan(rounds), base, 10, 0.3);
  ASSERT_EQ(acc.size(), 2u);
  EXPECT_EQ(acc[0].shared_params, 5u * 6 + 6 + 6 * 4 + 4 + 4 * 3 + 3);
  EXPECT_EQ(acc[1].shared_params, 5u * 6 + 6 + 6 * 4 + 4);
  EXPECT_EQ(acc[0].participant_rounds, 2u * 3 + 10);
  EXPECT_DOUBLE_EQ(acc[0].shared_fraction, 1.0);
}
