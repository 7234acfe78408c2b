#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ppfe/error.hpp"
#include "ppfe/ridge.hpp"

using namespace ppfe;

TEST(Ridge, TwoByTwoMatchesExplicitInverse) {
  const Matrix x = Matrix::from_rows({{1, 2}, {0, 1}, {3, -1}, {2, 2}});
  const std::vector<double> y{1, -1, 2, 0.5};
  const double lam = 0.7;
  double a = lam, b = 0, d = lam, r0 = 0, r1 = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    a += x(i, 0) * x(i, 0);
    b += x(i, 0) * x(i, 1);
    d += x(i, 1) * x(i, 1);
    r0 += x(i, 0) * y[i];
    r1 += x(i, 1) * y[i];
  }
  const auto [w0, w1] = oracle::solve2(a, b, b, d, r0, r1);
  const auto w = ridge::ridge_solve(x, y, lam);
  EXPECT_NEAR(w[0], w0, 1e-12);
  EXPECT_NEAR(w[1], w1, 1e-12);
}

TEST(Ridge, PriorShiftsTheSolution) {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 1}});
  const std::vector<double> y{0, 0}, prior{2, -4};
  const auto w = ridge::ridge_solve_weighted(x, y, {}, 1.0, prior);
  EXPECT_NEAR(w[0], 1.0, 1e-14);
  EXPECT_NEAR(w[1], -2.0, 1e-14);
}

TEST(Ridge, IntegerWeightsEqualDuplicatedRows) {
  Rng rng(3);
  const Matrix x = oracle::random_matrix(rng, 6, 3);
  std::vector<double> y(6), omega{1, 2, 3, 1, 2, 1};
  for (double& v : y) v = rng.normal();
  std::vector<std::vector<double>> rows;
  std::vector<double> dy;
  for (std::size_t i = 0; i < 6; ++i)
    for (int c = 0; c < static_cast<int>(omega[i]); ++c) {
      rows.emplace_back(x.row(i).begin(), x.row(i).end());
      dy.push_back(y[i]);
    }
  Matrix xd(rows.size(), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) xd(i, j) = rows[i][j];
  const auto a = ridge::ridge_solve_weighted(x, y, omega, 0.3);
  const auto b = ridge::ridge_solve(xd, dy, 0.3);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
}

TEST(Ridge, ErrorsAreReported) {
  const Matrix x(3, 2);
  const std::vector<double> y(3, 1.0), short_y(2, 1.0);
  EXPECT_THROW(ridge::ridge_solve(x, short_y, 1.0), DimensionError);
  EXPECT_THROW(ridge::ridge_solve(x, y, -1.0), InvalidArgument);
  EXPECT_THROW(ridge::ridge_solve(x, y, 0.0), NumericError);
}

TEST(Ridge, DefaultGridIsThirteenLogSpacedValues) {
  const auto g = ridge::default_lambda_grid();
  ASSERT_EQ(g.size(), 13u);
  EXPECT_NEAR(g.front(), 1e-4, 1e-18);
  EXPECT_NEAR(g.back(), 1e2, 1e-12);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::sqrt(10.0), 1e-12);
}

TEST(Ridge, TiesGoToTheSmallerLambda) {
  Rng rng(4);
  const Matrix x = oracle::random_matrix(rng, 20, 3);
  const std::vector<double> y(20, 0.0);
  const std::vector<double> grid{10.0, 0.1, 1.0};
  Rng r(1);
  const auto fit = ridge::select_lambda(x, y, grid, 0.25, r);
  EXPECT_DOUBLE_EQ(fit.lambda, 0.1);
  EXPECT_EQ(fit.val_mse, 0.0);
}

TEST(Ridge, HoldoutSplitPartitionsIndices) {
  Rng rng(5);
  const auto s = ridge::holdout_split(20, 0.2, rng);
  EXPECT_EQ(s.val.size(), 4u);
  EXPECT_EQ(s.train.size(), 16u);
  std::vector<std::size_t> all = s.val;
  all.insert(all.end(), s.train.begin(), s.train.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(ridge::holdout_split(2, 0.1, rng), InvalidArgument);
}

namespace {

ridge::LinearData small_data(std::uint64_t seed, double ratio = 0.5) {
  data::SyntheticRegressionSpec spec;
  spec.clients = 20;
  spec.samples_per_client = 60;
  spec.dim = 5;
  spec.global_variance = 0.005;
  spec.personalization_ratio = ratio;
  return ridge::make_linear_data(spec, Rng(seed));
}

}  // namespace

TEST(Linear, FedAvgIsTheExactAverageOfClientSolutions) {
  const auto d = small_data(1);
  const auto r = ridge::run_linear_method(d, ridge::LinearMethod::fedavg());
  std::vector<Vector> ws;
  for (const auto& c : d.task.clients) ws.push_back(ridge::ridge_solve(c.features, c.targets, r.lambda));
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0.0;
    for (const auto& w : ws) s += w[j];
    EXPECT_NEAR(r.weights[0][j], s / 20.0, 1e-14);
  }
  for (const auto& w : r.weights) EXPECT_EQ(w, r.weights[0]);
}

TEST(Linear, WeightedMeanMseUsesTestCounts) {
  const auto d = small_data(2);
  const auto r = ridge::run_linear_method(d, ridge::LinearMethod::local());
  double sse = 0.0, n = 0.0;
  for (std::size_t k = 0; k < r.client_mse.size(); ++k) {
    sse += r.client_mse[k] * r.client_n[k];
    n += r.client_n[k];
  }
  EXPECT_NEAR(r.mean_mse, sse / n, 1e-15);
  EXPECT_EQ(d.test.size(), 20u);
  EXPECT_EQ(d.test[0].size(), 60u);
}

TEST(Linear, StagedTrainingErrorMostlyNonIncreasing) {
  const auto d = small_data(3);
  const auto m = ridge::LinearMethod::ppfe(4);
  const Vector base = ridge::run_linear_method(d, ridge::LinearMethod::fedavg()).weights[0];
  std::size_t ok = 0, total = 0;
  for (const auto& c : d.task.clients) {
    const auto fit = ridge::linear_ppfe_client(c.features, c.targets, base, 0.1, m);
    ASSERT_EQ(fit.train_mse.size(), 4u);
    ASSERT_EQ(fit.members.size(), 4u);
    bool mono = true;
    for (std::size_t t = 1; t < 4; ++t) mono = mono && fit.train_mse[t] <= fit.train_mse[t - 1] + 1e-12;
    ok += mono;
    ++total;
  }
  EXPECT_GE(static_cast<double>(ok), 0.9 * static_cast<double>(total));
}

TEST(Linear, SingleStageReturnsTheBase) {
  const auto d = small_data(4);
  const auto& c = d.task.clients[0];
  const Vector base{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto fit = ridge::linear_ppfe_client(c.features, c.targets, base, 1.0, ridge::LinearMethod::ppfe(1));
  EXPECT_EQ(fit.w, base);
  EXPECT_THROW(ridge::linear_ppfe_client(c.features, c.targets, base, 1.0, ridge::LinearMethod::ppfe(0)),
               InvalidArgument);
}

TEST(Linear, PersonalizationHelpsWhenClientsDiffer) {
  const auto d = small_data(5, 1.0);
  const double fedavg = ridge::run_linear_method(d, ridge::LinearMethod::fedavg()).mean_mse;
  const double ppfe = ridge::run_linear_method(d, ridge::LinearMethod::ppfe()).mean_mse;
  EXPECT_LT(ppfe, fedavg);
}

TEST(Linear, RunsAreDeterministic) {
  const auto a = ridge::run_linear_method(small_data(6), ridge::LinearMethod::ppfe());
  const auto b = ridge::run_linear_method(small_data(6), ridge::LinearMethod::ppfe());
  EXPECT_EQ(a.mean_mse, b.mean_mse);
  EXPECT_EQ(a.lambda, b.lambda);
}

TEST(Ridge, IdentityDesignAndShrinkage) {
  const std::vector<double> y{1.5, -2.0, 0.25};
  const auto w = ridge::ridge_solve(Matrix::identity(3), y, 0.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(w[j], y[j]);
  Rng rng(8);
  const Matrix x = oracle::random_matrix(rng, 10, 4);
  std::vector<double> yy(10);
  for (double& v : yy) v = rng.normal();
  const double lam = 1e6;
  const auto ws = ridge::ridge_solve(x, yy, lam);
  double xty = 0.0, nw = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 10; ++i) s += x(i, j) * yy[i];
    xty += s * s;
    nw += ws[j] * ws[j];
  }
  EXPECT_LE(std::sqrt(nw), std::sqrt(xty) / lam);
}

TEST(Ridge, SingletonGridAndNoiselessData) {
  Rng rng(9);
  const Matrix x = oracle::random_matrix(rng, 10, 3);
  const std::vector<double> truth{1.0, -1.0, 0.5};
  std::vector<double> y(10);
  for (std::size_t i = 0; i < 10; ++i) y[i] = dot(x.row(i), truth);
  Rng r1(1);
  EXPECT_DOUBLE_EQ(ridge::select_lambda(x, y, std::vector<double>{0.3}, 0.2, r1).lambda, 0.3);
  Rng r2(1);
  EXPECT_DOUBLE_EQ(ridge::select_lambda(x, y, ridge::default_lambda_grid(), 0.2, r2).lambda, 1e-4);
}

TEST(Ridge, HeavyNoiseFavoursRegularization) {
  std::size_t positive = 0;
  const std::vector<double> grid{0.0, 0.1, 1.0, 10.0, 100.0};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Matrix x = oracle::random_matrix(rng, 15, 4);
    std::vector<double> y(15);
    for (std::size_t i = 0; i < 15; ++i) y[i] = 0.1 * x(i, 0) + 5.0 * rng.normal();
    Rng r(seed + 1000);
    positive += ridge::select_lambda(x, y, grid, 0.2, r).lambda > 0.0;
  }
  EXPECT_GE(positive, 40u);
}

TEST(Linear, NoiselessHomogeneousClientsAreSolvedExactly) {
  data::SyntheticRegressionSpec spec;
  spec.clients = 10;
  spec.samples_per_client = 40;
  spec.dim = 5;
  spec.personalization_ratio = 0.0;
  spec.noise_variance = 0.0;
  const auto d = ridge::make_linear_data(spec, Rng(10));
  ridge::LinearOptions opt;
  opt.grid = {1e-12};
  EXPECT_LT(ridge::run_linear_method(d, ridge::LinearMethod::fedavg(), opt).mean_mse, 1e-10);
  EXPECT_LT(ridge::run_linear_method(d, ridge::LinearMethod::ppfe(), opt).mean_mse, 1e-10);
  EXPECT_LT(ridge::run_linear_method(d, ridge::LinearMethod::local(), opt).mean_mse, 1e-10);
}

TEST(Linear, LocalBeatsFedAvgUnderFullHeterogeneity) {
  double local = 0.0, fedavg = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    data::SyntheticRegressionSpec spec;
    spec.clients = 100;
    spec.personalization_ratio = 1.0;
    const auto d = ridge::make_linear_data(spec, Rng(seed));
    local += ridge::run_linear_method(d, ridge::LinearMethod::local()).mean_mse;
    fedavg += ridge::run_linear_method(d, ridge::LinearMethod::fedavg()).mean_mse;
  }
  EXPECT_LT(local, fedavg);
}
