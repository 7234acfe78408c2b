#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "ppfe/binary.hpp"
#include "ppfe/error.hpp"
#include "ppfe/nn.hpp"

using namespace ppfe;

TEST(Gradients, CentralDifferencesAgreeForAllLayerKinds) {
  Rng rng(11);
  for (int net = 0; net < 12; ++net) {
    const auto act = net % 2 == 0 ? nn::Activation::Tanh : nn::Activation::ReLU;
    nn::Model m = fixture::random_net(rng, 5, 6, 4, 3, act, net);
    const Matrix x = oracle::random_matrix(rng, 7, 5);
    std::vector<double> w(7);
    for (double& v : w) v = 0.2 + rng.uniform();
    std::vector<int> labels(7);
    for (int& l : labels) l = static_cast<int>(rng.uniform_index(3));
    EXPECT_LE(fixture::gradient_check(m, x, nn::Targets::classes(labels), w, nn::LossKind::CrossEntropy), 1e-4);
    EXPECT_LE(fixture::gradient_check(m, x, nn::Targets::regression(oracle::random_matrix(rng, 7, 3)), w,
                                      nn::LossKind::MSE),
              1e-4);
  }
}

TEST(Forward, DenseLayerMatchesHandComputation) {
  nn::Model m;
  m.layers.push_back(nn::Dense{Matrix::from_rows({{1, 2}, {-1, 0.5}}), Matrix::from_rows({{0.5, -1}})});
  m.layers.push_back(nn::ActivationLayer{nn::Activation::ReLU});
  m.split = m.layers.size();
  const Matrix y = nn::predict(m, Matrix::from_rows({{1, 1}, {-2, 1}}));
  EXPECT_DOUBLE_EQ(y(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 0.0);  // -1 + 0.5 - 1 clipped
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(1, 1), 1.5);
}

TEST(Forward, LowRankEqualsDenseProduct) {
  Rng rng(3);
  const Matrix a = oracle::random_matrix(rng, 4, 2), b = oracle::random_matrix(rng, 2, 5);
  const Matrix bias = oracle::random_matrix(rng, 1, 4);
  nn::Model lr, dense;
  lr.layers.push_back(nn::LowRankDense{a, b, bias});
  dense.layers.push_back(nn::Dense{matmul(a, b), bias});
  lr.split = dense.split = 1;
  const Matrix x = oracle::random_matrix(rng, 3, 5);
  EXPECT_LT(frobenius_norm(nn::predict(lr, x) - nn::predict(dense, x)), 1e-12);
  EXPECT_EQ(nn::layer_parameter_count(lr.layers[0]), 8u + 10u + 4u);
}

TEST(Losses, CrossEntropyMatchesLogSoftmax) {
  const Matrix logits = Matrix::from_rows({{1.0, 2.0, 0.5}});
  const auto l = nn::per_sample_loss(logits, nn::Targets::classes({1}), nn::LossKind::CrossEntropy);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  EXPECT_NEAR(l[0], -std::log(std::exp(2.0) / z), 1e-12);
}

TEST(Losses, WeightedMeanUsesWeights) {
  const Matrix out = Matrix::from_rows({{1.0}, {3.0}});
  const auto t = nn::Targets::regression(std::vector<double>{0.0, 0.0});
  const std::vector<double> w{1.0, 3.0};
  const double per0 = nn::per_sample_loss(out, t, nn::LossKind::MSE)[0];
  const double per1 = nn::per_sample_loss(out, t, nn::LossKind::MSE)[1];
  EXPECT_NEAR(nn::weighted_loss(out, t, w, nn::LossKind::MSE), (per0 + 3.0 * per1) / 4.0, 1e-12);
}

TEST(Model, SplitHelpersAndCounts) {
  Rng rng(5);
  const std::vector<std::size_t> widths{4, 3, 2};
  nn::Model m = nn::make_mlp(widths, nn::Activation::ReLU, rng);
  EXPECT_EQ(m.layers.size(), 3u);
  EXPECT_EQ(nn::linear_layer_indices(m), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(nn::split_for_personal_depth(m, 0), 3u);
  EXPECT_EQ(nn::split_for_personal_depth(m, 1), 2u);
  EXPECT_EQ(nn::split_for_personal_depth(m, 2), 0u);
  EXPECT_THROW(nn::split_for_personal_depth(m, 3), InvalidArgument);
  m.split = 2;
  EXPECT_EQ(nn::personal_depth(m), 1u);
  EXPECT_EQ(nn::parameter_count(m, nn::Partition::Shared), 15u);
  EXPECT_EQ(nn::parameter_count(m, nn::Partition::Personal), 8u);
  EXPECT_EQ(nn::parameter_count(m, nn::Partition::All), 23u);
}

TEST(Model, MaskedCountsOnlySupport) {
  nn::MaskedDense md{Matrix(2, 3), Matrix(1, 2), Matrix::from_rows({{1, 0, 1}, {0, 0, 1}})};
  EXPECT_EQ(nn::layer_parameter_count(nn::Layer{md}), 3u + 2u);
}

TEST(Sgd, MaskedWeightsStayZero) {
  Rng rng(2);
  nn::Model m = fixture::random_net(rng, 4, 5, 3, 2, nn::Activation::Tanh, 1);
  const Matrix x = oracle::random_matrix(rng, 6, 4);
  const auto t = nn::Targets::regression(oracle::random_matrix(rng, 6, 2));
  const std::vector<double> w(6, 1.0);
  nn::SgdMomentum opt(0.1, 0.9);
  for (int step = 0; step < 5; ++step) {
    auto fw = nn::forward(m, x);
    const auto g = nn::backward(m, fw.cache, nn::weighted_loss_grad(fw.output, t, w, nn::LossKind::MSE));
    nn::sgd_step(opt, m, g, nn::ParamFilter::All);
  }
  for (const auto& l : m.layers) {
    const auto* md = std::get_if<nn::MaskedDense>(&l);
    if (!md) continue;
    for (std::size_t i = 0; i < md->mask.size(); ++i) {
      if (md->mask.data()[i] == 0.0) {
        EXPECT_EQ(md->weight.data()[i], 0.0);
      }
    }
  }
}

TEST(Sgd, FilterLeavesOtherPartitionUntouched) {
  Rng rng(4);
  const std::vector<std::size_t> widths{3, 4, 2};
  nn::Model m = nn::make_mlp(widths, nn::Activation::Tanh, rng);
  m.split = 2;
  const nn::Model before = m;
  const Matrix x = oracle::random_matrix(rng, 5, 3);
  const auto t = nn::Targets::classes({0, 1, 0, 1, 1});
  const std::vector<double> w(5, 1.0);
  nn::SgdMomentum opt(0.1, 0.0);
  auto fw = nn::forward(m, x);
  nn::sgd_step(opt, m, nn::backward(m, fw.cache, nn::weighted_loss_grad(fw.output, t, w, nn::LossKind::CrossEntropy)),
               nn::ParamFilter::Personal);
  EXPECT_EQ(nn::shared_params(m), nn::shared_params(before));
  EXPECT_NE(nn::personal_params(m), nn::personal_params(before));
}

TEST(Backward, StaleCacheIsRejected) {
  Rng rng(6);
  const std::vector<std::size_t> widths{2, 2};
  nn::Model m = nn::make_mlp(widths, nn::Activation::Identity, rng);
  auto fw = nn::forward(m, Matrix(1, 2, 1.0));
  ++m.revision;
  EXPECT_THROW(nn::backward(m, fw.cache, Matrix(1, 2, 1.0)), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitExactForAllLayerKinds) {
  Rng rng(12);
  for (int v = 0; v < 3; ++v) {
    nn::Model m = fixture::random_net(rng, 5, 6, 4, 3, nn::Activation::Tanh, v);
    m.split = nn::split_for_personal_depth(m, 2);
    const auto bytes = io::encode_model(m);
    const nn::Model back = io::decode_model(bytes);
    EXPECT_TRUE(fixture::same_params(m, back));
    EXPECT_EQ(io::encode_model(back), bytes);
    const Matrix x = oracle::random_matrix(rng, 4, 5);
    EXPECT_EQ(nn::predict(m, x), nn::predict(back, x));
  }
  const auto path = std::filesystem::temp_directory_path() / "ppfe_test_model.bin";
  nn::Model m = fixture::random_net(rng, 3, 3, 3, 2, nn::Activation::ReLU, 0);
  io::save_model(m, path);
  EXPECT_TRUE(fixture::same_params(io::load_model(path), m));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputIsRejected) {
  Rng rng(13);
  nn::Model m = fixture::random_net(rng, 3, 3, 3, 2, nn::Activation::ReLU, 0);
  auto bytes = io::encode_model(m);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(io::decode_model(bad_magic), ParseError);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(io::decode_model(bytes), ParseError);
  EXPECT_THROW(io::load_model("/nonexistent/ppfe/model.bin"), IoError);
}
