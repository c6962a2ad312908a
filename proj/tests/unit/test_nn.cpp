#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "wproj/error.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"

using namespace wproj;

namespace {

double max_rel_error(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST(Network, ShapeChainAndCounts) {
  const Network net = fixture::small_net(3);
  EXPECT_EQ(net.weight_layers().size(), 3U);
  EXPECT_EQ(net.bn_layers().size(), 3U);
  EXPECT_EQ(net.num_classes(), 3U);
  EXPECT_EQ(net.output_shapes()[3], (Tensor::Shape{6, 4, 4}));
  EXPECT_EQ(net.weight_layer(0).weight.shape(), (Tensor::Shape{5, 4, 3, 3}));
  EXPECT_EQ(net.weight_layer(2).weight.shape(), (Tensor::Shape{3, 96}));
}

TEST(Network, RejectsInconsistentArchitectures) {
  EXPECT_THROW(Network({1, 8, 8}, {Conv2D{3, 3, 2, 4, 1, 1}, Flatten{}}), ConfigError);
  EXPECT_THROW(Network({1, 8, 8}, {Conv2D{3, 3, 1, 4, 1, 1}}), ConfigError);
  EXPECT_THROW(Network({1, 8, 8}, {Flatten{}, Dense{63, 2}}), ConfigError);
  EXPECT_THROW(Network({1, 8, 8}, {Flatten{}, Dense{64, 2}, BatchNorm{3}}), ConfigError);
}

TEST(Forward, ConvolutionMatchesDirectSummation) {
  const Tensor::Shape input{3, 7, 6};
  for (std::size_t stride : {1U, 2U}) {
    for (std::size_t pad : {0U, 1U, 2U}) {
      const Network net = make_network(input, {Conv2D{3, 2, 3, 4, stride, pad}, Flatten{}}, 11);
      Network biased = net;
      biased.weight_layer(0).bias = fixture::random_tensor({4}, 5);
      const Tensor x = fixture::random_tensor({2, 3, 7, 6}, 9);
      const ForwardCache cache = forward(biased, biased.weights(), x, Mode::kInfer);
      const Tensor expected =
          oracle::conv2d(x, biased.weight_layer(0).weight, biased.weight_layer(0).bias, stride, pad);
      ASSERT_EQ(cache.activations[1].size(), expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(cache.activations[1][i], expected[i], 1e-12) << "stride " << stride << " pad " << pad;
      }
    }
  }
}

TEST(Forward, DenseMatchesReference) {
  Network net = make_network({2, 2, 2}, {Flatten{}, Dense{8, 5}}, 2);
  net.weight_layer(0).bias = fixture::random_tensor({5}, 3);
  const Tensor x = fixture::random_tensor({4, 2, 2, 2}, 4);
  const Tensor logits = infer(net, net.weights(), x);
  const Tensor expected = oracle::dense(x.reshaped({4, 8}), net.weight_layer(0).weight, net.weight_layer(0).bias);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(logits[i], expected[i], 1e-12);
}

TEST(Forward, ReluAndBatchNormInTrainMode) {
  const Network net = fixture::small_net(4);
  const Tensor x = fixture::random_tensor({6, 4, 8, 8}, 1);
  const ForwardCache cache = forward(net, net.weights(), x, Mode::kTrain);
  // Layer 1 is BatchNorm (gamma 1, beta 0): per-channel mean 0, variance ~1.
  const Tensor& y = cache.activations[2];
  for (std::size_t c = 0; c < 5; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < 6; ++n)
      for (std::size_t i = 0; i < 64; ++i) {
        const double v = y[(n * 5 + c) * 64 + i];
        sum += v;
        sq += v * v;
        ++count;
      }
    EXPECT_NEAR(sum / count, 0.0, 1e-12);
    EXPECT_NEAR(sq / count, 1.0, 1e-3);
  }
  for (double v : cache.activations[3].values()) EXPECT_GE(v, 0.0);
}

TEST(Forward, InferIsChunkInvariant) {
  const Network net = fixture::small_net(5);
  const Tensor x = fixture::random_tensor({7, 4, 8, 8}, 2);
  const Tensor whole = infer(net, net.weights(), x, 256);
  const Tensor chunked = infer(net, net.weights(), x, 3);
  EXPECT_EQ(whole, chunked);
}

TEST(Forward, ErrorsOnBadShapesAndNonFiniteValues) {
  const Network net = fixture::small_net(6);
  EXPECT_THROW(forward(net, net.weights(), fixture::random_tensor({2, 3, 8, 8}, 1), Mode::kInfer), ConfigError);
  Tensor x = fixture::random_tensor({2, 4, 8, 8}, 1);
  x[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    forward(net, net.weights(), x, Mode::kInfer);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 0);
  }
  WeightSet bad = net.weights();
  bad[2][0] = std::numeric_limits<double>::infinity();
  try {
    forward(net, bad, fixture::random_tensor({2, 4, 8, 8}, 1), Mode::kInfer);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GE(e.layer(), 0);
  }
}

TEST(Backward, RejectsForeignCache) {
  const Network a = fixture::small_net(1);
  const Network b = fixture::toy_net(1);
  const ForwardCache cache = forward(a, a.weights(), fixture::random_tensor({2, 4, 8, 8}, 1), Mode::kTrain);
  EXPECT_THROW(backward(b, cache, Tensor({2, 4})), UsageError);
  EXPECT_THROW(backward(a, cache, Tensor({3, 3})), UsageError);
}

TEST(Loss, SquareHingeMatchesDirectFormula) {
  const Tensor logits = fixture::random_tensor({5, 4}, 8, -2.0, 2.0);
  const std::vector<int> labels = {0, 3, 1, 2, 3};
  const Tensor targets = one_vs_rest_targets(labels, 4);
  const LossResult r = square_hinge_loss(logits, targets);
  EXPECT_NEAR(r.loss, oracle::square_hinge(logits, targets), 1e-15);
  Tensor probe = logits;
  const Tensor numeric = oracle::central_difference(
      [&] { return oracle::square_hinge(probe, targets); }, probe, 1e-6);
  EXPECT_LT(max_rel_error(r.grad, numeric), 1e-6);
  EXPECT_EQ(targets[0], 1.0);
  EXPECT_EQ(targets[1], -1.0);
  EXPECT_THROW(square_hinge_loss(logits, Tensor({5, 4}, 0.5)), InputError);
}

TEST(Backward, GradientsMatchFiniteDifferences) {
  Network net = fixture::small_net(21);
  for (std::size_t k = 0; k < 3; ++k) {
    net.weight_layer(k).bias = fixture::random_tensor(net.weight_layer(k).bias.shape(), 30 + k, -0.1, 0.1);
  }
  for (std::size_t j : net.bn_layers()) {
    net.layers()[j].bn.gamma = fixture::random_tensor(net.layers()[j].bn.gamma.shape(), 40 + j, 0.5, 1.5);
    net.layers()[j].bn.beta = fixture::random_tensor(net.layers()[j].bn.beta.shape(), 50 + j, -0.3, 0.3);
  }
  const Tensor x = fixture::random_tensor({3, 4, 8, 8}, 7);
  const std::vector<int> labels = {0, 2, 1};
  const Tensor targets = one_vs_rest_targets(labels, 3);
  WeightSet weights = net.weights();

  const ForwardCache cache = forward(net, weights, x, Mode::kTrain);
  const Gradients g = backward(net, cache, square_hinge_loss(cache.logits(), targets).grad);
  auto loss = [&] { return oracle::square_hinge(forward(net, weights, x, Mode::kTrain).logits(), targets); };

  auto agree = [](const Tensor& a, const Tensor& n) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i] - n[i]) > 1e-5 * std::max(std::abs(a[i]), std::abs(n[i])) + 1e-10) return false;
    }
    return true;
  };
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_TRUE(agree(g.weight[k], oracle::central_difference(loss, weights[k], 1e-5))) << "weight " << k;
    EXPECT_TRUE(agree(g.bias[k], oracle::central_difference(loss, net.weight_layer(k).bias, 1e-5))) << "bias " << k;
  }
  for (std::size_t b = 0; b < net.bn_layers().size(); ++b) {
    BatchNormState& bn = net.layers()[net.bn_layers()[b]].bn;
    EXPECT_TRUE(agree(g.gamma[b], oracle::central_difference(loss, bn.gamma, 1e-5))) << "gamma " << b;
    EXPECT_TRUE(agree(g.beta[b], oracle::central_difference(loss, bn.beta, 1e-5))) << "beta " << b;
  }
}

TEST(Backward, InferModeTreatsBatchNormAsAffine) {
  Network net = fixture::small_net(2);
  for (std::size_t j : net.bn_layers()) {
    net.layers()[j].bn.running_mean = fixture::random_tensor(net.layers()[j].bn.running_mean.shape(), j, -0.2, 0.2);
    net.layers()[j].bn.running_var = fixture::random_tensor(net.layers()[j].bn.running_var.shape(), j + 9, 0.5, 2.0);
  }
  const Tensor x = fixture::random_tensor({2, 4, 8, 8}, 3);
  const Tensor targets = one_vs_rest_targets(std::vector<int>{1, 0}, 3);
  WeightSet weights = net.weights();
  const ForwardCache cache = forward(net, weights, x, Mode::kInfer);
  const Gradients g = backward(net, cache, square_hinge_loss(cache.logits(), targets).grad);
  auto loss = [&] { return oracle::square_hinge(forward(net, weights, x, Mode::kInfer).logits(), targets); };
  const Tensor numeric = oracle::central_difference(loss, weights[1], 1e-5);
  EXPECT_LT(max_rel_error(g.weight[1], numeric), 1e-5);
}

TEST(BatchNormStats, MomentumUpdate) {
  Network net = fixture::small_net(3);
  const Tensor x = fixture::random_tensor({4, 4, 8, 8}, 5);
  const ForwardCache cache = forward(net, net.weights(), x, Mode::kTrain);
  apply_batch_stats(net, cache);
  const std::size_t j = net.bn_layers()[0];
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_DOUBLE_EQ(net.layers()[j].bn.running_mean[c], 0.1 * cache.bn[j].mean[c]);
    EXPECT_DOUBLE_EQ(net.layers()[j].bn.running_var[c], 0.9 + 0.1 * cache.bn[j].var[c]);
  }
}

TEST(BatchNormStats, RecomputeMatchesFullBatchStatistics) {
  Network net = fixture::small_net(8);
  const Tensor x = fixture::random_tensor({37, 4, 8, 8}, 6);
  recompute_bn_stats(net, net.weights(), x, 5);
  const ForwardCache full = forward(net, net.weights(), x, Mode::kTrain);
  for (std::size_t j : net.bn_layers()) {
    for (std::size_t c = 0; c < full.bn[j].mean.size(); ++c) {
      EXPECT_NEAR(net.layers()[j].bn.running_mean[c], full.bn[j].mean[c], 1e-12);
      EXPECT_NEAR(net.layers()[j].bn.running_var[c], full.bn[j].var[c], 1e-12);
    }
  }
  // Infer mode with recomputed stats reproduces the train-mode pass.
  const Tensor logits = infer(net, net.weights(), x);
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(logits[i], full.logits()[i], 1e-9);
  EXPECT_THROW(recompute_bn_stats(net, net.weights(), Tensor({0, 4, 8, 8})), InputError);
}
