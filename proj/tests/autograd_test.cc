// Copyright 2026 The afpgic Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "afpgic/autograd.h"
#include "oracles.h"

namespace afpgic {
namespace {

using ag::Var;
constexpr double kGradTol = 1e-4;

TEST(AutogradForward, ConvMatchesDirectLoops) {
  Rng rng(1);
  const Tensor x = oracle::RandomTensor({2, 3, 7, 6}, rng);
  const Tensor w = oracle::RandomTensor({4, 3, 3, 3}, rng);
  const Tensor b = oracle::RandomTensor({1, 4, 1, 1}, rng);
  for (int stride : {1, 2}) {
    const Tensor got = ag::Conv2d(ag::Constant(x), ag::Constant(w), ag::Constant(b), stride, 1).value();
    const Tensor want = oracle::Conv(x, w, b, stride);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(MaxAbsDiff(got, want), 1e-12);
  }
}

TEST(AutogradForward, GroupNormMatchesLoops) {
  Rng rng(2);
  const Tensor x = oracle::RandomTensor({2, 8, 5, 4}, rng, 3.0);
  std::vector<double> gamma(8), beta(8);
  for (int i = 0; i < 8; ++i) {
    gamma[i] = rng.Normal();
    beta[i] = rng.Normal();
  }
  const Tensor got = ag::GroupNorm(ag::Constant(x), 4, ag::Constant(Tensor({1, 8, 1, 1}, gamma)),
                                   ag::Constant(Tensor({1, 8, 1, 1}, beta)), 1e-5)
                         .value();
  EXPECT_LT(MaxAbsDiff(got, oracle::GroupNorm(x, 4, gamma, beta, 1e-5)), 1e-12);
}

TEST(AutogradForward, BilinearAlignCornersMatchesLoops) {
  Rng rng(3);
  const Tensor x = oracle::RandomTensor({1, 2, 3, 5}, rng);
  for (auto [h, w] : {std::pair{6, 9}, std::pair{2, 2}, std::pair{3, 5}, std::pair{7, 4}}) {
    EXPECT_LT(MaxAbsDiff(ag::ResizeBilinear(ag::Constant(x), h, w).value(),
                         oracle::Bilinear(x, h, w)),
              1e-12);
  }
}

TEST(AutogradForward, RoundHalfAwayFromZero) {
  EXPECT_EQ(ag::RoundHalfAway(0.5), 1.0);
  EXPECT_EQ(ag::RoundHalfAway(-0.5), -1.0);
  EXPECT_EQ(ag::RoundHalfAway(1.5), 2.0);
  EXPECT_EQ(ag::RoundHalfAway(2.2), 2.0);
  EXPECT_EQ(ag::RoundHalfAway(-2.6), -3.0);
}

TEST(AutogradForward, NormalCdfMatchesErfc) {
  for (double x = -8.0; x <= 8.0; x += 0.37) {
    EXPECT_NEAR(ag::NormalCdf(x), oracle::Phi(x), 1e-15);
  }
}

TEST(AutogradForward, LogSigmoidIsStableForLargeInputs) {
  const Tensor x({1, 1, 1, 3}, {-800.0, 0.0, 800.0});
  const Tensor y = ag::LogSigmoid(ag::Constant(x)).value();
  EXPECT_DOUBLE_EQ(y[0], -800.0);
  EXPECT_DOUBLE_EQ(y[1], -std::log(2.0));
  EXPECT_DOUBLE_EQ(y[2], 0.0);
}

TEST(AutogradForward, NoGraphUnderGuard) {
  Var leaf = ag::Leaf(Tensor({1, 1, 1, 2}, {1.0, 2.0}));
  ag::NoGradGuard guard;
  Var y = ag::Square(leaf);
  EXPECT_FALSE(y.requires_grad());
}

TEST(AutogradForward, GradientsAccumulateAcrossBackwardCalls) {
  Var leaf = ag::Leaf(Tensor({1, 1, 1, 1}, {3.0}));
  ag::Backward(ag::Square(leaf));
  ag::Backward(ag::Square(leaf));
  EXPECT_DOUBLE_EQ(leaf.grad()[0], 12.0);
}

// ---- gradient checks ------------------------------------------------------

struct UnaryCase {
  const char* name;
  std::function<Var(const Var&)> fn;
  double scale;
};

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesCentralDifferences) {
  Rng rng(11);
  const Tensor x = oracle::RandomTensor({2, 3, 4, 4}, rng, GetParam().scale);
  const auto fn = GetParam().fn;
  EXPECT_LT(oracle::GradientError([&](const Var& v) { return oracle::Project(fn(v)); }, x),
            kGradTol);
}

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(
        UnaryCase{"silu", [](const Var& v) { return ag::Silu(v); }, 2.0},
        UnaryCase{"sigmoid", [](const Var& v) { return ag::Sigmoid(v); }, 2.0},
        UnaryCase{"softplus", [](const Var& v) { return ag::Softplus(v); }, 2.0},
        UnaryCase{"exp", [](const Var& v) { return ag::Exp(v); }, 1.0},
        UnaryCase{"log", [](const Var& v) { return ag::Log(ag::AddScalar(ag::Square(v), 0.5)); }, 1.0},
        UnaryCase{"sin_cos", [](const Var& v) { return ag::Add(ag::Sin(v), ag::Cos(v)); }, 1.0},
        UnaryCase{"leaky_relu", [](const Var& v) { return ag::LeakyRelu(v, 0.2); }, 1.0},
        UnaryCase{"log_sigmoid", [](const Var& v) { return ag::LogSigmoid(v); }, 3.0},
        UnaryCase{"softmax", [](const Var& v) { return ag::SoftmaxChannels(v); }, 1.0},
        UnaryCase{"upsample", [](const Var& v) { return ag::Upsample2x(v); }, 1.0},
        UnaryCase{"resize", [](const Var& v) { return ag::ResizeBilinear(v, 7, 5); }, 1.0},
        UnaryCase{"slice_concat",
                  [](const Var& v) {
                    return ag::Concat({ag::SliceChannels(v, 1, 3), ag::Square(v)});
                  },
                  1.0},
        UnaryCase{"mse",
                  [](const Var& v) { return ag::MeanSquaredError(v, ag::Scale(ag::Sin(v), 0.3)); },
                  1.0},
        UnaryCase{"sum_per_sample", [](const Var& v) { return ag::SumPerSample(ag::Square(v)); },
                  1.0}),
    [](const ::testing::TestParamInfo<UnaryCase>& info) { return std::string(info.param.name); });

TEST(Gradient, GroupNormInputAndAffine) {
  Rng rng(12);
  const Tensor x = oracle::RandomTensor({2, 8, 3, 3}, rng, 2.0);
  const Tensor gamma = oracle::RandomTensor({1, 8, 1, 1}, rng);
  const Tensor beta = oracle::RandomTensor({1, 8, 1, 1}, rng);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) {
                  return oracle::Project(
                      ag::GroupNorm(v, 4, ag::Constant(gamma), ag::Constant(beta), 1e-5));
                },
                x),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& g) {
                  return oracle::Project(ag::GroupNorm(ag::Constant(x), 4, g, ag::Constant(beta), 1e-5));
                },
                gamma),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& b) {
                  return oracle::Project(ag::GroupNorm(ag::Constant(x), 4, ag::Constant(gamma), b, 1e-5));
                },
                beta),
            kGradTol);
}

TEST(Gradient, ConvInputWeightBias) {
  Rng rng(13);
  const Tensor x = oracle::RandomTensor({2, 3, 6, 6}, rng);
  const Tensor w = oracle::RandomTensor({4, 3, 3, 3}, rng);
  const Tensor b = oracle::RandomTensor({1, 4, 1, 1}, rng);
  for (int stride : {1, 2}) {
    EXPECT_LT(oracle::GradientError(
                  [&](const Var& v) {
                    return oracle::Project(ag::Conv2d(v, ag::Constant(w), ag::Constant(b), stride, 1));
                  },
                  x),
              kGradTol);
    EXPECT_LT(oracle::GradientError(
                  [&](const Var& v) {
                    return oracle::Project(ag::Conv2d(ag::Constant(x), v, ag::Constant(b), stride, 1));
                  },
                  w),
              kGradTol);
    EXPECT_LT(oracle::GradientError(
                  [&](const Var& v) {
                    return oracle::Project(ag::Conv2d(ag::Constant(x), ag::Constant(w), v, stride, 1));
                  },
                  b),
              kGradTol);
  }
}

TEST(Gradient, LinearAndBroadcasts) {
  Rng rng(14);
  const Tensor x = oracle::RandomTensor({3, 5, 1, 1}, rng);
  const Tensor w = oracle::RandomTensor({4, 5, 1, 1}, rng);
  const Tensor b = oracle::RandomTensor({1, 4, 1, 1}, rng);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) { return oracle::Project(ag::Linear(v, ag::Constant(w), ag::Constant(b))); },
                x),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) { return oracle::Project(ag::Linear(ag::Constant(x), v, ag::Constant(b))); },
                w),
            kGradTol);
  const Tensor map = oracle::RandomTensor({3, 4, 3, 2}, rng);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) {
                  return oracle::Project(ag::ChannelAffine(ag::Constant(map), v, ag::Scale(v, 0.5)));
                },
                oracle::RandomTensor({3, 4, 1, 1}, rng)),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) { return oracle::Project(ag::BroadcastSpatial(v, 3, 2, 5)); },
                oracle::RandomTensor({1, 4, 1, 1}, rng)),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) { return oracle::Project(ag::MulSpatial(ag::Constant(map), v)); },
                oracle::RandomTensor({3, 1, 3, 2}, rng)),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) { return oracle::Project(ag::RepeatBatch(v, 4)); },
                oracle::RandomTensor({1, 2, 2, 2}, rng)),
            kGradTol);
}

TEST(Gradient, GaussianLikelihood) {
  Rng rng(15);
  const Shape s{1, 3, 4, 4};
  Tensor y_hat(s), mu = oracle::RandomTensor(s, rng), sigma(s);
  for (size_t i = 0; i < y_hat.size(); ++i) {
    y_hat[i] = std::round(2 * rng.Normal()) + mu[i];
    sigma[i] = 0.3 + std::abs(rng.Normal());
  }
  auto f = [&](const Var& m, const Var& sg) {
    return ag::Sum(ag::Log(ag::GaussianLikelihood(ag::Constant(y_hat), m, sg, 1e-9)));
  };
  EXPECT_LT(oracle::GradientError([&](const Var& v) { return f(v, ag::Constant(sigma)); }, mu, 1e-6),
            kGradTol);
  EXPECT_LT(oracle::GradientError([&](const Var& v) { return f(ag::Constant(mu), v); }, sigma, 1e-6),
            kGradTol);
}

TEST(Gradient, LogisticMixtureLikelihood) {
  Rng rng(16);
  const int c = 3, j = 3;
  Tensor t({1, c, 3, 3});
  for (size_t i = 0; i < t.size(); ++i) t[i] = std::round(2 * rng.Normal()) + 0.1 * rng.Normal();
  Tensor params({1, c, 3, j});
  for (int ch = 0; ch < c; ++ch)
    for (int k = 0; k < j; ++k) {
      params.at(0, ch, 0, k) = rng.Normal();
      params.at(0, ch, 1, k) = rng.Normal();
      params.at(0, ch, 2, k) = 0.3 * rng.Normal();
    }
  EXPECT_LT(oracle::GradientError(
                [&](const Var& p) {
                  return ag::Sum(ag::Log(ag::LogisticMixtureLikelihood(ag::Constant(t), p, 1e-12)));
                },
                params, 1e-6),
            kGradTol);
  EXPECT_LT(oracle::GradientError(
                [&](const Var& v) {
                  return ag::Sum(ag::Log(ag::LogisticMixtureLikelihood(v, ag::Constant(params), 1e-12)));
                },
                t, 1e-6),
            kGradTol);
}

TEST(Gradient, SteRoundIsIdentity) {
  Rng rng(17);
  Tensor x = oracle::RandomTensor({1, 2, 3, 3}, rng, 3.0);
  Var leaf = ag::Leaf(x);
  ag::Backward(oracle::Project(ag::SteRound(leaf)));
  Var ref = ag::Leaf(x);
  ag::Backward(oracle::Project(ref));
  EXPECT_EQ(leaf.grad().vec(), ref.grad().vec());
  const Tensor r = ag::SteRound(ag::Constant(x)).value();
  for (size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r[i], ag::RoundHalfAway(x[i]));
}

TEST(Gradient, ClampPassesOnlyInside) {
  Var leaf = ag::Leaf(Tensor({1, 1, 1, 3}, {-0.5, 0.5, 1.5}));
  ag::Backward(ag::Sum(ag::Clamp(leaf, 0.0, 1.0)));
  EXPECT_EQ(leaf.grad().vec(), (std::vector<double>{0.0, 1.0, 0.0}));
}

}  // namespace
}  // namespace afpgic
