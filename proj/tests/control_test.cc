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
#include <limits>
#include <numbers>

#include "afpgic/control.h"
#include "oracles.h"

namespace afpgic {
namespace {

TEST(FourierEmbed, ZeroGivesSinZeroCosOne) {
  const Tensor e = FourierEmbed(0.0, ControlVar::kRate, 8);
  ASSERT_EQ(e.shape(), (Shape{1, 16, 1, 1}));
  for (int j = 0; j < 8; ++j) {
    EXPECT_EQ(e[2 * j], 0.0);
    EXPECT_EQ(e[2 * j + 1], 1.0);
  }
}

TEST(FourierEmbed, MatchesFormula) {
  for (ControlVar which : {ControlVar::kRate, ControlVar::kPrior}) {
    const auto f = FourierFrequencies(which, 8);
    for (double beta : {0.3, 1.7, 3.0}) {
      const Tensor e = FourierEmbed(beta, which, 8);
      for (int j = 0; j < 8; ++j) {
        EXPECT_NEAR(e[2 * j], std::sin(2 * std::numbers::pi * f[j] * beta), 1e-12);
        EXPECT_NEAR(e[2 * j + 1], std::cos(2 * std::numbers::pi * f[j] * beta), 1e-12);
      }
    }
  }
}

TEST(FourierEmbed, PeriodicInFirstFrequency) {
  const auto f = FourierFrequencies(ControlVar::kPrior, 8);
  const double beta = 0.8;
  const Tensor a = FourierEmbed(beta, ControlVar::kPrior, 8);
  const Tensor b = FourierEmbed(beta + 1.0 / f[0], ControlVar::kPrior, 8);
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[1], b[1], 1e-12);
}

TEST(FourierEmbed, FrequenciesLogSpacedAndCoverGrid) {
  for (ControlVar which : {ControlVar::kRate, ControlVar::kPrior}) {
    const auto f = FourierFrequencies(which, 8);
    ASSERT_EQ(f.size(), 8u);
    const double ratio = f[1] / f[0];
    for (int j = 1; j < 8; ++j) EXPECT_NEAR(f[j] / f[j - 1], ratio, 1e-12);
  }
  // Distinct embeddings on the 0.25 grid over [0, 3.5].
  const auto grid = ControlGrid(3.5, 0.25);
  for (size_t a = 0; a < grid.size(); ++a) {
    for (size_t b = a + 1; b < grid.size(); ++b) {
      const Tensor ea = FourierEmbed(grid[a], ControlVar::kPrior, 8);
      const Tensor eb = FourierEmbed(grid[b], ControlVar::kPrior, 8);
      EXPECT_GT(MaxAbsDiff(ea, eb), 1e-3) << grid[a] << " vs " << grid[b];
    }
  }
}

TEST(FourierEmbed, RejectsNonFinite) {
  EXPECT_THROW(FourierEmbed(std::numeric_limits<double>::quiet_NaN(), ControlVar::kRate, 8),
               ControlError);
  EXPECT_THROW(FourierEmbed(std::numeric_limits<double>::infinity(), ControlVar::kRate, 8),
               ControlError);
}

TEST(ExpWeights, Examples) {
  auto [a, b] = ExpWeights({0.0, 0.0});
  EXPECT_EQ(a, 1.0);
  EXPECT_EQ(b, 1.0);
  auto [c, d] = ExpWeights({std::log(2.0), std::log(3.0)});
  EXPECT_NEAR(c, 2.0, 1e-15);
  EXPECT_NEAR(d, 3.0, 1e-15);
  // Regression constant for a selected operating point value.
  EXPECT_NEAR(ExpWeights({1.921, 0.0}).first, 6.827782839376386, 1e-12);
}

TEST(ExpWeights, PositiveMonotoneAndSmoothOnGrid) {
  const auto rates = ControlGrid(kBetaRateMax, 0.25);
  const auto priors = ControlGrid(kBetaPriorMax, 0.25);
  EXPECT_EQ(rates.size(), 13u);
  EXPECT_EQ(priors.size(), 15u);
  for (size_t i = 0; i < rates.size(); ++i) {
    for (size_t j = 0; j < priors.size(); ++j) {
      auto [wr, wp] = ExpWeights({rates[i], priors[j]});
      EXPECT_GT(wr, 0.0);
      EXPECT_GT(wp, 0.0);
      if (i > 0) EXPECT_GT(wr, ExpWeights({rates[i - 1], priors[j]}).first);
      if (j > 0) EXPECT_GT(wp, ExpWeights({rates[i], priors[j - 1]}).second);
      const double h = 0.25;
      if (i + 1 < rates.size()) {
        const double next = ExpWeights({rates[i + 1], priors[j]}).first;
        EXPECT_LE(std::abs(next - wr), wr * (std::exp(h) - 1) * (1 + 1e-12));
      }
    }
  }
}

TEST(ControlGrid, EndpointsAndRange) {
  const auto g = ControlGrid(3.0, 0.25);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 3.0);
  EXPECT_TRUE(InTrainingRange({3.0, 3.5}));
  EXPECT_TRUE(InTrainingRange({0.0, 0.0}));
  EXPECT_FALSE(InTrainingRange({3.01, 1.0}));
  EXPECT_FALSE(InTrainingRange({1.0, -0.1}));
}

TEST(ControlEmbedder, DeterministicWidthAndDistinct) {
  nn::ParamStore store;
  Rng rng(3);
  ControlEmbedder emb(store, 8, 64, 64, rng);
  const ag::Var a = emb.Embed({{1.0, 2.0}, {0.5, 0.25}});
  const ag::Var b = emb.Embed({{1.0, 2.0}, {0.5, 0.25}});
  EXPECT_EQ(a.shape(), (Shape{2, 64, 1, 1}));
  EXPECT_EQ(a.value().vec(), b.value().vec());
  EXPECT_GT(MaxAbsDiff(BatchItem(a.value(), 0), BatchItem(a.value(), 1)), 0.0);
}

TEST(ControlEmbedder, CombineRejectsWidthMismatch) {
  nn::ParamStore store;
  Rng rng(3);
  ControlEmbedder emb(store, 8, 64, 64, rng);
  const ag::Var ok = ag::Constant(FourierEmbed(1.0, ControlVar::kRate, 8));
  const ag::Var bad = ag::Constant(FourierEmbed(1.0, ControlVar::kPrior, 4));
  EXPECT_THROW(emb.Combine(ok, bad), ControlError);
}

TEST(ControlEmbedder, JacobianMatchesFiniteDifferences) {
  nn::ParamStore store;
  Rng rng(5);
  ControlEmbedder emb(store, 8, 64, 64, rng);
  Rng pts(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor beta({1, 2, 1, 1}, {pts.Uniform(0, 3), pts.Uniform(0, 3.5)});
    auto fn = [&](const ag::Var& b) {
      return oracle::Project(emb.EmbedVar(ag::SliceChannels(b, 0, 1), ag::SliceChannels(b, 1, 2)),
                             100 + trial);
    };
    EXPECT_LT(oracle::GradientError(fn, beta, 1e-6), 1e-4);
  }
}

}  // namespace
}  // namespace afpgic
