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
#include <map>

#include "afpgic/serialize.h"
#include "afpgic/training.h"
#include "oracles.h"
#include "test_models.h"

namespace afpgic {
namespace {

using testing_models::FrozenBank;
using testing_models::TestImage;

double LogSigmoid(double v) { return -std::log1p(std::exp(-v)); }

TEST(AdversarialLoss, GeneratorMatchesFormula) {
  const Tensor l({1, 1, 2, 2}, {-3.0, 0.0, 0.5, 8.0});
  double want = 0.0;
  for (double v : l.vec()) want -= LogSigmoid(v);
  want /= 4.0;
  EXPECT_NEAR(GeneratorAdvLoss(ag::Constant(l)).item(), want, 1e-14);
  EXPECT_NEAR(GeneratorAdvLoss(ag::Constant(Tensor({1, 1, 1, 1}, 0.0))).item(), std::log(2.0),
              1e-15);
  EXPECT_LT(oracle::GradientError([](const ag::Var& v) { return GeneratorAdvLoss(v); }, l), 1e-7);
}

TEST(AdversarialLoss, DiscriminatorMatchesFormula) {
  Rng rng(1);
  const Tensor real = oracle::RandomTensor({2, 1, 3, 3}, rng, 2.0);
  const Tensor fake = oracle::RandomTensor({2, 1, 3, 3}, rng, 2.0);
  double a = 0.0, b = 0.0;
  for (double v : real.vec()) a -= LogSigmoid(v);
  for (double v : fake.vec()) b -= LogSigmoid(-v);
  const double want = 0.5 * a / real.size() + 0.5 * b / fake.size();
  EXPECT_NEAR(DiscriminatorLoss(ag::Constant(real), ag::Constant(fake)).item(), want, 1e-13);
  // At the uninformed optimum both halves give log 2.
  const Tensor zero({1, 1, 2, 2}, 0.0);
  EXPECT_NEAR(DiscriminatorLoss(ag::Constant(zero), ag::Constant(zero)).item(), std::log(2.0),
              1e-15);
  EXPECT_LT(oracle::GradientError(
                [&](const ag::Var& v) { return DiscriminatorLoss(v, ag::Constant(fake)); }, real),
            1e-7);
  EXPECT_LT(oracle::GradientError(
                [&](const ag::Var& v) { return DiscriminatorLoss(ag::Constant(real), v); }, fake),
            1e-7);
}

class LossTest : public ::testing::Test {
 protected:
  LossTest() {
    Rng rng(2);
    x = TestImage(32, 32, 3);
    x_hat = x;
    for (double& v : x_hat.vec()) v += 0.05 * rng.Normal();
    p = oracle::RandomTensor({1, 4, 4, 4}, rng);
    p_hat = oracle::RandomTensor({1, 4, 4, 4}, rng);
    rate = Tensor({1, 1, 1, 1}, 0.37);
  }
  LossParts Eval(const ControlPair& pair, const LossWeights& w) const {
    return BaseLoss(ag::Constant(x), ag::Constant(x_hat), ag::Constant(rate), ag::Constant(p),
                    ag::Constant(p_hat), {pair}, w, proxy);
  }
  Tensor x, x_hat, p, p_hat, rate;
  PerceptualProxy proxy;
};

TEST_F(LossTest, BaseLossComposition) {
  const LossWeights w;
  const ControlPair pair{1.25, 2.5};
  const LossParts parts = Eval(pair, w);
  double mse = 0.0, prior = 0.0;
  for (size_t i = 0; i < x.size(); ++i) mse += std::pow(x_hat[i] - x[i], 2);
  mse /= x.size();
  for (size_t i = 0; i < p.size(); ++i) prior += std::pow(p_hat[i] - p[i], 2);
  prior /= p.size();
  EXPECT_NEAR(parts.distortion, mse, 1e-14);
  EXPECT_NEAR(parts.prior, prior, 1e-14);
  EXPECT_EQ(parts.rate, 0.37);
  EXPECT_GT(parts.perceptual, 0.0);
  const double want = w.rate * std::exp(1.25) * 0.37 + w.distortion * mse +
                      w.perceptual * parts.perceptual + w.prior * std::exp(2.5) * prior;
  EXPECT_NEAR(parts.total.item(), want, 1e-10 * want);
}

TEST_F(LossTest, TotalIsLinearInControlWeights) {
  const LossWeights w;
  const double t0 = Eval({0.0, 1.0}, w).total.item();
  const double t1 = Eval({1.0, 1.0}, w).total.item();
  const double t2 = Eval({2.0, 1.0}, w).total.item();
  // Slope in w_r = exp(beta_rate) is the weighted rate.
  const double slope = w.rate * 0.37;
  EXPECT_NEAR((t1 - t0) / (std::exp(1.0) - 1.0), slope, 1e-10);
  EXPECT_NEAR((t2 - t1) / (std::exp(2.0) - std::exp(1.0)), slope, 1e-10);
  const double q0 = Eval({1.0, 0.0}, w).total.item();
  const double q1 = Eval({1.0, 3.0}, w).total.item();
  EXPECT_NEAR((q1 - q0) / (std::exp(3.0) - 1.0), w.prior * Eval({1.0, 0.0}, w).prior, 1e-10);
}

TEST_F(LossTest, PerceptualProxyIdentityAndGradient) {
  EXPECT_EQ(proxy.Distance(ag::Constant(x), ag::Constant(x)).item(), 0.0);
  const Tensor small = TestImage(16, 16, 4);
  Tensor target = small;
  for (double& v : target.vec()) v = 1.0 - v;
  EXPECT_LT(oracle::GradientError(
                [&](const ag::Var& v) { return proxy.Distance(ag::Constant(target), v); }, small),
            1e-5);
  // Frozen features: a fresh proxy agrees.
  EXPECT_EQ(PerceptualProxy().PooledFeatures(small).vec(), proxy.PooledFeatures(small).vec());
}

TEST_F(LossTest, FullLossAddsWeightedGeneratorTerm) {
  LossWeights w;
  w.adversarial = 0.7;
  const Tensor logits({1, 1, 2, 2}, {0.3, -1.0, 2.0, 0.0});
  const LossParts full =
      FullLoss(ag::Constant(x), ag::Constant(x_hat), ag::Constant(rate), ag::Constant(p),
               ag::Constant(p_hat), {{1.0, 1.0}}, w, proxy, ag::Constant(logits));
  const double base = Eval({1.0, 1.0}, w).total.item();
  const double adv = GeneratorAdvLoss(ag::Constant(logits)).item();
  EXPECT_NEAR(full.total.item(), base + 0.7 * adv, 1e-12);
  EXPECT_EQ(full.adversarial, adv);
}

TEST(DiscriminatorTest, ConditioningChangesLogits) {
  nn::ParamStore store;
  Rng rng(5);
  Discriminator d(store, 8, rng);
  const ag::Var x = ag::Constant(TestImage(32, 32, 6));
  const Tensor a = d(x, {{0.0, 0.0}}).value();
  const Tensor b = d(x, {{3.0, 3.5}}).value();
  EXPECT_EQ(a.shape().n, 1);
  EXPECT_GT(MaxAbsDiff(a, b), 1e-6);
  EXPECT_THROW(d(x, {{0.0, 0.0}, {1.0, 1.0}}), ShapeError);
}

TEST(TrainLog, JsonRoundTrip) {
  TrainLogEntry e;
  e.step = 1234;
  e.stage = Stage::kAdversarial;
  e.pair = {1.75, 0.25};
  e.total = 1.0 / 3.0;
  e.rate = 0.123456789012345;
  e.distortion = 1e-7;
  e.perceptual = 0.02;
  e.prior = 0.5;
  e.adversarial = 0.69;
  e.discriminator = 0.7;
  const std::string line = LogEntryJson(e);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const TrainLogEntry b = ParseLogEntry(line);
  EXPECT_EQ(b.step, e.step);
  EXPECT_EQ(b.stage, e.stage);
  EXPECT_EQ(b.pair, e.pair);
  EXPECT_EQ(b.total, e.total);
  EXPECT_EQ(b.rate, e.rate);
  EXPECT_EQ(b.distortion, e.distortion);
  EXPECT_EQ(b.prior, e.prior);
  EXPECT_EQ(b.discriminator, e.discriminator);
  EXPECT_ANY_THROW(ParseLogEntry("{not json"));
}

TEST(PairSampling, UniformOverGrid) {
  TrainConfig tc;
  Rng rng(7);
  const int cells = 13 * 15;
  const int draws = cells * 60;
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < draws; ++i) {
    const ControlPair p = SampleGridPair(tc, rng);
    const double ir = p.beta_rate / 0.25, ip = p.beta_prior / 0.25;
    ASSERT_EQ(ir, std::round(ir));
    ASSERT_EQ(ip, std::round(ip));
    ASSERT_TRUE(InTrainingRange(p));
    ++counts[{static_cast<int>(ir), static_cast<int>(ip)}];
  }
  EXPECT_EQ(static_cast<int>(counts.size()), cells);
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / cells;
  for (const auto& [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 194 degrees of freedom; the 99.9% quantile is about 259.
  EXPECT_LT(chi2, 259.0);
}

Config TinyConfig() {
  Config c;
  c.train.base_iterations = 2;
  c.train.adversarial_iterations = 2;
  c.train.stage3_iterations = 2;
  c.train.batch = 1;
  c.train.crop = 64;
  return c;
}

TEST(TrainerTest, StageBoundaries) {
  Trainer t(TinyConfig(), FrozenBank(), 3);
  EXPECT_EQ(t.stage1_end(), 4);
  EXPECT_EQ(t.stage3_end(), 6);
  EXPECT_EQ(t.StageAt(0), Stage::kBase);
  EXPECT_EQ(t.StageAt(1), Stage::kBase);
  EXPECT_EQ(t.StageAt(2), Stage::kAdversarial);
  EXPECT_EQ(t.StageAt(3), Stage::kAdversarial);
  EXPECT_EQ(t.StageAt(4), Stage::kSelected);
}

TEST(TrainerTest, ResumeIsBitwiseDeterministicAndStageThreeUsesSelection) {
  const auto bank = FrozenBank();
  const ImageSource source;
  const std::vector<ControlPair> selected{{0.5, 1.25}, {2.75, 3.0}};

  Trainer straight(TinyConfig(), bank, 3);
  std::vector<TrainLogEntry> logs;
  straight.Run(source, 6, selected, [&](const TrainLogEntry& e) { logs.push_back(e); });
  ASSERT_EQ(logs.size(), 6u);
  for (const auto& e : logs) {
    EXPECT_TRUE(std::isfinite(e.total));
    if (e.stage == Stage::kBase) EXPECT_EQ(e.discriminator, 0.0);
    if (e.stage == Stage::kAdversarial) EXPECT_GT(e.discriminator, 0.0);
    if (e.stage == Stage::kSelected) {
      EXPECT_TRUE(e.pair == selected[0] || e.pair == selected[1]);
    }
  }

  Trainer first(TinyConfig(), bank, 3);
  first.Run(source, 3, selected);
  const auto bytes = first.SaveToBytes();
  auto resumed = Trainer::ResumeFromBytes(bytes, bank);
  EXPECT_EQ(resumed->step(), 3);
  EXPECT_EQ(resumed->codec().Hash(), first.codec().Hash());
  std::vector<TrainLogEntry> tail;
  resumed->Run(source, 6, selected, [&](const TrainLogEntry& e) { tail.push_back(e); });
  EXPECT_EQ(resumed->codec().Hash(), straight.codec().Hash());
  ASSERT_EQ(tail.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(tail[i].step, logs[3 + i].step);
    EXPECT_EQ(tail[i].total, logs[3 + i].total);
    EXPECT_EQ(tail[i].pair, logs[3 + i].pair);
  }
  EXPECT_THROW(Trainer::ResumeFromBytes(bytes, FrozenBank(8)), HashMismatchError);

  Trainer none(TinyConfig(), bank, 3);
  none.Run(source, 4);
  EXPECT_THROW(none.Step(source, {}), std::invalid_argument);
}

TEST(TrainerTest, PriorErrorAndEnergyArePositive) {
  Codec codec(CodecConfig{}, FrozenBank(), 4);
  const std::vector<Tensor> imgs{TestImage(64, 64, 7)};
  const double err = MeanPriorError(codec, imgs, {1.0, 1.0});
  EXPECT_GT(err, 0.0);
  EXPECT_TRUE(std::isfinite(err));
  EXPECT_GT(MeanPriorEnergy(codec, imgs), 0.0);
}

}  // namespace
}  // namespace afpgic
