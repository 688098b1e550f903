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

#include "afpgic/codec.h"
#include "afpgic/image.h"
#include "afpgic/serialize.h"
#include "oracles.h"
#include "test_models.h"

namespace afpgic {
namespace {

using testing_models::FrozenBank;
using testing_models::TestImage;

class CodecTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    bank_ = FrozenBank();
    codec_ = std::make_shared<Codec>(CodecConfig{}, bank_, 11);
  }
  static std::shared_ptr<PriorBank> bank_;
  static std::shared_ptr<Codec> codec_;

  static Tensor Param(const std::string& name) { return codec_->params().Find(name).value(); }
};
std::shared_ptr<PriorBank> CodecTest::bank_;
std::shared_ptr<Codec> CodecTest::codec_;

TEST(CodecOps, GroupNormMatchesOracle) {
  Rng rng(1);
  const Tensor x = oracle::RandomTensor({2, 8, 5, 3}, rng, 3.0);
  std::vector<double> g(8), b(8);
  for (int c = 0; c < 8; ++c) {
    g[c] = rng.Uniform(0.5, 2.0);
    b[c] = rng.Normal();
  }
  const Tensor out = afpgic::GroupNorm(ag::Constant(x), 4, ag::Constant(Tensor({1, 8, 1, 1}, g)),
                               ag::Constant(Tensor({1, 8, 1, 1}, b)), 1e-5)
                         .value();
  EXPECT_LT(MaxAbsDiff(out, oracle::GroupNorm(x, 4, g, b, 1e-5)), 1e-12);
}

TEST(CodecOps, GroupNormConstantInputAndUnitStatistics) {
  const Tensor ones({1, 4, 1, 1}, 1.0), zeros({1, 4, 1, 1}, 0.0);
  const Tensor c = afpgic::GroupNorm(ag::Constant(Tensor({1, 4, 3, 3}, 7.0)), 2, ag::Constant(ones),
                             ag::Constant(zeros), 1e-5)
                       .value();
  for (double v : c.vec()) EXPECT_EQ(v, 0.0);
  Rng rng(2);
  const Tensor x = oracle::RandomTensor({1, 4, 6, 6}, rng, 5.0);
  const Tensor y = afpgic::GroupNorm(ag::Constant(x), 2, ag::Constant(ones),
                             ag::Constant(zeros), 0.0)
                       .value();
  for (int g = 0; g < 2; ++g) {
    double mean = 0.0, sq = 0.0;
    for (int ch = 2 * g; ch < 2 * g + 2; ++ch)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) mean += y.at(0, ch, i, j);
    mean /= 72.0;
    for (int ch = 2 * g; ch < 2 * g + 2; ++ch)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) sq += std::pow(y.at(0, ch, i, j) - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 72.0, 1.0, 1e-9);
  }
}

TEST(CodecOps, SiluExamples) {
  const Tensor x({1, 1, 1, 3}, {0.0, 1.0, -1.0});
  const Tensor y = afpgic::Silu(ag::Constant(x)).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(y[2], -0.2689414213699951, 1e-15);
}

TEST_F(CodecTest, AdapterIsResizeThenProjection) {
  Rng rng(3);
  const int d = bank_->channels();
  const Tensor p = oracle::RandomTensor({1, d, 4, 4}, rng);
  const Tensor w = Param("adapter.weight"), b = Param("adapter.bias");
  // Same size: resize is the identity.
  const Tensor same = codec_->AdaptPrior(ag::Constant(p), 4, 4).value();
  EXPECT_LT(MaxAbsDiff(same, oracle::Conv(p, w, b, 1)), 1e-12);
  // Upsampling keeps the corners (align-corners).
  const Tensor up = codec_->AdaptPrior(ag::Constant(p), 7, 10).value();
  EXPECT_EQ(up.shape(), (Shape{1, codec_->config().adapter_width, 7, 10}));
  EXPECT_LT(MaxAbsDiff(up, oracle::Conv(oracle::Bilinear(p, 7, 10), w, b, 1)), 1e-12);
  // A constant prior stays constant per channel.
  const Tensor flat = codec_->AdaptPrior(ag::Constant(Tensor({1, d, 3, 3}, 0.5)), 6, 6).value();
  for (int c = 0; c < flat.shape().c; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) EXPECT_NEAR(flat.at(0, c, i, j), flat.at(0, c, 0, 0), 1e-12);
  EXPECT_THROW(codec_->AdaptPrior(ag::Constant(p), 0, 3), ShapeError);
}

TEST_F(CodecTest, AdapterGradient) {
  Rng rng(4);
  const Tensor p = oracle::RandomTensor({1, bank_->channels(), 3, 3}, rng);
  auto fn = [&](const ag::Var& v) { return oracle::Project(codec_->AdaptPrior(v, 5, 4), 8); };
  EXPECT_LT(oracle::GradientError(fn, p, 1e-5), 1e-6);
}

TEST_F(CodecTest, EncoderStrideAndPriorSensitivity) {
  ag::NoGradGuard ng;
  const Tensor x = TestImage(64, 128, 5);
  const ag::Var e = codec_->Embed({{1.0, 1.0}});
  const Tensor p = bank_->ExtractPrior(x);
  EXPECT_EQ(p.shape(), (Shape{1, bank_->channels(), 8, 16}));
  const ag::Var fp = codec_->AdaptPrior(ag::Constant(p), 8, 16);
  const Tensor y = codec_->Encode(ag::Constant(x), fp, e).value();
  EXPECT_EQ(y.shape(), (Shape{1, codec_->config().latent_channels, 4, 8}));
  Tensor p2 = p;
  for (double& v : p2.vec()) v += 0.5;
  const Tensor y2 =
      codec_->Encode(ag::Constant(x), codec_->AdaptPrior(ag::Constant(p2), 8, 16), e).value();
  EXPECT_GT(MaxAbsDiff(y, y2), 1e-6);
  EXPECT_THROW(codec_->Encode(ag::Constant(TestImage(64, 96, 5)), fp, e), ShapeError);
}

TEST_F(CodecTest, ZeroHeadLeavesSkipPath) {
  Codec c(CodecConfig{}, bank_, 12);
  for (auto& [name, v] : c.params().params()) {
    if (name.rfind("est.head.", 0) == 0 && name.find(".gn.") == std::string::npos) {
      for (double& t : v.mutable_value().vec()) t = 0.0;
    }
  }
  ag::NoGradGuard ng;
  Rng rng(6);
  const ag::Var yh = ag::Constant(oracle::RandomTensor({1, 32, 4, 4}, rng));
  const ag::Var e = c.Embed({{2.0, 0.5}});
  const ag::Var f = c.DecoderFeature(yh, e);
  const EstimatorHeads h = c.EstimateHeads(f, e);
  for (double v : h.head.value().vec()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(c.EstimatePrior(f, e).value().vec(), h.skip.value().vec());
  EXPECT_EQ(h.skip.shape(), (Shape{1, bank_->channels(), 8, 8}));
}

TEST_F(CodecTest, SftStartsAsIdentity) {
  ag::NoGradGuard ng;
  Rng rng(7);
  const Tensor yh = oracle::RandomTensor({1, 32, 4, 4}, rng);
  for (const SftParams& s : codec_->SftExtract(ag::Constant(yh), codec_->Embed({{1.0, 2.0}}))) {
    for (double v : s.gamma.value().vec()) EXPECT_EQ(v, 1.0);
    for (double v : s.delta.value().vec()) EXPECT_EQ(v, 0.0);
  }
}

TEST_F(CodecTest, SftShapesFollowBankStages) {
  Codec c(CodecConfig{}, bank_, 14);
  Rng init(70);
  for (auto& [name, v] : c.params().params()) {
    if (name.rfind("sft.", 0) == 0) {
      for (double& t : v.mutable_value().vec()) t = 0.05 * init.Normal();
    }
  }
  ag::NoGradGuard ng;
  Rng rng(7);
  const Tensor yh = oracle::RandomTensor({1, 32, 4, 4}, rng);
  const auto stages = bank_->SftStages();
  const auto a = c.SftExtract(ag::Constant(yh), c.Embed({{1.0, 0.0}}));
  const auto b = c.SftExtract(ag::Constant(yh), c.Embed({{1.0, 3.0}}));
  ASSERT_EQ(a.size(), stages.size());
  double change = 0.0;
  for (size_t s = 0; s < stages.size(); ++s) {
    const Shape want{1, stages[s].channels, 64 / stages[s].stride, 64 / stages[s].stride};
    EXPECT_EQ(a[s].gamma.shape(), want);
    EXPECT_EQ(a[s].delta.shape(), want);
    change += MaxAbsDiff(a[s].gamma.value(), b[s].gamma.value());
    change += MaxAbsDiff(a[s].delta.value(), b[s].delta.value());
  }
  EXPECT_GT(change, 1e-6);  // the prior weight reaches the modulation
}

TEST_F(CodecTest, ForwardShapesAndRange) {
  const std::vector<Tensor> items{TestImage(64, 64, 8), TestImage(64, 64, 9)};
  const Tensor x = StackBatch(items);
  const CodecForward f = codec_->Forward(x, {{0.0, 0.0}, {3.0, 3.5}});
  EXPECT_EQ(f.x_hat.shape(), x.shape());
  EXPECT_EQ(f.p.shape(), f.p_hat.shape());
  EXPECT_EQ(f.pack.y_hat.shape(), (Shape{2, 32, 4, 4}));
  EXPECT_THROW(codec_->Forward(x, {{0.0, 0.0}}), ShapeError);
  EXPECT_THROW(codec_->Forward(x, {{0.0, 0.0}, {std::nan(""), 0.0}}), ControlError);
}

TEST_F(CodecTest, TrainingPassLeavesBankUntouched) {
  const uint64_t before = bank_->DecoderHash();
  const uint64_t bank_before = bank_->Hash();
  Codec c(CodecConfig{}, bank_, 13);
  const CodecForward f = c.Forward(TestImage(64, 64, 10), {{1.0, 1.0}});
  ag::Backward(ag::Add(ag::MeanSquaredError(f.x_hat, ag::Constant(TestImage(64, 64, 10))),
                       ag::MeanSquaredError(f.p_hat, f.p)));
  for (const auto& [name, v] : bank_->params().params()) {
    EXPECT_FALSE(v.requires_grad()) << name;
  }
  bool codec_grad = false;
  for (const auto& [name, v] : c.params().params()) {
    if (!v.grad().empty())
      for (double g : v.grad().vec()) codec_grad = codec_grad || g != 0.0;
  }
  EXPECT_TRUE(codec_grad);
  EXPECT_EQ(bank_->DecoderHash(), before);
  EXPECT_EQ(bank_->Hash(), bank_before);
}

TEST_F(CodecTest, SynthesizeEqualsRenderOfEstimatedPrior) {
  const Tensor x = TestImage(64, 64, 11);
  const ControlPair pair{1.5, 2.0};
  const QuantizedLatents q = codec_->Analyze(x, pair);
  ag::NoGradGuard ng;
  const ag::Var e = codec_->Embed({pair});
  const Tensor p_hat =
      codec_->EstimatePrior(codec_->DecoderFeature(ag::Constant(q.y_hat), e), e).value();
  EXPECT_EQ(codec_->Synthesize(q.y_hat, pair).vec(),
            codec_->SynthesizeWithPrior(q.y_hat, p_hat, pair).vec());
  const Tensor out = codec_->Synthesize(q.y_hat, pair);
  for (double v : out.vec()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(CodecTest, CheckpointRoundTripAndForeignBank) {
  const auto bytes = codec_->SaveToBytes();
  const auto back = Codec::LoadFromBytes(bytes, bank_);
  EXPECT_EQ(back->Hash(), codec_->Hash());
  const Tensor x = TestImage(64, 64, 12);
  EXPECT_EQ(back->Analyze(x, {1.0, 1.0}).y_hat.vec(), codec_->Analyze(x, {1.0, 1.0}).y_hat.vec());
  EXPECT_THROW(Codec::LoadFromBytes(bytes, FrozenBank(8)), HashMismatchError);
  auto broken = bytes;
  broken.resize(broken.size() / 2);
  EXPECT_ANY_THROW(Codec::LoadFromBytes(broken, bank_));
  broken = bytes;
  broken[broken.size() / 2] ^= 1;
  EXPECT_THROW(Codec::LoadFromBytes(broken, bank_), HashMismatchError);
  EXPECT_THROW(Codec::LoadFromBytes(std::vector<uint8_t>{1, 2, 3}, bank_), FormatError);
}

}  // namespace
}  // namespace afpgic
