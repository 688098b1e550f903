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

#include "afpgic/codec.h"

#include <algorithm>

#include "afpgic/serialize.h"

namespace afpgic {
namespace {

using ag::Var;

constexpr char kMagic[] = "AFPGCKPT";
constexpr uint32_t kVersion = 1;

}  // namespace

Var GroupNorm(const Var& h, int groups, const Var& gamma, const Var& kappa,
              double eps) {
  return ag::GroupNorm(h, groups, gamma, kappa, eps);
}

Var Silu(const Var& z) { return ag::Silu(z); }

Codec::Codec(const CodecConfig& config, std::shared_ptr<const PriorBank> bank,
             uint64_t seed)
    : config_(config), bank_(std::move(bank)) {
  if (!bank_ || !bank_->frozen()) {
    throw BankStateError("codec needs a pretrained, frozen prior bank");
  }
  if (config.latent_channels % config.slices != 0) {
    throw std::invalid_argument("latent channels must split evenly into slices");
  }
  Rng rng(seed);
  const int ew = config.embed_width;
  const int d = bank_->channels();
  const int fw = bank_->shape().hidden;  // decoder feature width
  const int c = config.latent_channels;
  const int g = config.groups;
  embedder_ = ControlEmbedder(main_, config.fourier, config.embed_hidden, ew, rng);
  adapter_ = nn::Conv2d(main_, "adapter", d, config.adapter_width, 1, 1, rng);

  enc1_ = nn::Conv2d(main_, "enc.1", 3, 32, 3, 2, rng);
  enc_mod1_ = nn::ChannelModulation(main_, "enc.mod1", ew, 32, rng);
  enc2_ = nn::Conv2d(main_, "enc.2", 32, fw, 3, 2, rng);
  enc_mod2_ = nn::ChannelModulation(main_, "enc.mod2", ew, fw, rng);
  enc3_ = nn::Conv2d(main_, "enc.3", fw, fw, 3, 2, rng);
  enc_mod3_ = nn::ChannelModulation(main_, "enc.mod3", ew, fw, rng);
  enc_fuse_ = nn::Conv2d(main_, "enc.fuse", fw + config.adapter_width, fw, 3, 1, rng);
  enc_out_ = nn::Conv2d(main_, "enc.out", fw, c, 3, 2, rng);
  enc_gain_ = nn::ChannelModulation(main_, "enc.gain", ew, c, rng);

  entropy_ = EntropyModel(main_, aux_, config, rng);

  const int w = config.estimator_width;
  feat_in_ = nn::Conv2d(main_, "feat.in", c, fw, 3, 1, rng);
  feat_mod_ = nn::ChannelModulation(main_, "feat.mod", ew, fw, rng);
  est_in_ = nn::Conv2d(main_, "est.in", fw, w, 3, 1, rng);
  est_mod_ = nn::ChannelModulation(main_, "est.mod", ew, w, rng);
  for (int b = 0; b < config.estimator_blocks; ++b) {
    const std::string p = "est.block" + std::to_string(b);
    ResBlock rb;
    rb.gn1 = nn::GroupNormLayer(main_, p + ".gn1", w, g);
    rb.conv1 = nn::Conv2d(main_, p + ".conv1", w, w, 3, 1, rng);
    rb.gn2 = nn::GroupNormLayer(main_, p + ".gn2", w, g);
    rb.conv2 = nn::Conv2d(main_, p + ".conv2", w, w, 3, 1, rng, 0.1);
    blocks_.push_back(std::move(rb));
  }
  est_gn_ = nn::GroupNormLayer(main_, "est.head.gn", w, g);
  est_head_ = nn::Conv2d(main_, "est.head", w, d, 3, 1, rng);
  est_skip_ = nn::Conv2d(main_, "est.skip", w, d, 1, 1, rng);

  const int sw = config.sft_width;
  sft_in_ = nn::Conv2d(main_, "sft.in", c, sw, 3, 1, rng);
  sft_mod_ = nn::ChannelModulation(main_, "sft.mod", ew, sw, rng);
  stages_ = bank_->SftStages();
  for (size_t s = 0; s < stages_.size(); ++s) {
    const std::string p = "sft.stage" + std::to_string(s);
    if (s > 0) sft_trunk_.emplace_back(main_, p + ".trunk", sw, sw, 3, 1, rng);
    sft_heads_.emplace_back(main_, p + ".head", sw, 2 * stages_[s].channels, 3, 1,
                            rng, 1.0, /*zero_init=*/true);
  }
}

Var Codec::Embed(const std::vector<ControlPair>& pairs) const {
  return embedder_.Embed(pairs);
}

Var Codec::AdaptPrior(const Var& p, int h, int w) const {
  if (h <= 0 || w <= 0) throw ShapeError("adapter target grid is empty");
  return adapter_(ag::ResizeBilinear(p, h, w));
}

Var Codec::Encode(const Var& x, const Var& f_p, const Var& e) const {
  const Shape& s = x.shape();
  CheckShape(s.c == 3 && s.h % kPadMultiple == 0 && s.w % kPadMultiple == 0,
             "encoder expects {N,3,64a,64b}, got " + s.str());
  CheckShape(f_p.shape().h == s.h / 8 && f_p.shape().w == s.w / 8 &&
                 f_p.shape().c == config_.adapter_width,
             "adapted prior " + f_p.shape().str() + " for image " + s.str());
  Var h = enc_mod1_(ag::Silu(enc1_(x)), e);
  h = enc_mod2_(ag::Silu(enc2_(h)), e);
  h = enc_mod3_(ag::Silu(enc3_(h)), e);
  h = ag::Silu(enc_fuse_(ag::Concat({h, f_p})));
  return enc_gain_(enc_out_(h), e);
}

Var Codec::DecoderFeature(const Var& y_hat, const Var& e) const {
  return ag::Upsample2x(feat_mod_(ag::Silu(feat_in_(y_hat)), e));
}

EstimatorHeads Codec::EstimateHeads(const Var& feature, const Var& e) const {
  const Var in = est_mod_(est_in_(feature), e);
  Var h = in;
  for (const auto& b : blocks_) {
    Var t = b.conv1(ag::Silu(b.gn1(h)));
    t = b.conv2(ag::Silu(b.gn2(t)));
    h = ag::Add(h, t);
  }
  return {est_head_(ag::Silu(est_gn_(h))), est_skip_(in)};
}

Var Codec::EstimatePrior(const Var& feature, const Var& e) const {
  const EstimatorHeads heads = EstimateHeads(feature, e);
  return ag::Add(heads.head, heads.skip);
}

std::vector<SftParams> Codec::SftExtract(const Var& y_hat, const Var& e) const {
  Var t = ag::Upsample2x(sft_mod_(ag::Silu(sft_in_(y_hat)), e));
  std::vector<SftParams> out;
  for (size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) t = ag::Silu(sft_trunk_[s - 1](ag::Upsample2x(t)));
    const Var raw = sft_heads_[s](t);
    const int ch = stages_[s].channels;
    out.push_back({ag::AddScalar(ag::SliceChannels(raw, 0, ch), 1.0),
                   ag::SliceChannels(raw, ch, 2 * ch)});
  }
  return out;
}

Var Codec::Render(const Var& p_hat, const std::vector<SftParams>& sft) const {
  return bank_->Decode(p_hat, sft);
}

CodecForward Codec::Forward(const Tensor& x, const std::vector<ControlPair>& pairs) const {
  CheckShape(static_cast<int>(pairs.size()) == x.shape().n,
             "one control pair per batch item");
  CodecForward f;
  f.embedding = Embed(pairs);
  f.p = ag::Constant(bank_->ExtractPrior(x));
  const Var xv = ag::Constant(x);
  const Var f_p = AdaptPrior(f.p, x.shape().h / 8, x.shape().w / 8);
  const Var y = Encode(xv, f_p, f.embedding);
  f.pack = entropy_.Forward(y, f.embedding);
  f.p_hat = EstimatePrior(DecoderFeature(f.pack.y_hat, f.embedding), f.embedding);
  f.x_hat = Render(f.p_hat, SftExtract(f.pack.y_hat, f.embedding));
  return f;
}

QuantizedLatents Codec::Analyze(const Tensor& x, const ControlPair& pair) const {
  CheckShape(x.shape().n == 1, "Analyze expects one image");
  ag::NoGradGuard ng;
  const Var e = Embed({pair});
  const Var p = ag::Constant(bank_->ExtractPrior(x));
  const Var f_p = AdaptPrior(p, x.shape().h / 8, x.shape().w / 8);
  const Tensor y = Encode(ag::Constant(x), f_p, e).value();
  return entropy_.Quantize(y, e);
}

Tensor Codec::Synthesize(const Tensor& y_hat, const ControlPair& pair) const {
  ag::NoGradGuard ng;
  const Var e = Embed({pair});
  const Var yh = ag::Constant(y_hat);
  const Var p_hat = EstimatePrior(DecoderFeature(yh, e), e);
  Tensor out = Render(p_hat, SftExtract(yh, e)).value();
  for (double& v : out.vec()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Tensor Codec::SynthesizeWithPrior(const Tensor& y_hat, const Tensor& p,
                                  const ControlPair& pair) const {
  ag::NoGradGuard ng;
  const Var e = Embed({pair});
  Tensor out = Render(ag::Constant(p), SftExtract(ag::Constant(y_hat), e)).value();
  for (double& v : out.vec()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

uint64_t Codec::Hash() const {
  Fnv1a h;
  const uint64_t a = main_.Hash(), b = aux_.Hash();
  h.Update(&a, sizeof(a));
  h.Update(&b, sizeof(b));
  return h.digest();
}

std::vector<uint8_t> Codec::SaveToBytes() const {
  ByteWriter w;
  for (const char* c = kMagic; *c; ++c) w.U8(static_cast<uint8_t>(*c));
  w.U32(kVersion);
  w.Str(DumpCodecConfig(config_));
  w.U64(bank_->Hash());
  WriteTensors(w, main_.Snapshot(), ValueType::kF64);
  WriteTensors(w, aux_.Snapshot(), ValueType::kF64);
  SealWithHash(w);
  return std::move(w.bytes());
}

void Codec::Save(const std::string& path) const { WriteFile(path, SaveToBytes()); }

std::unique_ptr<Codec> Codec::LoadFromBytes(std::span<const uint8_t> bytes,
                                            std::shared_ptr<const PriorBank> bank) {
  ByteReader r(CheckSeal(bytes));
  for (const char* c = kMagic; *c; ++c) {
    if (r.U8() != static_cast<uint8_t>(*c)) throw FormatError("not a codec checkpoint");
  }
  if (r.U32() != kVersion) throw FormatError("unsupported codec checkpoint version");
  const CodecConfig config = ParseCodecConfig(r.Str());
  const uint64_t bank_hash = r.U64();
  if (!bank || bank->Hash() != bank_hash) {
    throw HashMismatchError("checkpoint was trained against a different prior bank (" +
                            HexDigest(bank_hash) + ")");
  }
  auto codec = std::make_unique<Codec>(config, std::move(bank), 0);
  codec->main_.Restore(ReadTensors(r));
  codec->aux_.Restore(ReadTensors(r));
  return codec;
}

std::unique_ptr<Codec> Codec::Load(const std::string& path,
                                   std::shared_ptr<const PriorBank> bank) {
  return LoadFromBytes(ReadFile(path), std::move(bank));
}

}  // namespace afpgic
