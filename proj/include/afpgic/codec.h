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

// Trainable compression networks around a frozen prior bank.
//
// Encoder side: x -> fused prior p (frozen bank) -> adapter f_p -> y.
// Decoder side: y_hat -> decoder feature -> predicted prior p_hat, and
// y_hat -> SFT parameters; the frozen bank decoder renders p_hat under the
// SFT modulation. Every decoder-side method takes only y_hat and the control
// embedding.

#ifndef AFPGIC_CODEC_H_
#define AFPGIC_CODEC_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "afpgic/config.h"
#include "afpgic/control.h"
#include "afpgic/entropy_model.h"
#include "afpgic/nn.h"
#include "afpgic/prior_bank.h"

namespace afpgic {

inline constexpr int kLatentStride = 16;
inline constexpr int kPadMultiple = 64;

ag::Var GroupNorm(const ag::Var& h, int groups, const ag::Var& gamma,
                  const ag::Var& kappa, double eps);
ag::Var Silu(const ag::Var& z);

struct CodecForward {
  ag::Var embedding;
  ag::Var p;      // encoder-side fused prior, constant
  LatentPack pack;
  ag::Var p_hat;
  ag::Var x_hat;  // unclamped
};

// The two additive parts of the prior estimator.
struct EstimatorHeads {
  ag::Var head;
  ag::Var skip;
};

class Codec {
 public:
  Codec(const CodecConfig& config, std::shared_ptr<const PriorBank> bank,
        uint64_t seed);

  const CodecConfig& config() const { return config_; }
  const PriorBank& bank() const { return *bank_; }
  std::shared_ptr<const PriorBank> bank_ptr() const { return bank_; }
  const EntropyModel& entropy() const { return entropy_; }
  const ControlEmbedder& embedder() const { return embedder_; }
  nn::ParamStore& params() { return main_; }
  const nn::ParamStore& params() const { return main_; }
  nn::ParamStore& aux_params() { return aux_; }
  const nn::ParamStore& aux_params() const { return aux_; }

  ag::Var Embed(const std::vector<ControlPair>& pairs) const;

  // Bilinear resize (align-corners) to the grid, then a 1x1 projection.
  ag::Var AdaptPrior(const ag::Var& p, int h, int w) const;
  // x {N,3,H,W} with H, W multiples of 64 -> y {N,C,H/16,W/16}.
  ag::Var Encode(const ag::Var& x, const ag::Var& f_p, const ag::Var& e) const;

  ag::Var DecoderFeature(const ag::Var& y_hat, const ag::Var& e) const;
  EstimatorHeads EstimateHeads(const ag::Var& feature, const ag::Var& e) const;
  ag::Var EstimatePrior(const ag::Var& feature, const ag::Var& e) const;
  std::vector<SftParams> SftExtract(const ag::Var& y_hat, const ag::Var& e) const;
  // Frozen bank decoder under SFT modulation; unclamped.
  ag::Var Render(const ag::Var& p_hat, const std::vector<SftParams>& sft) const;

  // Training pass with straight-through quantization. `pairs` has one entry
  // per batch item.
  CodecForward Forward(const Tensor& x, const std::vector<ControlPair>& pairs) const;

  // Encoder-side inference for one padded image.
  QuantizedLatents Analyze(const Tensor& x, const ControlPair& pair) const;
  // Decoder-side inference: y_hat -> image clamped to [0, 1].
  Tensor Synthesize(const Tensor& y_hat, const ControlPair& pair) const;
  // Test hook: renders with a given prior instead of the predicted one.
  Tensor SynthesizeWithPrior(const Tensor& y_hat, const Tensor& p,
                             const ControlPair& pair) const;

  // Hash over trainable and auxiliary parameters.
  uint64_t Hash() const;

  std::vector<uint8_t> SaveToBytes() const;
  void Save(const std::string& path) const;
  // Restores parameters; the stored bank hash must match `bank`.
  static std::unique_ptr<Codec> LoadFromBytes(std::span<const uint8_t> bytes,
                                              std::shared_ptr<const PriorBank> bank);
  static std::unique_ptr<Codec> Load(const std::string& path,
                                     std::shared_ptr<const PriorBank> bank);

 private:
  struct ResBlock {
    nn::GroupNormLayer gn1, gn2;
    nn::Conv2d conv1, conv2;
  };

  CodecConfig config_;
  std::shared_ptr<const PriorBank> bank_;
  nn::ParamStore main_;
  nn::ParamStore aux_;
  ControlEmbedder embedder_;
  nn::Conv2d adapter_;
  nn::Conv2d enc1_, enc2_, enc3_, enc_fuse_, enc_out_;
  nn::ChannelModulation enc_mod1_, enc_mod2_, enc_mod3_, enc_gain_;
  EntropyModel entropy_;
  nn::Conv2d feat_in_;
  nn::ChannelModulation feat_mod_;
  nn::Conv2d est_in_;
  nn::ChannelModulation est_mod_;
  std::vector<ResBlock> blocks_;
  nn::GroupNormLayer est_gn_;
  nn::Conv2d est_head_, est_skip_;
  nn::Conv2d sft_in_;
  nn::ChannelModulation sft_mod_;
  std::vector<nn::Conv2d> sft_trunk_;  // between stages
  std::vector<nn::Conv2d> sft_heads_;
  std::vector<SftStage> stages_;
};

}  // namespace afpgic

#endif  // AFPGIC_CODEC_H_
