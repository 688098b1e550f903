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

// Multi-codebook prior bank: a small VQ autoencoder whose latent grid is
// quantized by K codebooks and fused with predicted per-location simplex
// weights. After pretraining it is frozen; its decoder doubles as the
// frozen generative decoder of the codec, with spatial feature transform
// points after each stage.

#ifndef AFPGIC_PRIOR_BANK_H_
#define AFPGIC_PRIOR_BANK_H_

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "afpgic/config.h"
#include "afpgic/nn.h"
#include "afpgic/synthetic.h"

namespace afpgic {

inline constexpr int kPriorStride = 8;

class BankStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct BankShape {
  int codebooks = 5;
  int entries = 64;
  int channels = 32;
  int hidden = 48;
};

// Spatial feature transform for one decoder stage: h * gamma + delta.
struct SftParams {
  ag::Var gamma;
  ag::Var delta;
};

// h * gamma + delta, elementwise with identical shapes.
ag::Var SftModulate(const ag::Var& h, const SftParams& params);

struct SftStage {
  int channels;
  int stride;  // relative to the image
};

class PriorBank {
 public:
  PriorBank(const BankShape& shape, uint64_t seed);

  int codebooks() const { return shape_.codebooks; }
  int entries() const { return shape_.entries; }
  int channels() const { return shape_.channels; }
  const BankShape& shape() const { return shape_; }

  // E_Ada: {N,3,H,W} -> {N,d,H/8,W/8}.
  ag::Var EncodeLatent(const ag::Var& x) const;

  // Nearest entry of codebook i (0-based) per location; ties go to the
  // lowest entry index.
  std::vector<int> NearestIndices(const Tensor& z, int i) const;
  Tensor QuantizeBranch(const Tensor& z, int i) const;
  const Tensor& Codebook(int i) const;
  // Trainable handle to codebook i, {M, d, 1, 1}.
  ag::Var CodebookVar(int i) const;

  // Softmax over K at every location: {N,K,h,w}.
  ag::Var PredictWeights(const ag::Var& z) const;

  // p = sum_i alpha_i q_i, accumulated in branch order.
  static Tensor Fuse(const std::vector<Tensor>& q, const Tensor& alpha);

  // Full frozen pipeline; throws BankStateError before Freeze().
  Tensor ExtractPrior(const Tensor& x) const;
  // Fusion weights that ExtractPrior uses.
  Tensor ExtractWeights(const Tensor& x) const;

  // Frozen decoder. `sft` is either empty or holds one entry per stage.
  ag::Var Decode(const ag::Var& p, const std::vector<SftParams>& sft) const;
  std::vector<SftStage> SftStages() const;

  void Freeze();
  bool frozen() const { return frozen_; }

  uint64_t Hash() const { return params_.Hash(); }
  uint64_t DecoderHash() const;
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  void Save(const std::string& path) const;
  std::vector<uint8_t> SaveToBytes() const;
  static std::shared_ptr<PriorBank> Load(const std::string& path);
  static std::shared_ptr<PriorBank> LoadFromBytes(
      std::span<const uint8_t> bytes);

 private:
  BankShape shape_;
  nn::ParamStore params_;
  std::vector<ag::Var> codebooks_;
  nn::Conv2d enc1_, enc2_, enc3_, enc_out_;
  nn::Conv2d wp1_, wp2_, wp3_;
  nn::Conv2d dec_in_, dec1_, dec2_, dec_out_;
  bool frozen_ = false;
};

struct BankTrainLog {
  int step;
  double recon;
  double vq;
  double guidance;
  int dead_restarts;
};

struct BankReport {
  std::vector<BankTrainLog> log;
  // family_purity[f]: share of family f's held-out images whose dominant
  // branch is the family's most common one.
  std::vector<double> family_purity;
  // Cluster purity of dominant branches against families.
  double mean_purity = 0.0;
  double heldout_psnr = 0.0;
  std::vector<std::vector<double>> family_mean_weights;  // [family][k]
};

// Trains a bank on `source`, freezes it and returns it. Deterministic for a
// given seed.
std::shared_ptr<PriorBank> PretrainBank(
    const BankConfig& config, const ImageSource& source, uint64_t seed,
    BankReport* report = nullptr,
    const std::function<void(const BankTrainLog&)>& on_step = {});

// Dominant-branch statistics of a frozen bank on a held-out set.
void MeasureBankPurity(const PriorBank& bank, const std::vector<Sample>& set,
                       BankReport* report);

}  // namespace afpgic

#endif  // AFPGIC_PRIOR_BANK_H_
