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

// Objectives, the conditional patch discriminator and the staged training
// loop (stage I: random control pairs; stage III: selected pairs only).

#ifndef AFPGIC_TRAINING_H_
#define AFPGIC_TRAINING_H_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "afpgic/codec.h"
#include "afpgic/config.h"
#include "afpgic/optim.h"
#include "afpgic/synthetic.h"

namespace afpgic {

inline constexpr uint64_t kProxySeed = 0xA11CE5EEDull;

// Frozen random convolutional stack standing in for a learned perceptual
// metric: 3->16 (s1), 16->32 (s2), 32->32 (s2), LeakyReLU(0.2) after each.
class PerceptualProxy {
 public:
  explicit PerceptualProxy(uint64_t seed = kProxySeed);
  std::vector<ag::Var> Features(const ag::Var& x) const;
  // Mean over levels of the per-level feature MSE.
  ag::Var Distance(const ag::Var& x, const ag::Var& x_hat) const;
  // Spatial mean of the last level: {N, 32, 1, 1}.
  Tensor PooledFeatures(const Tensor& x) const;
  int pooled_width() const { return 32; }

 private:
  nn::ParamStore store_;
  nn::Conv2d c1_, c2_, c3_;
};

// D(x; beta): Fourier features of both betas -> Linear -> 4 maps broadcast
// over the image and concatenated with it, then a 3-layer patch network
// producing a logit map at 1/4 resolution.
class Discriminator {
 public:
  Discriminator(nn::ParamStore& store, int fourier, Rng& rng);
  ag::Var operator()(const ag::Var& x, const std::vector<ControlPair>& pairs) const;

 private:
  int fourier_;
  nn::Linear cond_;
  nn::Conv2d c1_, c2_, c3_;
};

// -mean log sigmoid(D(x_hat)); natural log.
ag::Var GeneratorAdvLoss(const ag::Var& fake_logits);
// -1/2 mean log sigmoid(D(x)) - 1/2 mean log(1 - sigmoid(D(x_hat))).
ag::Var DiscriminatorLoss(const ag::Var& real_logits, const ag::Var& fake_logits);

// Per-sample bits per pixel {N,1,1,1} of the pack's likelihoods.
ag::Var PerSampleBpp(const LatentPack& pack, int height, int width);

struct LossParts {
  ag::Var total;
  double rate = 0.0;         // mean bpp, unweighted
  double distortion = 0.0;   // pixel MSE
  double perceptual = 0.0;
  double prior = 0.0;        // mean squared prior error, unweighted
  double adversarial = 0.0;  // generator term
};

// Per sample i: w_r lambda_R R_i + lambda_D D_i + lambda_P P_i +
// w_p lambda_prior mean((p_hat_i - p_i)^2), averaged over the batch
// (D and P are batch means). rate_bpp is {N,1,1,1}.
LossParts BaseLoss(const ag::Var& x, const ag::Var& x_hat, const ag::Var& rate_bpp,
                   const ag::Var& p, const ag::Var& p_hat,
                   const std::vector<ControlPair>& pairs, const LossWeights& w,
                   const PerceptualProxy& proxy);
// BaseLoss + lambda_adv * GeneratorAdvLoss(fake_logits).
LossParts FullLoss(const ag::Var& x, const ag::Var& x_hat, const ag::Var& rate_bpp,
                   const ag::Var& p, const ag::Var& p_hat,
                   const std::vector<ControlPair>& pairs, const LossWeights& w,
                   const PerceptualProxy& proxy, const ag::Var& fake_logits);

enum class Stage { kBase, kAdversarial, kSelected };
const char* StageName(Stage s);

struct TrainLogEntry {
  long step = 0;  // global step, counting stage I then stage III
  Stage stage = Stage::kBase;
  ControlPair pair;
  double total = 0.0;
  double rate = 0.0;
  double distortion = 0.0;
  double perceptual = 0.0;
  double prior = 0.0;
  double adversarial = 0.0;
  double discriminator = 0.0;
};

std::string LogEntryJson(const TrainLogEntry& e);
TrainLogEntry ParseLogEntry(const std::string& line);
std::vector<TrainLogEntry> ReadTrainLog(const std::string& path);

// Uniform draw from grid(0, rate_max, step) x grid(0, prior_max, step).
ControlPair SampleGridPair(const TrainConfig& c, Rng& rng);

class Trainer {
 public:
  Trainer(const Config& config, std::shared_ptr<const PriorBank> bank, uint64_t seed);

  // Restores config, codec, discriminator, optimizer moments and the step
  // counter. Throws HashMismatchError if the bank differs.
  static std::unique_ptr<Trainer> Resume(const std::string& checkpoint,
                                         std::shared_ptr<const PriorBank> bank);
  static std::unique_ptr<Trainer> ResumeFromBytes(std::span<const uint8_t> bytes,
                                                  std::shared_ptr<const PriorBank> bank);

  // Runs global steps [step(), until). Stage I occupies
  // [0, base + adversarial); stage III follows and draws only from
  // `selected`, which must be non-empty once stage III is reached.
  void Run(const ImageSource& source, long until,
           const std::vector<ControlPair>& selected = {},
           const std::function<void(const TrainLogEntry&)>& on_step = {});
  // One step; returns its log entry.
  TrainLogEntry Step(const ImageSource& source, const std::vector<ControlPair>& selected);

  long step() const { return step_; }
  long stage1_end() const;
  long stage3_end() const;
  Stage StageAt(long step) const;

  Codec& codec() { return *codec_; }
  const Codec& codec() const { return *codec_; }
  const Config& config() const { return config_; }

  std::vector<uint8_t> SaveToBytes() const;
  void Save(const std::string& path) const;

 private:
  Config config_;
  uint64_t seed_;
  std::unique_ptr<Codec> codec_;
  nn::ParamStore disc_store_;
  std::unique_ptr<Discriminator> disc_;
  PerceptualProxy proxy_;
  std::unique_ptr<optim::Adam> opt_main_, opt_aux_, opt_disc_;
  long step_ = 0;

  void BuildOptimizers();
};

// Mean squared prior error ||p_hat - p||^2 (per element) of the codec on a
// set of images at a fixed pair, without quantization noise beyond rounding.
double MeanPriorError(const Codec& codec, const std::vector<Tensor>& images,
                      const ControlPair& pair);
double MeanPriorEnergy(const Codec& codec, const std::vector<Tensor>& images);

}  // namespace afpgic

#endif  // AFPGIC_TRAINING_H_
