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

// Declarative run configuration. Every field has a default, so an empty
// JSON object is a valid config.

#ifndef AFPGIC_CONFIG_H_
#define AFPGIC_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

namespace afpgic {

struct BankConfig {
  int codebooks = 5;
  int entries = 64;
  int channels = 32;  // d
  int hidden = 48;
  int iterations = 1200;
  int batch = 8;
  int crop = 64;
  double lr = 2e-3;
  double commitment = 0.25;
  // Weight of the per-family cross-entropy on mean fusion weights. Only
  // synthetic samples carry a family label.
  double family_guidance = 0.1;
  int restart_every = 100;
  std::string image_folder;
  double folder_fraction = 0.0;
};

struct CodecConfig {
  int latent_channels = 32;
  int adapter_width = 36;
  int slices = 4;
  int hyper_channels = 16;
  int hyper_hidden = 32;
  int hyper_features = 64;
  int slice_hidden = 48;
  int estimator_width = 48;
  int estimator_blocks = 8;
  int sft_width = 32;
  int groups = 8;
  int fourier = 8;
  int embed_hidden = 64;
  int embed_width = 64;
  int mixture = 3;
  double sigma_min = 0.11;
  double p_min = 1.0 / 65536.0;
};

struct LossWeights {
  double rate = 0.5;
  double distortion = 50.0;
  double perceptual = 1.0;
  double prior = 0.006;
  double adversarial = 0.0;
};

struct TrainConfig {
  int base_iterations = 2000;
  int adversarial_iterations = 1000;
  int stage3_iterations = 1000;
  int batch = 6;
  int crop = 64;
  double lr = 1e-4;
  double aux_lr = 1e-3;
  double disc_lr = 1e-4;
  double clip = 1.0;
  double grid_step = 0.25;
  double rate_max = 3.0;
  double prior_max = 3.5;
  int log_every = 1;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  LossWeights base{0.5, 50.0, 1.0, 0.006, 0.0};
  LossWeights adversarial{0.5, 50.0, 1.0, 1.0, 0.01};
  std::string image_folder;
  double folder_fraction = 0.0;
};

struct SelectConfig {
  // Empty means: derive targets from the model's achievable range.
  std::vector<double> target_bpp;
  int auto_targets = 5;
  double prior_grid_min = 0.25;
  double prior_grid_max = 3.5;
  double prior_grid_step = 0.25;
  double alpha = 2.0;
  double resolution = 1e-3;
  int max_iterations = 20;
  // Lattice of the exhaustive scan used when the rate is not monotone.
  double fallback_resolution = 0.02;
  double bpp_tolerance = 0.1;  // relative
  int validation_images = 6;
  int validation_size = 128;
  std::vector<double> alpha_sweep{0.01, 0.1, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0};
};

struct Config {
  uint64_t seed = 1234;
  BankConfig bank;
  CodecConfig codec;
  TrainConfig train;
  SelectConfig select;
};

Config ParseConfig(const std::string& json_text);
Config LoadConfig(const std::string& path);
std::string DumpConfig(const Config& c);
// FNV-1a of the canonical JSON dump.
uint64_t ConfigHash(const Config& c);

std::string DumpCodecConfig(const CodecConfig& c);
CodecConfig ParseCodecConfig(const std::string& json_text);

// Seed precedence: AFPGIC_SEED environment variable, then the config.
uint64_t EffectiveSeed(const Config& c);

}  // namespace afpgic

#endif  // AFPGIC_CONFIG_H_
