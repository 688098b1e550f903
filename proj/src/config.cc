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

#include "afpgic/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "afpgic/serialize.h"
#include "json.hpp"

namespace afpgic {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    BankConfig, codebooks, entries, channels, hidden, iterations, batch, crop,
    lr, commitment, family_guidance, restart_every, image_folder,
    folder_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    CodecConfig, latent_channels, adapter_width, slices, hyper_channels,
    hyper_hidden, hyper_features, slice_hidden, estimator_width,
    estimator_blocks, sft_width, groups, fourier, embed_hidden, embed_width,
    mixture, sigma_min, p_min)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, rate, distortion,
                                                perceptual, prior, adversarial)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    TrainConfig, base_iterations, adversarial_iterations, stage3_iterations,
    batch, crop, lr, aux_lr, disc_lr, clip, grid_step, rate_max, prior_max,
    log_every, checkpoint_every, base, adversarial, image_folder,
    folder_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    SelectConfig, target_bpp, auto_targets, prior_grid_min, prior_grid_max,
    prior_grid_step, alpha, resolution, max_iterations, fallback_resolution,
    bpp_tolerance,
    validation_images, validation_size, alpha_sweep)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Config, seed, bank, codec,
                                                train, select)

namespace {

void Validate(const Config& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
  };
  need(c.bank.codebooks >= 1, "bank.codebooks >= 1");
  need(c.bank.entries >= 1, "bank.entries >= 1");
  need(c.bank.channels >= 1, "bank.channels >= 1");
  need(c.bank.crop % 64 == 0, "bank.crop multiple of 64");
  need(c.codec.latent_channels % c.codec.slices == 0,
       "latent_channels divisible by slices");
  need(c.codec.estimator_width % c.codec.groups == 0,
       "estimator_width divisible by groups");
  need(c.codec.sigma_min > 0, "sigma_min > 0");
  need(c.train.batch >= 1, "train.batch >= 1");
  need(c.train.crop % 64 == 0, "train.crop multiple of 64");
  need(c.train.rate_max <= 3.0 && c.train.prior_max <= 3.5,
       "training ranges within control limits");
  need(c.select.alpha > 0, "select.alpha > 0");
  need(c.select.prior_grid_step > 0 &&
           c.select.prior_grid_max > c.select.prior_grid_min,
       "prior grid strictly increasing");
  for (const LossWeights* w : {&c.train.base, &c.train.adversarial}) {
    need(w->rate >= 0 && w->distortion >= 0 && w->perceptual >= 0 &&
             w->prior >= 0 && w->adversarial >= 0,
         "loss weights non-negative");
  }
}

}  // namespace

Config ParseConfig(const std::string& json_text) {
  Config c = json::parse(json_text.empty() ? "{}" : json_text).get<Config>();
  Validate(c);
  return c;
}

Config LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string DumpConfig(const Config& c) { return json(c).dump(2); }

uint64_t ConfigHash(const Config& c) {
  const std::string s = json(c).dump();
  Fnv1a h;
  h.Update(s.data(), s.size());
  return h.digest();
}

std::string DumpCodecConfig(const CodecConfig& c) { return json(c).dump(); }

CodecConfig ParseCodecConfig(const std::string& json_text) {
  return json::parse(json_text).get<CodecConfig>();
}

uint64_t EffectiveSeed(const Config& c) {
  if (const char* env = std::getenv("AFPGIC_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return c.seed;
}

}  // namespace afpgic
