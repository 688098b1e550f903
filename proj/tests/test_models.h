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

// Untrained models shared by several suites.

#ifndef AFPGIC_TESTS_TEST_MODELS_H_
#define AFPGIC_TESTS_TEST_MODELS_H_

#include <memory>

#include "afpgic/bitstream.h"
#include "afpgic/codec.h"
#include "afpgic/prior_bank.h"
#include "afpgic/synthetic.h"

namespace afpgic::testing_models {

inline std::shared_ptr<PriorBank> FrozenBank(uint64_t seed = 7) {
  auto bank = std::make_shared<PriorBank>(BankShape{}, seed);
  bank->Freeze();
  return bank;
}

inline std::shared_ptr<Codec> UntrainedCodec(uint64_t seed = 11) {
  return std::make_shared<Codec>(CodecConfig{}, FrozenBank(), seed);
}

inline OperatingPointRegistry BoundRegistry(const Codec& codec) {
  OperatingPointRegistry reg;
  reg.Add({0.0, 0.0}, 0.0);
  reg.Add({1.5, 2.0}, 0.0);
  reg.Add({3.0, 3.5}, 0.0);
  reg.set_model_hash(codec.Hash());
  return reg;
}

inline Tensor TestImage(int h, int w, uint64_t seed, Family f = Family::kNatural) {
  Rng rng(seed);
  return GenerateTexture(f, h, w, rng);
}

}  // namespace afpgic::testing_models

#endif  // AFPGIC_TESTS_TEST_MODELS_H_
