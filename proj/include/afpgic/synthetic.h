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

// Procedural texture corpus: five families loosely mirroring the coarse
// content groups used to diversify the prior codebooks (facades, indoor
// objects, natural scenes, street views, portraits).

#ifndef AFPGIC_SYNTHETIC_H_
#define AFPGIC_SYNTHETIC_H_

#include <string>
#include <vector>

#include "afpgic/rng.h"
#include "afpgic/tensor.h"

namespace afpgic {

inline constexpr int kNumFamilies = 5;

enum class Family : int {
  kArchitecture = 0,
  kIndoor = 1,
  kNatural = 2,
  kStreet = 3,
  kPortrait = 4,
};

const char* FamilyName(Family f);

Tensor GenerateTexture(Family family, int h, int w, Rng& rng);

struct Sample {
  Tensor image;
  int family = -1;  // -1 for folder images
};

// Infinite, seed-deterministic stream of training crops. Synthetic families
// are drawn uniformly; when a folder is attached, a fraction of draws are
// random crops from its PNG files.
class ImageSource {
 public:
  ImageSource() = default;
  // Loads every *.png under `dir` (non-recursive, sorted by name).
  void AttachFolder(const std::string& dir, double fraction);

  Sample Draw(int size, Rng& rng) const;
  std::vector<Sample> DrawBatch(int count, int size, Rng& rng) const;

  size_t folder_images() const { return folder_.size(); }

 private:
  std::vector<Tensor> folder_;
  double folder_fraction_ = 0.0;
};

// Fixed held-out set: `per_family` images of each family from `seed`.
std::vector<Sample> HeldOutSet(int per_family, int size, uint64_t seed);
// First `count` images of the held-out stream (families round-robin).
std::vector<Tensor> ValidationImages(int count, int size, uint64_t seed);

}  // namespace afpgic

#endif  // AFPGIC_SYNTHETIC_H_
