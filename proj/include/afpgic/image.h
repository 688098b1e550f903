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

#ifndef AFPGIC_IMAGE_H_
#define AFPGIC_IMAGE_H_

#include <string>
#include <vector>

#include "afpgic/rng.h"
#include "afpgic/tensor.h"

namespace afpgic {

// Images are {1, 3, H, W} tensors with values in [0, 1].
Tensor MakeImage(int h, int w);

// Mirror padding (without edge repetition) up to the next multiple of
// `multiple` on the bottom and right. Works for any pad amount.
Tensor ReflectPad(const Tensor& image, int multiple);
Tensor CropTopLeft(const Tensor& image, int h, int w);
Tensor RandomCrop(const Tensor& image, int h, int w, Rng& rng);

// 8-bit RGB PNG.
Tensor ReadPng(const std::string& path);
void WritePng(const std::string& path, const Tensor& image);
// Rounds to the 8-bit grid the PNG writer uses.
Tensor QuantizeTo8Bit(const Tensor& image);

}  // namespace afpgic

#endif  // AFPGIC_IMAGE_H_
