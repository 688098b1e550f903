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

#ifndef AFPGIC_NN_H_
#define AFPGIC_NN_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "afpgic/autograd.h"
#include "afpgic/rng.h"

namespace afpgic::nn {

using ag::Var;

// Ordered, named collection of trainable tensors.
class ParamStore {
 public:
  Var Add(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, Var>>& params() const {
    return params_;
  }
  std::vector<std::pair<std::string, Var>>& params() { return params_; }
  Var Find(const std::string& name) const;

  void SetRequiresGrad(bool r);
  void ZeroGrad();
  size_t NumScalars() const;

  // Rounds every value to the nearest binary32 so that a float32 file
  // round trip is exact.
  void RoundToFloat();

  // FNV-1a over names, shapes and values.
  uint64_t Hash() const;

  std::map<std::string, Tensor> Snapshot() const;
  // Throws if a name is missing or a shape differs.
  void Restore(const std::map<std::string, Tensor>& values);

 private:
  std::vector<std::pair<std::string, Var>> params_;
};

// He-uniform initialisation scaled by `gain`.
Tensor InitUniform(Shape s, int fan_in, Rng& rng, double gain = 1.0);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int cin, int cout, int k,
         int stride, Rng& rng, double gain = 1.0, bool zero_init = false);

  Var operator()(const Var& x) const;

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
  int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out,
         Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const;
  int out_features() const { return out_; }

 private:
  Var weight_;
  Var bias_;
  int out_ = 0;
};

class GroupNormLayer {
 public:
  GroupNormLayer() = default;
  GroupNormLayer(ParamStore& store, const std::string& name, int channels,
                 int groups, double eps = 1e-5);
  Var operator()(const Var& x) const;

 private:
  Var gamma_;
  Var beta_;
  int groups_ = 1;
  double eps_ = 1e-5;
};

// Per-channel affine modulation driven by a conditioning vector:
// x * (1 + scale(e)) + shift(e). Starts as the identity.
class ChannelModulation {
 public:
  ChannelModulation() = default;
  ChannelModulation(ParamStore& store, const std::string& name, int embed,
                    int channels, Rng& rng);
  Var operator()(const Var& x, const Var& embedding) const;

 private:
  Linear scale_;
  Linear shift_;
};

}  // namespace afpgic::nn

#endif  // AFPGIC_NN_H_
