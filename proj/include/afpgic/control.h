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

// Dual-control conditioning: Fourier features of (beta_rate, beta_prior),
// the combining MLP and the exponential loss weights.

#ifndef AFPGIC_CONTROL_H_
#define AFPGIC_CONTROL_H_

#include <stdexcept>
#include <utility>
#include <vector>

#include "afpgic/nn.h"

namespace afpgic {

inline constexpr double kBetaRateMax = 3.0;
inline constexpr double kBetaPriorMax = 3.5;

struct ControlPair {
  double beta_rate = 0.0;
  double beta_prior = 0.0;
  bool operator==(const ControlPair&) const = default;
};

enum class ControlVar { kRate, kPrior };

class ControlError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// f_j in cycles per unit beta: log-spaced from 0.5 to 8 cycles over the
// variable's range.
std::vector<double> FourierFrequencies(ControlVar which, int count);

// [sin(2 pi f_1 b), cos(2 pi f_1 b), sin(2 pi f_2 b), ...] as {1, 2F, 1, 1}.
Tensor FourierEmbed(double beta, ControlVar which, int count);
// Differentiable batched form: beta {N, 1, 1, 1} -> {N, 2F, 1, 1}.
ag::Var FourierEmbedVar(const ag::Var& beta, ControlVar which, int count);

// (exp(beta_rate), exp(beta_prior)).
std::pair<double, double> ExpWeights(const ControlPair& pair);

// 0, step, 2 step, ... up to max inclusive.
std::vector<double> ControlGrid(double max, double step);
bool InTrainingRange(const ControlPair& pair);

// M_eta: [e_r, e_p] -> Linear -> SiLU -> Linear.
class ControlEmbedder {
 public:
  ControlEmbedder() = default;
  ControlEmbedder(nn::ParamStore& store, int frequencies, int hidden,
                  int width, Rng& rng);

  ag::Var Combine(const ag::Var& e_rate, const ag::Var& e_prior) const;
  // Embeds N pairs as {N, width, 1, 1}.
  ag::Var Embed(const std::vector<ControlPair>& pairs) const;
  // Same, with betas given as differentiable {N, 1, 1, 1} inputs.
  ag::Var EmbedVar(const ag::Var& beta_rate, const ag::Var& beta_prior) const;

  int width() const { return width_; }
  int frequencies() const { return frequencies_; }

 private:
  nn::Linear l1_;
  nn::Linear l2_;
  int frequencies_ = 8;
  int width_ = 64;
};

}  // namespace afpgic

#endif  // AFPGIC_CONTROL_H_
