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

#include "afpgic/control.h"

#include <cmath>

namespace afpgic {

std::vector<double> FourierFrequencies(ControlVar which, int count) {
  if (count < 1) throw ControlError("need at least one frequency");
  const double range = which == ControlVar::kRate ? kBetaRateMax : kBetaPriorMax;
  std::vector<double> f(count);
  for (int j = 0; j < count; ++j) {
    const double t = count == 1 ? 0.0 : static_cast<double>(j) / (count - 1);
    const double cycles = 0.5 * std::pow(16.0, t);
    f[j] = cycles / range;
  }
  return f;
}

Tensor FourierEmbed(double beta, ControlVar which, int count) {
  if (!std::isfinite(beta)) throw ControlError("non-finite control value");
  const auto f = FourierFrequencies(which, count);
  Tensor out({1, 2 * count, 1, 1});
  for (int j = 0; j < count; ++j) {
    const double a = 2.0 * M_PI * f[j] * beta;
    out[2 * j] = std::sin(a);
    out[2 * j + 1] = std::cos(a);
  }
  return out;
}

ag::Var FourierEmbedVar(const ag::Var& beta, ControlVar which, int count) {
  CheckShape(beta.shape().c == 1 && beta.shape().h == 1 && beta.shape().w == 1,
             "beta must be {N,1,1,1}");
  for (double b : beta.value().vec()) {
    if (!std::isfinite(b)) throw ControlError("non-finite control value");
  }
  const auto f = FourierFrequencies(which, count);
  std::vector<ag::Var> parts;
  for (int j = 0; j < count; ++j) {
    const ag::Var a = ag::Scale(beta, 2.0 * M_PI * f[j]);
    parts.push_back(ag::Sin(a));
    parts.push_back(ag::Cos(a));
  }
  return ag::Concat(parts);
}

std::pair<double, double> ExpWeights(const ControlPair& pair) {
  return {std::exp(pair.beta_rate), std::exp(pair.beta_prior)};
}

std::vector<double> ControlGrid(double max, double step) {
  if (!(step > 0.0)) throw ControlError("grid step must be positive");
  std::vector<double> g;
  const int n = static_cast<int>(std::floor(max / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(i * step);
  return g;
}

bool InTrainingRange(const ControlPair& pair) {
  return pair.beta_rate >= 0.0 && pair.beta_rate <= kBetaRateMax &&
         pair.beta_prior >= 0.0 && pair.beta_prior <= kBetaPriorMax;
}

ControlEmbedder::ControlEmbedder(nn::ParamStore& store, int frequencies,
                                 int hidden, int width, Rng& rng)
    : l1_(store, "control.l1", 4 * frequencies, hidden, rng),
      l2_(store, "control.l2", hidden, width, rng),
      frequencies_(frequencies),
      width_(width) {}

ag::Var ControlEmbedder::Combine(const ag::Var& e_rate,
                                 const ag::Var& e_prior) const {
  if (e_rate.shape().c != 2 * frequencies_ ||
      e_prior.shape().c != 2 * frequencies_ ||
      e_rate.shape().n != e_prior.shape().n) {
    throw ControlError("embedding width mismatch: " + e_rate.shape().str() +
                       " / " + e_prior.shape().str());
  }
  return l2_(ag::Silu(l1_(ag::Concat({e_rate, e_prior}))));
}

ag::Var ControlEmbedder::Embed(const std::vector<ControlPair>& pairs) const {
  const int n = static_cast<int>(pairs.size());
  Tensor br({n, 1, 1, 1}), bp({n, 1, 1, 1});
  for (int i = 0; i < n; ++i) {
    br[i] = pairs[i].beta_rate;
    bp[i] = pairs[i].beta_prior;
  }
  return EmbedVar(ag::Constant(br), ag::Constant(bp));
}

ag::Var ControlEmbedder::EmbedVar(const ag::Var& beta_rate,
                                  const ag::Var& beta_prior) const {
  return Combine(FourierEmbedVar(beta_rate, ControlVar::kRate, frequencies_),
                 FourierEmbedVar(beta_prior, ControlVar::kPrior, frequencies_));
}

}  // namespace afpgic
