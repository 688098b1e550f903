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

#include "afpgic/entropy_model.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace afpgic {
namespace {

using ag::Var;

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> FloorAndNormalize(std::vector<double> p, double p_min) {
  double total = 0.0;
  for (double& v : p) {
    v = std::max(v, p_min);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

int ClampResidual(double v, bool* clipped) {
  const double r = ag::RoundHalfAway(v);
  if (r > kMaxResidual || r < -kMaxResidual) *clipped = true;
  return static_cast<int>(std::clamp(r, -1.0 * kMaxResidual, 1.0 * kMaxResidual));
}

Var ZerosLike(const Var& v) { return ag::Constant(Tensor(v.shape())); }

}  // namespace

EntropyModel::EntropyModel(nn::ParamStore& main, nn::ParamStore& aux,
                           const CodecConfig& config, Rng& rng)
    : slices_(config.slices),
      slice_channels_(config.latent_channels / config.slices),
      hyper_channels_(config.hyper_channels),
      sigma_min_(config.sigma_min),
      p_min_(config.p_min) {
  const int c = config.latent_channels;
  const int hh = config.hyper_hidden;
  const int hf = config.hyper_features;
  he1_ = nn::Conv2d(main, "hyper.enc1", c, hh, 3, 2, rng);
  he2_ = nn::Conv2d(main, "hyper.enc2", hh, hyper_channels_, 3, 2, rng);
  hd1_ = nn::Conv2d(main, "hyper.dec1", hyper_channels_, hh, 3, 1, rng);
  hd_mod_ = nn::ChannelModulation(main, "hyper.mod", config.embed_width, hh, rng);
  hd2_ = nn::Conv2d(main, "hyper.dec2", hh, hf, 3, 1, rng);
  for (int s = 0; s < slices_; ++s) {
    const std::string p = "slice." + std::to_string(s);
    sp1_.emplace_back(main, p + ".1", hf + slice_channels_ * s,
                      config.slice_hidden, 3, 1, rng);
    sp2_.emplace_back(main, p + ".2", config.slice_hidden, 2 * slice_channels_,
                      3, 1, rng, 0.3);
  }
  medians_ = aux.Add("hyper.median", Tensor({1, hyper_channels_, 1, 1}));
  const int J = config.mixture;
  Tensor mix({1, hyper_channels_, 3, J});
  for (int ch = 0; ch < hyper_channels_; ++ch) {
    for (int j = 0; j < J; ++j) {
      mix.at(0, ch, 1, j) = J == 1 ? 0.0 : -1.0 + 2.0 * j / (J - 1);
    }
  }
  mixture_ = aux.Add("hyper.mixture", mix);
}

Var EntropyModel::HyperEncode(const Var& y) const {
  CheckShape(y.shape().c == slices_ * slice_channels_, "hyper encoder input");
  return he2_(ag::Silu(he1_(y)));
}

Var EntropyModel::HyperDecode(const Var& z_hat, const Var& embedding) const {
  CheckShape(z_hat.shape().c == hyper_channels_, "hyper decoder input");
  Var h = ag::Silu(hd1_(ag::Upsample2x(z_hat)));
  h = hd_mod_(h, embedding);
  return hd2_(ag::Upsample2x(h));
}

Var EntropyModel::QuantizeMedian(const Var& z) const {
  CheckShape(z.shape().c == hyper_channels_, "median quantizer input");
  const Var m = ag::SteSnap(medians_, kMeanGrid);
  const Var zero = ZerosLike(m);
  const Var r = ag::SteRound(ag::ChannelAffine(z, zero, ag::Scale(m, -1.0)));
  return ag::ChannelAffine(r, zero, m);
}

Var EntropyModel::QuantizeMean(const Var& y, const Var& mu) {
  CheckShape(y.shape() == mu.shape(), "mean quantizer shapes");
  const Var m = ag::SteSnap(mu, kMeanGrid);
  return ag::Add(ag::SteRound(ag::Sub(y, m)), m);
}

Tensor EntropyModel::Medians() const {
  Tensor m = medians_.value();
  for (double& v : m.vec()) v = ag::RoundHalfAway(v * kMeanGrid) / kMeanGrid;
  return m;
}

SliceParams EntropyModel::PredictSliceParams(const Var& h_z,
                                             const std::vector<Var>& previous,
                                             int s) const {
  if (s < 0 || s >= slices_) throw std::out_of_range("slice index out of range");
  if (static_cast<int>(previous.size()) != s) {
    throw std::logic_error("slice " + std::to_string(s) + " requested with " +
                           std::to_string(previous.size()) +
                           " reconstructed slices");
  }
  std::vector<Var> inputs{h_z};
  inputs.insert(inputs.end(), previous.begin(), previous.end());
  const Var out = sp2_[s](ag::Silu(sp1_[s](ag::Concat(inputs))));
  SliceParams p;
  p.mu = ag::SteSnap(ag::SliceChannels(out, 0, slice_channels_), kMeanGrid);
  p.sigma = ag::AddScalar(
      ag::Softplus(ag::SliceChannels(out, slice_channels_, 2 * slice_channels_)),
      sigma_min_);
  return p;
}

Var EntropyModel::HyperLikelihood(const Var& z_hat) const {
  return ag::LogisticMixtureLikelihood(z_hat, mixture_, p_min_);
}

LatentPack EntropyModel::Forward(const Var& y, const Var& embedding) const {
  LatentPack pack;
  pack.y = y;
  pack.z = HyperEncode(y);
  pack.z_hat = QuantizeMedian(pack.z);
  pack.likelihood_z = HyperLikelihood(pack.z_hat);
  pack.h_z = HyperDecode(pack.z_hat, embedding);
  for (int s = 0; s < slices_; ++s) {
    const Var ys = ag::SliceChannels(y, s * slice_channels_, (s + 1) * slice_channels_);
    SliceParams p = PredictSliceParams(pack.h_z, pack.y_hat_slices, s);
    const Var yh = QuantizeMean(ys, p.mu);
    pack.likelihood_y.push_back(ag::GaussianLikelihood(yh, p.mu, p.sigma, p_min_));
    pack.y_slices.push_back(ys);
    pack.y_hat_slices.push_back(yh);
    pack.params.push_back(std::move(p));
  }
  pack.y_hat = ag::Concat(pack.y_hat_slices);
  return pack;
}

Var EntropyModel::RateBits(const LatentPack& pack) {
  Var nats = ag::Sum(ag::Log(pack.likelihood_z));
  for (const auto& l : pack.likelihood_y) nats = ag::Add(nats, ag::Sum(ag::Log(l)));
  return ag::Scale(nats, -1.0 / std::log(2.0));
}

Var EntropyModel::MedianLoss(const Var& z) const {
  const Var zero = ZerosLike(medians_);
  return ag::Mean(
      ag::Abs(ag::ChannelAffine(ag::Detach(z), zero, ag::Scale(medians_, -1.0))));
}

QuantizedLatents EntropyModel::Quantize(const Tensor& y, const Var& embedding) const {
  CheckShape(y.shape().n == 1, "Quantize expects a single image");
  ag::NoGradGuard ng;
  QuantizedLatents q;
  const Tensor z = HyperEncode(ag::Constant(y)).value();
  const Tensor m = Medians();
  q.z_hat = Tensor(z.shape());
  const size_t zplane = z.shape().plane();
  for (int c = 0; c < z.shape().c; ++c) {
    for (size_t i = 0; i < zplane; ++i) {
      const size_t idx = c * zplane + i;
      const int k = ClampResidual(z[idx] - m[c], &q.clipped);
      q.z_residuals.push_back(k);
      q.z_hat[idx] = m[c] + k;
      q.max_abs = std::max(q.max_abs, std::abs(k));
    }
  }
  const Var h = HyperDecode(ag::Constant(q.z_hat), embedding);
  std::vector<Var> previous;
  const size_t plane = y.shape().plane();
  for (int s = 0; s < slices_; ++s) {
    const SliceParams p = PredictSliceParams(h, previous, s);
    const Tensor& mu = p.mu.value();
    Tensor yh(mu.shape());
    std::vector<int> res;
    res.reserve(mu.size());
    for (int c = 0; c < slice_channels_; ++c) {
      for (size_t i = 0; i < plane; ++i) {
        const size_t li = c * plane + i;
        const double v = y[(static_cast<size_t>(s) * slice_channels_ + c) * plane + i];
        const int k = ClampResidual(v - mu[li], &q.clipped);
        res.push_back(k);
        yh[li] = mu[li] + k;
        q.max_abs = std::max(q.max_abs, std::abs(k));
      }
    }
    q.y_residuals.push_back(std::move(res));
    q.sigmas.push_back(p.sigma.value());
    previous.push_back(ag::Constant(yh));
  }
  q.y_hat = ag::Concat(previous).value();
  return q;
}

std::vector<double> EntropyModel::HyperAlphabet(int channel, int max_abs) const {
  CheckShape(channel >= 0 && channel < hyper_channels_, "hyper channel");
  if (max_abs == 0) return {1.0};
  const Tensor& mix = mixture_.value();
  const int J = mix.shape().w;
  const double* logits = mix.data() + static_cast<size_t>(channel) * 3 * J;
  const double* locs = logits + J;
  const double* lsc = logits + 2 * J;
  const double m = Medians()[channel];
  double mx = -INFINITY;
  for (int j = 0; j < J; ++j) mx = std::max(mx, logits[j]);
  std::vector<double> pi(J);
  double zsum = 0.0;
  for (int j = 0; j < J; ++j) zsum += (pi[j] = std::exp(logits[j] - mx));
  for (double& v : pi) v /= zsum;
  const int n = 2 * max_abs + 1;
  std::vector<double> p(n);
  for (int k = -max_abs + 1; k < max_abs; ++k) {
    p[k + max_abs] = ag::LogisticMixtureMass(logits, locs, lsc, J, m + k);
  }
  double left = 0.0, right = 0.0;
  for (int j = 0; j < J; ++j) {
    const double inv_s = std::exp(-lsc[j]);
    left += pi[j] * Sigmoid((m - max_abs + 0.5 - locs[j]) * inv_s);
    right += pi[j] * Sigmoid(-(m + max_abs - 0.5 - locs[j]) * inv_s);
  }
  p[0] = left;
  p[n - 1] = right;
  return FloorAndNormalize(std::move(p), p_min_);
}

std::vector<double> EntropyModel::GaussianAlphabet(double sigma, int max_abs) const {
  if (max_abs == 0) return {1.0};
  const int n = 2 * max_abs + 1;
  std::vector<double> p(n);
  for (int k = 0; k < max_abs; ++k) {
    const double v = ag::BinMassGaussian(k, sigma);
    p[max_abs + k] = v;
    p[max_abs - k] = v;
  }
  const double tail = ag::NormalCdf((-max_abs + 0.5) / sigma);
  p[0] = tail;
  p[n - 1] = tail;
  return FloorAndNormalize(std::move(p), p_min_);
}

CdfTables EntropyModel::HyperTables(const Shape& z_shape, int max_abs) const {
  CdfTables t;
  for (int c = 0; c < z_shape.c; ++c) {
    const auto f = QuantizeFrequencies(HyperAlphabet(c, max_abs));
    for (size_t i = 0; i < z_shape.plane(); ++i) t.AddFrequencies(f);
  }
  return t;
}

CdfTables EntropyModel::SliceTables(const Tensor& sigma, int max_abs) const {
  CdfTables t;
  for (double s : sigma.vec()) t.AddFrequencies(QuantizeFrequencies(GaussianAlphabet(s, max_abs)));
  return t;
}

double GaussianBinProb(double k, double mu, double sigma, double p_min) {
  const double p = ag::NormalCdf((k - mu + 0.5) / sigma) -
                   ag::NormalCdf((k - mu - 0.5) / sigma);
  return std::max(p, p_min);
}

RateReport EstimateRate(const LatentPack& pack, int height, int width) {
  RateReport r;
  const double n = pack.likelihood_z.shape().n;
  const double pixels = static_cast<double>(height) * width * n;
  auto bits = [](const Tensor& l) {
    double b = 0.0;
    for (double v : l.vec()) b -= std::log2(v);
    return b;
  };
  r.bpp_hyper = bits(pack.likelihood_z.value()) / pixels;
  r.bpp_total = r.bpp_hyper;
  for (const auto& l : pack.likelihood_y) {
    r.bpp_main_per_slice.push_back(bits(l.value()) / pixels);
    r.bpp_total += r.bpp_main_per_slice.back();
  }
  return r;
}

double QuantizedRateBits(const EntropyModel& model, const QuantizedLatents& q) {
  const int A = q.max_abs;
  auto symbols = [A](const std::vector<int>& res) {
    std::vector<uint16_t> s(res.size());
    for (size_t i = 0; i < res.size(); ++i) s[i] = static_cast<uint16_t>(res[i] + A);
    return s;
  };
  double bits = QuantizedBits(symbols(q.z_residuals), model.HyperTables(q.z_hat.shape(), A));
  for (size_t s = 0; s < q.y_residuals.size(); ++s) {
    bits += QuantizedBits(symbols(q.y_residuals[s]), model.SliceTables(q.sigmas[s], A));
  }
  return bits;
}

}  // namespace afpgic
