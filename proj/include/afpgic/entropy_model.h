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

// Hyperprior entropy model with slice-wise conditional Gaussians.
//
// The hyper-latent is coded around a learned per-channel median with a
// per-channel logistic-mixture density. The main latent is split into
// channel-contiguous slices; slice s is Gaussian with (mu, sigma) predicted
// from the hyper features and the already reconstructed slices < s.
// Means and medians are snapped to a 2^-20 grid so that the coded
// residuals are exact integers in floating point.

#ifndef AFPGIC_ENTROPY_MODEL_H_
#define AFPGIC_ENTROPY_MODEL_H_

#include <stdexcept>
#include <vector>

#include "afpgic/config.h"
#include "afpgic/nn.h"
#include "afpgic/range_coder.h"

namespace afpgic {

inline constexpr double kMeanGrid = 1048576.0;  // 2^20
inline constexpr int kMaxResidual = 127;

struct SliceParams {
  ag::Var mu;
  ag::Var sigma;
};

struct LatentPack {
  ag::Var y;
  ag::Var y_hat;
  ag::Var z;
  ag::Var z_hat;
  ag::Var h_z;
  std::vector<ag::Var> y_slices;
  std::vector<ag::Var> y_hat_slices;
  std::vector<SliceParams> params;
  ag::Var likelihood_z;
  std::vector<ag::Var> likelihood_y;
};

struct RateReport {
  double bpp_total = 0.0;
  double bpp_hyper = 0.0;
  std::vector<double> bpp_main_per_slice;
};

// Symbols and scales of one image as the coder sees them.
struct QuantizedLatents {
  Tensor y_hat;                    // {1, C, h, w}
  Tensor z_hat;                    // {1, Cz, hz, wz}
  std::vector<int> z_residuals;    // channel-major
  std::vector<std::vector<int>> y_residuals;  // per slice, channel-major
  std::vector<Tensor> sigmas;      // per slice
  int max_abs = 0;
  bool clipped = false;            // some residual exceeded kMaxResidual
};

class EntropyModel {
 public:
  EntropyModel() = default;
  EntropyModel(nn::ParamStore& main, nn::ParamStore& aux,
               const CodecConfig& config, Rng& rng);

  int slices() const { return slices_; }
  int slice_channels() const { return slice_channels_; }
  int hyper_channels() const { return hyper_channels_; }
  double sigma_min() const { return sigma_min_; }
  double p_min() const { return p_min_; }

  // y {N,C,H/16,W/16} -> z {N,Cz,H/64,W/64}.
  ag::Var HyperEncode(const ag::Var& y) const;
  // z_hat -> hyper features at 4x the spatial size.
  ag::Var HyperDecode(const ag::Var& z_hat, const ag::Var& embedding) const;

  // round(z - m) + m with a straight-through gradient.
  ag::Var QuantizeMedian(const ag::Var& z) const;
  // round(y - mu) + mu with a straight-through gradient.
  static ag::Var QuantizeMean(const ag::Var& y, const ag::Var& mu);

  // Parameters of slice s (0-based); `previous` must hold exactly the
  // reconstructed slices 0..s-1.
  SliceParams PredictSliceParams(const ag::Var& h_z,
                                 const std::vector<ag::Var>& previous,
                                 int s) const;

  ag::Var HyperLikelihood(const ag::Var& z_hat) const;
  // Snapped per-channel medians {1, Cz, 1, 1}.
  Tensor Medians() const;

  // Training/analysis forward pass with straight-through quantization.
  LatentPack Forward(const ag::Var& y, const ag::Var& embedding) const;

  // Total bits of a pack (summed over the batch).
  static ag::Var RateBits(const LatentPack& pack);
  // Mean |z - m| with z held fixed; drives the medians.
  ag::Var MedianLoss(const ag::Var& z) const;

  // Inference quantization of one image with residuals clamped to
  // [-kMaxResidual, kMaxResidual].
  QuantizedLatents Quantize(const Tensor& y, const ag::Var& embedding) const;

  // Folded alphabets over residuals -A..A, floored at p_min and
  // renormalized.
  std::vector<double> HyperAlphabet(int channel, int max_abs) const;
  std::vector<double> GaussianAlphabet(double sigma, int max_abs) const;

  // One table per symbol, in coding order.
  CdfTables HyperTables(const Shape& z_shape, int max_abs) const;
  CdfTables SliceTables(const Tensor& sigma, int max_abs) const;

 private:
  nn::Conv2d he1_, he2_;
  nn::Conv2d hd1_, hd2_;
  nn::ChannelModulation hd_mod_;
  std::vector<nn::Conv2d> sp1_, sp2_;
  ag::Var medians_;
  ag::Var mixture_;  // {1, Cz, 3, J}
  int slices_ = 4;
  int slice_channels_ = 8;
  int hyper_channels_ = 16;
  double sigma_min_ = 0.11;
  double p_min_ = 1.0 / 65536.0;
};

// Unfolded unit-bin Gaussian mass around integer offset k, floored.
double GaussianBinProb(double k, double mu, double sigma, double p_min);

// Bits per pixel from the pack likelihoods; excludes any header.
RateReport EstimateRate(const LatentPack& pack, int height, int width);

// Rate of the quantized tables actually used by the coder, in bits.
double QuantizedRateBits(const EntropyModel& model, const QuantizedLatents& q);

}  // namespace afpgic

#endif  // AFPGIC_ENTROPY_MODEL_H_
