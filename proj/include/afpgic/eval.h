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

// Metrics and reports: PSNR, BD deltas between rate-metric curves, header
// overhead, control response and prior-activation summaries.

#ifndef AFPGIC_EVAL_H_
#define AFPGIC_EVAL_H_

#include <stdexcept>
#include <string>
#include <vector>

#include "afpgic/bitstream.h"
#include "afpgic/codec.h"
#include "afpgic/prior_bank.h"

namespace afpgic {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(max^2 / MSE); +inf for identical images.
double Psnr(const Tensor& x, const Tensor& x_hat, double max_value = 1.0);
// Psnr capped at kPsnrCap, for curve files and averages.
double CappedPsnr(const Tensor& x, const Tensor& x_hat);

class BdError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RatePoint {
  double bpp = 0.0;
  double metric = 0.0;
};
using RateCurve = std::vector<RatePoint>;

enum class BdMode { kHigherBetter, kLowerBetter };
enum class BdInterp { kPchip, kLinear };

struct BdInterval {
  double lo_bpp = 0.0;
  double hi_bpp = 0.0;
};

// Overlap of the two curves' rate ranges; throws BdError when empty.
BdInterval CommonInterval(const RateCurve& a, const RateCurve& b);

// Mean vertical gap of the interpolated metric over log2(bpp) in the
// interval. Positive means curve `a` is better. Curves need >= 4 points
// with strictly increasing bpp.
double BdMetric(const RateCurve& a, const RateCurve& b, BdMode mode,
                const BdInterval& interval, BdInterp interp = BdInterp::kPchip);

// Monotone cubic (Fritsch-Carlson) interpolant through (x, y).
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;
  // Exact integral over [lo, hi] within the data range.
  double Integral(double lo, double hi) const;

 private:
  std::vector<double> x_, y_, d_;
};

// 48 / (48 + payload bits).
double HeaderFraction(double payload_bits);

struct OverheadRow {
  int op_index = 0;
  double mean_payload_bits = 0.0;
  double mean_fraction = 0.0;  // mean over images of HeaderFraction
  int images = 0;
};

// payload_bits[op][image].
std::vector<OverheadRow> HeaderOverhead(const std::vector<std::vector<double>>& payload_bits);
std::string OverheadTable(const std::string& dataset, const std::vector<OverheadRow>& rows);

struct ResponseRow {
  int op_index = 0;
  double target_bpp = 0.0;
  ControlPair selected;
  std::vector<double> beta_prior;   // the sweep values
  std::vector<double> psnr_delta;   // PSNR(beta_prior) - PSNR(0)
};

// The 8 values 0, 0.5, ..., 3.5.
std::vector<double> ResponsePriorValues();

// For each operating point: keep beta_rate, sweep beta_prior, report the
// mean PSNR change relative to beta_prior = 0.
std::vector<ResponseRow> ControlResponse(const Codec& codec, const OperatingPointRegistry& reg,
                                         const std::vector<Tensor>& images);
std::string ResponseTable(const std::vector<ResponseRow>& rows);

// Mean fusion weight per codebook over all locations, normalized.
std::vector<double> PriorActivationSummary(const PriorBank& bank, const Tensor& image);

struct CurveRow {
  std::string method;
  std::string dataset;
  double bpp = 0.0;
  double psnr = 0.0;
  double proxy = 0.0;
  bool psnr_capped = false;
};
std::string CurveCsv(const std::vector<CurveRow>& rows);
std::vector<CurveRow> ParseCurveCsv(const std::string& text);

}  // namespace afpgic

#endif  // AFPGIC_EVAL_H_
