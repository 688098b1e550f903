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

#include "afpgic/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "afpgic/image.h"

namespace afpgic {

double Psnr(const Tensor& x, const Tensor& x_hat, double max_value) {
  CheckShape(x.shape() == x_hat.shape(), "Psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

double CappedPsnr(const Tensor& x, const Tensor& x_hat) {
  return std::min(Psnr(x, x_hat), kPsnrCap);
}

// ---- BD metric ------------------------------------------------------------

namespace {

double Sign(double v) { return (v > 0) - (v < 0); }

// Three-point end slope with the usual shape-preserving clamps.
double EndSlope(double h0, double h1, double m0, double m1) {
  double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (Sign(d) != Sign(m0)) {
    d = 0.0;
  } else if (Sign(m0) != Sign(m1) && std::abs(d) > std::abs(3 * m0)) {
    d = 3 * m0;
  }
  return d;
}

void CheckCurve(const RateCurve& c, const char* name) {
  if (c.size() < 4) {
    throw BdError(std::string("BD metric: curve ") + name + " needs at least 4 points");
  }
  for (size_t i = 0; i < c.size(); ++i) {
    if (!(c[i].bpp > 0) || !std::isfinite(c[i].bpp) || !std::isfinite(c[i].metric)) {
      throw BdError(std::string("BD metric: curve ") + name + " has a non-positive or "
                    "non-finite point");
    }
    if (i > 0 && !(c[i].bpp > c[i - 1].bpp)) {
      throw BdError(std::string("BD metric: curve ") + name +
                    " rates must be strictly increasing");
    }
  }
}

// Integral of the linear interpolant over [lo, hi].
double LinearIntegral(const std::vector<double>& x, const std::vector<double>& y, double lo,
                      double hi) {
  auto eval = [&](double t) {
    size_t k = std::upper_bound(x.begin(), x.end(), t) - x.begin();
    k = std::clamp<size_t>(k, 1, x.size() - 1);
    const double u = (t - x[k - 1]) / (x[k] - x[k - 1]);
    return y[k - 1] + u * (y[k] - y[k - 1]);
  };
  double total = 0.0;
  double a = lo;
  for (size_t k = 1; k < x.size() && a < hi; ++k) {
    if (x[k] <= a) continue;
    const double b = std::min(hi, x[k]);
    total += 0.5 * (eval(a) + eval(b)) * (b - a);
    a = b;
  }
  return total;
}

}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw BdError("Pchip: need matching x, y with n >= 2");
  std::vector<double> h(n - 1), m(n - 1);
  for (size_t k = 0; k + 1 < n; ++k) {
    h[k] = x_[k + 1] - x_[k];
    if (!(h[k] > 0)) throw BdError("Pchip: x must be strictly increasing");
    m[k] = (y_[k + 1] - y_[k]) / h[k];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = m[0];
    return;
  }
  for (size_t k = 1; k + 1 < n; ++k) {
    if (m[k - 1] * m[k] <= 0) continue;
    const double w1 = 2 * h[k] + h[k - 1];
    const double w2 = h[k] + 2 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
  }
  d_[0] = EndSlope(h[0], h[1], m[0], m[1]);
  d_[n - 1] = EndSlope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
}

double Pchip::operator()(double t) const {
  size_t k = std::upper_bound(x_.begin(), x_.end(), t) - x_.begin();
  k = std::clamp<size_t>(k, 1, x_.size() - 1) - 1;
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * d_[k] +
         (-2 * s3 + 3 * s2) * y_[k + 1] + (s3 - s2) * h * d_[k + 1];
}

double Pchip::Integral(double lo, double hi) const {
  // Three-point Gauss-Legendre is exact on each cubic piece.
  static const double kNodes[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double kWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double total = 0.0;
  double a = lo;
  for (size_t k = 1; k < x_.size() && a < hi; ++k) {
    if (x_[k] <= a) continue;
    const double b = std::min(hi, x_[k]);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < 3; ++i) total += kWeights[i] * half * (*this)(mid + half * kNodes[i]);
    a = b;
  }
  return total;
}

BdInterval CommonInterval(const RateCurve& a, const RateCurve& b) {
  if (a.empty() || b.empty()) throw BdError("CommonInterval: empty curve");
  auto range = [](const RateCurve& c) {
    auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
        [](const RatePoint& p, const RatePoint& q) { return p.bpp < q.bpp; });
    return std::pair(lo->bpp, hi->bpp);
  };
  auto [alo, ahi] = range(a);
  auto [blo, bhi] = range(b);
  BdInterval iv{std::max(alo, blo), std::min(ahi, bhi)};
  if (!(iv.lo_bpp < iv.hi_bpp)) throw BdError("CommonInterval: curves do not overlap in rate");
  return iv;
}

double BdMetric(const RateCurve& a, const RateCurve& b, BdMode mode,
                const BdInterval& interval, BdInterp interp) {
  CheckCurve(a, "a");
  CheckCurve(b, "b");
  if (!(interval.lo_bpp > 0) || !(interval.lo_bpp < interval.hi_bpp)) {
    throw BdError("BD metric: invalid interval");
  }
  const double lo = std::log2(interval.lo_bpp), hi = std::log2(interval.hi_bpp);
  auto mean_over = [&](const RateCurve& c) {
    std::vector<double> x, y;
    for (const auto& p : c) {
      x.push_back(std::log2(p.bpp));
      y.push_back(p.metric);
    }
    // Relative slack for the log round trip of the endpoints.
    const double eps = 1e-12 * std::max(1.0, std::abs(hi) + std::abs(lo));
    if (lo < x.front() - eps || hi > x.back() + eps) {
      throw BdError("BD metric: interval extends beyond a curve's rate range");
    }
    const double l = std::max(lo, x.front()), r = std::min(hi, x.back());
    const double integral = interp == BdInterp::kPchip ? Pchip(x, y).Integral(l, r)
                                                       : LinearIntegral(x, y, l, r);
    return integral / (hi - lo);
  };
  const double diff = mean_over(a) - mean_over(b);
  return mode == BdMode::kHigherBetter ? diff : -diff;
}

// ---- header overhead ------------------------------------------------------

double HeaderFraction(double payload_bits) {
  const double header_bits = 8.0 * kHeaderBytes;
  return header_bits / (header_bits + payload_bits);
}

std::vector<OverheadRow> HeaderOverhead(const std::vector<std::vector<double>>& payload_bits) {
  std::vector<OverheadRow> rows;
  for (size_t op = 0; op < payload_bits.size(); ++op) {
    OverheadRow r;
    r.op_index = static_cast<int>(op);
    r.images = static_cast<int>(payload_bits[op].size());
    for (double bits : payload_bits[op]) {
      r.mean_payload_bits += bits;
      r.mean_fraction += HeaderFraction(bits);
    }
    if (r.images > 0) {
      r.mean_payload_bits /= r.images;
      r.mean_fraction /= r.images;
    }
    rows.push_back(r);
  }
  return rows;
}

std::string OverheadTable(const std::string& dataset, const std::vector<OverheadRow>& rows) {
  std::ostringstream os;
  os << "dataset,op_index,images,mean_payload_bits,header_fraction_percent\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.1f,%.4f\n", dataset.c_str(), r.op_index,
                  r.images, r.mean_payload_bits, 100.0 * r.mean_fraction);
    os << buf;
  }
  return os.str();
}

// ---- control response -----------------------------------------------------

std::vector<double> ResponsePriorValues() {
  std::vector<double> v;
  for (int i = 0; i < 8; ++i) v.push_back(0.5 * i);
  return v;
}

namespace {

double RoundTripPsnr(const Codec& codec, const Tensor& image, const ControlPair& pair) {
  const int h = image.shape().h, w = image.shape().w;
  const Tensor padded = ReflectPad(image, kPadMultiple);
  const QuantizedLatents q = codec.Analyze(padded, pair);
  const Tensor rec = CropTopLeft(codec.Synthesize(q.y_hat, pair), h, w);
  return CappedPsnr(image, rec);
}

}  // namespace

std::vector<ResponseRow> ControlResponse(const Codec& codec, const OperatingPointRegistry& reg,
                                         const std::vector<Tensor>& images) {
  std::vector<ResponseRow> rows;
  const std::vector<double> sweep = ResponsePriorValues();
  for (const auto& op : reg.points()) {
    ResponseRow row;
    row.op_index = op.index;
    row.target_bpp = op.nominal_bpp;
    row.selected = op.pair;
    row.beta_prior = sweep;
    std::vector<double> mean(sweep.size(), 0.0);
    for (const auto& img : images) {
      for (size_t i = 0; i < sweep.size(); ++i) {
        mean[i] += RoundTripPsnr(codec, img, {op.pair.beta_rate, sweep[i]});
      }
    }
    for (size_t i = 0; i < sweep.size(); ++i) {
      row.psnr_delta.push_back((mean[i] - mean[0]) / std::max<size_t>(1, images.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ResponseTable(const std::vector<ResponseRow>& rows) {
  std::ostringstream os;
  os << "op_index,target_bpp,beta_rate,selected_beta_prior";
  for (double b : ResponsePriorValues()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",dpsnr_bp%.1f", b);
    os << buf;
  }
  os << "\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%.4f", r.op_index, r.target_bpp,
                  r.selected.beta_rate, r.selected.beta_prior);
    os << buf;
    for (double d : r.psnr_delta) {
      std::snprintf(buf, sizeof(buf), ",%.4f", d);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::vector<double> PriorActivationSummary(const PriorBank& bank, const Tensor& image) {
  const Tensor weights = bank.ExtractWeights(ReflectPad(image, kPadMultiple));
  const Shape s = weights.shape();
  std::vector<double> mean(s.c, 0.0);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < s.h * s.w; ++i) {
        const double v = weights.at(n, c, i / s.w, i % s.w);
        mean[c] += v;
        total += v;
      }
    }
  }
  if (total > 0) {
    for (double& m : mean) m /= total;
  }
  return mean;
}

// ---- curve files ----------------------------------------------------------

std::string CurveCsv(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os << "method,dataset,bpp,psnr,proxy,psnr_capped\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.4f,%.6f,%d\n", r.method.c_str(),
                  r.dataset.c_str(), r.bpp, r.psnr, r.proxy, r.psnr_capped ? 1 : 0);
    os << buf;
  }
  return os.str();
}

std::vector<CurveRow> ParseCurveCsv(const std::string& text) {
  std::vector<CurveRow> rows;
  std::istringstream is(text);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw std::invalid_argument("curve csv: expected 6 fields: " + line);
    CurveRow r;
    r.method = f[0];
    r.dataset = f[1];
    r.bpp = std::stod(f[2]);
    r.psnr = std::stod(f[3]);
    r.proxy = std::stod(f[4]);
    r.psnr_capped = f[5] == "1";
    rows.push_back(r);
  }
  return rows;
}

}  // namespace afpgic
