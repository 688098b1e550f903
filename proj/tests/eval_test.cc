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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "afpgic/eval.h"
#include "oracles.h"
#include "test_models.h"

namespace afpgic {
namespace {

TEST(Psnr, IdentityAndKnownValue) {
  const Tensor x({1, 3, 4, 4}, 0.5);
  EXPECT_TRUE(std::isinf(Psnr(x, x)));
  EXPECT_EQ(CappedPsnr(x, x), kPsnrCap);
  Tensor y = x;
  for (double& v : y.vec()) v += 0.1;  // MSE 0.01 -> 20 dB
  EXPECT_NEAR(Psnr(x, y), 20.0, 1e-9);
  EXPECT_NEAR(CappedPsnr(x, y), 20.0, 1e-9);
  EXPECT_NEAR(Psnr(x, y, 255.0), 20.0 + 20.0 * std::log10(255.0), 1e-9);
}

RateCurve Curve(const std::vector<double>& bpp, const std::function<double(double)>& metric) {
  RateCurve c;
  for (double b : bpp) c.push_back({b, metric(b)});
  return c;
}

const std::vector<double> kRates{0.05, 0.08, 0.12, 0.2, 0.3};

TEST(BdMetric, IdentityOffsetAndAntisymmetry) {
  const auto f = [](double b) { return 30.0 + 4.0 * std::log2(b) + std::sin(5 * b); };
  const RateCurve a = Curve(kRates, f);
  const RateCurve shifted = Curve(kRates, [&](double b) { return f(b) + 1.0; });
  const BdInterval iv = CommonInterval(a, shifted);
  EXPECT_EQ(iv.lo_bpp, 0.05);
  EXPECT_EQ(iv.hi_bpp, 0.3);
  for (BdInterp interp : {BdInterp::kPchip, BdInterp::kLinear}) {
    EXPECT_EQ(BdMetric(a, a, BdMode::kHigherBetter, iv, interp), 0.0);
    EXPECT_NEAR(BdMetric(shifted, a, BdMode::kHigherBetter, iv, interp), 1.0, 1e-12);
    EXPECT_NEAR(BdMetric(shifted, a, BdMode::kLowerBetter, iv, interp), -1.0, 1e-12);
  }
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> ra, rb;
    double va = rng.Uniform(0.02, 0.05), vb = rng.Uniform(0.02, 0.05);
    for (int i = 0; i < 5; ++i) {
      ra.push_back(va);
      rb.push_back(vb);
      va *= rng.Uniform(1.2, 2.0);
      vb *= rng.Uniform(1.2, 2.0);
    }
    RateCurve ca, cb;
    for (double b : ra) ca.push_back({b, rng.Uniform(20, 40)});
    for (double b : rb) cb.push_back({b, rng.Uniform(20, 40)});
    const BdInterval common = CommonInterval(ca, cb);
    if (!(common.lo_bpp < common.hi_bpp)) continue;
    const double ab = BdMetric(ca, cb, BdMode::kHigherBetter, common);
    const double ba = BdMetric(cb, ca, BdMode::kHigherBetter, common);
    EXPECT_NEAR(ab, -ba, 1e-9);
  }
}

// Linear interpolation in log2(bpp), evaluated independently.
double LinearAt(const RateCurve& c, double u) {
  for (size_t i = 0; i + 1 < c.size(); ++i) {
    const double u0 = std::log2(c[i].bpp), u1 = std::log2(c[i + 1].bpp);
    if (u <= u1 || i + 2 == c.size()) {
      const double t = (u - u0) / (u1 - u0);
      return c[i].metric + t * (c[i + 1].metric - c[i].metric);
    }
  }
  return c.back().metric;
}

TEST(BdMetric, LinearModeMatchesTrapezoidOracle) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    RateCurve a, b;
    double ba = 0.03, bb = 0.035;
    for (int i = 0; i < 6; ++i) {
      a.push_back({ba, rng.Uniform(20, 40)});
      b.push_back({bb, rng.Uniform(20, 40)});
      ba *= rng.Uniform(1.3, 1.8);
      bb *= rng.Uniform(1.3, 1.8);
    }
    const BdInterval iv = CommonInterval(a, b);
    const double lo = std::log2(iv.lo_bpp), hi = std::log2(iv.hi_bpp);
    const double ia = oracle::Trapezoid([&](double u) { return LinearAt(a, u); }, lo, hi, 200000);
    const double ib = oracle::Trapezoid([&](double u) { return LinearAt(b, u); }, lo, hi, 200000);
    const double want = (ia - ib) / (hi - lo);
    EXPECT_NEAR(BdMetric(a, b, BdMode::kHigherBetter, iv, BdInterp::kLinear), want, 1e-6);
  }
}

TEST(BdMetric, PchipReproducesLinesAndMonotoneData) {
  // Collinear in log2(bpp): PCHIP is the line itself.
  const RateCurve line = Curve(kRates, [](double b) { return 10.0 + 3.0 * std::log2(b); });
  const RateCurve flat = Curve(kRates, [](double) { return 0.0; });
  const double lo = std::log2(0.05), hi = std::log2(0.3);
  const double mean_line = 10.0 + 3.0 * 0.5 * (lo + hi);
  EXPECT_NEAR(BdMetric(line, flat, BdMode::kHigherBetter, {0.05, 0.3}), mean_line, 1e-12);
  std::vector<double> x{0, 1, 2, 3, 4}, y{0, 0.1, 2, 2.1, 5};
  const Pchip p(x, y);
  for (double u = 0; u <= 4; u += 0.01) {
    const double v = p(u);
    EXPECT_GE(v, -1e-12);
    EXPECT_LE(v, 5 + 1e-12);
    if (u >= 0.01) EXPECT_GE(v, p(u - 0.01) - 1e-12);  // shape preserving
  }
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(p(x[i]), y[i], 1e-12);
  EXPECT_NEAR(p.Integral(0.3, 3.7), oracle::Trapezoid([&](double u) { return p(u); }, 0.3, 3.7, 100000),
              1e-8);
}

TEST(BdMetric, RejectsBadInput) {
  const RateCurve ok = Curve(kRates, [](double b) { return 30 + b; });
  const RateCurve three = Curve({0.1, 0.2, 0.3}, [](double b) { return b; });
  EXPECT_THROW(BdMetric(three, ok, BdMode::kHigherBetter, {0.1, 0.3}), BdError);
  RateCurve unsorted = ok;
  std::swap(unsorted[1], unsorted[2]);
  EXPECT_THROW(BdMetric(unsorted, ok, BdMode::kHigherBetter, {0.05, 0.3}), BdError);
  RateCurve zero = ok;
  zero[0].bpp = 0.0;
  EXPECT_THROW(BdMetric(zero, ok, BdMode::kHigherBetter, {0.05, 0.3}), BdError);
  EXPECT_THROW(BdMetric(ok, ok, BdMode::kHigherBetter, {0.2, 0.1}), BdError);
  EXPECT_THROW(BdMetric(ok, ok, BdMode::kHigherBetter, {0.01, 0.3}), BdError);
}

TEST(HeaderOverhead, ExampleAndTable) {
  // 64x64 at 0.10 bpp payload: 409.6 bits.
  EXPECT_NEAR(HeaderFraction(409.6), 48.0 / 457.6, 1e-15);
  EXPECT_NEAR(HeaderFraction(409.6), 0.1049, 1e-4);
  const auto rows = HeaderOverhead({{409.6, 409.6}, {100.0, 300.0}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].images, 2);
  EXPECT_NEAR(rows[0].mean_fraction, 48.0 / 457.6, 1e-15);
  EXPECT_NEAR(rows[1].mean_payload_bits, 200.0, 1e-12);
  EXPECT_NEAR(rows[1].mean_fraction, 0.5 * (48.0 / 148.0 + 48.0 / 348.0), 1e-15);
  const std::string csv = OverheadTable("synthetic", rows);
  EXPECT_NE(csv.find("synthetic"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(CurveCsv, RoundTrip) {
  std::vector<CurveRow> rows{{"afpgic", "synthetic", 0.0625, 27.125, 3.5, false},
                             {"k1", "folder", 0.125, 99.0, 0.25, true}};
  const auto back = ParseCurveCsv(CurveCsv(rows));
  ASSERT_EQ(back.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].method, rows[i].method);
    EXPECT_EQ(back[i].dataset, rows[i].dataset);
    EXPECT_EQ(back[i].bpp, rows[i].bpp);
    EXPECT_EQ(back[i].psnr, rows[i].psnr);
    EXPECT_EQ(back[i].proxy, rows[i].proxy);
    EXPECT_EQ(back[i].psnr_capped, rows[i].psnr_capped);
  }
  EXPECT_ANY_THROW(ParseCurveCsv("method,dataset\nx,y\n"));
}

TEST(ControlResponse, ZeroPriorRowIsReference) {
  const auto codec = testing_models::UntrainedCodec();
  const auto reg = testing_models::BoundRegistry(*codec);
  const auto rows = ControlResponse(*codec, reg, {testing_models::TestImage(64, 64, 3)});
  ASSERT_EQ(rows.size(), reg.size());
  EXPECT_EQ(ResponsePriorValues().size(), 8u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.beta_prior.size(), 8u);
    EXPECT_EQ(r.beta_prior[0], 0.0);
    EXPECT_EQ(r.psnr_delta[0], 0.0);
    EXPECT_EQ(r.selected, reg.At(r.op_index).pair);
  }
  const std::string table = ResponseTable(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), static_cast<long>(rows.size() + 1));
}

TEST(PriorActivation, SumsToOne) {
  const auto bank = testing_models::FrozenBank();
  const auto a = PriorActivationSummary(*bank, testing_models::TestImage(70, 50, 4));
  ASSERT_EQ(a.size(), 5u);
  double s = 0.0;
  for (double v : a) {
    EXPECT_GT(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

}  // namespace
}  // namespace afpgic
