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

#include <Eigen/Dense>
#include <json.hpp>

#include "afpgic/theory.h"

namespace afpgic {
namespace {

Eigen::VectorXd RandomVector(int n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.Normal();
  return v;
}

// Euclidean projection onto the probability simplex (sort-based).
Eigen::VectorXd ProjectSimplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.rbegin(), u.rend());
  double css = 0.0, theta = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / (i + 1.0);
    if (u[i] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

// Projected gradient descent on |P w - t|^2 over the simplex.
double SimplexOracle(const Eigen::MatrixXd& p, const Eigen::VectorXd& t) {
  const int k = static_cast<int>(p.cols());
  Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / k);
  const double l = 2.0 * (p.transpose() * p).eigenvalues().real().maxCoeff() + 1e-12;
  for (int it = 0; it < 20000; ++it) {
    w = ProjectSimplex(w - (2.0 / l) * (p.transpose() * (p * w - t)));
  }
  return (p * w - t).norm();
}

TEST(Alignment, EqualPriorsGiveNonNegativeSlack) {
  Rng rng(1);
  for (bool sat : {false, true}) {
    const SyntheticDecoder f = MakeCertifiedDecoder(6, 4, 5, 2.0, sat, rng);
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd y = RandomVector(4, rng), p = RandomVector(5, rng);
      const Eigen::VectorXd x = RandomVector(6, rng);
      EXPECT_NEAR(AlignmentSlack(f, x, y, p, p), (f(y, p) - x).squaredNorm(), 1e-9);
    }
  }
}

TEST(Alignment, PriorIndependentDecoder) {
  Rng rng(2);
  SyntheticDecoder f = MakeCertifiedDecoder(5, 3, 4, 1.0, false, rng);
  f.b.setZero();
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd y = RandomVector(3, rng), p = RandomVector(4, rng);
    const Eigen::VectorXd q = RandomVector(4, rng), x = RandomVector(5, rng);
    const double want = (f(y, q) - x).squaredNorm() + 2.0 * (p - q).squaredNorm();
    EXPECT_NEAR(AlignmentSlack(f, x, y, p, q), want, 1e-9);
  }
}

TEST(Alignment, TenThousandCertifiedTrialsHaveNoViolation) {
  const AlignmentReport r = CheckAlignmentBound(10000, 2, 12, {0.1, 1.0, 5.0}, 3);
  EXPECT_EQ(r.trials, 10000);
  EXPECT_EQ(r.violations, 0);
  EXPECT_GE(r.min_slack, -kTheorySlack);
  EXPECT_TRUE(r.pass());
  const auto j = nlohmann::json::parse(AlignmentReportJson(r));
  EXPECT_EQ(j["trials"], 10000);
  EXPECT_EQ(j["violations"], 0);
}

TEST(Certificate, ScalesToTargetAndDetectsTampering) {
  Rng rng(4);
  for (double l : {0.5, 3.0}) {
    const SyntheticDecoder f = MakeCertifiedDecoder(7, 3, 6, l, false, rng);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.b);
    EXPECT_LE(svd.singularValues()(0), l * (1 + 1e-9));
    EXPECT_NEAR(PowerIterationNorm(f.b), svd.singularValues()(0), 1e-6 * l);
    EXPECT_NO_THROW(VerifyCertificate(f));
    SyntheticDecoder bad = f;
    bad.b *= 1.5;
    EXPECT_THROW(VerifyCertificate(bad), LipschitzError);
  }
  EXPECT_EQ(PowerIterationNorm(Eigen::MatrixXd()), 0.0);
}

TEST(Simplex, LeastSquaresMatchesProjectedGradientOracle) {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const int k = 2 + static_cast<int>(rng.UniformInt(4));
    const int dim = 2 + static_cast<int>(rng.UniformInt(4));
    Eigen::MatrixXd p(dim, k);
    for (int j = 0; j < k; ++j) p.col(j) = RandomVector(dim, rng);
    const Eigen::VectorXd target = RandomVector(dim, rng, 1.5);
    const SimplexFit fit = SimplexLeastSquares(p, target);
    EXPECT_NEAR(fit.weights.sum(), 1.0, 1e-12);
    EXPECT_GE(fit.weights.minCoeff(), -1e-12);
    EXPECT_NEAR(fit.distance, (p * fit.weights - target).norm(), 1e-12);
    EXPECT_NEAR(fit.distance, SimplexOracle(p, target), 1e-6) << t;
    // Dominance: a one-hot vertex is feasible.
    EXPECT_LE(fit.distance, NearestBranchDistance(p, target) + 1e-12);
    const SimplexFit grid = SimplexGridMin(p, target, 50);
    EXPECT_GE(grid.distance, fit.distance - 1e-12);
    EXPECT_LE(grid.distance, fit.distance + GridTolerance(p, 50) + 1e-12);
  }
}

TEST(Simplex, StrictGapFixtureAndVertexTarget) {
  Eigen::MatrixXd p(2, 2);
  p << 0, 2, 0, 0;  // branches (0,0) and (2,0)
  Eigen::VectorXd mid(2);
  mid << 1, 0;
  const SimplexFit fit = SimplexLeastSquares(p, mid);
  EXPECT_NEAR(fit.distance, 0.0, 1e-12);
  EXPECT_NEAR(fit.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(NearestBranchDistance(p, mid), 1.0, 1e-15);
  // Target equal to a branch: both minima are zero.
  const Eigen::VectorXd v = p.col(1);
  EXPECT_NEAR(SimplexLeastSquares(p, v).distance, 0.0, 1e-12);
  EXPECT_EQ(NearestBranchDistance(p, v), 0.0);
}

TEST(Dominance, RandomInstancesAndFixture) {
  const DominanceReport r = CheckFusedDominance(1000, {2, 3, 5}, 4, 50, 6);
  EXPECT_EQ(r.trials, 1000);
  EXPECT_EQ(r.violations, 0);
  EXPECT_EQ(r.grid_mismatches, 0);
  ASSERT_EQ(r.gaps.size(), 1000u);
  for (double g : r.gaps) EXPECT_GE(g, -kTheorySlack);
  EXPECT_NEAR(r.strict_fixture_gap, 1.0, 1e-9);
  EXPECT_EQ(r.strict_fixture_analytic, 1.0);
  EXPECT_TRUE(r.pass());
  const auto j = nlohmann::json::parse(DominanceReportJson(r));
  EXPECT_EQ(j["violations"], 0);
}

TEST(Smooth, CenteredMean) {
  const auto s = Smooth({1, 2, 3, 4, 5}, 2);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0], 1.5);
  EXPECT_EQ(s[1], 2.0);
  EXPECT_EQ(s[4], 4.5);
  EXPECT_EQ(Smooth({}, 3).size(), 0u);
}

}  // namespace
}  // namespace afpgic
