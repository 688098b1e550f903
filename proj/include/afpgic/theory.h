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

// Numerical checks of the prior-alignment bound
//   |f(y, p) - x|^2 <= 2 L^2 |p - p*|^2 + 2 |f(y, p*) - x|^2
// and of fused-family dominance
//   min_{w in simplex} |p* - sum_k w_k p_k| <= min_k |p* - p_k|.

#ifndef AFPGIC_THEORY_H_
#define AFPGIC_THEORY_H_

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "afpgic/codec.h"
#include "afpgic/rng.h"

namespace afpgic {

inline constexpr double kTheorySlack = 1e-9;

class LipschitzError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// f(y, p) = A y + B g(p) + c, with g = identity or tanh (both 1-Lipschitz),
// so the Lipschitz constant in p is |B|_2.
struct SyntheticDecoder {
  Eigen::MatrixXd a, b;
  Eigen::VectorXd c;
  bool saturating = false;
  double lipschitz = 0.0;  // certified

  Eigen::VectorXd operator()(const Eigen::VectorXd& y, const Eigen::VectorXd& p) const;
};

// Largest singular value by power iteration on B^T B.
double PowerIterationNorm(const Eigen::MatrixXd& m, int iterations = 500, uint64_t seed = 1);

// Random decoder with |B|_2 scaled to `lipschitz`. The scale is verified
// against an SVD; a mismatch beyond 1e-9 relative throws LipschitzError.
SyntheticDecoder MakeCertifiedDecoder(int out_dim, int y_dim, int p_dim, double lipschitz,
                                      bool saturating, Rng& rng);
// Throws LipschitzError unless |B|_2 <= lipschitz (1 + 1e-9).
void VerifyCertificate(const SyntheticDecoder& f);

// Slack of the bound (right side minus left side) for one sample.
double AlignmentSlack(const SyntheticDecoder& f, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                      const Eigen::VectorXd& p_star);

struct AlignmentReport {
  int trials = 0;
  int violations = 0;  // slack < -kTheorySlack
  double min_slack = 0.0;
  double mean_slack = 0.0;
  double min_relative_slack = 0.0;  // slack / right side
  bool pass() const { return trials > 0 && violations == 0; }
};

// Dimensions uniform in [min_dim, max_dim]; L cycles through `lipschitz`.
AlignmentReport CheckAlignmentBound(int trials, int min_dim, int max_dim,
                                    const std::vector<double>& lipschitz, uint64_t seed);

struct SimplexFit {
  Eigen::VectorXd weights;  // on the simplex
  double distance = 0.0;    // |target - P w|
};

// Columns of `branches` are p_k. Active-set least squares with w >= 0,
// sum w = 1.
SimplexFit SimplexLeastSquares(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target);
// Brute force over the grid {w : w_k in {0, 1/res, ..., 1}, sum w = 1}.
SimplexFit SimplexGridMin(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target,
                          int resolution);
// Bound on grid_min - exact_min: (K / res) * max_k |p_k - centroid|.
double GridTolerance(const Eigen::MatrixXd& branches, int resolution);
// min_k |target - p_k|.
double NearestBranchDistance(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target);

struct DominanceReport {
  int trials = 0;
  int violations = 0;         // fused > single + slack
  int grid_mismatches = 0;    // exact vs grid disagreement beyond tolerance
  std::vector<double> gaps;   // single - fused per trial
  double strict_fixture_gap = 0.0;     // measured on p1=(0,0), p2=(2,0), p*=(1,0)
  double strict_fixture_analytic = 1.0;
  bool pass() const {
    return trials > 0 && violations == 0 && grid_mismatches == 0 &&
           strict_fixture_gap >= 0.9 * strict_fixture_analytic;
  }
};

// Half the trials use K = ks[0], the rest K = ks[1], etc.; targets and
// branches are standard normal in `dim` dimensions.
DominanceReport CheckFusedDominance(int trials, const std::vector<int>& ks, int dim,
                                    int grid_resolution, uint64_t seed);

struct PriorGapRow {
  long step = 0;
  double prior_mse = 0.0;   // per element |p_hat - p|^2
  double recon_mse = 0.0;   // pixel MSE of the round trip
};

// Prior mismatch and reconstruction error of one checkpoint at `pair`.
PriorGapRow MeasurePriorGap(const Codec& codec, long step, const std::vector<Tensor>& images,
                            const ControlPair& pair);
// Centered moving average of width `window` (shrinking at the ends).
std::vector<double> Smooth(const std::vector<double>& v, int window);

std::string AlignmentReportJson(const AlignmentReport& r);
std::string DominanceReportJson(const DominanceReport& r);
std::string PriorGapJson(const std::vector<PriorGapRow>& rows);

}  // namespace afpgic

#endif  // AFPGIC_THEORY_H_
