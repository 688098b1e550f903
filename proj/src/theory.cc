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

#include "afpgic/theory.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <json.hpp>

#include "afpgic/image.h"
#include "afpgic/training.h"

namespace afpgic {

namespace {

Eigen::VectorXd RandomVector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.Normal();
  return v;
}

Eigen::MatrixXd RandomMatrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.Normal();
  return m;
}

}  // namespace

Eigen::VectorXd SyntheticDecoder::operator()(const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& p) const {
  Eigen::VectorXd g = saturating ? Eigen::VectorXd(p.array().tanh()) : p;
  return a * y + b * g + c;
}

double PowerIterationNorm(const Eigen::MatrixXd& m, int iterations, uint64_t seed) {
  if (m.size() == 0) return 0.0;
  Rng rng(seed);
  Eigen::VectorXd v = RandomVector(static_cast<int>(m.cols()), rng);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd u = m.transpose() * (m * v);
    const double n = u.norm();
    if (n == 0.0) return 0.0;
    v = u / n;
    sigma = std::sqrt(n);
  }
  return (m * v).norm() > sigma ? (m * v).norm() : sigma;
}

void VerifyCertificate(const SyntheticDecoder& f) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.b);
  const double top = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  if (top > f.lipschitz * (1.0 + 1e-9)) {
    throw LipschitzError("decoder operator norm " + std::to_string(top) +
                         " exceeds certified constant " + std::to_string(f.lipschitz));
  }
}

SyntheticDecoder MakeCertifiedDecoder(int out_dim, int y_dim, int p_dim, double lipschitz,
                                      bool saturating, Rng& rng) {
  if (out_dim <= 0 || y_dim <= 0 || p_dim <= 0 || !(lipschitz > 0)) {
    throw std::invalid_argument("MakeCertifiedDecoder: bad dimensions or constant");
  }
  SyntheticDecoder f;
  f.a = RandomMatrix(out_dim, y_dim, rng) / std::sqrt(static_cast<double>(y_dim));
  f.b = RandomMatrix(out_dim, p_dim, rng);
  f.c = RandomVector(out_dim, rng);
  f.saturating = saturating;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.b);
  f.b *= lipschitz / svd.singularValues()[0];
  f.lipschitz = lipschitz;
  VerifyCertificate(f);
  return f;
}

double AlignmentSlack(const SyntheticDecoder& f, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                      const Eigen::VectorXd& p_star) {
  const double lhs = (f(y, p) - x).squaredNorm();
  const double rhs = 2.0 * f.lipschitz * f.lipschitz * (p - p_star).squaredNorm() +
                     2.0 * (f(y, p_star) - x).squaredNorm();
  return rhs - lhs;
}

AlignmentReport CheckAlignmentBound(int trials, int min_dim, int max_dim,
                                    const std::vector<double>& lipschitz, uint64_t seed) {
  if (trials <= 0 || min_dim <= 0 || max_dim < min_dim || lipschitz.empty()) {
    throw std::invalid_argument("CheckAlignmentBound: bad arguments");
  }
  AlignmentReport r;
  r.min_slack = std::numeric_limits<double>::infinity();
  r.min_relative_slack = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Rng trial = rng.Fork();
    const int out = min_dim + trial.UniformInt(max_dim - min_dim + 1);
    const int yd = min_dim + trial.UniformInt(max_dim - min_dim + 1);
    const int pd = min_dim + trial.UniformInt(max_dim - min_dim + 1);
    const double l = lipschitz[t % lipschitz.size()];
    const SyntheticDecoder f = MakeCertifiedDecoder(out, yd, pd, l, t % 2 == 1, trial);
    const Eigen::VectorXd y = RandomVector(yd, trial);
    const Eigen::VectorXd p_star = RandomVector(pd, trial);
    // Mix near-aligned and far priors.
    const double spread = std::pow(10.0, trial.Uniform(-3.0, 1.0));
    const Eigen::VectorXd p = p_star + spread * RandomVector(pd, trial);
    // x close to the aligned reconstruction, so the first term dominates.
    const Eigen::VectorXd x = f(y, p_star) + trial.Uniform(0.0, 1.0) * RandomVector(out, trial);
    const double slack = AlignmentSlack(f, x, y, p, p_star);
    const double rhs = 2.0 * l * l * (p - p_star).squaredNorm() +
                       2.0 * (f(y, p_star) - x).squaredNorm();
    ++r.trials;
    if (slack < -kTheorySlack) ++r.violations;
    r.min_slack = std::min(r.min_slack, slack);
    r.mean_slack += slack;
    if (rhs > 0) r.min_relative_slack = std::min(r.min_relative_slack, slack / rhs);
  }
  r.mean_slack /= r.trials;
  return r;
}

// ---- simplex least squares ------------------------------------------------

namespace {

double Distance(const Eigen::MatrixXd& q, const Eigen::VectorXd& t, const Eigen::VectorXd& w) {
  return (q * w - t).norm();
}

// Equality-constrained least squares on the columns in `free`:
// min |Q_F w - t|^2 s.t. sum w = 1. Returns w_F and the multiplier nu.
void SolveFace(const Eigen::MatrixXd& q, const Eigen::VectorXd& t, const std::vector<int>& free,
               Eigen::VectorXd& w_free, double& nu) {
  const int f = static_cast<int>(free.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(f + 1, f + 1);
  Eigen::VectorXd rhs(f + 1);
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < f; ++j) kkt(i, j) = q.col(free[i]).dot(q.col(free[j]));
    kkt(i, f) = kkt(f, i) = 1.0;
    rhs[i] = q.col(free[i]).dot(t);
  }
  rhs[f] = 1.0;
  Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  w_free = sol.head(f);
  nu = sol[f];
}

SimplexFit BestVertex(const Eigen::MatrixXd& q, const Eigen::VectorXd& t) {
  const int k = static_cast<int>(q.cols());
  SimplexFit fit;
  fit.weights = Eigen::VectorXd::Zero(k);
  int best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const double di = (q.col(i) - t).norm();
    if (di < d) {
      d = di;
      best = i;
    }
  }
  fit.weights[best] = 1.0;
  fit.distance = d;
  return fit;
}

// Exhaustive search over supports; used only if the active set stalls.
SimplexFit EnumerateSupports(const Eigen::MatrixXd& q, const Eigen::VectorXd& t) {
  const int k = static_cast<int>(q.cols());
  SimplexFit best = BestVertex(q, t);
  for (int mask = 1; mask < (1 << k); ++mask) {
    std::vector<int> free;
    for (int i = 0; i < k; ++i)
      if (mask & (1 << i)) free.push_back(i);
    Eigen::VectorXd wf;
    double nu;
    SolveFace(q, t, free, wf, nu);
    if (wf.minCoeff() < 0) continue;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
    for (size_t i = 0; i < free.size(); ++i) w[free[i]] = wf[i];
    w /= w.sum();
    const double d = Distance(q, t, w);
    if (d < best.distance) best = {w, d};
  }
  return best;
}

}  // namespace

SimplexFit SimplexLeastSquares(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target) {
  const int k = static_cast<int>(branches.cols());
  if (k == 0 || branches.rows() != target.size()) {
    throw std::invalid_argument("SimplexLeastSquares: shape mismatch");
  }
  // Shift by the target so the objective is |Q w|^2 with Q = P - t 1^T.
  const Eigen::MatrixXd q = branches.colwise() - target;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(target.size());
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale * scale;

  SimplexFit start = BestVertex(q, zero);
  Eigen::VectorXd w = start.weights;
  std::vector<int> free;
  for (int i = 0; i < k; ++i)
    if (w[i] > 0) free.push_back(i);

  for (int iter = 0; iter < 8 * k + 16; ++iter) {
    Eigen::VectorXd wf;
    double nu;
    SolveFace(q, zero, free, wf, nu);
    bool feasible = wf.minCoeff() > 0;
    if (feasible) {
      w.setZero();
      for (size_t i = 0; i < free.size(); ++i) w[free[i]] = wf[i];
      // Multipliers of the inactive bounds: lambda_i = q_i . (Q w) + nu.
      const Eigen::VectorXd r = q * w;
      int enter = -1;
      double most = -tol;
      for (int i = 0; i < k; ++i) {
        if (std::find(free.begin(), free.end(), i) != free.end()) continue;
        const double lambda = q.col(i).dot(r) + nu;
        if (lambda < most) {
          most = lambda;
          enter = i;
        }
      }
      if (enter < 0) {
        w = w.cwiseMax(0.0);
        w /= w.sum();
        return {w, Distance(q, zero, w)};
      }
      free.push_back(enter);
      continue;
    }
    // Move toward the face solution until a weight hits zero.
    double alpha = 1.0;
    for (size_t i = 0; i < free.size(); ++i) {
      if (wf[i] <= 0) {
        const double wi = w[free[i]];
        alpha = std::min(alpha, wi / (wi - wf[i]));
      }
    }
    for (size_t i = 0; i < free.size(); ++i) {
      w[free[i]] += alpha * (wf[i] - w[free[i]]);
    }
    std::vector<int> keep;
    for (int i : free) {
      if (w[i] > 1e-14) {
        keep.push_back(i);
      } else {
        w[i] = 0.0;
      }
    }
    if (keep.empty()) break;
    free = keep;
  }
  SimplexFit fit = EnumerateSupports(q, zero);
  return fit;
}

SimplexFit SimplexGridMin(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target,
                          int resolution) {
  const int k = static_cast<int>(branches.cols());
  if (k == 0 || resolution <= 0 || branches.rows() != target.size()) {
    throw std::invalid_argument("SimplexGridMin: bad arguments");
  }
  const Eigen::MatrixXd q = (branches.colwise() - target) / resolution;
  SimplexFit best;
  best.distance = std::numeric_limits<double>::infinity();
  std::vector<int> counts(k, 0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(target.size());
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == k - 1) {
      counts[i] = left;
      const double d = (acc + left * q.col(i)).norm();
      if (d < best.distance) {
        best.distance = d;
        best.weights = Eigen::VectorXd(k);
        for (int j = 0; j < k; ++j) best.weights[j] = static_cast<double>(counts[j]) / resolution;
      }
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[i] = c;
      rec(i + 1, left - c);
      acc += q.col(i);
    }
    acc -= (left + 1) * q.col(i);
  };
  rec(0, resolution);
  return best;
}

double GridTolerance(const Eigen::MatrixXd& branches, int resolution) {
  const Eigen::VectorXd centroid = branches.rowwise().mean();
  double spread = 0.0;
  for (int i = 0; i < branches.cols(); ++i) {
    spread = std::max(spread, (branches.col(i) - centroid).norm());
  }
  return static_cast<double>(branches.cols()) / resolution * spread;
}

double NearestBranchDistance(const Eigen::MatrixXd& branches, const Eigen::VectorXd& target) {
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < branches.cols(); ++i) d = std::min(d, (branches.col(i) - target).norm());
  return d;
}

DominanceReport CheckFusedDominance(int trials, const std::vector<int>& ks, int dim,
                                    int grid_resolution, uint64_t seed) {
  if (trials <= 0 || ks.empty() || dim <= 0 || grid_resolution <= 0) {
    throw std::invalid_argument("CheckFusedDominance: bad arguments");
  }
  DominanceReport r;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Rng trial = rng.Fork();
    const int k = ks[static_cast<size_t>(t) * ks.size() / trials];
    const Eigen::MatrixXd p = RandomMatrix(dim, k, trial);
    const Eigen::VectorXd target = RandomVector(dim, trial);
    const SimplexFit fused = SimplexLeastSquares(p, target);
    const SimplexFit grid = SimplexGridMin(p, target, grid_resolution);
    const double single = NearestBranchDistance(p, target);
    const double tol = GridTolerance(p, grid_resolution);
    ++r.trials;
    if (fused.distance > single + kTheorySlack) ++r.violations;
    if (fused.distance > grid.distance + kTheorySlack ||
        grid.distance - fused.distance > tol + kTheorySlack) {
      ++r.grid_mismatches;
    }
    r.gaps.push_back(single - fused.distance);
  }
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 2.0, 0.0, 0.0;
  Eigen::VectorXd target(2);
  target << 1.0, 0.0;
  r.strict_fixture_gap =
      NearestBranchDistance(p, target) - SimplexLeastSquares(p, target).distance;
  r.strict_fixture_analytic = 1.0;
  return r;
}

// ---- empirical prior gap --------------------------------------------------

PriorGapRow MeasurePriorGap(const Codec& codec, long step, const std::vector<Tensor>& images,
                            const ControlPair& pair) {
  PriorGapRow row;
  row.step = step;
  row.prior_mse = MeanPriorError(codec, images, pair);
  double mse = 0.0;
  for (const auto& img : images) {
    const int h = img.shape().h, w = img.shape().w;
    const QuantizedLatents q = codec.Analyze(ReflectPad(img, kPadMultiple), pair);
    const Tensor rec = CropTopLeft(codec.Synthesize(q.y_hat, pair), h, w);
    double e = 0.0;
    for (size_t i = 0; i < rec.size(); ++i) e += (rec[i] - img[i]) * (rec[i] - img[i]);
    mse += e / rec.size();
  }
  row.recon_mse = images.empty() ? 0.0 : mse / images.size();
  return row;
}

std::vector<double> Smooth(const std::vector<double>& v, int window) {
  std::vector<double> out(v.size());
  const int half = std::max(0, window / 2);
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(static_cast<int>(v.size()) - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / (hi - lo + 1);
  }
  return out;
}

std::string AlignmentReportJson(const AlignmentReport& r) {
  nlohmann::json j;
  j["check"] = "alignment_bound";
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["min_slack"] = r.min_slack;
  j["mean_slack"] = r.mean_slack;
  j["min_relative_slack"] = r.min_relative_slack;
  j["pass"] = r.pass();
  return j.dump(2);
}

std::string DominanceReportJson(const DominanceReport& r) {
  nlohmann::json j;
  j["check"] = "fused_dominance";
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["grid_mismatches"] = r.grid_mismatches;
  std::vector<double> g = r.gaps;
  std::sort(g.begin(), g.end());
  if (!g.empty()) {
    auto q = [&](double f) { return g[static_cast<size_t>(f * (g.size() - 1))]; };
    j["gap_quantiles"] = {{"min", g.front()}, {"q25", q(0.25)}, {"median", q(0.5)},
                          {"q75", q(0.75)}, {"max", g.back()}};
  }
  j["strict_fixture_gap"] = r.strict_fixture_gap;
  j["strict_fixture_analytic"] = r.strict_fixture_analytic;
  j["pass"] = r.pass();
  return j.dump(2);
}

std::string PriorGapJson(const std::vector<PriorGapRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"step", r.step}, {"prior_mse", r.prior_mse}, {"recon_mse", r.recon_mse}});
  }
  return j.dump(2);
}

}  // namespace afpgic
