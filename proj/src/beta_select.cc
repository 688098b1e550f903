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

#include "afpgic/beta_select.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

#include "afpgic/eval.h"

namespace afpgic {
namespace {

int LatticeSize(double resolution, double beta_max) {
  if (!(resolution > 0) || !(beta_max > 0)) throw std::invalid_argument("bad search lattice");
  return static_cast<int>(std::lround(beta_max / resolution));
}

// Caches oracle values on the lattice and watches monotonicity of what it
// has seen.
class LatticeOracle {
 public:
  LatticeOracle(const RateOracle& f, int n, double beta_max)
      : f_(f), n_(n), beta_max_(beta_max) {}
  double Beta(int i) const { return i == n_ ? beta_max_ : beta_max_ * i / n_; }
  double operator()(int i) {
    auto it = seen_.find(i);
    if (it != seen_.end()) return it->second;
    const double v = f_(Beta(i));
    seen_[i] = v;
    auto pos = seen_.find(i);
    if (pos != seen_.begin() && std::prev(pos)->second < v) violation_ = true;
    if (std::next(pos) != seen_.end() && std::next(pos)->second > v) violation_ = true;
    return v;
  }
  bool violation() const { return violation_; }
  int evaluations() const { return static_cast<int>(seen_.size()); }

 private:
  const RateOracle& f_;
  int n_;
  double beta_max_;
  std::map<int, double> seen_;
  bool violation_ = false;
};

// First index in [0, j] whose value is <= R(j), i.e. the start of R(j)'s
// plateau on a non-increasing oracle.
int PlateauStart(LatticeOracle& r, int j) {
  const double v = r(j);
  int lo = -1, hi = j;
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (r(mid) <= v) hi = mid; else lo = mid;
  }
  return hi;
}

SearchResult Finish(LatticeOracle& r, int i, double target, int n) {
  SearchResult s;
  s.beta_rate = r.Beta(i);
  s.bpp = r(i);
  s.error = std::abs(s.bpp - target);
  s.out_of_range = r(0) < target || r(n) > target;
  s.monotone_warning = r.violation() || r(0) == r(n);
  s.evaluations = r.evaluations();
  return s;
}

std::vector<double> FeatureRow(const Tensor& t) { return t.vec(); }

Tensor CropAt(const Tensor& img, int y0, int x0, int size) {
  Tensor out({1, img.shape().c, size, size});
  for (int c = 0; c < img.shape().c; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(0, c, y, x) = img.at(0, c, y0 + y, x0 + x);
  return out;
}

}  // namespace

SearchResult ScanBetaRate(const RateOracle& oracle, double target, double resolution,
                          double beta_max) {
  const int n = LatticeSize(resolution, beta_max);
  LatticeOracle r(oracle, n, beta_max);
  int best = 0;
  for (int i = 0; i <= n; ++i) {
    if (std::abs(r(i) - target) < std::abs(r(best) - target)) best = i;
  }
  SearchResult s = Finish(r, best, target, n);
  s.used_scan = true;
  return s;
}

SearchResult SearchBetaRate(const RateOracle& oracle, double target, double resolution,
                            int max_iterations, double beta_max,
                            double fallback_resolution) {
  const int n = LatticeSize(resolution, beta_max);
  LatticeOracle r(oracle, n, beta_max);
  auto fallback = [&] {
    SearchResult s = ScanBetaRate(oracle, target,
                                  fallback_resolution > 0 ? fallback_resolution : resolution,
                                  beta_max);
    s.monotone_warning = true;
    s.evaluations += r.evaluations();
    return s;
  };
  int choice;
  if (r(0) <= target) {
    choice = 0;
  } else if (r(n) > target) {
    choice = PlateauStart(r, n);
  } else {
    int lo = 0, hi = n;  // R(lo) > target >= R(hi)
    for (int it = 0; hi - lo > 1 && it < max_iterations; ++it) {
      const int mid = lo + (hi - lo) / 2;
      if (r(mid) <= target) hi = mid; else lo = mid;
      if (r.violation()) return fallback();
    }
    const double e_lo = std::abs(r(lo) - target), e_hi = std::abs(r(hi) - target);
    choice = e_lo <= e_hi ? PlateauStart(r, lo) : PlateauStart(r, hi);
  }
  if (r.violation()) return fallback();
  return Finish(r, choice, target, n);
}

double ScoreCandidate(double psnr, double realism_stat, double alpha) {
  return alpha * psnr - realism_stat;
}

double FrechetDistance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("need >= 2 samples per set");
  const int d = static_cast<int>(a[0].size());
  auto moments = [d](const std::vector<std::vector<double>>& s, Eigen::VectorXd* mu,
                     Eigen::MatrixXd* cov) {
    Eigen::MatrixXd x(s.size(), d);
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(s[i].size()) != d) throw std::invalid_argument("feature widths differ");
      for (int j = 0; j < d; ++j) x(i, j) = s[i][j];
    }
    *mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu->transpose();
    *cov = c.transpose() * c / static_cast<double>(s.size() - 1);
  };
  Eigen::VectorXd m1, m2;
  Eigen::MatrixXd c1, c2;
  moments(a, &m1, &c1);
  moments(b, &m2, &c2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(c1);
  const Eigen::VectorXd s1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root1 = e1.eigenvectors() * s1.asDiagonal() * e1.eigenvectors().transpose();
  const Eigen::MatrixXd mid = root1 * c2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(0.5 * (mid + mid.transpose()));
  const double tr_sqrt = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (m1 - m2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
}

std::vector<std::vector<double>> PatchFeatures(const PerceptualProxy& proxy, const Tensor& image) {
  constexpr int kPatch = 64;
  const int h = image.shape().h, w = image.shape().w;
  CheckShape(h >= kPatch && w >= kPatch, "patch features need images of at least 64x64");
  std::vector<std::vector<double>> out;
  for (int shift : {0, kPatch / 2}) {
    for (int y = shift; y + kPatch <= h; y += kPatch) {
      for (int x = shift; x + kPatch <= w; x += kPatch) {
        out.push_back(FeatureRow(proxy.PooledFeatures(CropAt(image, y, x, kPatch))));
      }
    }
  }
  return out;
}

CodecSelectionModel::CodecSelectionModel(const Codec& codec, std::vector<Tensor> images)
    : codec_(codec), images_(std::move(images)) {
  if (images_.empty()) throw std::invalid_argument("selection needs validation images");
  for (const auto& img : images_) {
    for (auto& f : PatchFeatures(proxy_, img)) reference_features_.push_back(std::move(f));
  }
}

double CodecSelectionModel::Rate(const ControlPair& pair) {
  const auto key = std::make_pair(pair.beta_rate, pair.beta_prior);
  if (auto it = rate_cache_.find(key); it != rate_cache_.end()) return it->second;
  double acc = 0.0;
  for (const auto& img : images_) {
    const QuantizedLatents q = codec_.Analyze(img, pair);
    acc += QuantizedRateBits(codec_.entropy(), q) / (img.shape().h * img.shape().w);
  }
  return rate_cache_[key] = acc / images_.size();
}

CandidateQuality CodecSelectionModel::Evaluate(const ControlPair& pair) {
  const auto key = std::make_pair(pair.beta_rate, pair.beta_prior);
  if (auto it = quality_cache_.find(key); it != quality_cache_.end()) return it->second;
  CandidateQuality q;
  q.bpp = Rate(pair);
  std::vector<std::vector<double>> feats;
  for (const auto& img : images_) {
    const QuantizedLatents lat = codec_.Analyze(img, pair);
    const Tensor rec = codec_.Synthesize(lat.y_hat, pair);
    q.psnr += CappedPsnr(img, rec);
    for (auto& f : PatchFeatures(proxy_, rec)) feats.push_back(std::move(f));
  }
  q.psnr /= images_.size();
  q.realism = FrechetDistance(reference_features_, feats);
  return quality_cache_[key] = q;
}

std::vector<double> BetaPriorGrid(const SelectConfig& c) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((c.prior_grid_max - c.prior_grid_min) / c.prior_grid_step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(c.prior_grid_min + i * c.prior_grid_step);
  return g;
}

std::vector<double> AutoTargets(SelectionModel& model, const SelectConfig& c) {
  const auto grid = BetaPriorGrid(c);
  const double bp = grid[grid.size() / 2];
  double lo = model.Rate({kBetaRateMax, bp});
  double hi = model.Rate({0.0, bp});
  if (lo > hi) std::swap(lo, hi);
  if (!(lo > 0) || lo == hi) throw std::runtime_error("model rate does not respond to beta_rate");
  std::vector<double> t;
  for (int k = 0; k < c.auto_targets; ++k) {
    const double f = (k + 1.0) / (c.auto_targets + 1.0);
    t.push_back(std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))));
  }
  return t;
}

std::vector<Selection> ChooseWinners(const std::vector<Candidate>& candidates,
                                     const std::vector<double>& targets, double alpha,
                                     double tolerance) {
  std::vector<Selection> out;
  for (size_t t = 0; t < targets.size(); ++t) {
    const Candidate* best = nullptr;
    double best_s = 0.0;
    for (const auto& c : candidates) {
      if (c.target_index != static_cast<int>(t)) continue;
      const double s = ScoreCandidate(c.quality.psnr, c.quality.realism, alpha);
      const bool better =
          !best || s > best_s ||
          (s == best_s && (c.pair.beta_rate < best->pair.beta_rate ||
                           (c.pair.beta_rate == best->pair.beta_rate &&
                            c.pair.beta_prior < best->pair.beta_prior)));
      if (better) {
        best = &c;
        best_s = s;
      }
    }
    if (!best) throw std::logic_error("no candidate for a target");
    Selection sel;
    sel.target_index = static_cast<int>(t);
    sel.target_bpp = targets[t];
    sel.winner = *best;
    sel.within_tolerance = std::abs(best->quality.bpp - targets[t]) <= tolerance * targets[t];
    out.push_back(sel);
  }
  return out;
}

SelectionReport SelectPairs(SelectionModel& model, const SelectConfig& c) {
  SelectionReport rep;
  rep.alpha = c.alpha;
  rep.targets = c.target_bpp.empty() ? AutoTargets(model, c) : c.target_bpp;
  std::sort(rep.targets.begin(), rep.targets.end());
  for (double bp : BetaPriorGrid(c)) {
    const RateOracle oracle = [&model, bp](double br) { return model.Rate({br, bp}); };
    for (size_t t = 0; t < rep.targets.size(); ++t) {
      Candidate cand;
      cand.target_index = static_cast<int>(t);
      cand.target_bpp = rep.targets[t];
      cand.search = SearchBetaRate(oracle, rep.targets[t], c.resolution, c.max_iterations,
                                   kBetaRateMax, c.fallback_resolution);
      cand.pair = {cand.search.beta_rate, bp};
      cand.quality = model.Evaluate(cand.pair);
      rep.candidates.push_back(cand);
    }
  }
  rep.selected = ChooseWinners(rep.candidates, rep.targets, c.alpha, c.bpp_tolerance);
  return rep;
}

std::vector<AlphaSweepRow> AlphaSweep(const SelectionReport& report,
                                      const std::vector<double>& alphas, double tolerance) {
  std::vector<AlphaSweepRow> rows;
  for (double a : alphas) {
    AlphaSweepRow row;
    row.alpha = a;
    for (const auto& s : ChooseWinners(report.candidates, report.targets, a, tolerance)) {
      row.selected.push_back(s.winner.pair);
    }
    if (!rows.empty()) {
      for (size_t i = 0; i < row.selected.size(); ++i) {
        if (!(row.selected[i] == rows.back().selected[i])) ++row.changed;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

OperatingPointRegistry ToRegistry(const SelectionReport& report, uint64_t model_hash) {
  OperatingPointRegistry reg;
  reg.set_model_hash(model_hash);
  for (const auto& s : report.selected) reg.Add(s.winner.pair, s.winner.quality.bpp);
  return reg;
}

std::string SelectionReportJson(const SelectionReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["alpha"] = report.alpha;
  j["targets"] = report.targets;
  auto cand = [](const Candidate& c) {
    ordered_json o;
    o["target_index"] = c.target_index;
    o["target_bpp"] = c.target_bpp;
    o["beta_rate"] = c.pair.beta_rate;
    o["beta_prior"] = c.pair.beta_prior;
    o["bpp"] = c.quality.bpp;
    o["psnr"] = c.quality.psnr;
    o["realism"] = c.quality.realism;
    o["search_error"] = c.search.error;
    o["out_of_range"] = c.search.out_of_range;
    o["monotone_warning"] = c.search.monotone_warning;
    o["evaluations"] = c.search.evaluations;
    return o;
  };
  j["candidates"] = ordered_json::array();
  for (const auto& c : report.candidates) {
    ordered_json o = cand(c);
    o["score"] = ScoreCandidate(c.quality.psnr, c.quality.realism, report.alpha);
    j["candidates"].push_back(o);
  }
  j["selected"] = ordered_json::array();
  for (const auto& s : report.selected) {
    ordered_json o = cand(s.winner);
    o["within_tolerance"] = s.within_tolerance;
    j["selected"].push_back(o);
  }
  return j.dump(2);
}

}  // namespace afpgic
