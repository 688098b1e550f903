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

// Validation-time operating-point selection. For every target bitrate and
// every beta_prior on the grid, beta_rate is searched so the validation
// bitrate meets the target; the candidate with the best alpha * PSNR -
// realism score wins.

#ifndef AFPGIC_BETA_SELECT_H_
#define AFPGIC_BETA_SELECT_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "afpgic/bitstream.h"
#include "afpgic/codec.h"
#include "afpgic/config.h"
#include "afpgic/training.h"

namespace afpgic {

using RateOracle = std::function<double(double beta_rate)>;

struct SearchResult {
  double beta_rate = 0.0;
  double bpp = 0.0;
  double error = 0.0;           // |bpp - target|
  bool out_of_range = false;    // target outside [R(max), R(0)]
  bool monotone_warning = false;  // flat or non-monotone oracle seen
  bool used_scan = false;
  int evaluations = 0;
};

// Lattice {0, res, 2 res, ..., max}; bisection for the first point with
// R <= target, then the closer of it and its predecessor. Ties go to the
// smaller beta. A monotonicity violation among the probed points falls
// back to ScanBetaRate on the `fallback_resolution` lattice (0 means the
// search lattice).
SearchResult SearchBetaRate(const RateOracle& oracle, double target,
                            double resolution = 1e-3, int max_iterations = 20,
                            double beta_max = kBetaRateMax,
                            double fallback_resolution = 0.0);
// Exhaustive lattice scan with the same objective and tie rule.
SearchResult ScanBetaRate(const RateOracle& oracle, double target,
                          double resolution = 1e-3, double beta_max = kBetaRateMax);

double ScoreCandidate(double psnr, double realism_stat, double alpha);

// Frechet distance between Gaussians fitted to two feature sets (rows are
// samples).
double FrechetDistance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b);

struct CandidateQuality {
  double bpp = 0.0;
  double psnr = 0.0;
  double realism = 0.0;
};

// What selection needs from a model; lets tests plug in synthetic ones.
class SelectionModel {
 public:
  virtual ~SelectionModel() = default;
  virtual double Rate(const ControlPair& pair) = 0;
  virtual CandidateQuality Evaluate(const ControlPair& pair) = 0;
};

// Validation images through the real codec. Rates are the quantized-table
// code lengths; realism is the patch-feature Frechet distance between
// originals and reconstructions. Results are cached per pair.
class CodecSelectionModel : public SelectionModel {
 public:
  CodecSelectionModel(const Codec& codec, std::vector<Tensor> images);
  double Rate(const ControlPair& pair) override;
  CandidateQuality Evaluate(const ControlPair& pair) override;

 private:
  const Codec& codec_;
  std::vector<Tensor> images_;
  PerceptualProxy proxy_;
  std::vector<std::vector<double>> reference_features_;
  std::map<std::pair<double, double>, double> rate_cache_;
  std::map<std::pair<double, double>, CandidateQuality> quality_cache_;
};

// 64x64 patches on a 64-pixel lattice plus the same lattice shifted by 32.
std::vector<std::vector<double>> PatchFeatures(const PerceptualProxy& proxy,
                                               const Tensor& image);

struct Candidate {
  int target_index = 0;
  double target_bpp = 0.0;
  ControlPair pair;
  SearchResult search;
  CandidateQuality quality;
};

struct Selection {
  int target_index = 0;
  double target_bpp = 0.0;
  Candidate winner;
  bool within_tolerance = true;
};

struct SelectionReport {
  double alpha = 2.0;
  std::vector<double> targets;
  std::vector<Candidate> candidates;
  std::vector<Selection> selected;  // ascending target
};

std::vector<double> BetaPriorGrid(const SelectConfig& c);
// Log-spaced targets strictly inside [R(max beta_rate), R(0)].
std::vector<double> AutoTargets(SelectionModel& model, const SelectConfig& c);

SelectionReport SelectPairs(SelectionModel& model, const SelectConfig& c);
// Re-ranks existing candidates under another alpha.
std::vector<Selection> ChooseWinners(const std::vector<Candidate>& candidates,
                                     const std::vector<double>& targets, double alpha,
                                     double tolerance);

struct AlphaSweepRow {
  double alpha = 0.0;
  std::vector<ControlPair> selected;
  int changed = 0;  // selections differing from the previous row
};
std::vector<AlphaSweepRow> AlphaSweep(const SelectionReport& report,
                                      const std::vector<double>& alphas, double tolerance);

OperatingPointRegistry ToRegistry(const SelectionReport& report, uint64_t model_hash);
std::string SelectionReportJson(const SelectionReport& report);

}  // namespace afpgic

#endif  // AFPGIC_BETA_SELECT_H_
