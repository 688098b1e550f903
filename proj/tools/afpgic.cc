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

// afpgic: command-line front end.
//
//   pretrain-bank  train  select-betas  encode  decode  eval
//   verify-theory  report
//
// Exit codes: 0 ok, 1 failure, 2 usage, 3 unknown operating point,
// 4 checkpoint/bank/registry hash mismatch, 5 corrupt bitstream,
// 6 malformed file, 7 file I/O.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "afpgic/beta_select.h"
#include "afpgic/bitstream.h"
#include "afpgic/entropy_coder.h"
#include "afpgic/eval.h"
#include "afpgic/image.h"
#include "afpgic/prior_bank.h"
#include "afpgic/serialize.h"
#include "afpgic/synthetic.h"
#include "afpgic/theory.h"
#include "afpgic/training.h"

namespace fs = std::filesystem;
using namespace afpgic;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kUnknownOp = 3,
  kHashMismatch = 4,
  kCorrupt = 5,
  kFormat = 6,
  kIo = 7,
};

constexpr char kTrainerMagic[] = "AFPGTRNR";

Config LoadOptionalConfig(const std::string& path) {
  return path.empty() ? Config{} : LoadConfig(path);
}

void LogRun(const std::string& command, const Config& c) {
  std::fprintf(stderr, "afpgic %s seed=%llu config=%s\n", command.c_str(),
               static_cast<unsigned long long>(EffectiveSeed(c)),
               HexDigest(ConfigHash(c)).c_str());
}

void WriteText(const std::string& path, const std::string& text) {
  WriteFile(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string ReadText(const std::string& path) {
  const auto bytes = ReadFile(path);
  return std::string(bytes.begin(), bytes.end());
}

// Accepts either a codec checkpoint or a full trainer checkpoint.
std::unique_ptr<Codec> LoadCodecAny(const std::string& path,
                                    std::shared_ptr<const PriorBank> bank) {
  const auto bytes = ReadFile(path);
  if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kTrainerMagic)) {
    auto trainer = Trainer::ResumeFromBytes(bytes, bank);
    return Codec::LoadFromBytes(trainer->codec().SaveToBytes(), bank);
  }
  return Codec::LoadFromBytes(bytes, bank);
}

std::shared_ptr<const EntropyCoder> PickCoder(const std::string& path) {
  return path.empty() ? DefaultCoder() : LoadNativeCoder(path);
}

std::vector<std::string> PngFiles(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Evaluation images: PNGs from a folder, else the synthetic held-out set.
std::vector<Tensor> EvalImages(const std::string& folder, int count, int size, uint64_t seed) {
  if (folder.empty()) return ValidationImages(count, size, seed);
  std::vector<Tensor> images;
  for (const auto& f : PngFiles(folder)) images.push_back(ReadPng(f));
  if (images.empty()) throw IoError("no PNG files in " + folder);
  return images;
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

// ---- commands -------------------------------------------------------------

struct Options {
  std::string config;
  std::string bank;
  std::string checkpoint;
  std::string registry;
  std::string registry_out;
  std::string out;
  std::string in;
  std::string report;
  std::string log;
  std::string resume;
  std::string coder;
  std::string images;
  std::string dataset = "synthetic";
  std::string method = "afpgic";
  std::string curves;
  std::string bd_reference;
  std::vector<std::string> checkpoints;
  std::vector<long> checkpoint_steps;
  int stage = 1;
  long until = -1;
  int op = -1;
  int alignment_trials = 10000;
  int dominance_trials = 1000;
  int grid_resolution = 50;
  double bd_lo = 0.0, bd_hi = 0.0;
};

int PretrainBankCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("pretrain-bank", c);
  ImageSource source;
  if (!c.bank.image_folder.empty()) source.AttachFolder(c.bank.image_folder, c.bank.folder_fraction);
  BankReport report;
  auto bank = PretrainBank(c.bank, source, EffectiveSeed(c), &report);
  bank->Save(o.out);
  std::fprintf(stderr, "bank hash=%s purity=%.3f heldout_psnr=%.2f\n",
               HexDigest(bank->Hash()).c_str(), report.mean_purity, report.heldout_psnr);
  if (!o.report.empty()) {
    nlohmann::json j;
    j["hash"] = HexDigest(bank->Hash());
    j["mean_purity"] = report.mean_purity;
    j["family_purity"] = report.family_purity;
    j["heldout_psnr"] = report.heldout_psnr;
    j["family_mean_weights"] = report.family_mean_weights;
    WriteText(o.report, j.dump(2) + "\n");
  }
  return kOk;
}

int TrainCmd(const Options& o) {
  auto bank = PriorBank::Load(o.bank);
  std::unique_ptr<Trainer> trainer;
  if (!o.resume.empty()) {
    trainer = Trainer::Resume(o.resume, bank);
  } else {
    Config c = LoadOptionalConfig(o.config);
    trainer = std::make_unique<Trainer>(c, bank, EffectiveSeed(c));
  }
  const Config& c = trainer->config();
  LogRun("train", c);
  ImageSource source;
  if (!c.train.image_folder.empty()) {
    source.AttachFolder(c.train.image_folder, c.train.folder_fraction);
  }
  std::vector<ControlPair> selected;
  if (o.stage == 3) {
    if (o.registry.empty()) throw CLI::ValidationError("--registry", "stage 3 needs a registry");
    const auto reg = OperatingPointRegistry::Load(o.registry);
    for (const auto& p : reg.points()) selected.push_back(p.pair);
  }
  long until = o.until;
  if (until < 0) until = o.stage == 3 ? trainer->stage3_end() : trainer->stage1_end();
  if (o.stage == 1) until = std::min(until, trainer->stage1_end());

  std::ofstream log;
  if (!o.log.empty()) {
    log.open(o.log, trainer->step() > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write " + o.log);
  }
  const long every = c.train.checkpoint_every;
  trainer->Run(source, until, selected, [&](const TrainLogEntry& e) {
    if (log.is_open() && e.step % std::max(1, c.train.log_every) == 0) {
      log << LogEntryJson(e) << "\n";
    }
    if (every > 0 && (e.step + 1) % every == 0) {
      log.flush();
      trainer->Save(o.out + ".step" + std::to_string(e.step + 1));
    }
  });
  trainer->Save(o.out);
  std::fprintf(stderr, "step=%ld codec=%s\n", trainer->step(),
               HexDigest(trainer->codec().Hash()).c_str());

  if (!o.registry_out.empty()) {
    // Rebind the operating points to the updated codec.
    if (o.registry.empty()) throw CLI::ValidationError("--registry-out", "needs --registry");
    const auto reg = OperatingPointRegistry::Load(o.registry);
    CodecSelectionModel model(trainer->codec(),
                              ValidationImages(c.select.validation_images,
                                               c.select.validation_size, EffectiveSeed(c)));
    OperatingPointRegistry out;
    for (const auto& p : reg.points()) out.Add(p.pair, model.Rate(p.pair));
    out.set_model_hash(trainer->codec().Hash());
    out.Save(o.registry_out);
  }
  return kOk;
}

int SelectBetasCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("select-betas", c);
  auto bank = PriorBank::Load(o.bank);
  auto codec = LoadCodecAny(o.checkpoint, bank);
  CodecSelectionModel model(*codec, EvalImages(o.images, c.select.validation_images,
                                               c.select.validation_size, EffectiveSeed(c)));
  const SelectionReport report = SelectPairs(model, c.select);
  const OperatingPointRegistry reg = ToRegistry(report, codec->Hash());
  reg.Save(o.out);
  if (!o.report.empty()) WriteText(o.report, SelectionReportJson(report) + "\n");
  for (const auto& s : report.selected) {
    std::fprintf(stderr, "target %.4f -> beta_rate %.3f beta_prior %.2f bpp %.4f psnr %.2f%s\n",
                 s.target_bpp, s.winner.pair.beta_rate, s.winner.pair.beta_prior,
                 s.winner.quality.bpp, s.winner.quality.psnr,
                 s.within_tolerance ? "" : " (outside tolerance)");
  }
  return kOk;
}

int EncodeCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("encode", c);
  auto bank = PriorBank::Load(o.bank);
  auto codec = LoadCodecAny(o.checkpoint, bank);
  const auto reg = OperatingPointRegistry::Load(o.registry);
  reg.CheckModel(*codec);
  const Tensor image = ReadPng(o.in);
  const EncodeResult r = EncodeImage(image, o.op, *codec, reg, *PickCoder(o.coder));
  WriteBitstream(o.out, r.bitstream);
  std::fprintf(stderr, "bytes=%zu bpp=%.4f\n", r.bitstream.size(),
               8.0 * r.bitstream.size() / (image.shape().h * image.shape().w));
  return kOk;
}

int DecodeCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("decode", c);
  auto bank = PriorBank::Load(o.bank);
  auto codec = LoadCodecAny(o.checkpoint, bank);
  const auto reg = OperatingPointRegistry::Load(o.registry);
  const Bitstream b = ReadBitstream(o.in);
  WritePng(o.out, DecodeImage(b, *codec, reg, *PickCoder(o.coder)));
  return kOk;
}

int EvalCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("eval", c);
  auto bank = PriorBank::Load(o.bank);
  auto codec = LoadCodecAny(o.checkpoint, bank);
  const auto reg = OperatingPointRegistry::Load(o.registry);
  reg.CheckModel(*codec);
  const auto coder = PickCoder(o.coder);
  const std::vector<Tensor> images =
      EvalImages(o.images, c.select.validation_images, c.select.validation_size,
                 EffectiveSeed(c) + 1);
  EnsureDir(o.out);

  std::vector<CurveRow> curve;
  std::vector<std::vector<double>> payload(reg.size());
  for (const auto& op : reg.points()) {
    double bpp = 0.0, psnr = 0.0, proxy = 0.0;
    bool capped = false;
    PerceptualProxy metric;
    for (const auto& img : images) {
      const EncodeResult r = EncodeImage(img, op.index, *codec, reg, *coder);
      const Tensor rec = DecodeImage(r.bitstream, *codec, reg, *coder);
      const double pixels = img.shape().h * img.shape().w;
      bpp += 8.0 * r.bitstream.size() / pixels;
      payload[op.index].push_back(8.0 * r.bitstream.payload.size());
      const double p = Psnr(img, rec);
      capped = capped || p > kPsnrCap;
      psnr += std::min(p, kPsnrCap);
      ag::NoGradGuard guard;
      proxy += metric.Distance(ag::Constant(img), ag::Constant(rec)).value()[0];
    }
    const double n = static_cast<double>(images.size());
    curve.push_back({o.method, o.dataset, bpp / n, psnr / n, proxy / n, capped});
  }
  WriteText(o.out + "/curves.csv", CurveCsv(curve));
  WriteText(o.out + "/header_overhead.csv", OverheadTable(o.dataset, HeaderOverhead(payload)));
  WriteText(o.out + "/control_response.csv",
            ResponseTable(ControlResponse(*codec, reg, images)));

  nlohmann::json act = nlohmann::json::array();
  for (size_t i = 0; i < images.size(); ++i) {
    act.push_back({{"image", i}, {"mean_activation", PriorActivationSummary(*bank, images[i])}});
  }
  WriteText(o.out + "/prior_activation.json", act.dump(2) + "\n");

  std::vector<PriorGapRow> gap;
  for (const auto& op : reg.points()) gap.push_back(MeasurePriorGap(*codec, op.index, images, op.pair));
  WriteText(o.out + "/prior_gap_by_op.json", PriorGapJson(gap) + "\n");
  std::printf("%s", CurveCsv(curve).c_str());
  return kOk;
}

int VerifyTheoryCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("verify-theory", c);
  EnsureDir(o.out);
  const uint64_t seed = EffectiveSeed(c);
  const AlignmentReport a = CheckAlignmentBound(o.alignment_trials, 8, 64, {0.5, 1.0, 4.0}, seed);
  const DominanceReport d = CheckFusedDominance(o.dominance_trials, {2, 5}, 16,
                                                o.grid_resolution, seed + 1);
  WriteText(o.out + "/alignment.json", AlignmentReportJson(a) + "\n");
  WriteText(o.out + "/dominance.json", DominanceReportJson(d) + "\n");
  std::printf("alignment: %s (%d trials, %d violations, min slack %.3e)\n",
              a.pass() ? "pass" : "FAIL", a.trials, a.violations, a.min_slack);
  std::printf("dominance: %s (%d trials, %d violations, %d grid mismatches, strict gap %.6f)\n",
              d.pass() ? "pass" : "FAIL", d.trials, d.violations, d.grid_mismatches,
              d.strict_fixture_gap);

  if (!o.checkpoints.empty()) {
    // Reported trend only; not a pass/fail gate.
    auto bank = PriorBank::Load(o.bank);
    const auto images = ValidationImages(c.select.validation_images,
                                         c.select.validation_size, seed);
    std::vector<PriorGapRow> rows;
    for (size_t i = 0; i < o.checkpoints.size(); ++i) {
      auto codec = LoadCodecAny(o.checkpoints[i], bank);
      const long step = i < o.checkpoint_steps.size() ? o.checkpoint_steps[i]
                                                      : static_cast<long>(i);
      rows.push_back(MeasurePriorGap(*codec, step, images, {1.5, 1.75}));
    }
    WriteText(o.out + "/prior_gap.json", PriorGapJson(rows) + "\n");
    for (const auto& r : rows) {
      std::printf("prior gap step %ld: prior_mse %.5f recon_mse %.5f\n", r.step, r.prior_mse,
                  r.recon_mse);
    }
  }
  return a.pass() && d.pass() ? kOk : kFailure;
}

// Tables regenerated from logs and curve files only.
int ReportCmd(const Options& o) {
  Config c = LoadOptionalConfig(o.config);
  LogRun("report", c);
  EnsureDir(o.out);
  if (!o.log.empty()) {
    const auto entries = ReadTrainLog(o.log);
    std::vector<double> total;
    for (const auto& e : entries) total.push_back(e.total);
    std::ostringstream os;
    os << "step,stage,smoothed_total,bpp,distortion,perceptual,prior,adversarial\n";
    const int window = 100;
    double sum = 0.0;
    for (size_t i = 0; i < entries.size(); ++i) {
      sum += entries[i].total;
      if (i >= static_cast<size_t>(window)) sum -= entries[i - window].total;
      if ((entries[i].step + 1) % window != 0) continue;
      const double n = std::min<double>(static_cast<double>(i + 1), window);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%ld,%s,%.6f,%.5f,%.6f,%.6f,%.6f,%.6f\n",
                    entries[i].step + 1, StageName(entries[i].stage), sum / n, entries[i].rate,
                    entries[i].distortion, entries[i].perceptual, entries[i].prior,
                    entries[i].adversarial);
      os << buf;
    }
    WriteText(o.out + "/training_summary.csv", os.str());

    std::map<std::pair<double, double>, long> hist;
    for (const auto& e : entries) ++hist[{e.pair.beta_rate, e.pair.beta_prior}];
    std::ostringstream hs;
    hs << "beta_rate,beta_prior,count\n";
    for (const auto& [k, v] : hist) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%ld\n", k.first, k.second, v);
      hs << buf;
    }
    WriteText(o.out + "/pair_histogram.csv", hs.str());
  }
  if (!o.curves.empty()) {
    const auto rows = ParseCurveCsv(ReadText(o.curves));
    std::map<std::string, RateCurve> curves;
    for (const auto& r : rows) curves[r.method + "/" + r.dataset].push_back({r.bpp, r.psnr});
    for (auto& [k, v] : curves) {
      std::sort(v.begin(), v.end(),
                [](const RatePoint& a, const RatePoint& b) { return a.bpp < b.bpp; });
    }
    std::ostringstream os;
    os << "method,reference,lo_bpp,hi_bpp,bd_psnr\n";
    if (!o.bd_reference.empty()) {
      auto ref = curves.find(o.bd_reference);
      if (ref == curves.end()) throw FormatError("no curve named " + o.bd_reference);
      for (const auto& [k, v] : curves) {
        if (k == o.bd_reference) continue;
        const BdInterval iv = o.bd_hi > o.bd_lo ? BdInterval{o.bd_lo, o.bd_hi}
                                                : CommonInterval(v, ref->second);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", k.c_str(),
                      o.bd_reference.c_str(), iv.lo_bpp, iv.hi_bpp,
                      BdMetric(v, ref->second, BdMode::kHigherBetter, iv));
        os << buf;
      }
    }
    WriteText(o.out + "/bd.csv", os.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"afpgic: controllable generative image codec"};
  app.require_subcommand(1);
  Options o;

  auto* pretrain = app.add_subcommand("pretrain-bank", "Train and freeze the prior bank");
  pretrain->add_option("--config", o.config, "Config file (JSON)");
  pretrain->add_option("--out", o.out, "Bank output path")->required();
  pretrain->add_option("--report", o.report, "Bank report (JSON)");

  auto* train = app.add_subcommand("train", "Stage I or stage III training");
  train->add_option("--config", o.config, "Config file (JSON)");
  train->add_option("--bank", o.bank, "Frozen prior bank")->required();
  train->add_option("--out", o.out, "Trainer checkpoint output")->required();
  train->add_option("--resume", o.resume, "Trainer checkpoint to resume from");
  train->add_option("--stage", o.stage, "1 or 3")->check(CLI::IsMember({1, 3}));
  train->add_option("--until", o.until, "Stop before this global step");
  train->add_option("--registry", o.registry, "Selected operating points (stage 3)");
  train->add_option("--registry-out", o.registry_out, "Registry rebound to the new codec");
  train->add_option("--log", o.log, "Training log (JSON lines)");

  auto* select = app.add_subcommand("select-betas", "Stage II operating-point selection");
  select->add_option("--config", o.config, "Config file (JSON)");
  select->add_option("--bank", o.bank, "Frozen prior bank")->required();
  select->add_option("--checkpoint", o.checkpoint, "Codec or trainer checkpoint")->required();
  select->add_option("--images", o.images, "Validation PNG folder (default: synthetic)");
  select->add_option("--out", o.out, "Registry output")->required();
  select->add_option("--report", o.report, "Selection report (JSON)");

  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Config file (JSON)");
    cmd->add_option("--bank", o.bank, "Frozen prior bank")->required();
    cmd->add_option("--checkpoint", o.checkpoint, "Codec or trainer checkpoint")->required();
    cmd->add_option("--registry", o.registry, "Operating-point registry")->required();
    cmd->add_option("--coder", o.coder, "Native entropy coder library");
  };
  auto* encode = app.add_subcommand("encode", "PNG -> .afpg");
  add_model(encode);
  encode->add_option("--op", o.op, "Operating-point index")->required();
  encode->add_option("--in", o.in, "Input PNG")->required();
  encode->add_option("--out", o.out, "Output bitstream")->required();

  auto* decode = app.add_subcommand("decode", ".afpg -> PNG");
  add_model(decode);
  decode->add_option("--in", o.in, "Input bitstream")->required();
  decode->add_option("--out", o.out, "Output PNG")->required();

  auto* eval = app.add_subcommand("eval", "Curves, header overhead and control response");
  add_model(eval);
  eval->add_option("--images", o.images, "PNG folder (default: synthetic held-out)");
  eval->add_option("--dataset", o.dataset, "Dataset label");
  eval->add_option("--method", o.method, "Method label");
  eval->add_option("--out", o.out, "Output directory")->required();

  auto* theory = app.add_subcommand("verify-theory", "Alignment-bound and fused-dominance checks");
  theory->add_option("--config", o.config, "Config file (JSON)");
  theory->add_option("--out", o.out, "Output directory")->required();
  theory->add_option("--alignment-trials", o.alignment_trials, "Bound trials");
  theory->add_option("--dominance-trials", o.dominance_trials, "Dominance trials");
  theory->add_option("--grid-resolution", o.grid_resolution, "Simplex grid resolution");
  theory->add_option("--bank", o.bank, "Prior bank (for the prior-gap report)");
  theory->add_option("--checkpoints", o.checkpoints, "Checkpoints for the prior-gap report");
  theory->add_option("--steps", o.checkpoint_steps, "Training step of each checkpoint");

  auto* report = app.add_subcommand("report", "Regenerate tables from logs and curve files");
  report->add_option("--config", o.config, "Config file (JSON)");
  report->add_option("--log", o.log, "Training log (JSON lines)");
  report->add_option("--curves", o.curves, "Curve CSV");
  report->add_option("--bd-reference", o.bd_reference, "Reference curve as method/dataset");
  report->add_option("--bd-lo", o.bd_lo, "BD interval lower bpp");
  report->add_option("--bd-hi", o.bd_hi, "BD interval upper bpp");
  report->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*pretrain) return PretrainBankCmd(o);
    if (*train) return TrainCmd(o);
    if (*select) return SelectBetasCmd(o);
    if (*encode) return EncodeCmd(o);
    if (*decode) return DecodeCmd(o);
    if (*eval) return EvalCmd(o);
    if (*theory) return VerifyTheoryCmd(o);
    if (*report) return ReportCmd(o);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const UnknownOperatingPoint& e) {
    std::fprintf(stderr, "error: unknown operating point: %s\n", e.what());
    return kUnknownOp;
  } catch (const HashMismatchError& e) {
    std::fprintf(stderr, "error: hash mismatch: %s\n", e.what());
    return kHashMismatch;
  } catch (const CorruptBitstream& e) {
    std::fprintf(stderr, "error: corrupt bitstream: %s\n", e.what());
    return kCorrupt;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: malformed file: %s\n", e.what());
    return kFormat;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
