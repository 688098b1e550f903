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

#include "afpgic/training.h"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "afpgic/serialize.h"

namespace afpgic {
namespace {

using ag::Var;

constexpr char kMagic[] = "AFPGTRNR";
constexpr uint32_t kVersion = 1;

Var PerSampleConstant(const std::vector<ControlPair>& pairs,
                      double (*f)(const ControlPair&)) {
  Tensor t({static_cast<int>(pairs.size()), 1, 1, 1});
  for (size_t i = 0; i < pairs.size(); ++i) t[i] = f(pairs[i]);
  return ag::Constant(std::move(t));
}

double RateWeight(const ControlPair& p) { return ExpWeights(p).first; }
double PriorWeight(const ControlPair& p) { return ExpWeights(p).second; }

Var ControlFeatures(const std::vector<ControlPair>& pairs, int fourier) {
  std::vector<Tensor> rows;
  for (const auto& p : pairs) {
    const Tensor r = FourierEmbed(p.beta_rate, ControlVar::kRate, fourier);
    const Tensor q = FourierEmbed(p.beta_prior, ControlVar::kPrior, fourier);
    Tensor both({1, 4 * fourier, 1, 1});
    std::copy(r.vec().begin(), r.vec().end(), both.vec().begin());
    std::copy(q.vec().begin(), q.vec().end(), both.vec().begin() + 2 * fourier);
    rows.push_back(std::move(both));
  }
  return ag::Constant(StackBatch(rows));
}

void WriteBlob(ByteWriter& w, std::span<const uint8_t> b) {
  w.U64(b.size());
  w.Bytes(b);
}

std::span<const uint8_t> ReadBlob(ByteReader& r) { return r.Bytes(r.U64()); }

}  // namespace

PerceptualProxy::PerceptualProxy(uint64_t seed) {
  Rng rng(seed);
  c1_ = nn::Conv2d(store_, "proxy.1", 3, 16, 3, 1, rng);
  c2_ = nn::Conv2d(store_, "proxy.2", 16, 32, 3, 2, rng);
  c3_ = nn::Conv2d(store_, "proxy.3", 32, 32, 3, 2, rng);
  store_.SetRequiresGrad(false);
}

std::vector<Var> PerceptualProxy::Features(const Var& x) const {
  std::vector<Var> f;
  f.push_back(ag::LeakyRelu(c1_(ag::AddScalar(x, -0.5)), 0.2));
  f.push_back(ag::LeakyRelu(c2_(f.back()), 0.2));
  f.push_back(ag::LeakyRelu(c3_(f.back()), 0.2));
  return f;
}

Var PerceptualProxy::Distance(const Var& x, const Var& x_hat) const {
  const auto a = Features(x);
  const auto b = Features(x_hat);
  Var d = ag::MeanSquaredError(a[0], b[0]);
  for (size_t i = 1; i < a.size(); ++i) d = ag::Add(d, ag::MeanSquaredError(a[i], b[i]));
  return ag::Scale(d, 1.0 / a.size());
}

Tensor PerceptualProxy::PooledFeatures(const Tensor& x) const {
  ag::NoGradGuard ng;
  const Tensor f = Features(ag::Constant(x)).back().value();
  const Shape& s = f.shape();
  Tensor out({s.n, s.c, 1, 1});
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      const double* p = f.data() + (static_cast<size_t>(n) * s.c + c) * plane;
      for (size_t i = 0; i < plane; ++i) acc += p[i];
      out[static_cast<size_t>(n) * s.c + c] = acc / plane;
    }
  }
  return out;
}

Discriminator::Discriminator(nn::ParamStore& store, int fourier, Rng& rng)
    : fourier_(fourier),
      cond_(store, "disc.cond", 4 * fourier, 4, rng),
      c1_(store, "disc.1", 7, 32, 3, 2, rng),
      c2_(store, "disc.2", 32, 64, 3, 2, rng),
      c3_(store, "disc.3", 64, 1, 3, 1, rng) {}

Var Discriminator::operator()(const Var& x, const std::vector<ControlPair>& pairs) const {
  const Shape& s = x.shape();
  CheckShape(static_cast<int>(pairs.size()) == s.n, "one control pair per image");
  const Var cond = ag::BroadcastSpatial(cond_(ControlFeatures(pairs, fourier_)), s.n, s.h, s.w);
  Var h = ag::LeakyRelu(c1_(ag::Concat({x, cond})), 0.2);
  h = ag::LeakyRelu(c2_(h), 0.2);
  return c3_(h);
}

Var GeneratorAdvLoss(const Var& fake_logits) {
  return ag::Scale(ag::Mean(ag::LogSigmoid(fake_logits)), -1.0);
}

Var DiscriminatorLoss(const Var& real_logits, const Var& fake_logits) {
  return ag::Add(ag::Scale(ag::Mean(ag::LogSigmoid(real_logits)), -0.5),
                 ag::Scale(ag::Mean(ag::LogSigmoid(ag::Scale(fake_logits, -1.0))), -0.5));
}

Var PerSampleBpp(const LatentPack& pack, int height, int width) {
  Var nats = ag::SumPerSample(ag::Log(pack.likelihood_z));
  for (const auto& l : pack.likelihood_y) nats = ag::Add(nats, ag::SumPerSample(ag::Log(l)));
  return ag::Scale(nats, -1.0 / (std::log(2.0) * height * width));
}

LossParts BaseLoss(const Var& x, const Var& x_hat, const Var& rate_bpp, const Var& p,
                   const Var& p_hat, const std::vector<ControlPair>& pairs,
                   const LossWeights& w, const PerceptualProxy& proxy) {
  CheckShape(rate_bpp.shape() == Shape{static_cast<int>(pairs.size()), 1, 1, 1},
             "rate must be one value per pair");
  CheckShape(p.shape() == p_hat.shape(), "prior shapes");
  LossParts parts;
  const Var rate = ag::Scale(ag::Mean(ag::Mul(rate_bpp, PerSampleConstant(pairs, RateWeight))),
                             w.rate);
  const Var d = ag::MeanSquaredError(x_hat, x);
  const Var perc = proxy.Distance(x, x_hat);
  const size_t per = p.shape().numel() / p.shape().n;
  const Var prior_i = ag::Scale(ag::SumPerSample(ag::Square(ag::Sub(p_hat, p))), 1.0 / per);
  const Var prior =
      ag::Scale(ag::Mean(ag::Mul(prior_i, PerSampleConstant(pairs, PriorWeight))), w.prior);
  parts.total = ag::Add(ag::Add(rate, ag::Scale(d, w.distortion)),
                        ag::Add(ag::Scale(perc, w.perceptual), prior));
  parts.rate = ag::Mean(rate_bpp).value()[0];
  parts.distortion = d.value()[0];
  parts.perceptual = perc.value()[0];
  parts.prior = ag::Mean(prior_i).value()[0];
  return parts;
}

LossParts FullLoss(const Var& x, const Var& x_hat, const Var& rate_bpp, const Var& p,
                   const Var& p_hat, const std::vector<ControlPair>& pairs,
                   const LossWeights& w, const PerceptualProxy& proxy,
                   const Var& fake_logits) {
  LossParts parts = BaseLoss(x, x_hat, rate_bpp, p, p_hat, pairs, w, proxy);
  const Var adv = GeneratorAdvLoss(fake_logits);
  parts.total = ag::Add(parts.total, ag::Scale(adv, w.adversarial));
  parts.adversarial = adv.value()[0];
  return parts;
}

const char* StageName(Stage s) {
  switch (s) {
    case Stage::kBase: return "I-base";
    case Stage::kAdversarial: return "I-adv";
    case Stage::kSelected: return "III";
  }
  return "?";
}

std::string LogEntryJson(const TrainLogEntry& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["stage"] = StageName(e.stage);
  j["beta_rate"] = e.pair.beta_rate;
  j["beta_prior"] = e.pair.beta_prior;
  j["total"] = e.total;
  j["bpp"] = e.rate;
  j["distortion"] = e.distortion;
  j["perceptual"] = e.perceptual;
  j["prior"] = e.prior;
  j["adversarial"] = e.adversarial;
  j["discriminator"] = e.discriminator;
  return j.dump();
}

TrainLogEntry ParseLogEntry(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TrainLogEntry e;
  e.step = j.at("step").get<long>();
  const std::string st = j.at("stage").get<std::string>();
  e.stage = st == "I-base" ? Stage::kBase : st == "I-adv" ? Stage::kAdversarial : Stage::kSelected;
  e.pair = {j.at("beta_rate").get<double>(), j.at("beta_prior").get<double>()};
  e.total = j.at("total").get<double>();
  e.rate = j.at("bpp").get<double>();
  e.distortion = j.at("distortion").get<double>();
  e.perceptual = j.at("perceptual").get<double>();
  e.prior = j.at("prior").get<double>();
  e.adversarial = j.at("adversarial").get<double>();
  e.discriminator = j.at("discriminator").get<double>();
  return e;
}

std::vector<TrainLogEntry> ReadTrainLog(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  std::vector<TrainLogEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) out.push_back(ParseLogEntry(line));
  }
  return out;
}

ControlPair SampleGridPair(const TrainConfig& c, Rng& rng) {
  const auto rates = ControlGrid(c.rate_max, c.grid_step);
  const auto priors = ControlGrid(c.prior_max, c.grid_step);
  const int i = rng.UniformInt(static_cast<int>(rates.size()));
  const int j = rng.UniformInt(static_cast<int>(priors.size()));
  return {rates[i], priors[j]};
}

Trainer::Trainer(const Config& config, std::shared_ptr<const PriorBank> bank, uint64_t seed)
    : config_(config), seed_(seed) {
  codec_ = std::make_unique<Codec>(config.codec, std::move(bank), seed);
  Rng rng(seed ^ 0xD15C0000ull);
  disc_ = std::make_unique<Discriminator>(disc_store_, config.codec.fourier, rng);
  BuildOptimizers();
}

void Trainer::BuildOptimizers() {
  opt_main_ = std::make_unique<optim::Adam>(optim::Collect(codec_->params()), config_.train.lr);
  opt_aux_ = std::make_unique<optim::Adam>(optim::Collect(codec_->aux_params()),
                                           config_.train.aux_lr);
  opt_disc_ = std::make_unique<optim::Adam>(optim::Collect(disc_store_), config_.train.disc_lr);
}

long Trainer::stage1_end() const {
  return config_.train.base_iterations + config_.train.adversarial_iterations;
}

long Trainer::stage3_end() const { return stage1_end() + config_.train.stage3_iterations; }

Stage Trainer::StageAt(long step) const {
  if (step < config_.train.base_iterations) return Stage::kBase;
  if (step < stage1_end()) return Stage::kAdversarial;
  return Stage::kSelected;
}

TrainLogEntry Trainer::Step(const ImageSource& source, const std::vector<ControlPair>& selected) {
  const TrainConfig& tc = config_.train;
  TrainLogEntry log;
  log.step = step_;
  log.stage = StageAt(step_);
  Rng rng(StepSeed(seed_, static_cast<uint64_t>(step_)));
  if (log.stage == Stage::kSelected) {
    if (selected.empty()) throw std::invalid_argument("stage III needs selected pairs");
    log.pair = selected[rng.UniformInt(static_cast<int>(selected.size()))];
  } else {
    log.pair = SampleGridPair(tc, rng);
  }
  std::vector<Tensor> images;
  for (auto& s : source.DrawBatch(tc.batch, tc.crop, rng)) images.push_back(std::move(s.image));
  const Tensor x = StackBatch(images);
  const std::vector<ControlPair> pairs(images.size(), log.pair);
  const bool adversarial = log.stage != Stage::kBase;
  const LossWeights& w = adversarial ? tc.adversarial : tc.base;

  opt_main_->ZeroGrad();
  opt_aux_->ZeroGrad();
  const CodecForward f = codec_->Forward(x, pairs);
  const Var xv = ag::Constant(x);
  const Var rate = PerSampleBpp(f.pack, x.shape().h, x.shape().w);
  const LossParts parts =
      adversarial ? FullLoss(xv, f.x_hat, rate, f.p, f.p_hat, pairs, w, proxy_,
                             (*disc_)(f.x_hat, pairs))
                  : BaseLoss(xv, f.x_hat, rate, f.p, f.p_hat, pairs, w, proxy_);
  ag::Backward(ag::Add(parts.total, codec_->entropy().MedianLoss(f.pack.z)));
  optim::ClipGradNorm(opt_main_->params(), tc.clip);
  opt_main_->Step();
  opt_aux_->Step();

  if (adversarial) {
    opt_disc_->ZeroGrad();
    const Var d = DiscriminatorLoss((*disc_)(xv, pairs), (*disc_)(ag::Detach(f.x_hat), pairs));
    ag::Backward(d);
    opt_disc_->Step();
    log.discriminator = d.value()[0];
  }
  log.total = parts.total.value()[0];
  log.rate = parts.rate;
  log.distortion = parts.distortion;
  log.perceptual = parts.perceptual;
  log.prior = parts.prior;
  log.adversarial = parts.adversarial;
  ++step_;
  return log;
}

void Trainer::Run(const ImageSource& source, long until, const std::vector<ControlPair>& selected,
                  const std::function<void(const TrainLogEntry&)>& on_step) {
  while (step_ < until) {
    const TrainLogEntry e = Step(source, selected);
    if (on_step) on_step(e);
  }
}

std::vector<uint8_t> Trainer::SaveToBytes() const {
  ByteWriter w;
  for (const char* c = kMagic; *c; ++c) w.U8(static_cast<uint8_t>(*c));
  w.U32(kVersion);
  w.Str(DumpConfig(config_));
  w.U64(seed_);
  w.U64(static_cast<uint64_t>(step_));
  WriteBlob(w, codec_->SaveToBytes());
  WriteTensors(w, disc_store_.Snapshot(), ValueType::kF64);
  WriteTensors(w, opt_main_->State("main"), ValueType::kF64);
  WriteTensors(w, opt_aux_->State("aux"), ValueType::kF64);
  WriteTensors(w, opt_disc_->State("disc"), ValueType::kF64);
  SealWithHash(w);
  return std::move(w.bytes());
}

void Trainer::Save(const std::string& path) const { WriteFile(path, SaveToBytes()); }

std::unique_ptr<Trainer> Trainer::ResumeFromBytes(std::span<const uint8_t> bytes,
                                                  std::shared_ptr<const PriorBank> bank) {
  ByteReader r(CheckSeal(bytes));
  for (const char* c = kMagic; *c; ++c) {
    if (r.U8() != static_cast<uint8_t>(*c)) throw FormatError("not a training checkpoint");
  }
  if (r.U32() != kVersion) throw FormatError("unsupported training checkpoint version");
  const Config config = ParseConfig(r.Str());
  const uint64_t seed = r.U64();
  const long step = static_cast<long>(r.U64());
  auto codec = Codec::LoadFromBytes(ReadBlob(r), bank);
  auto t = std::make_unique<Trainer>(config, std::move(bank), seed);
  t->codec_ = std::move(codec);
  t->disc_store_.Restore(ReadTensors(r));
  t->BuildOptimizers();
  t->opt_main_->LoadState(ReadTensors(r), "main");
  t->opt_aux_->LoadState(ReadTensors(r), "aux");
  t->opt_disc_->LoadState(ReadTensors(r), "disc");
  t->step_ = step;
  return t;
}

std::unique_ptr<Trainer> Trainer::Resume(const std::string& checkpoint,
                                         std::shared_ptr<const PriorBank> bank) {
  return ResumeFromBytes(ReadFile(checkpoint), std::move(bank));
}

double MeanPriorError(const Codec& codec, const std::vector<Tensor>& images,
                      const ControlPair& pair) {
  ag::NoGradGuard ng;
  double acc = 0.0;
  for (const auto& img : images) {
    const CodecForward f = codec.Forward(img, {pair});
    acc += ag::MeanSquaredError(f.p_hat, f.p).value()[0];
  }
  return acc / images.size();
}

double MeanPriorEnergy(const Codec& codec, const std::vector<Tensor>& images) {
  double acc = 0.0;
  for (const auto& img : images) {
    const Tensor p = codec.bank().ExtractPrior(img);
    double s = 0.0;
    for (double v : p.vec()) s += v * v;
    acc += s / p.size();
  }
  return acc / images.size();
}

}  // namespace afpgic
