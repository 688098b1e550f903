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

#include "afpgic/prior_bank.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "afpgic/optim.h"
#include "afpgic/serialize.h"

namespace afpgic {
namespace {

constexpr char kBankMagic[8] = {'A', 'F', 'P', 'G', 'B', 'A', 'N', 'K'};
constexpr uint32_t kBankVersion = 1;
constexpr int kDecoderTail = 16;

using ag::Var;

}  // namespace

Var SftModulate(const Var& h, const SftParams& params) {
  CheckShape(params.gamma.shape() == h.shape() &&
                 params.delta.shape() == h.shape(),
             "SFT parameters " + params.gamma.shape().str() + " for feature " +
                 h.shape().str());
  return ag::Add(ag::Mul(h, params.gamma), params.delta);
}

PriorBank::PriorBank(const BankShape& shape, uint64_t seed) : shape_(shape) {
  if (shape.codebooks < 1 || shape.entries < 1 || shape.channels < 1) {
    throw std::invalid_argument("bank needs K >= 1 non-empty codebooks");
  }
  Rng rng(seed);
  const int h = shape.hidden;
  const int d = shape.channels;
  enc1_ = nn::Conv2d(params_, "enc.1", 3, 32, 3, 2, rng);
  enc2_ = nn::Conv2d(params_, "enc.2", 32, h, 3, 2, rng);
  enc3_ = nn::Conv2d(params_, "enc.3", h, h, 3, 2, rng);
  enc_out_ = nn::Conv2d(params_, "enc.out", h, d, 1, 1, rng);
  for (int i = 0; i < shape.codebooks; ++i) {
    Tensor cb({shape.entries, d, 1, 1});
    for (double& v : cb.vec()) v = 0.5 * rng.Normal();
    codebooks_.push_back(params_.Add("codebook." + std::to_string(i), cb));
  }
  wp1_ = nn::Conv2d(params_, "wp.1", d, 32, 3, 1, rng);
  wp2_ = nn::Conv2d(params_, "wp.2", 32, 32, 3, 1, rng);
  wp3_ = nn::Conv2d(params_, "wp.3", 32, shape.codebooks, 1, 1, rng);
  dec_in_ = nn::Conv2d(params_, "dec.in", d, h, 3, 1, rng);
  dec1_ = nn::Conv2d(params_, "dec.1", h, h, 3, 1, rng);
  dec2_ = nn::Conv2d(params_, "dec.2", h, kDecoderTail, 3, 1, rng);
  dec_out_ = nn::Conv2d(params_, "dec.out", kDecoderTail, 3, 3, 1, rng);
  dec_out_.bias().node()->value.Fill(0.5);
}

Var PriorBank::EncodeLatent(const Var& x) const {
  const Shape& s = x.shape();
  CheckShape(s.c == 3 && s.h % kPriorStride == 0 && s.w % kPriorStride == 0,
             "prior encoder expects {N,3,8a,8b}, got " + s.str());
  Var h = ag::Silu(enc1_(x));
  h = ag::Silu(enc2_(h));
  h = ag::Silu(enc3_(h));
  return enc_out_(h);
}

const Tensor& PriorBank::Codebook(int i) const {
  if (i < 0 || i >= shape_.codebooks) {
    throw std::out_of_range("codebook index " + std::to_string(i) +
                            " outside [0, " +
                            std::to_string(shape_.codebooks) + ")");
  }
  return codebooks_[i].value();
}

ag::Var PriorBank::CodebookVar(int i) const {
  Codebook(i);
  return codebooks_[i];
}

std::vector<int> PriorBank::NearestIndices(const Tensor& z, int i) const {
  const Tensor& cb = Codebook(i);
  const Shape& s = z.shape();
  if (s.c != shape_.channels) {
    throw ShapeError("latent has " + std::to_string(s.c) +
                     " channels, bank expects " +
                     std::to_string(shape_.channels));
  }
  const int m = cb.shape().n;
  const int d = s.c;
  const size_t plane = s.plane();
  std::vector<int> idx(static_cast<size_t>(s.n) * plane);
  std::vector<double> v(d);
  for (int n = 0; n < s.n; ++n) {
    for (size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < d; ++c) v[c] = z[(static_cast<size_t>(n) * d + c) * plane + p];
      int best = 0;
      double best_d = INFINITY;
      for (int e = 0; e < m; ++e) {
        const double* row = cb.data() + static_cast<size_t>(e) * d;
        double dist = 0.0;
        for (int c = 0; c < d; ++c) {
          const double t = v[c] - row[c];
          dist += t * t;
        }
        if (dist < best_d) {
          best_d = dist;
          best = e;
        }
      }
      idx[n * plane + p] = best;
    }
  }
  return idx;
}

Tensor PriorBank::QuantizeBranch(const Tensor& z, int i) const {
  const auto idx = NearestIndices(z, i);
  const Tensor& cb = Codebook(i);
  const Shape& s = z.shape();
  const size_t plane = s.plane();
  Tensor q(s);
  for (int n = 0; n < s.n; ++n) {
    for (size_t p = 0; p < plane; ++p) {
      const double* row = cb.data() + static_cast<size_t>(idx[n * plane + p]) * s.c;
      for (int c = 0; c < s.c; ++c) q[(static_cast<size_t>(n) * s.c + c) * plane + p] = row[c];
    }
  }
  return q;
}

Var PriorBank::PredictWeights(const Var& z) const {
  CheckShape(z.shape().c == shape_.channels, "weight predictor input channels");
  Var h = ag::Silu(wp1_(z));
  h = ag::Silu(wp2_(h));
  return ag::SoftmaxChannels(wp3_(h));
}

Tensor PriorBank::Fuse(const std::vector<Tensor>& q, const Tensor& alpha) {
  CheckShape(!q.empty(), "fuse needs at least one branch");
  const Shape& s = q[0].shape();
  const Shape& as = alpha.shape();
  CheckShape(as.n == s.n && as.c == static_cast<int>(q.size()) &&
                 as.h == s.h && as.w == s.w,
             "fusion weights " + as.str() + " for branches " + s.str());
  for (const auto& t : q) CheckShape(t.shape() == s, "branch shapes differ");
  Tensor p(s);
  const size_t plane = s.plane();
  for (size_t i = 0; i < q.size(); ++i) {
    for (int n = 0; n < s.n; ++n) {
      const double* a = alpha.data() + (static_cast<size_t>(n) * as.c + i) * plane;
      for (int c = 0; c < s.c; ++c) {
        const size_t off = (static_cast<size_t>(n) * s.c + c) * plane;
        for (size_t k = 0; k < plane; ++k) p[off + k] += a[k] * q[i][off + k];
      }
    }
  }
  return p;
}

Tensor PriorBank::ExtractWeights(const Tensor& x) const {
  if (!frozen_) throw BankStateError("prior bank is not pretrained/frozen");
  ag::NoGradGuard ng;
  return PredictWeights(EncodeLatent(ag::Constant(x))).value();
}

Tensor PriorBank::ExtractPrior(const Tensor& x) const {
  if (!frozen_) throw BankStateError("prior bank is not pretrained/frozen");
  ag::NoGradGuard ng;
  const Var z = EncodeLatent(ag::Constant(x));
  std::vector<Tensor> q;
  for (int i = 0; i < shape_.codebooks; ++i) q.push_back(QuantizeBranch(z.value(), i));
  return Fuse(q, PredictWeights(z).value());
}

std::vector<SftStage> PriorBank::SftStages() const {
  return {{shape_.hidden, 8}, {shape_.hidden, 4}, {kDecoderTail, 2}};
}

Var PriorBank::Decode(const Var& p, const std::vector<SftParams>& sft) const {
  CheckShape(p.shape().c == shape_.channels, "decoder input channels");
  CheckShape(sft.empty() || sft.size() == 3, "decoder expects 0 or 3 SFT stages");
  auto mod = [&](Var h, size_t i) {
    return sft.empty() ? h : SftModulate(h, sft[i]);
  };
  Var h = mod(ag::Silu(dec_in_(p)), 0);
  h = mod(ag::Silu(dec1_(ag::Upsample2x(h))), 1);
  h = mod(ag::Silu(dec2_(ag::Upsample2x(h))), 2);
  return dec_out_(ag::Upsample2x(h));
}

void PriorBank::Freeze() {
  params_.RoundToFloat();
  params_.SetRequiresGrad(false);
  params_.ZeroGrad();
  frozen_ = true;
}

uint64_t PriorBank::DecoderHash() const {
  Fnv1a h;
  for (const auto& [n, v] : params_.params()) {
    if (n.rfind("dec.", 0) != 0) continue;
    h.Update(n.data(), n.size());
    h.Update(v.value().data(), v.value().size() * sizeof(double));
  }
  return h.digest();
}

std::vector<uint8_t> PriorBank::SaveToBytes() const {
  ByteWriter w;
  w.Bytes({reinterpret_cast<const uint8_t*>(kBankMagic), sizeof(kBankMagic)});
  w.U32(kBankVersion);
  w.U32(shape_.codebooks);
  w.U32(shape_.channels);
  w.U32(shape_.hidden);
  for (int i = 0; i < shape_.codebooks; ++i) w.U32(shape_.entries);
  w.U8(frozen_ ? 1 : 0);
  w.U64(Hash());
  WriteTensors(w, params_.Snapshot(), ValueType::kF32);
  SealWithHash(w);
  return w.bytes();
}

void PriorBank::Save(const std::string& path) const {
  if (!frozen_) throw BankStateError("only frozen banks are persisted");
  WriteFile(path, SaveToBytes());
}

std::shared_ptr<PriorBank> PriorBank::LoadFromBytes(
    std::span<const uint8_t> bytes) {
  ByteReader r(CheckSeal(bytes));
  auto magic = r.Bytes(sizeof(kBankMagic));
  if (std::memcmp(magic.data(), kBankMagic, sizeof(kBankMagic)) != 0) {
    throw FormatError("not a prior bank file");
  }
  if (r.U32() != kBankVersion) throw FormatError("unsupported bank version");
  BankShape shape;
  shape.codebooks = static_cast<int>(r.U32());
  shape.channels = static_cast<int>(r.U32());
  shape.hidden = static_cast<int>(r.U32());
  if (shape.codebooks < 1 || shape.codebooks > 256) throw FormatError("bad K");
  shape.entries = static_cast<int>(r.U32());
  for (int i = 1; i < shape.codebooks; ++i) {
    if (static_cast<int>(r.U32()) != shape.entries) {
      throw FormatError("unequal codebook sizes are not supported");
    }
  }
  const bool frozen = r.U8() != 0;
  const uint64_t stored_hash = r.U64();
  auto bank = std::make_shared<PriorBank>(shape, 0);
  bank->params_.Restore(ReadTensors(r));
  if (frozen) bank->Freeze();
  if (bank->Hash() != stored_hash) {
    throw HashMismatchError("bank parameter hash mismatch");
  }
  return bank;
}

std::shared_ptr<PriorBank> PriorBank::Load(const std::string& path) {
  return LoadFromBytes(ReadFile(path));
}

std::shared_ptr<PriorBank> PretrainBank(
    const BankConfig& config, const ImageSource& source, uint64_t seed,
    BankReport* report,
    const std::function<void(const BankTrainLog&)>& on_step) {
  if (config.iterations < 1 || config.batch < 1) {
    throw std::invalid_argument("bank pretraining needs a non-empty dataset");
  }
  BankShape shape{config.codebooks, config.entries, config.channels,
                  config.hidden};
  auto bank = std::make_shared<PriorBank>(shape, seed);
  const int K = shape.codebooks;
  const int M = shape.entries;
  const int d = shape.channels;
  optim::Adam opt(optim::Collect(bank->params()), config.lr);
  std::vector<std::vector<int>> usage(K, std::vector<int>(M, 0));
  std::vector<BankTrainLog> log;

  for (int step = 0; step < config.iterations; ++step) {
    Rng rng(StepSeed(seed, step));
    const auto batch = source.DrawBatch(config.batch, config.crop, rng);
    std::vector<Tensor> imgs;
    for (const auto& s : batch) imgs.push_back(s.image);
    const Var x = ag::Constant(StackBatch(imgs));
    const Var z = bank->EncodeLatent(x);
    const Shape zs = z.shape();
    const size_t plane = zs.plane();

    if (step == 0) {
      // Seed each codebook with distinct encoder outputs.
      for (int i = 0; i < K; ++i) {
        ag::Var cbv = bank->CodebookVar(i);
        Tensor& cb = cbv.mutable_value();
        for (int e = 0; e < M; ++e) {
          const int n = rng.UniformInt(zs.n);
          const size_t p = rng.UniformInt(static_cast<int>(plane));
          for (int c = 0; c < d; ++c) {
            cb[static_cast<size_t>(e) * d + c] =
                z.value()[(static_cast<size_t>(n) * d + c) * plane + p] +
                0.01 * rng.Normal();
          }
        }
      }
    }

    const Var alpha = bank->PredictWeights(z);
    const Var z_const = ag::Detach(z);
    Var fused, vq;
    const Shape index_shape{zs.n, 1, zs.h, zs.w};
    for (int i = 0; i < K; ++i) {
      const auto idx = bank->NearestIndices(z.value(), i);
      for (int e : idx) usage[i][e]++;
      const Var codes = ag::GatherCodes(bank->CodebookVar(i), idx, index_shape);
      const Var a_i = ag::SliceChannels(alpha, i, i + 1);
      const Var a_const = ag::Detach(a_i);
      // Branch i learns mostly from locations that route to it.
      const Var cb_term =
          ag::Mean(ag::MulSpatial(ag::Square(ag::Sub(codes, z_const)), a_const));
      const Var commit = ag::Mean(ag::MulSpatial(
          ag::Square(ag::Sub(z, ag::Detach(codes))), a_const));
      const Var term = ag::Add(cb_term, ag::Scale(commit, config.commitment));
      vq = vq.defined() ? ag::Add(vq, term) : term;
      const Var q_st = ag::Add(z, ag::Detach(ag::Sub(codes, z)));
      const Var contrib = ag::MulSpatial(q_st, a_i);
      fused = fused.defined() ? ag::Add(fused, contrib) : contrib;
    }
    const Var recon = ag::MeanSquaredError(bank->Decode(fused, {}), x);

    Var guidance;
    int labelled = 0;
    if (config.family_guidance > 0.0 && K > 1) {
      for (int n = 0; n < zs.n; ++n) {
        const int fam = batch[n].family;
        if (fam < 0) continue;
        Tensor mask(alpha.shape());
        const int k = fam % K;
        for (size_t p = 0; p < plane; ++p) {
          mask[(static_cast<size_t>(n) * K + k) * plane + p] = 1.0 / plane;
        }
        const Var nll = ag::Scale(
            ag::Log(ag::AddScalar(ag::Sum(ag::Mul(alpha, ag::Constant(mask))), 1e-9)),
            -1.0);
        guidance = guidance.defined() ? ag::Add(guidance, nll) : nll;
        ++labelled;
      }
    }
    Var loss = ag::Add(ag::Scale(recon, 10.0), vq);
    double guidance_value = 0.0;
    if (labelled > 0) {
      guidance = ag::Scale(guidance, 1.0 / labelled);
      guidance_value = guidance.item();
      loss = ag::Add(loss, ag::Scale(guidance, config.family_guidance));
    }
    opt.ZeroGrad();
    ag::Backward(loss);
    optim::ClipGradNorm(opt.params(), 1.0);
    opt.Step();

    int restarts = 0;
    if (config.restart_every > 0 && (step + 1) % config.restart_every == 0) {
      for (int i = 0; i < K; ++i) {
        ag::Var cbv = bank->CodebookVar(i);
        Tensor& cb = cbv.mutable_value();
        for (int e = 0; e < M; ++e) {
          if (usage[i][e] == 0 && step + 1 < config.iterations) {
            const int n = rng.UniformInt(zs.n);
            const size_t p = rng.UniformInt(static_cast<int>(plane));
            for (int c = 0; c < d; ++c) {
              cb[static_cast<size_t>(e) * d + c] =
                  z.value()[(static_cast<size_t>(n) * d + c) * plane + p] +
                  0.01 * rng.Normal();
            }
            ++restarts;
          }
        }
        std::fill(usage[i].begin(), usage[i].end(), 0);
      }
    }
    BankTrainLog entry{step, recon.item(), vq.item(), guidance_value, restarts};
    log.push_back(entry);
    if (on_step) on_step(entry);
  }
  bank->Freeze();
  if (report) {
    report->log = std::move(log);
    MeasureBankPurity(*bank, HeldOutSet(8, config.crop, seed ^ 0xB0A7ull), report);
  }
  return bank;
}

void MeasureBankPurity(const PriorBank& bank, const std::vector<Sample>& set,
                       BankReport* report) {
  const int K = bank.codebooks();
  std::vector<std::vector<int>> dominant(kNumFamilies);
  report->family_mean_weights.assign(kNumFamilies, std::vector<double>(K, 0.0));
  std::vector<int> counts(kNumFamilies, 0);
  double mse_sum = 0.0;
  for (const auto& s : set) {
    const Tensor alpha = bank.ExtractWeights(s.image);
    const size_t plane = alpha.shape().plane();
    std::vector<double> mean(K, 0.0);
    for (int k = 0; k < K; ++k) {
      for (size_t p = 0; p < plane; ++p) mean[k] += alpha[k * plane + p];
      mean[k] /= plane;
    }
    {
      ag::NoGradGuard ng;
      const Tensor rec =
          bank.Decode(ag::Constant(bank.ExtractPrior(s.image)), {}).value();
      double se = 0.0;
      for (size_t i = 0; i < rec.size(); ++i) {
        const double e = std::clamp(rec[i], 0.0, 1.0) - s.image[i];
        se += e * e;
      }
      mse_sum += se / rec.size();
    }
    if (s.family < 0) continue;
    const int dom = static_cast<int>(
        std::max_element(mean.begin(), mean.end()) - mean.begin());
    dominant[s.family].push_back(dom);
    for (int k = 0; k < K; ++k) report->family_mean_weights[s.family][k] += mean[k];
    counts[s.family]++;
  }
  // Contingency of dominant branch against family.
  std::vector<std::vector<int>> table(K, std::vector<int>(kNumFamilies, 0));
  int labelled = 0;
  report->family_purity.assign(kNumFamilies, 0.0);
  for (int f = 0; f < kNumFamilies; ++f) {
    if (dominant[f].empty()) continue;
    std::vector<int> hist(K, 0);
    for (int v : dominant[f]) {
      hist[v]++;
      table[v][f]++;
      ++labelled;
    }
    report->family_purity[f] =
        static_cast<double>(*std::max_element(hist.begin(), hist.end())) /
        dominant[f].size();
    for (double& v : report->family_mean_weights[f]) v /= counts[f];
  }
  // Cluster purity: a single branch serving every family scores 1/families.
  int pure = 0;
  for (int k = 0; k < K; ++k) pure += *std::max_element(table[k].begin(), table[k].end());
  report->mean_purity = labelled ? static_cast<double>(pure) / labelled : 0.0;
  const double mse = mse_sum / std::max<size_t>(set.size(), 1);
  report->heldout_psnr = mse > 0 ? 10.0 * std::log10(1.0 / mse) : 99.0;
}

}  // namespace afpgic
