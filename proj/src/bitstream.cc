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

#include "afpgic/bitstream.h"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "afpgic/image.h"
#include "afpgic/serialize.h"

namespace afpgic {
namespace {

constexpr char kRegistryMagic[] = "afpgic-operating-points";
constexpr int kRegistryVersion = 1;

void Append(CdfTables& dst, const CdfTables& src) {
  for (size_t t = 0; t < src.size(); ++t) {
    dst.AddStarts({src.starts(t), src.alphabet(t)});
  }
}

std::vector<uint16_t> ToSymbols(const std::vector<int>& res, int max_abs) {
  std::vector<uint16_t> s(res.size());
  for (size_t i = 0; i < res.size(); ++i) s[i] = static_cast<uint16_t>(res[i] + max_abs);
  return s;
}

int PaddedSize(int v) { return (v + kPadMultiple - 1) / kPadMultiple * kPadMultiple; }

}  // namespace

std::array<uint8_t, kHeaderBytes> PackHeader(const Header& h) {
  return {static_cast<uint8_t>(h.width >> 8), static_cast<uint8_t>(h.width & 0xFF),
          static_cast<uint8_t>(h.height >> 8), static_cast<uint8_t>(h.height & 0xFF),
          h.max_abs, h.op_index};
}

Header UnpackHeader(std::span<const uint8_t> b) {
  if (b.size() < kHeaderBytes) throw CorruptBitstream("truncated header");
  Header h;
  h.width = static_cast<uint16_t>(b[0] << 8 | b[1]);
  h.height = static_cast<uint16_t>(b[2] << 8 | b[3]);
  h.max_abs = b[4];
  h.op_index = b[5];
  return h;
}

std::vector<uint8_t> BitstreamToBytes(const Bitstream& b) {
  const auto head = PackHeader(b.header);
  std::vector<uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), b.payload.begin(), b.payload.end());
  return out;
}

Bitstream BitstreamFromBytes(std::span<const uint8_t> bytes) {
  Bitstream b;
  b.header = UnpackHeader(bytes);
  b.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
  return b;
}

void WriteBitstream(const std::string& path, const Bitstream& b) {
  WriteFile(path, BitstreamToBytes(b));
}

Bitstream ReadBitstream(const std::string& path) {
  return BitstreamFromBytes(ReadFile(path));
}

int OperatingPointRegistry::Add(const ControlPair& pair, double nominal_bpp) {
  if (!InTrainingRange(pair)) throw ControlError("operating point outside control ranges");
  if (points_.size() >= 256) throw std::length_error("at most 256 operating points");
  const int index = static_cast<int>(points_.size());
  points_.push_back({index, pair, nominal_bpp});
  return index;
}

const OperatingPoint& OperatingPointRegistry::At(int index) const {
  if (index < 0 || index >= static_cast<int>(points_.size())) {
    throw UnknownOperatingPoint("unknown operating point " + std::to_string(index));
  }
  return points_[index];
}

void OperatingPointRegistry::CheckModel(const Codec& codec) const {
  if (model_hash_ != 0 && model_hash_ != codec.Hash()) {
    throw HashMismatchError("operating points belong to model " + HexDigest(model_hash_) +
                            ", checkpoint is " + HexDigest(codec.Hash()));
  }
}

std::string OperatingPointRegistry::ToText() const {
  std::string out = std::string(kRegistryMagic) + " " + std::to_string(kRegistryVersion) + "\n";
  out += "model " + (model_hash_ ? HexDigest(model_hash_) : std::string("-")) + "\n";
  char line[160];
  for (const auto& p : points_) {
    std::snprintf(line, sizeof(line), "%d %.17g %.17g %.17g\n", p.index,
                  p.pair.beta_rate, p.pair.beta_prior, p.nominal_bpp);
    out += line;
  }
  return out;
}

OperatingPointRegistry OperatingPointRegistry::FromText(const std::string& text) {
  std::istringstream in(text);
  std::string magic, key, hash;
  int version = 0;
  if (!(in >> magic >> version) || magic != kRegistryMagic) {
    throw FormatError("not an operating-point registry");
  }
  if (version != kRegistryVersion) throw FormatError("unsupported registry version");
  if (!(in >> key >> hash) || key != "model") throw FormatError("registry lacks model line");
  OperatingPointRegistry reg;
  if (hash != "-") reg.model_hash_ = std::stoull(hash, nullptr, 16);
  int index;
  double br, bp, bpp;
  while (in >> index) {
    if (!(in >> br >> bp >> bpp)) throw FormatError("truncated registry row");
    if (index != static_cast<int>(reg.points_.size())) {
      throw FormatError("registry indices must be dense from 0");
    }
    reg.Add({br, bp}, bpp);
  }
  if (!in.eof()) throw FormatError("malformed registry row");
  return reg;
}

void OperatingPointRegistry::Save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << ToText();
}

OperatingPointRegistry OperatingPointRegistry::Load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return FromText(ss.str());
}

Shape LatentShape(const Codec& codec, int height, int width) {
  return {1, codec.config().latent_channels, PaddedSize(height) / kLatentStride,
          PaddedSize(width) / kLatentStride};
}

Shape HyperShape(const Codec& codec, int height, int width) {
  return {1, codec.config().hyper_channels, PaddedSize(height) / kPadMultiple,
          PaddedSize(width) / kPadMultiple};
}

Bitstream Serialize(const QuantizedLatents& q, const Header& header,
                    const Codec& codec, const EntropyCoder& coder) {
  const EntropyModel& em = codec.entropy();
  const int A = header.max_abs;
  if (A < q.max_abs) throw std::invalid_argument("header max_abs below latent range");
  const Shape zs = HyperShape(codec, header.height, header.width);
  CheckShape(q.z_hat.shape() == zs, "hyper-latent does not match header size");
  CdfTables tables = em.HyperTables(zs, A);
  std::vector<uint16_t> symbols = ToSymbols(q.z_residuals, A);
  for (size_t s = 0; s < q.y_residuals.size(); ++s) {
    Append(tables, em.SliceTables(q.sigmas[s], A));
    const auto sym = ToSymbols(q.y_residuals[s], A);
    symbols.insert(symbols.end(), sym.begin(), sym.end());
  }
  Bitstream b;
  b.header = header;
  b.payload = coder.Encode(symbols, tables);
  return b;
}

DecodedLatents Deserialize(const Bitstream& b, const Codec& codec,
                           const OperatingPointRegistry& registry,
                           const EntropyCoder& coder) {
  registry.CheckModel(codec);
  const Header& h = b.header;
  if (h.width == 0 || h.height == 0) throw CorruptBitstream("zero image size in header");
  if (h.max_abs > kMaxResidual) throw CorruptBitstream("max_abs exceeds the alphabet bound");
  DecodedLatents out;
  out.pair = registry.At(h.op_index).pair;
  const EntropyModel& em = codec.entropy();
  const int A = h.max_abs;
  ag::NoGradGuard ng;
  const ag::Var e = codec.Embed({out.pair});

  auto decoder = coder.OpenDecoder(b.payload);
  CdfTables all;
  std::vector<uint16_t> symbols;
  auto take = [&](const CdfTables& t) {
    std::vector<uint16_t> s = decoder->Decode(t);
    Append(all, t);
    symbols.insert(symbols.end(), s.begin(), s.end());
    return s;
  };

  const Shape zs = HyperShape(codec, h.height, h.width);
  const auto zsym = take(em.HyperTables(zs, A));
  const Tensor m = em.Medians();
  out.z_hat = Tensor(zs);
  for (size_t i = 0; i < zsym.size(); ++i) {
    const int k = zsym[i] - A;
    out.z_residuals.push_back(k);
    out.z_hat[i] = m[i / zs.plane()] + k;
  }
  const ag::Var hz = em.HyperDecode(ag::Constant(out.z_hat), e);
  std::vector<ag::Var> previous;
  for (int s = 0; s < em.slices(); ++s) {
    const SliceParams p = em.PredictSliceParams(hz, previous, s);
    const auto sym = take(em.SliceTables(p.sigma.value(), A));
    const Tensor& mu = p.mu.value();
    Tensor yh(mu.shape());
    std::vector<int> res(sym.size());
    for (size_t i = 0; i < sym.size(); ++i) {
      res[i] = sym[i] - A;
      yh[i] = mu[i] + res[i];
    }
    out.y_residuals.push_back(std::move(res));
    previous.push_back(ag::Constant(std::move(yh)));
  }
  out.y_hat = ag::Concat(previous).value();
  if (coder.Encode(symbols, all) != b.payload) {
    throw CorruptBitstream("payload does not re-encode to itself");
  }
  return out;
}

EncodeResult EncodeImage(const Tensor& image, int op_index, const Codec& codec,
                         const OperatingPointRegistry& registry,
                         const EntropyCoder& coder) {
  registry.CheckModel(codec);
  const Shape& s = image.shape();
  CheckShape(s.n == 1 && s.c == 3, "expected one RGB image");
  if (s.h < 1 || s.w < 1 || s.h > 65535 || s.w > 65535) {
    throw ShapeError("image size must fit 16-bit header fields");
  }
  const ControlPair pair = registry.At(op_index).pair;
  EncodeResult r;
  r.latents = codec.Analyze(ReflectPad(image, kPadMultiple), pair);
  Header h{static_cast<uint16_t>(s.w), static_cast<uint16_t>(s.h),
           static_cast<uint8_t>(r.latents.max_abs), static_cast<uint8_t>(op_index)};
  r.bitstream = Serialize(r.latents, h, codec, coder);
  return r;
}

Tensor DecodeImage(const Bitstream& b, const Codec& codec,
                   const OperatingPointRegistry& registry,
                   const EntropyCoder& coder) {
  const DecodedLatents d = Deserialize(b, codec, registry, coder);
  return CropTopLeft(codec.Synthesize(d.y_hat, d.pair), b.header.height, b.header.width);
}

}  // namespace afpgic
