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

#include "afpgic/range_coder.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace afpgic {
namespace {

constexpr uint64_t kTop = uint64_t{1} << 48;
constexpr uint64_t kBot = uint64_t{1} << 32;
constexpr uint64_t kMask48 = kTop - 1;

}  // namespace

uint32_t CdfTables::freq(size_t t, uint32_t s) const {
  const uint32_t n = alphabet(t);
  const uint32_t end = s + 1 < n ? starts(t)[s + 1] : kTotalFreq;
  return end - starts(t)[s];
}

void CdfTables::AddStarts(std::span<const uint16_t> s) {
  cdf.insert(cdf.end(), s.begin(), s.end());
  offsets.push_back(static_cast<uint32_t>(cdf.size()));
}

void CdfTables::AddFrequencies(std::span<const uint32_t> freq) {
  uint32_t acc = 0;
  for (uint32_t f : freq) {
    if (acc >= kTotalFreq) throw CoderError("frequencies exceed total");
    cdf.push_back(static_cast<uint16_t>(acc));
    acc += f;
  }
  if (acc != kTotalFreq) throw CoderError("frequencies do not sum to 2^16");
  offsets.push_back(static_cast<uint32_t>(cdf.size()));
}

void CdfTables::Validate() const {
  if (offsets.empty() || offsets[0] != 0 || offsets.back() != cdf.size()) {
    throw CoderError("malformed table offsets");
  }
  for (size_t t = 0; t < size(); ++t) {
    if (offsets[t + 1] <= offsets[t]) throw CoderError("empty alphabet");
    const uint16_t* s = starts(t);
    if (s[0] != 0) throw CoderError("table must start at 0");
    for (uint32_t i = 1; i < alphabet(t); ++i) {
      if (s[i] <= s[i - 1]) throw CoderError("zero-frequency symbol in table");
    }
  }
}

std::vector<uint32_t> QuantizeFrequencies(std::span<const double> probs) {
  const size_t n = probs.size();
  if (n == 0 || n > kTotalFreq) throw CoderError("bad alphabet size");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw CoderError("invalid probability");
    total += p;
  }
  if (!(total > 0.0)) throw CoderError("probabilities sum to zero");
  const double spare = static_cast<double>(kTotalFreq - n);
  std::vector<uint32_t> f(n);
  uint64_t sum = 0;
  size_t argmax = 0;
  for (size_t i = 0; i < n; ++i) {
    f[i] = 1 + static_cast<uint32_t>(std::floor(probs[i] / total * spare));
    sum += f[i];
    if (probs[i] > probs[argmax]) argmax = i;
  }
  // Rounding down guarantees sum <= total.
  f[argmax] += static_cast<uint32_t>(kTotalFreq - sum);
  return f;
}

double QuantizedBits(std::span<const uint16_t> symbols, const CdfTables& tables) {
  if (symbols.size() != tables.size()) throw CoderError("symbol/table count mismatch");
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    bits -= std::log2(static_cast<double>(tables.freq(i, symbols[i])) / kTotalFreq);
  }
  return bits;
}

void RangeEncoder::EmitWord(uint32_t w) {
  if (first_) {
    // The word in front of the first window can never receive a carry.
    if (w != 0) throw std::logic_error("range coder leading word is non-zero");
    first_ = false;
    return;
  }
  out_.push_back(static_cast<uint8_t>(w >> 8));
  out_.push_back(static_cast<uint8_t>(w));
}

void RangeEncoder::ShiftLow() {
  if (low_ < 0xFFFF00000000ull || low_ >= kTop) {
    const uint32_t carry = static_cast<uint32_t>(low_ >> 48);
    EmitWord((cache_ + carry) & 0xFFFF);
    for (; pending_ > 0; --pending_) EmitWord((0xFFFF + carry) & 0xFFFF);
    cache_ = static_cast<uint32_t>((low_ >> 32) & 0xFFFF);
  } else {
    ++pending_;
  }
  low_ = (low_ << 16) & kMask48;
}

void RangeEncoder::Encode(uint32_t start, uint32_t freq, bool last) {
  const uint64_t r = range_ >> kProbBits;
  low_ += r * start;
  range_ = last ? range_ - r * start : r * freq;
  while (range_ < kBot) {
    range_ <<= 16;
    ShiftLow();
  }
}

void RangeEncoder::EncodeSymbol(const uint16_t* starts, uint32_t alphabet,
                                uint32_t symbol) {
  if (symbol >= alphabet) {
    throw CoderError("symbol " + std::to_string(symbol) +
                     " outside table support of size " + std::to_string(alphabet));
  }
  const bool last = symbol + 1 == alphabet;
  const uint32_t end = last ? kTotalFreq : starts[symbol + 1];
  Encode(starts[symbol], end - starts[symbol], last);
}

std::vector<uint8_t> RangeEncoder::Finish() {
  low_ = (low_ + kBot - 1) & ~(kBot - 1);
  ShiftLow();
  ShiftLow();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  std::vector<uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 3; ++i) code_ = (code_ << 16) | NextWord();
}

uint32_t RangeDecoder::NextWord() {
  uint32_t w = 0;
  for (int i = 0; i < 2; ++i) {
    w = (w << 8) | (pos_ < bytes_.size() ? bytes_[pos_] : 0);
    ++pos_;
  }
  return w;
}

uint32_t RangeDecoder::DecodeSymbol(const uint16_t* starts, uint32_t alphabet) {
  const uint64_t r = range_ >> kProbBits;
  const uint64_t q = std::min<uint64_t>(code_ / r, kTotalFreq - 1);
  const uint16_t* it = std::upper_bound(starts, starts + alphabet, q);
  const uint32_t s = static_cast<uint32_t>(it - starts) - 1;
  const bool last = s + 1 == alphabet;
  const uint64_t start = starts[s];
  const uint64_t end = last ? kTotalFreq : starts[s + 1];
  code_ -= r * start;
  range_ = last ? range_ - r * start : r * (end - start);
  while (range_ < kBot) {
    code_ = (code_ << 16) | NextWord();
    range_ <<= 16;
  }
  return s;
}

std::vector<uint8_t> RangeEncode(std::span<const uint16_t> symbols,
                                 const CdfTables& tables) {
  if (symbols.size() != tables.size()) throw CoderError("symbol/table count mismatch");
  tables.Validate();
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    enc.EncodeSymbol(tables.starts(i), tables.alphabet(i), symbols[i]);
  }
  return enc.Finish();
}

std::vector<uint16_t> RangeDecode(std::span<const uint8_t> bytes,
                                  const CdfTables& tables) {
  tables.Validate();
  RangeDecoder dec(bytes);
  std::vector<uint16_t> out(tables.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<uint16_t>(dec.DecodeSymbol(tables.starts(i), tables.alphabet(i)));
  }
  return out;
}

}  // namespace afpgic
