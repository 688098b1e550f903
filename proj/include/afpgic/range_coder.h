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

// Reference range coder over 16-bit quantized frequency tables.
//
// State is a 48-bit window (plus carry) in a 64-bit register, renormalized
// 16 bits at a time so the range stays in [2^32, 2^48). Carries propagate
// through a one-word cache and a run of pending 0xFFFF words. The last
// symbol of every alphabet absorbs the rounding slack of the range split.
// Streams end with the shortest value aligned to 2^32 inside the final
// interval; trailing zero bytes are dropped and the decoder reads zeros
// past the end.

#ifndef AFPGIC_RANGE_CODER_H_
#define AFPGIC_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace afpgic {

inline constexpr int kProbBits = 16;
inline constexpr uint32_t kTotalFreq = 1u << kProbBits;

class CoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat set of tables. Table t holds the cumulative start of each symbol in
// cdf[offsets[t], offsets[t + 1]); starts begin at 0 and increase strictly,
// and the end of the last symbol is implicitly kTotalFreq.
struct CdfTables {
  std::vector<uint16_t> cdf;
  std::vector<uint32_t> offsets{0};

  size_t size() const { return offsets.size() - 1; }
  uint32_t alphabet(size_t t) const { return offsets[t + 1] - offsets[t]; }
  const uint16_t* starts(size_t t) const { return cdf.data() + offsets[t]; }
  uint32_t freq(size_t t, uint32_t s) const;

  void AddStarts(std::span<const uint16_t> starts);
  void AddFrequencies(std::span<const uint32_t> freq);
  // Throws CoderError unless every table satisfies the contract.
  void Validate() const;
};

// Scales a probability vector to integer frequencies, each >= 1, summing
// to kTotalFreq. The remainder goes to the most probable symbol (lowest
// index on ties).
std::vector<uint32_t> QuantizeFrequencies(std::span<const double> probs);

// -log2(freq / kTotalFreq) summed over the coded symbols.
double QuantizedBits(std::span<const uint16_t> symbols, const CdfTables& tables);

class RangeEncoder {
 public:
  void Encode(uint32_t start, uint32_t freq, bool last);
  void EncodeSymbol(const uint16_t* starts, uint32_t alphabet, uint32_t symbol);
  std::vector<uint8_t> Finish();

 private:
  void ShiftLow();
  void EmitWord(uint32_t w);

  uint64_t low_ = 0;
  uint64_t range_ = (uint64_t{1} << 48) - 1;
  uint32_t cache_ = 0;
  uint64_t pending_ = 0;
  bool first_ = true;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);
  uint32_t DecodeSymbol(const uint16_t* starts, uint32_t alphabet);
  // Bytes consumed so far, including zero padding past the end.
  size_t position() const { return pos_; }

 private:
  uint32_t NextWord();

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint64_t range_ = (uint64_t{1} << 48) - 1;
};

// Symbol i is coded with table i; tables.size() must equal symbols.size().
std::vector<uint8_t> RangeEncode(std::span<const uint16_t> symbols,
                                 const CdfTables& tables);
std::vector<uint16_t> RangeDecode(std::span<const uint8_t> bytes,
                                  const CdfTables& tables);

}  // namespace afpgic

#endif  // AFPGIC_RANGE_CODER_H_
