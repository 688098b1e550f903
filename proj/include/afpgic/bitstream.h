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

// .afpg files: a 6-byte header followed by one range-coded payload.
//
// Header (big-endian): width u16, height u16, max_abs u8, op_index u8.
// Payload symbol order: every hyper-latent residual (channel-major), then
// slices 0..S-1 of the main latent residuals (channel-major within each
// slice). Symbols are residual + max_abs over the alphabet -A..A.

#ifndef AFPGIC_BITSTREAM_H_
#define AFPGIC_BITSTREAM_H_

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "afpgic/codec.h"
#include "afpgic/entropy_coder.h"

namespace afpgic {

inline constexpr size_t kHeaderBytes = 6;

class CorruptBitstream : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownOperatingPoint : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct Header {
  uint16_t width = 0;
  uint16_t height = 0;
  uint8_t max_abs = 0;
  uint8_t op_index = 0;
  bool operator==(const Header&) const = default;
};

std::array<uint8_t, kHeaderBytes> PackHeader(const Header& h);
Header UnpackHeader(std::span<const uint8_t> bytes);

struct Bitstream {
  Header header;
  std::vector<uint8_t> payload;
  size_t size() const { return kHeaderBytes + payload.size(); }
};

std::vector<uint8_t> BitstreamToBytes(const Bitstream& b);
Bitstream BitstreamFromBytes(std::span<const uint8_t> bytes);
void WriteBitstream(const std::string& path, const Bitstream& b);
Bitstream ReadBitstream(const std::string& path);

struct OperatingPoint {
  int index = 0;
  ControlPair pair;
  double nominal_bpp = 0.0;
};

class OperatingPointRegistry {
 public:
  // Appends with the next free index.
  int Add(const ControlPair& pair, double nominal_bpp);
  const OperatingPoint& At(int index) const;
  size_t size() const { return points_.size(); }
  const std::vector<OperatingPoint>& points() const { return points_; }

  // Hash of the codec the points were selected for; 0 when unbound.
  uint64_t model_hash() const { return model_hash_; }
  void set_model_hash(uint64_t h) { model_hash_ = h; }
  // Throws HashMismatchError when bound to a different codec.
  void CheckModel(const Codec& codec) const;

  std::string ToText() const;
  static OperatingPointRegistry FromText(const std::string& text);
  void Save(const std::string& path) const;
  static OperatingPointRegistry Load(const std::string& path);

 private:
  std::vector<OperatingPoint> points_;
  uint64_t model_hash_ = 0;
};

// Latent grid sizes for an image of the given size after padding.
Shape LatentShape(const Codec& codec, int height, int width);
Shape HyperShape(const Codec& codec, int height, int width);

Bitstream Serialize(const QuantizedLatents& q, const Header& header,
                    const Codec& codec, const EntropyCoder& coder);

struct DecodedLatents {
  Tensor y_hat;
  Tensor z_hat;
  std::vector<int> z_residuals;
  std::vector<std::vector<int>> y_residuals;
  ControlPair pair;
};

// Rebuilds every table exactly as the encoder did, then re-encodes the
// decoded symbols and requires byte equality with the payload.
DecodedLatents Deserialize(const Bitstream& b, const Codec& codec,
                           const OperatingPointRegistry& registry,
                           const EntropyCoder& coder);

struct EncodeResult {
  Bitstream bitstream;
  QuantizedLatents latents;
};

// image {1,3,H,W} in [0,1] with 1 <= H, W <= 65535.
EncodeResult EncodeImage(const Tensor& image, int op_index, const Codec& codec,
                         const OperatingPointRegistry& registry,
                         const EntropyCoder& coder);
Tensor DecodeImage(const Bitstream& b, const Codec& codec,
                   const OperatingPointRegistry& registry,
                   const EntropyCoder& coder);

}  // namespace afpgic

#endif  // AFPGIC_BITSTREAM_H_
