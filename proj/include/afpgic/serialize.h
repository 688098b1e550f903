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

// Little-endian binary containers shared by the bank and checkpoint files.

#ifndef AFPGIC_SERIALIZE_H_
#define AFPGIC_SERIALIZE_H_

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "afpgic/tensor.h"

namespace afpgic {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable or unwritable.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HashMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Fnv1a {
 public:
  void Update(const void* data, size_t len);
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ull;
};

uint64_t HashBytes(std::span<const uint8_t> bytes);
std::string HexDigest(uint64_t h);

class ByteWriter {
 public:
  void U8(uint8_t v) { buf_.push_back(v); }
  void U32(uint32_t v);
  void U64(uint64_t v);
  void F32(float v);
  void F64(double v);
  void Str(const std::string& s);
  void Bytes(std::span<const uint8_t> b);

  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t>& bytes() { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}
  uint8_t U8();
  uint32_t U32();
  uint64_t U64();
  float F32();
  double F64();
  std::string Str();
  std::span<const uint8_t> Bytes(size_t n);
  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(size_t n) const;
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

enum class ValueType : uint8_t { kF32 = 1, kF64 = 2 };

void WriteTensors(ByteWriter& w, const std::map<std::string, Tensor>& tensors,
                  ValueType type);
std::map<std::string, Tensor> ReadTensors(ByteReader& r);

// Appends an FNV-1a digest of everything written so far.
void SealWithHash(ByteWriter& w);
// Verifies and strips the trailing digest; returns the body.
std::span<const uint8_t> CheckSeal(std::span<const uint8_t> file,
                                   uint64_t* digest = nullptr);

std::vector<uint8_t> ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace afpgic

#endif  // AFPGIC_SERIALIZE_H_
