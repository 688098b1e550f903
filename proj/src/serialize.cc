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

#include "afpgic/serialize.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace afpgic {

void Fnv1a::Update(const void* data, size_t len) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ull;
  }
}

uint64_t HashBytes(std::span<const uint8_t> bytes) {
  Fnv1a h;
  h.Update(bytes.data(), bytes.size());
  return h.digest();
}

std::string HexDigest(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ByteWriter::U32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::U64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::F32(float v) { U32(std::bit_cast<uint32_t>(v)); }
void ByteWriter::F64(double v) { U64(std::bit_cast<uint64_t>(v)); }

void ByteWriter::Str(const std::string& s) {
  U32(static_cast<uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::Bytes(std::span<const uint8_t> b) {
  buf_.insert(buf_.end(), b.begin(), b.end());
}

void ByteReader::Need(size_t n) const {
  if (data_.size() - pos_ < n) throw FormatError("unexpected end of file");
}

uint8_t ByteReader::U8() {
  Need(1);
  return data_[pos_++];
}

uint32_t ByteReader::U32() {
  Need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::U64() {
  Need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::F32() { return std::bit_cast<float>(U32()); }
double ByteReader::F64() { return std::bit_cast<double>(U64()); }

std::string ByteReader::Str() {
  const uint32_t n = U32();
  Need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::span<const uint8_t> ByteReader::Bytes(size_t n) {
  Need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

void WriteTensors(ByteWriter& w, const std::map<std::string, Tensor>& tensors,
                  ValueType type) {
  w.U32(static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.Str(name);
    const Shape& s = t.shape();
    w.U32(s.n);
    w.U32(s.c);
    w.U32(s.h);
    w.U32(s.w);
    w.U8(static_cast<uint8_t>(type));
    for (double v : t.vec()) {
      if (type == ValueType::kF32) {
        w.F32(static_cast<float>(v));
      } else {
        w.F64(v);
      }
    }
  }
}

std::map<std::string, Tensor> ReadTensors(ByteReader& r) {
  std::map<std::string, Tensor> out;
  const uint32_t count = r.U32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.Str();
    Shape s;
    s.n = static_cast<int>(r.U32());
    s.c = static_cast<int>(r.U32());
    s.h = static_cast<int>(r.U32());
    s.w = static_cast<int>(r.U32());
    const auto type = static_cast<ValueType>(r.U8());
    if (type != ValueType::kF32 && type != ValueType::kF64) {
      throw FormatError("unknown value type for " + name);
    }
    if (s.numel() > (1u << 28)) throw FormatError("tensor too large: " + name);
    Tensor t(s);
    for (double& v : t.vec()) {
      v = type == ValueType::kF32 ? static_cast<double>(r.F32()) : r.F64();
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void SealWithHash(ByteWriter& w) { w.U64(HashBytes(w.bytes())); }

std::span<const uint8_t> CheckSeal(std::span<const uint8_t> file,
                                   uint64_t* digest) {
  if (file.size() < 8) throw FormatError("file too short");
  auto body = file.first(file.size() - 8);
  ByteReader tail(file.last(8));
  const uint64_t stored = tail.U64();
  const uint64_t actual = HashBytes(body);
  if (stored != actual) {
    throw HashMismatchError("content hash mismatch: stored " +
                            HexDigest(stored) + ", computed " +
                            HexDigest(actual));
  }
  if (digest) *digest = stored;
  return body;
}

std::vector<uint8_t> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFile(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace afpgic
