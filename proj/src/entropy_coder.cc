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

#include "afpgic/entropy_coder.h"

#include <dlfcn.h>

#include <cstdlib>

#include "afpgic/fast_coder_abi.h"

namespace afpgic {
namespace {

class ReferenceStreamDecoder : public StreamDecoder {
 public:
  explicit ReferenceStreamDecoder(std::span<const uint8_t> bytes) : dec_(bytes) {}
  std::vector<uint16_t> Decode(const CdfTables& tables) override {
    tables.Validate();
    std::vector<uint16_t> out(tables.size());
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<uint16_t>(
          dec_.DecodeSymbol(tables.starts(i), tables.alphabet(i)));
    }
    return out;
  }

 private:
  RangeDecoder dec_;
};

class Reference : public EntropyCoder {
 public:
  std::vector<uint8_t> Encode(std::span<const uint16_t> symbols,
                              const CdfTables& tables) const override {
    return RangeEncode(symbols, tables);
  }
  std::unique_ptr<StreamDecoder> OpenDecoder(
      std::span<const uint8_t> bytes) const override {
    return std::make_unique<ReferenceStreamDecoder>(bytes);
  }
  bool native() const override { return false; }
  std::string name() const override { return "reference"; }
};

void ThrowAbiError(int64_t code) {
  switch (code) {
    case AFPG_ERR_TABLE: throw CoderError("native coder: invalid table");
    case AFPG_ERR_SYMBOL: throw CoderError("native coder: symbol outside table support");
    case AFPG_ERR_CAPACITY: throw CoderError("native coder: output buffer too small");
    default: throw CoderError("native coder error " + std::to_string(code));
  }
}

struct NativeApi {
  void* handle = nullptr;
  afpg_range_encode_fn encode = nullptr;
  afpg_decoder_open_fn open = nullptr;
  afpg_decoder_decode_fn decode = nullptr;
  afpg_decoder_close_fn close = nullptr;
  ~NativeApi() {
    if (handle) dlclose(handle);
  }
};

class NativeStreamDecoder : public StreamDecoder {
 public:
  NativeStreamDecoder(std::shared_ptr<const NativeApi> api,
                      std::span<const uint8_t> bytes)
      : api_(std::move(api)), state_(api_->open(bytes.data(), bytes.size())) {
    if (!state_) throw CoderError("native decoder open failed");
  }
  ~NativeStreamDecoder() override { api_->close(state_); }
  std::vector<uint16_t> Decode(const CdfTables& tables) override {
    std::vector<uint16_t> out(tables.size());
    const int64_t r =
        api_->decode(state_, tables.cdf.data(), tables.cdf.size(),
                     tables.offsets.data(), tables.offsets.size(), out.data(),
                     out.size());
    if (r < 0) ThrowAbiError(r);
    return out;
  }

 private:
  std::shared_ptr<const NativeApi> api_;
  void* state_;
};

class Native : public EntropyCoder {
 public:
  Native(std::shared_ptr<const NativeApi> api, std::string path)
      : api_(std::move(api)), path_(std::move(path)) {}
  std::vector<uint8_t> Encode(std::span<const uint16_t> symbols,
                              const CdfTables& tables) const override {
    std::vector<uint8_t> out(2 * symbols.size() + 16);
    const int64_t r = api_->encode(symbols.data(), symbols.size(),
                                   tables.cdf.data(), tables.cdf.size(),
                                   tables.offsets.data(), tables.offsets.size(),
                                   out.data(), out.size());
    if (r < 0) ThrowAbiError(r);
    out.resize(static_cast<size_t>(r));
    return out;
  }
  std::unique_ptr<StreamDecoder> OpenDecoder(
      std::span<const uint8_t> bytes) const override {
    return std::make_unique<NativeStreamDecoder>(api_, bytes);
  }
  bool native() const override { return true; }
  std::string name() const override { return "native:" + path_; }

 private:
  std::shared_ptr<const NativeApi> api_;
  std::string path_;
};

template <typename T>
T Symbol(void* handle, const char* name) {
  void* p = dlsym(handle, name);
  if (!p) throw CoderError(std::string("native coder lacks symbol ") + name);
  return reinterpret_cast<T>(p);
}

}  // namespace

std::shared_ptr<const EntropyCoder> ReferenceCoder() {
  static const auto coder = std::make_shared<Reference>();
  return coder;
}

std::shared_ptr<const EntropyCoder> LoadNativeCoder(const std::string& path) {
  auto api = std::make_shared<NativeApi>();
  api->handle = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!api->handle) {
    const char* err = dlerror();
    throw CoderError("cannot load native coder: " + std::string(err ? err : path));
  }
  const auto version = Symbol<afpg_abi_version_fn>(api->handle, "afpg_abi_version");
  if (version() != AFPG_ABI_VERSION) throw CoderError("native coder ABI version mismatch");
  api->encode = Symbol<afpg_range_encode_fn>(api->handle, "afpg_range_encode");
  api->open = Symbol<afpg_decoder_open_fn>(api->handle, "afpg_decoder_open");
  api->decode = Symbol<afpg_decoder_decode_fn>(api->handle, "afpg_decoder_decode");
  api->close = Symbol<afpg_decoder_close_fn>(api->handle, "afpg_decoder_close");
  return std::make_shared<Native>(std::move(api), path);
}

std::shared_ptr<const EntropyCoder> DefaultCoder() {
  if (const char* path = std::getenv("AFPGIC_FAST_CODER"); path && *path) {
    try {
      return LoadNativeCoder(path);
    } catch (const CoderError&) {
      // Fall through to the reference coder.
    }
  }
  return ReferenceCoder();
}

}  // namespace afpgic
