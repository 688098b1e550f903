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

// Coder selection: a native library implementing fast_coder_abi.h when one
// can be loaded, otherwise the reference coder. Both produce identical
// bytes.

#ifndef AFPGIC_ENTROPY_CODER_H_
#define AFPGIC_ENTROPY_CODER_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "afpgic/range_coder.h"

namespace afpgic {

class StreamDecoder {
 public:
  virtual ~StreamDecoder() = default;
  // Decodes tables.size() symbols, continuing where the last call ended.
  virtual std::vector<uint16_t> Decode(const CdfTables& tables) = 0;
};

class EntropyCoder {
 public:
  virtual ~EntropyCoder() = default;
  virtual std::vector<uint8_t> Encode(std::span<const uint16_t> symbols,
                                      const CdfTables& tables) const = 0;
  // `bytes` must outlive the returned decoder.
  virtual std::unique_ptr<StreamDecoder> OpenDecoder(
      std::span<const uint8_t> bytes) const = 0;
  virtual bool native() const = 0;
  virtual std::string name() const = 0;
};

std::shared_ptr<const EntropyCoder> ReferenceCoder();

// Loads a native coder; throws CoderError if the library or a symbol is
// missing or the ABI version differs.
std::shared_ptr<const EntropyCoder> LoadNativeCoder(const std::string& path);

// Native coder from $AFPGIC_FAST_CODER if it loads, else the reference.
std::shared_ptr<const EntropyCoder> DefaultCoder();

}  // namespace afpgic

#endif  // AFPGIC_ENTROPY_CODER_H_
