/* Copyright 2026 The afpgic Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C ABI of a native range coder that is byte-compatible with the reference
 * coder. Only flat arrays cross the boundary: symbols, cumulative-start
 * tables (uint16) with uint32 offsets, and caller-owned output buffers.
 * Symbol i is coded with table i, so offsets_len == n + 1.
 */

#ifndef AFPGIC_FAST_CODER_ABI_H_
#define AFPGIC_FAST_CODER_ABI_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define AFPG_ABI_VERSION 1u

#define AFPG_ERR_TABLE (-1)
#define AFPG_ERR_SYMBOL (-2)
#define AFPG_ERR_CAPACITY (-3)
#define AFPG_ERR_ARGUMENT (-4)

typedef uint32_t (*afpg_abi_version_fn)(void);

/* Returns the number of bytes written to out, or a negative AFPG_ERR_*. */
typedef int64_t (*afpg_range_encode_fn)(const uint16_t* symbols, size_t n,
                                        const uint16_t* cdf, size_t cdf_len,
                                        const uint32_t* offsets,
                                        size_t offsets_len, uint8_t* out,
                                        size_t out_cap);

/* Incremental decoding: later tables may depend on earlier symbols. The
 * handle borrows `data`, which must outlive it. */
typedef void* (*afpg_decoder_open_fn)(const uint8_t* data, size_t len);

/* Decodes n symbols into out; returns n or a negative AFPG_ERR_*. */
typedef int64_t (*afpg_decoder_decode_fn)(void* decoder, const uint16_t* cdf,
                                          size_t cdf_len,
                                          const uint32_t* offsets,
                                          size_t offsets_len, uint16_t* out,
                                          size_t n);

typedef void (*afpg_decoder_close_fn)(void* decoder);

uint32_t afpg_abi_version(void);
int64_t afpg_range_encode(const uint16_t* symbols, size_t n,
                          const uint16_t* cdf, size_t cdf_len,
                          const uint32_t* offsets, size_t offsets_len,
                          uint8_t* out, size_t out_cap);
void* afpg_decoder_open(const uint8_t* data, size_t len);
int64_t afpg_decoder_decode(void* decoder, const uint16_t* cdf, size_t cdf_len,
                            const uint32_t* offsets, size_t offsets_len,
                            uint16_t* out, size_t n);
void afpg_decoder_close(void* decoder);

#ifdef __cplusplus
}
#endif

#endif /* AFPGIC_FAST_CODER_ABI_H_ */
