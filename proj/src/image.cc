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

#include "afpgic/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "afpgic/serialize.h"

namespace afpgic {
namespace {

int Mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Tensor MakeImage(int h, int w) { return Tensor({1, 3, h, w}); }

Tensor ReflectPad(const Tensor& image, int multiple) {
  const Shape& s = image.shape();
  CheckShape(s.n == 1 && multiple > 0, "ReflectPad expects a single image");
  const int ph = (s.h + multiple - 1) / multiple * multiple;
  const int pw = (s.w + multiple - 1) / multiple * multiple;
  Tensor out({1, s.c, ph, pw});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = Mirror(y, s.h);
      for (int x = 0; x < pw; ++x) {
        out.at(0, c, y, x) = image.at(0, c, sy, Mirror(x, s.w));
      }
    }
  }
  return out;
}

Tensor CropTopLeft(const Tensor& image, int h, int w) {
  const Shape& s = image.shape();
  CheckShape(h <= s.h && w <= s.w && h > 0 && w > 0, "crop larger than image");
  Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = image.at(n, c, y, x);
  return out;
}

Tensor RandomCrop(const Tensor& image, int h, int w, Rng& rng) {
  const Shape& s = image.shape();
  CheckShape(h <= s.h && w <= s.w, "random crop larger than image");
  const int oy = rng.UniformInt(s.h - h + 1);
  const int ox = rng.UniformInt(s.w - w + 1);
  Tensor out({1, s.c, h, w});
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(0, c, y, x) = image.at(0, c, oy + y, ox + x);
  return out;
}

Tensor QuantizeTo8Bit(const Tensor& image) {
  Tensor out = image;
  for (double& v : out.vec()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

Tensor ReadPng(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("invalid PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Tensor img = MakeImage(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = buf[y * rowbytes + 3 * x + c] / 255.0;
  return img;
}

void WritePng(const std::string& path, const Tensor& image) {
  const Shape& s = image.shape();
  CheckShape(s.n == 1 && s.c == 3, "WritePng expects {1,3,H,W}");
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, s.w, s.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(3 * s.w);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[3 * x + c] = static_cast<uint8_t>(
            std::lround(std::clamp(image.at(0, c, y, x), 0.0, 1.0) * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace afpgic
