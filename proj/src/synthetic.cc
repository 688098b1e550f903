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

#include "afpgic/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

#include "afpgic/image.h"

namespace afpgic {
namespace {

using Rgb = std::array<double, 3>;

Rgb RandomColor(Rng& rng, Rgb base, double spread) {
  Rgb c;
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(base[i] + rng.Uniform(-spread, spread), 0.0, 1.0);
  return c;
}

void Put(Tensor& img, int y, int x, const Rgb& c) {
  for (int i = 0; i < 3; ++i) img.at(0, i, y, x) = c[i];
}

void Blend(Tensor& img, int y, int x, const Rgb& c, double a) {
  for (int i = 0; i < 3; ++i) {
    double& v = img.at(0, i, y, x);
    v = v * (1 - a) + c[i] * a;
  }
}

// Smooth lattice noise in [0, 1].
class ValueNoise {
 public:
  ValueNoise(int cells, Rng& rng) : cells_(cells), grid_((cells + 1) * (cells + 1)) {
    for (double& g : grid_) g = rng.Uniform();
  }
  double At(double u, double v) const {
    const double x = u * cells_, y = v * cells_;
    const int x0 = std::min(static_cast<int>(x), cells_ - 1);
    const int y0 = std::min(static_cast<int>(y), cells_ - 1);
    const double fx = Smooth(x - x0), fy = Smooth(y - y0);
    auto g = [&](int a, int b) { return grid_[b * (cells_ + 1) + a]; };
    const double top = g(x0, y0) * (1 - fx) + g(x0 + 1, y0) * fx;
    const double bot = g(x0, y0 + 1) * (1 - fx) + g(x0 + 1, y0 + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  static double Smooth(double t) { return t * t * (3 - 2 * t); }
  int cells_;
  std::vector<double> grid_;
};

void Architecture(Tensor& img, Rng& rng) {
  const int h = img.shape().h, w = img.shape().w;
  const Rgb facade = RandomColor(rng, {0.62, 0.58, 0.52}, 0.15);
  const Rgb pane = RandomColor(rng, {0.15, 0.18, 0.25}, 0.08);
  const Rgb frame = RandomColor(rng, {0.85, 0.85, 0.82}, 0.1);
  const int px = 6 + rng.UniformInt(8), py = 7 + rng.UniformInt(8);
  const int ww = std::max(2, px - 2 - rng.UniformInt(3));
  const int wh = std::max(2, py - 2 - rng.UniformInt(3));
  const int ox = rng.UniformInt(px), oy = rng.UniformInt(py);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int cx = (x + ox) % px, cy = (y + oy) % py;
      Rgb c = facade;
      if (cx < ww && cy < wh) c = pane;
      else if (cx == ww || cy == wh) c = frame;
      const double grain = 0.03 * (rng.Uniform() - 0.5);
      for (double& v : c) v = std::clamp(v + grain, 0.0, 1.0);
      Put(img, y, x, c);
    }
  }
}

void Indoor(Tensor& img, Rng& rng) {
  const int h = img.shape().h, w = img.shape().w;
  const Rgb wall = RandomColor(rng, {0.8, 0.75, 0.65}, 0.12);
  const double tilt = rng.Uniform(-0.3, 0.3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = 0.85 + 0.15 * (static_cast<double>(y) / h) + tilt * (static_cast<double>(x) / w - 0.5) * 0.3;
      Put(img, y, x, {wall[0] * g, wall[1] * g, wall[2] * g});
    }
  const int objects = 2 + rng.UniformInt(3);
  for (int k = 0; k < objects; ++k) {
    const Rgb col = RandomColor(rng, {0.5, 0.4, 0.4}, 0.45);
    const double cx = rng.Uniform(0.1, 0.9) * w, cy = rng.Uniform(0.2, 0.9) * h;
    const double rx = rng.Uniform(0.08, 0.25) * w, ry = rng.Uniform(0.08, 0.25) * h;
    const bool box = rng.Uniform() < 0.5;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const bool inside = box ? (std::abs(dx) < 1 && std::abs(dy) < 1) : dx * dx + dy * dy < 1;
        if (!inside) continue;
        const double shade = 0.75 + 0.25 * (1 - std::clamp(dy, -1.0, 1.0)) / 2;
        Put(img, y, x, {col[0] * shade, col[1] * shade, col[2] * shade});
      }
  }
}

void Natural(Tensor& img, Rng& rng) {
  const int h = img.shape().h, w = img.shape().w;
  ValueNoise coarse(4, rng), mid(9, rng), fine(23, rng), ridge(5, rng);
  const double horizon = rng.Uniform(0.25, 0.55);
  const Rgb sky = RandomColor(rng, {0.45, 0.65, 0.9}, 0.1);
  const Rgb leaf = RandomColor(rng, {0.2, 0.45, 0.15}, 0.1);
  const Rgb soil = RandomColor(rng, {0.4, 0.3, 0.15}, 0.08);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      const double line = horizon + 0.12 * (ridge.At(u, 0.5) - 0.5);
      if (v < line) {
        const double cloud = std::max(0.0, coarse.At(u, v) - 0.55) * 1.5;
        Rgb c;
        for (int i = 0; i < 3; ++i) c[i] = sky[i] * (1 - cloud) + cloud + 0.1 * v;
        for (double& cc : c) cc = std::clamp(cc, 0.0, 1.0);
        Put(img, y, x, c);
      } else {
        const double n = 0.5 * mid.At(u, v) + 0.35 * fine.At(u, v) + 0.15 * coarse.At(u, v);
        Rgb c;
        for (int i = 0; i < 3; ++i) c[i] = std::clamp(leaf[i] * (0.6 + 0.8 * n) * (1 - n * 0.3) + soil[i] * n * 0.3, 0.0, 1.0);
        Put(img, y, x, c);
      }
    }
}

void Street(Tensor& img, Rng& rng) {
  const int h = img.shape().h, w = img.shape().w;
  const double horizon = rng.Uniform(0.3, 0.5) * h;
  const Rgb sky = RandomColor(rng, {0.7, 0.75, 0.8}, 0.1);
  const Rgb road = RandomColor(rng, {0.3, 0.3, 0.32}, 0.05);
  const Rgb side = RandomColor(rng, {0.55, 0.52, 0.48}, 0.1);
  const double vx = rng.Uniform(0.35, 0.65) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (y < horizon) {
        Put(img, y, x, sky);
        continue;
      }
      const double t = (y - horizon) / (h - horizon + 1e-9);
      const double half = 0.05 * w + t * 0.6 * w;
      const double dx = x - vx;
      if (std::abs(dx) < half) {
        Rgb c = road;
        // Dashed centre line and edge stripes.
        const bool centre = std::abs(dx) < 0.6 + t * 1.5 && std::fmod(t * 9.0, 1.0) < 0.5;
        const bool edge = std::abs(std::abs(dx) - half * 0.92) < 0.5 + t;
        if (centre || edge) c = {0.95, 0.92, 0.7};
        Put(img, y, x, c);
      } else {
        Put(img, y, x, side);
      }
    }
  const int cars = 1 + rng.UniformInt(3);
  for (int k = 0; k < cars; ++k) {
    const Rgb body = RandomColor(rng, {0.5, 0.3, 0.3}, 0.45);
    const int cw = 6 + rng.UniformInt(w / 5 + 1), ch = 4 + rng.UniformInt(h / 8 + 1);
    const int x0 = rng.UniformInt(std::max(1, w - cw));
    const int y0 = static_cast<int>(horizon) + rng.UniformInt(std::max(1, h - static_cast<int>(horizon) - ch));
    for (int y = y0; y < std::min(h, y0 + ch); ++y)
      for (int x = x0; x < std::min(w, x0 + cw); ++x) {
        const bool glass = y < y0 + ch / 3 && x > x0 + 1 && x < x0 + cw - 2;
        Put(img, y, x, glass ? Rgb{0.2, 0.25, 0.3} : body);
      }
  }
}

void Portrait(Tensor& img, Rng& rng) {
  const int h = img.shape().h, w = img.shape().w;
  const Rgb bg = RandomColor(rng, {0.3, 0.3, 0.35}, 0.2);
  const Rgb skin = RandomColor(rng, {0.85, 0.65, 0.52}, 0.12);
  const Rgb hair = RandomColor(rng, {0.2, 0.14, 0.1}, 0.1);
  const double cx = rng.Uniform(0.4, 0.6) * w, cy = rng.Uniform(0.45, 0.6) * h;
  const double rx = rng.Uniform(0.22, 0.32) * w, ry = rng.Uniform(0.3, 0.4) * h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      const double r2 = dx * dx + dy * dy;
      Rgb c = bg;
      const double vign = 1.0 - 0.3 * (std::abs(static_cast<double>(x) / w - 0.5));
      for (double& v : c) v *= vign;
      const double hr2 = dx * dx / 1.3 + (dy + 0.25) * (dy + 0.25) / 1.1;
      if (hr2 < 1.0 && dy < 0.1) c = hair;
      if (r2 < 1.0 && !(dy < -0.55)) {
        const double shade = 0.7 + 0.3 * std::sqrt(std::max(0.0, 1 - r2)) - 0.1 * dx;
        c = {skin[0] * shade, skin[1] * shade, skin[2] * shade};
        const double ex = std::abs(dx) - 0.38, ey = dy + 0.15;
        if (ex * ex / 0.02 + ey * ey / 0.006 < 1.0) c = {0.1, 0.08, 0.08};
        if (std::abs(dx) < 0.3 && std::abs(dy - 0.5) < 0.05) c = {0.6, 0.3, 0.3};
      }
      for (double& v : c) v = std::clamp(v, 0.0, 1.0);
      Put(img, y, x, c);
    }
  // Soft light falloff.
  const double a = rng.Uniform(0.0, 0.15);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) Blend(img, y, x, {1, 1, 1}, a * (1.0 - static_cast<double>(y) / h) * 0.3);
}

}  // namespace

const char* FamilyName(Family f) {
  switch (f) {
    case Family::kArchitecture: return "architecture";
    case Family::kIndoor: return "indoor";
    case Family::kNatural: return "natural";
    case Family::kStreet: return "street";
    case Family::kPortrait: return "portrait";
  }
  return "unknown";
}

Tensor GenerateTexture(Family family, int h, int w, Rng& rng) {
  Tensor img = MakeImage(h, w);
  switch (family) {
    case Family::kArchitecture: Architecture(img, rng); break;
    case Family::kIndoor: Indoor(img, rng); break;
    case Family::kNatural: Natural(img, rng); break;
    case Family::kStreet: Street(img, rng); break;
    case Family::kPortrait: Portrait(img, rng); break;
  }
  for (double& v : img.vec()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

void ImageSource::AttachFolder(const std::string& dir, double fraction) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) folder_.push_back(ReadPng(f.string()));
  folder_fraction_ = folder_.empty() ? 0.0 : fraction;
}

Sample ImageSource::Draw(int size, Rng& rng) const {
  if (!folder_.empty() && rng.Uniform() < folder_fraction_) {
    const Tensor& src = folder_[rng.UniformInt(static_cast<int>(folder_.size()))];
    Tensor img = src;
    if (src.shape().h < size || src.shape().w < size) img = ReflectPad(src, size);
    return {RandomCrop(img, size, size, rng), -1};
  }
  const int fam = rng.UniformInt(kNumFamilies);
  return {GenerateTexture(static_cast<Family>(fam), size, size, rng), fam};
}

std::vector<Sample> ImageSource::DrawBatch(int count, int size, Rng& rng) const {
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(Draw(size, rng));
  return out;
}

std::vector<Sample> HeldOutSet(int per_family, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < per_family; ++i) {
    for (int f = 0; f < kNumFamilies; ++f) {
      out.push_back({GenerateTexture(static_cast<Family>(f), size, size, rng), f});
    }
  }
  return out;
}

std::vector<Tensor> ValidationImages(int count, int size, uint64_t seed) {
  const auto set = HeldOutSet((count + kNumFamilies - 1) / kNumFamilies, size, seed);
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) out.push_back(set[i].image);
  return out;
}

}  // namespace afpgic
