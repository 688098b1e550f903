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

#include "afpgic/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace afpgic {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

void CheckShape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  CheckShape(data_.size() == shape_.numel(),
             "tensor data size does not match shape " + shape_.str());
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::Reshaped(Shape s) const {
  CheckShape(s.numel() == shape_.numel(),
             "reshape " + shape_.str() + " -> " + s.str());
  return Tensor(s, data_);
}

Tensor BatchItem(const Tensor& t, int n) {
  const Shape& s = t.shape();
  CheckShape(n >= 0 && n < s.n, "batch index out of range");
  Tensor out({1, s.c, s.h, s.w});
  const size_t per = out.size();
  std::memcpy(out.data(), t.data() + per * n, per * sizeof(double));
  return out;
}

Tensor StackBatch(std::span<const Tensor> items) {
  CheckShape(!items.empty(), "empty batch");
  Shape s = items[0].shape();
  for (const auto& it : items) {
    CheckShape(it.shape() == s && s.n == 1, "stack: mismatched items");
  }
  Tensor out({static_cast<int>(items.size()), s.c, s.h, s.w});
  const size_t per = s.numel();
  for (size_t i = 0; i < items.size(); ++i) {
    std::memcpy(out.data() + per * i, items[i].data(), per * sizeof(double));
  }
  return out;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  CheckShape(a.shape() == b.shape(), "MaxAbsDiff shapes");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double MeanAbsDiff(const Tensor& a, const Tensor& b) {
  CheckShape(a.shape() == b.shape(), "MeanAbsDiff shapes");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace afpgic
