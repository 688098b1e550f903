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

#ifndef AFPGIC_TENSOR_H_
#define AFPGIC_TENSOR_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace afpgic {

// All feature maps are NCHW. Vectors are stored as {n, c, 1, 1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  size_t numel() const {
    return static_cast<size_t>(n) * c * h * w;
  }
  size_t plane() const { return static_cast<size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void CheckShape(bool ok, const std::string& what);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) {
    return data_[Index(n, c, h, w)];
  }
  double at(int n, int c, int h, int w) const {
    return data_[Index(n, c, h, w)];
  }

  size_t Index(int n, int c, int h, int w) const {
    return ((static_cast<size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  void Fill(double v);
  Tensor Reshaped(Shape s) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Sample n of a batch as a standalone {1, c, h, w} tensor.
Tensor BatchItem(const Tensor& t, int n);
// Stack {1, c, h, w} tensors along the batch axis.
Tensor StackBatch(std::span<const Tensor> items);

double MaxAbsDiff(const Tensor& a, const Tensor& b);
double MeanAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace afpgic

#endif  // AFPGIC_TENSOR_H_
