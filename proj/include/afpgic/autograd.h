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

// Minimal tape-free reverse-mode differentiation over NCHW tensors.
//
// Every op returns a Var whose node keeps its parents alive; calling
// Backward() on a scalar walks the graph in reverse topological order.
// Leaves created with requires_grad accumulate gradients until cleared.
// When no input requires a gradient (or a NoGradGuard is live) ops build
// no graph at all, which is how inference runs.

#ifndef AFPGIC_AUTOGRAD_H_
#define AFPGIC_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "afpgic/tensor.h"

namespace afpgic::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& MutableGrad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->MutableGrad(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  void ZeroGrad() { node_->grad = Tensor(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var Constant(Tensor t);
Var Leaf(Tensor t, bool requires_grad = true);

// Seeds d(root)/d(root) = 1; root must hold a single element.
void Backward(const Var& root);
void Backward(const Var& root, const Tensor& seed);

// Elementwise, identical shapes.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double s);
Var AddScalar(const Var& a, double s);
Var Square(const Var& a);
Var Silu(const Var& a);
Var Sigmoid(const Var& a);
Var Softplus(const Var& a);
Var Exp(const Var& a);
Var Log(const Var& a);
Var Sin(const Var& a);
Var Cos(const Var& a);
Var LeakyRelu(const Var& a, double slope);
// Log-sigmoid, computed stably.
Var LogSigmoid(const Var& a);
// Gradient passes only where lo < a < hi.
Var Clamp(const Var& a, double lo, double hi);
// Round half away from zero; gradient is the identity.
Var SteRound(const Var& a);
// Nearest multiple of 1/scale (half away from zero); identity gradient.
Var SteSnap(const Var& a, double scale);
Var Abs(const Var& a);
Var Detach(const Var& a);

// x * (1 + scale) + shift with scale/shift shaped {1 or N, C, 1, 1}.
Var ChannelAffine(const Var& x, const Var& scale, const Var& shift);
// x {N,C,H,W} times a {N,1,H,W}.
Var MulSpatial(const Var& x, const Var& a);
// v {1 or N, C, 1, 1} -> {n, C, h, w}.
Var BroadcastSpatial(const Var& v, int n, int h, int w);
// {1,...} -> {n,...} by repetition.
Var RepeatBatch(const Var& v, int n);

Var Concat(const std::vector<Var>& parts);
Var SliceChannels(const Var& x, int c0, int c1);

// weight {Co, Ci, k, k}; bias {1, Co, 1, 1} or undefined. Zero padding.
Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad);
// x {N, I, 1, 1}; weight {O, I, 1, 1}; bias {1, O, 1, 1}.
Var Linear(const Var& x, const Var& weight, const Var& bias);
Var Upsample2x(const Var& x);
// Bilinear with align-corners sampling.
Var ResizeBilinear(const Var& x, int h, int w);
// gamma/beta {1, C, 1, 1}.
Var GroupNorm(const Var& x, int groups, const Var& gamma, const Var& beta,
              double eps);
Var SoftmaxChannels(const Var& x);
// Rows of codebook {M, d, 1, 1} placed at every location: out {N, d, H, W}.
Var GatherCodes(const Var& codebook, const std::vector<int>& index,
                Shape index_shape);

Var Sum(const Var& x);
// {N,...} -> {N,1,1,1}.
Var SumPerSample(const Var& x);
Var Mean(const Var& x);
Var MeanSquaredError(const Var& a, const Var& b);

// Unit-bin mass of N(mu, sigma) around y_hat, floored at p_min.
Var GaussianLikelihood(const Var& y_hat, const Var& mu, const Var& sigma,
                       double p_min);
// Unit-bin mass of a per-channel logistic mixture evaluated at offsets t
// {N,C,H,W}. params {1, C, 3, J}: rows are mixture logits, locations,
// log-scales. Floored at p_min.
Var LogisticMixtureLikelihood(const Var& t, const Var& params, double p_min);

// Helpers shared with non-differentiable code.
double RoundHalfAway(double v);
double NormalCdf(double x);
double BinMassGaussian(double residual, double sigma);
double LogisticMixtureMass(const double* logits, const double* locs,
                           const double* log_scales, int J, double t);

}  // namespace afpgic::ag

#endif  // AFPGIC_AUTOGRAD_H_
