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

#ifndef AFPGIC_OPTIM_H_
#define AFPGIC_OPTIM_H_

#include <map>
#include <string>
#include <vector>

#include "afpgic/nn.h"

namespace afpgic::optim {

// Global L2 norm of the gradients held by `params`.
double GradNorm(const std::vector<ag::Var>& params);
// Scales gradients so their global norm is at most max_norm; returns the
// norm before clipping.
double ClipGradNorm(const std::vector<ag::Var>& params, double max_norm);

class Adam {
 public:
  Adam(std::vector<ag::Var> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void Step();
  void ZeroGrad();
  const std::vector<ag::Var>& params() const { return params_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  // Moments and step count, for bitwise-resumable checkpoints.
  std::map<std::string, Tensor> State(const std::string& prefix) const;
  void LoadState(const std::map<std::string, Tensor>& state,
                 const std::string& prefix);

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

std::vector<ag::Var> Collect(const nn::ParamStore& store);

}  // namespace afpgic::optim

#endif  // AFPGIC_OPTIM_H_
