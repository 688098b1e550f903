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

#include "afpgic/optim.h"

#include <cmath>

#include "afpgic/serialize.h"

namespace afpgic::optim {

double GradNorm(const std::vector<ag::Var>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad().vec()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ClipGradNorm(const std::vector<ag::Var>& params, double max_norm) {
  const double norm = GradNorm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto p : params) {
      if (p.grad().empty()) continue;
      for (double& g : p.mutable_grad().vec()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::Step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.grad().empty()) continue;
    const Tensor& g = p.grad();
    Tensor& w = p.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

void Adam::ZeroGrad() {
  for (auto& p : params_) p.ZeroGrad();
}

std::map<std::string, Tensor> Adam::State(const std::string& prefix) const {
  std::map<std::string, Tensor> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.emplace(prefix + ".m." + std::to_string(i), m_[i]);
    out.emplace(prefix + ".v." + std::to_string(i), v_[i]);
  }
  out.emplace(prefix + ".t", Tensor({1, 1, 1, 1}, static_cast<double>(t_)));
  return out;
}

void Adam::LoadState(const std::map<std::string, Tensor>& state,
                     const std::string& prefix) {
  auto get = [&](const std::string& key) -> const Tensor& {
    auto it = state.find(key);
    if (it == state.end()) throw FormatError("missing optimizer state " + key);
    return it->second;
  };
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i] = get(prefix + ".m." + std::to_string(i));
    v_[i] = get(prefix + ".v." + std::to_string(i));
    if (m_[i].shape() != params_[i].shape()) {
      throw FormatError("optimizer state shape mismatch at " + prefix);
    }
  }
  t_ = static_cast<long>(get(prefix + ".t")[0]);
}

std::vector<ag::Var> Collect(const nn::ParamStore& store) {
  std::vector<ag::Var> out;
  for (const auto& [n, v] : store.params()) out.push_back(v);
  return out;
}

}  // namespace afpgic::optim
