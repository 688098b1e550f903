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

#include "afpgic/nn.h"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "afpgic/serialize.h"

namespace afpgic::nn {

Var ParamStore::Add(const std::string& name, Tensor init) {
  for (const auto& [n, v] : params_) {
    if (n == name) throw std::logic_error("duplicate parameter " + name);
  }
  Var v = ag::Leaf(std::move(init), true);
  params_.emplace_back(name, v);
  return v;
}

Var ParamStore::Find(const std::string& name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return v;
  }
  throw std::out_of_range("no parameter " + name);
}

void ParamStore::SetRequiresGrad(bool r) {
  for (auto& [n, v] : params_) v.set_requires_grad(r);
}

void ParamStore::ZeroGrad() {
  for (auto& [n, v] : params_) v.ZeroGrad();
}

size_t ParamStore::NumScalars() const {
  size_t total = 0;
  for (const auto& [n, v] : params_) total += v.value().size();
  return total;
}

void ParamStore::RoundToFloat() {
  for (auto& [n, v] : params_) {
    for (double& x : v.mutable_value().vec()) {
      x = static_cast<double>(static_cast<float>(x));
    }
  }
}

uint64_t ParamStore::Hash() const {
  Fnv1a h;
  for (const auto& [n, v] : params_) {
    h.Update(n.data(), n.size());
    const Shape& s = v.shape();
    const int32_t dims[4] = {s.n, s.c, s.h, s.w};
    h.Update(dims, sizeof(dims));
    h.Update(v.value().data(), v.value().size() * sizeof(double));
  }
  return h.digest();
}

std::map<std::string, Tensor> ParamStore::Snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [n, v] : params_) out.emplace(n, v.value());
  return out;
}

void ParamStore::Restore(const std::map<std::string, Tensor>& values) {
  for (auto& [n, v] : params_) {
    auto it = values.find(n);
    if (it == values.end()) throw FormatError("missing parameter " + n);
    if (it->second.shape() != v.shape()) {
      throw FormatError("shape mismatch for " + n + ": " +
                        it->second.shape().str() + " vs " + v.shape().str());
    }
    v.mutable_value() = it->second;
  }
}

Tensor InitUniform(Shape s, int fan_in, Rng& rng, double gain) {
  Tensor t(s);
  const double bound = gain * std::sqrt(6.0 / std::max(fan_in, 1));
  for (double& v : t.vec()) v = rng.Uniform(-bound, bound);
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int cin, int cout,
               int k, int stride, Rng& rng, double gain, bool zero_init)
    : cin_(cin), cout_(cout), k_(k), stride_(stride) {
  Shape ws{cout, cin, k, k};
  weight_ = store.Add(name + ".weight",
                      zero_init ? Tensor(ws) : InitUniform(ws, cin * k * k, rng,
                                                           gain));
  bias_ = store.Add(name + ".bias", Tensor({1, cout, 1, 1}));
}

Var Conv2d::operator()(const Var& x) const {
  return ag::Conv2d(x, weight_, bias_, stride_, k_ / 2);
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out,
               Rng& rng, bool zero_init)
    : out_(out) {
  Shape ws{out, in, 1, 1};
  weight_ = store.Add(name + ".weight",
                      zero_init ? Tensor(ws) : InitUniform(ws, in, rng));
  bias_ = store.Add(name + ".bias", Tensor({1, out, 1, 1}));
}

Var Linear::operator()(const Var& x) const {
  return ag::Linear(x, weight_, bias_);
}

GroupNormLayer::GroupNormLayer(ParamStore& store, const std::string& name,
                               int channels, int groups, double eps)
    : groups_(groups), eps_(eps) {
  gamma_ = store.Add(name + ".gamma", Tensor({1, channels, 1, 1}, 1.0));
  beta_ = store.Add(name + ".beta", Tensor({1, channels, 1, 1}));
}

Var GroupNormLayer::operator()(const Var& x) const {
  return ag::GroupNorm(x, groups_, gamma_, beta_, eps_);
}

ChannelModulation::ChannelModulation(ParamStore& store,
                                     const std::string& name, int embed,
                                     int channels, Rng& rng)
    : scale_(store, name + ".scale", embed, channels, rng, /*zero_init=*/true),
      shift_(store, name + ".shift", embed, channels, rng, /*zero_init=*/true) {}

Var ChannelModulation::operator()(const Var& x, const Var& embedding) const {
  return ag::ChannelAffine(x, scale_(embedding), shift_(embedding));
}

}  // namespace afpgic::nn
