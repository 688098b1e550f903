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

#include "afpgic/autograd.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace afpgic::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

bool AnyRequiresGrad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars) {
    if (v->defined() && v->requires_grad()) return true;
  }
  return false;
}

Var MakeResult(Tensor value, std::vector<Var> parents,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

// Gradient slot of parent i if it wants one.
Tensor* ParentGrad(Node& self, size_t i) {
  if (i >= self.parents.size() || !self.parents[i]) return nullptr;
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.MutableGrad();
}

template <typename F, typename DF>
Var Unary(const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return MakeResult(std::move(out), {a}, [df](Node& self) {
    Tensor* ga = ParentGrad(self, 0);
    if (!ga) return;
    const Tensor& x = self.parents[0]->value;
    for (size_t i = 0; i < x.size(); ++i) {
      (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
    }
  });
}

double SigmoidScalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void Im2Col(const double* x, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, double* col) {
  const size_t cols = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void Col2Im(const double* col, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, double* dx) {
  const size_t cols = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + ((static_cast<size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const double* src = row + static_cast<size_t>(oy) * Wo;
          double* dst = dx + (static_cast<size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Broadcast index for {1 or N, C, 1, 1} parameters.
inline size_t ChanIndex(const Shape& ps, int n, int c) {
  return static_cast<size_t>(ps.n == 1 ? 0 : n) * ps.c + c;
}

}  // namespace

Tensor& Node::MutableGrad() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) {
    grad = Tensor(value.shape());
  }
  return grad;
}

double Var::item() const {
  CheckShape(value().size() == 1, "item() on non-scalar " + shape().str());
  return value()[0];
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var Constant(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  return Var(std::move(node));
}

Var Leaf(Tensor t, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void Backward(const Var& root) {
  CheckShape(root.value().size() == 1, "Backward needs a scalar root");
  Backward(root, Tensor(root.shape(), 1.0));
}

void Backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) return;
  CheckShape(seed.shape() == root.shape(), "Backward seed shape");
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor& g = root.node()->MutableGrad();
  for (size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

Var Add(const Var& a, const Var& b) {
  CheckShape(a.shape() == b.shape(), "Add " + a.shape().str() + " vs " +
                                         b.shape().str());
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    for (size_t p = 0; p < 2; ++p) {
      if (Tensor* g = ParentGrad(self, p)) {
        for (size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  CheckShape(a.shape() == b.shape(), "Sub shapes");
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = ParentGrad(self, 0)) {
      for (size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = ParentGrad(self, 1)) {
      for (size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckShape(a.shape() == b.shape(), "Mul shapes");
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (Tensor* g = ParentGrad(self, 0)) {
      for (size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = ParentGrad(self, 1)) {
      for (size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var Scale(const Var& a, double s) {
  return Unary(
      a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Var AddScalar(const Var& a, double s) {
  return Unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var Square(const Var& a) {
  return Unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var Silu(const Var& a) {
  return Unary(
      a, [](double x) { return x * SigmoidScalar(x); },
      [](double x, double) {
        const double s = SigmoidScalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var Sigmoid(const Var& a) {
  return Unary(
      a, [](double x) { return SigmoidScalar(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var Softplus(const Var& a) {
  return Unary(
      a,
      [](double x) {
        return x > 30.0 ? x : std::log1p(std::exp(x));
      },
      [](double x, double) { return SigmoidScalar(x); });
}

Var Exp(const Var& a) {
  return Unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var Log(const Var& a) {
  return Unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var Sin(const Var& a) {
  return Unary(
      a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Var Cos(const Var& a) {
  return Unary(
      a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Var LeakyRelu(const Var& a, double slope) {
  return Unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var LogSigmoid(const Var& a) {
  return Unary(
      a,
      [](double x) {
        return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
      },
      [](double x, double) { return 1.0 - SigmoidScalar(x); });
}

Var Clamp(const Var& a, double lo, double hi) {
  return Unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

double RoundHalfAway(double v) { return std::round(v); }

Var SteRound(const Var& a) {
  return Unary(
      a, [](double x) { return RoundHalfAway(x); },
      [](double, double) { return 1.0; });
}

Var SteSnap(const Var& a, double scale) {
  return Unary(
      a, [scale](double x) { return RoundHalfAway(x * scale) / scale; },
      [](double, double) { return 1.0; });
}

Var Abs(const Var& a) {
  return Unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var Detach(const Var& a) { return Constant(a.value()); }

Var ChannelAffine(const Var& x, const Var& scale, const Var& shift) {
  const Shape& s = x.shape();
  const Shape& ps = scale.shape();
  CheckShape(ps == shift.shape() && ps.c == s.c && ps.h == 1 && ps.w == 1 &&
                 (ps.n == 1 || ps.n == s.n),
             "ChannelAffine param shape " + ps.str() + " for " + s.str());
  Tensor out(s);
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double m = 1.0 + scale.value()[ChanIndex(ps, n, c)];
      const double t = shift.value()[ChanIndex(ps, n, c)];
      const double* src = x.value().data() + (static_cast<size_t>(n) * s.c + c) * plane;
      double* dst = out.data() + (static_cast<size_t>(n) * s.c + c) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = src[i] * m + t;
    }
  }
  return MakeResult(std::move(out), {x, scale, shift}, [](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    const Tensor& sv = self.parents[1]->value;
    const Shape& s = xv.shape();
    const Shape& ps = sv.shape();
    const size_t plane = s.plane();
    Tensor* gx = ParentGrad(self, 0);
    Tensor* gs = ParentGrad(self, 1);
    Tensor* gt = ParentGrad(self, 2);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const size_t off = (static_cast<size_t>(n) * s.c + c) * plane;
        const size_t pi = ChanIndex(ps, n, c);
        const double m = 1.0 + sv[pi];
        double ds = 0.0, dt = 0.0;
        for (size_t i = 0; i < plane; ++i) {
          const double g = self.grad[off + i];
          if (gx) (*gx)[off + i] += g * m;
          ds += g * xv[off + i];
          dt += g;
        }
        if (gs) (*gs)[pi] += ds;
        if (gt) (*gt)[pi] += dt;
      }
    }
  });
}

Var MulSpatial(const Var& x, const Var& a) {
  const Shape& s = x.shape();
  const Shape& as = a.shape();
  CheckShape(as.n == s.n && as.c == 1 && as.h == s.h && as.w == s.w,
             "MulSpatial shapes " + s.str() + " " + as.str());
  Tensor out(s);
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const double* w = a.value().data() + n * plane;
    for (int c = 0; c < s.c; ++c) {
      const size_t off = (static_cast<size_t>(n) * s.c + c) * plane;
      for (size_t i = 0; i < plane; ++i) out[off + i] = x.value()[off + i] * w[i];
    }
  }
  return MakeResult(std::move(out), {x, a}, [](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    const Tensor& av = self.parents[1]->value;
    const Shape& s = xv.shape();
    const size_t plane = s.plane();
    Tensor* gx = ParentGrad(self, 0);
    Tensor* ga = ParentGrad(self, 1);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const size_t off = (static_cast<size_t>(n) * s.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double g = self.grad[off + i];
          if (gx) (*gx)[off + i] += g * av[n * plane + i];
          if (ga) (*ga)[n * plane + i] += g * xv[off + i];
        }
      }
    }
  });
}

Var BroadcastSpatial(const Var& v, int n, int h, int w) {
  const Shape& ps = v.shape();
  CheckShape(ps.h == 1 && ps.w == 1 && (ps.n == 1 || ps.n == n),
             "BroadcastSpatial shape " + ps.str());
  Shape s{n, ps.c, h, w};
  Tensor out(s);
  const size_t plane = s.plane();
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < ps.c; ++c) {
      const double val = v.value()[ChanIndex(ps, b, c)];
      std::fill_n(out.data() + (static_cast<size_t>(b) * ps.c + c) * plane,
                  plane, val);
    }
  }
  return MakeResult(std::move(out), {v}, [](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& s = self.value.shape();
    const Shape& ps = self.parents[0]->value.shape();
    const size_t plane = s.plane();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const double* src =
            self.grad.data() + (static_cast<size_t>(b) * s.c + c) * plane;
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) acc += src[i];
        (*g)[ChanIndex(ps, b, c)] += acc;
      }
    }
  });
}

Var RepeatBatch(const Var& v, int n) {
  const Shape& ps = v.shape();
  CheckShape(ps.n == 1, "RepeatBatch expects batch 1");
  Shape s{n, ps.c, ps.h, ps.w};
  Tensor out(s);
  const size_t per = ps.numel();
  for (int b = 0; b < n; ++b) {
    std::copy_n(v.value().data(), per, out.data() + b * per);
  }
  return MakeResult(std::move(out), {v}, [](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const size_t per = g->size();
    for (int b = 0; b < self.value.shape().n; ++b) {
      for (size_t i = 0; i < per; ++i) (*g)[i] += self.grad[b * per + i];
    }
  });
}

Var Concat(const std::vector<Var>& parts) {
  CheckShape(!parts.empty(), "Concat of nothing");
  Shape s = parts[0].shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    CheckShape(ps.n == s.n && ps.h == s.h && ps.w == s.w,
               "Concat spatial mismatch " + ps.str() + " vs " + s.str());
    total_c += ps.c;
  }
  Shape os{s.n, total_c, s.h, s.w};
  Tensor out(os);
  const size_t plane = os.plane();
  int c0 = 0;
  for (const auto& p : parts) {
    const int pc = p.shape().c;
    for (int n = 0; n < s.n; ++n) {
      std::copy_n(p.value().data() + static_cast<size_t>(n) * pc * plane,
                  pc * plane,
                  out.data() + (static_cast<size_t>(n) * total_c + c0) * plane);
    }
    c0 += pc;
  }
  return MakeResult(std::move(out), parts, [](Node& self) {
    const Shape& os = self.value.shape();
    const size_t plane = os.plane();
    int c0 = 0;
    for (size_t i = 0; i < self.parents.size(); ++i) {
      const int pc = self.parents[i]->value.shape().c;
      if (Tensor* g = ParentGrad(self, i)) {
        for (int n = 0; n < os.n; ++n) {
          const double* src =
              self.grad.data() + (static_cast<size_t>(n) * os.c + c0) * plane;
          double* dst = g->data() + static_cast<size_t>(n) * pc * plane;
          for (size_t k = 0; k < pc * plane; ++k) dst[k] += src[k];
        }
      }
      c0 += pc;
    }
  });
}

Var SliceChannels(const Var& x, int c0, int c1) {
  const Shape& s = x.shape();
  CheckShape(0 <= c0 && c0 < c1 && c1 <= s.c, "SliceChannels range");
  Shape os{s.n, c1 - c0, s.h, s.w};
  Tensor out(os);
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.value().data() + (static_cast<size_t>(n) * s.c + c0) * plane,
                os.c * plane, out.data() + static_cast<size_t>(n) * os.c * plane);
  }
  return MakeResult(std::move(out), {x}, [c0](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& s = g->shape();
    const Shape& os = self.value.shape();
    const size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      double* dst = g->data() + (static_cast<size_t>(n) * s.c + c0) * plane;
      const double* src = self.grad.data() + static_cast<size_t>(n) * os.c * plane;
      for (size_t k = 0; k < os.c * plane; ++k) dst[k] += src[k];
    }
  });
}

Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad) {
  const Shape& s = x.shape();
  const Shape& ws = weight.shape();
  CheckShape(ws.c == s.c && ws.h == ws.w,
             "Conv2d weight " + ws.str() + " for input " + s.str());
  CheckShape(stride >= 1 && pad >= 0, "Conv2d stride/pad");
  const int k = ws.h;
  const int co = ws.n;
  const int ho = (s.h + 2 * pad - k) / stride + 1;
  const int wo = (s.w + 2 * pad - k) / stride + 1;
  CheckShape(ho > 0 && wo > 0, "Conv2d output empty for " + s.str());
  if (bias.defined()) {
    CheckShape(bias.shape().c == co && bias.shape().numel() ==
                                           static_cast<size_t>(co),
               "Conv2d bias shape");
  }
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  const int kdim = s.c * k * k;
  const size_t ocols = static_cast<size_t>(ho) * wo;
  Tensor out({s.n, co, ho, wo});
  std::vector<double> col(direct ? 0 : static_cast<size_t>(kdim) * ocols);
  ConstMapMat wm(weight.value().data(), co, kdim);
  for (int n = 0; n < s.n; ++n) {
    const double* xn = x.value().data() + static_cast<size_t>(n) * s.c * s.plane();
    const double* cp = xn;
    if (!direct) {
      Im2Col(xn, s.c, s.h, s.w, k, stride, pad, ho, wo, col.data());
      cp = col.data();
    }
    ConstMapMat cm(cp, kdim, ocols);
    MapMat om(out.data() + static_cast<size_t>(n) * co * ocols, co, ocols);
    om.noalias() = wm * cm;
    if (bias.defined()) {
      for (int c = 0; c < co; ++c) om.row(c).array() += bias.value()[c];
    }
  }
  return MakeResult(
      std::move(out), {x, weight, bias},
      [stride, pad, k, ho, wo, direct](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const Shape& s = xv.shape();
        const int co = wv.shape().n;
        const int kdim = s.c * k * k;
        const size_t ocols = static_cast<size_t>(ho) * wo;
        Tensor* gx = ParentGrad(self, 0);
        Tensor* gw = ParentGrad(self, 1);
        Tensor* gb = ParentGrad(self, 2);
        ConstMapMat wm(wv.data(), co, kdim);
        std::vector<double> col(direct ? 0 : static_cast<size_t>(kdim) * ocols);
        std::vector<double> dcol(direct ? 0 : static_cast<size_t>(kdim) * ocols);
        for (int n = 0; n < s.n; ++n) {
          ConstMapMat gm(self.grad.data() + static_cast<size_t>(n) * co * ocols,
                         co, ocols);
          const double* xn = xv.data() + static_cast<size_t>(n) * s.c * s.plane();
          if (gw) {
            const double* cp = xn;
            if (!direct) {
              Im2Col(xn, s.c, s.h, s.w, k, stride, pad, ho, wo, col.data());
              cp = col.data();
            }
            ConstMapMat cm(cp, kdim, ocols);
            MapMat gwm(gw->data(), co, kdim);
            gwm.noalias() += gm * cm.transpose();
          }
          if (gb) {
            for (int c = 0; c < co; ++c) (*gb)[c] += gm.row(c).sum();
          }
          if (gx) {
            double* gxn = gx->data() + static_cast<size_t>(n) * s.c * s.plane();
            if (direct) {
              MapMat gxm(gxn, kdim, ocols);
              gxm.noalias() += wm.transpose() * gm;
            } else {
              MapMat dcm(dcol.data(), kdim, ocols);
              dcm.noalias() = wm.transpose() * gm;
              Col2Im(dcol.data(), s.c, s.h, s.w, k, stride, pad, ho, wo, gxn);
            }
          }
        }
      });
}

Var Linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape& s = x.shape();
  CheckShape(s.h == 1 && s.w == 1, "Linear expects {N, I, 1, 1}");
  return Conv2d(x, weight, bias, 1, 0);
}

Var Upsample2x(const Var& x) {
  const Shape& s = x.shape();
  Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor out(os);
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = x.value().data() + static_cast<size_t>(nc) * s.plane();
    double* dst = out.data() + static_cast<size_t>(nc) * os.plane();
    for (int y = 0; y < os.h; ++y) {
      for (int xx = 0; xx < os.w; ++xx) {
        dst[y * os.w + xx] = src[(y / 2) * s.w + xx / 2];
      }
    }
  }
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& s = g->shape();
    const Shape& os = self.value.shape();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = g->data() + static_cast<size_t>(nc) * s.plane();
      const double* src = self.grad.data() + static_cast<size_t>(nc) * os.plane();
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          dst[(y / 2) * s.w + xx / 2] += src[y * os.w + xx];
        }
      }
    }
  });
}

namespace {

struct Tap {
  int i0, i1;
  double f;  // weight of i1
};

std::vector<Tap> AlignCornersTaps(int in, int out) {
  std::vector<Tap> taps(out);
  for (int o = 0; o < out; ++o) {
    const double src =
        out == 1 ? 0.0 : static_cast<double>(o) * (in - 1) / (out - 1);
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::clamp(i0, 0, in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Var ResizeBilinear(const Var& x, int h, int w) {
  const Shape& s = x.shape();
  CheckShape(h > 0 && w > 0, "ResizeBilinear to empty grid");
  Shape os{s.n, s.c, h, w};
  const auto ty = AlignCornersTaps(s.h, h);
  const auto tx = AlignCornersTaps(s.w, w);
  Tensor out(os);
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = x.value().data() + static_cast<size_t>(nc) * s.plane();
    double* dst = out.data() + static_cast<size_t>(nc) * os.plane();
    for (int y = 0; y < h; ++y) {
      const Tap& a = ty[y];
      for (int xx = 0; xx < w; ++xx) {
        const Tap& b = tx[xx];
        const double top = src[a.i0 * s.w + b.i0] * (1 - b.f) +
                           src[a.i0 * s.w + b.i1] * b.f;
        const double bot = src[a.i1 * s.w + b.i0] * (1 - b.f) +
                           src[a.i1 * s.w + b.i1] * b.f;
        dst[y * w + xx] = top * (1 - a.f) + bot * a.f;
      }
    }
  }
  return MakeResult(std::move(out), {x}, [ty, tx](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& s = g->shape();
    const Shape& os = self.value.shape();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = g->data() + static_cast<size_t>(nc) * s.plane();
      const double* src = self.grad.data() + static_cast<size_t>(nc) * os.plane();
      for (int y = 0; y < os.h; ++y) {
        const Tap& a = ty[y];
        for (int xx = 0; xx < os.w; ++xx) {
          const Tap& b = tx[xx];
          const double gv = src[y * os.w + xx];
          dst[a.i0 * s.w + b.i0] += gv * (1 - a.f) * (1 - b.f);
          dst[a.i0 * s.w + b.i1] += gv * (1 - a.f) * b.f;
          dst[a.i1 * s.w + b.i0] += gv * a.f * (1 - b.f);
          dst[a.i1 * s.w + b.i1] += gv * a.f * b.f;
        }
      }
    }
  });
}

Var GroupNorm(const Var& x, int groups, const Var& gamma, const Var& beta,
              double eps) {
  const Shape& s = x.shape();
  CheckShape(groups > 0 && s.c % groups == 0,
             "GroupNorm: " + std::to_string(s.c) + " channels not divisible by " +
                 std::to_string(groups) + " groups");
  CheckShape(gamma.shape().numel() == static_cast<size_t>(s.c) &&
                 beta.shape().numel() == static_cast<size_t>(s.c),
             "GroupNorm affine shape");
  const int cpg = s.c / groups;
  const size_t gsize = static_cast<size_t>(cpg) * s.plane();
  Tensor out(s);
  Tensor xhat(s);
  std::vector<double> inv_std(static_cast<size_t>(s.n) * groups);
  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const size_t off = (static_cast<size_t>(n) * s.c + g * cpg) * s.plane();
      const double* src = x.value().data() + off;
      double mean = 0.0;
      for (size_t i = 0; i < gsize; ++i) mean += src[i];
      mean /= gsize;
      double var = 0.0;
      for (size_t i = 0; i < gsize; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= gsize;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + g] = is;
      for (int c = 0; c < cpg; ++c) {
        const int ch = g * cpg + c;
        const double ga = gamma.value()[ch];
        const double be = beta.value()[ch];
        for (size_t i = 0; i < s.plane(); ++i) {
          const size_t idx = c * s.plane() + i;
          const double xh = (src[idx] - mean) * is;
          xhat[off + idx] = xh;
          out[off + idx] = ga * xh + be;
        }
      }
    }
  }
  return MakeResult(
      std::move(out), {x, gamma, beta},
      [groups, cpg, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& self) {
        const Shape& s = self.value.shape();
        const Tensor& gv = self.parents[1]->value;
        Tensor* gx = ParentGrad(self, 0);
        Tensor* gg = ParentGrad(self, 1);
        Tensor* gb = ParentGrad(self, 2);
        const size_t plane = s.plane();
        const size_t gsize = static_cast<size_t>(cpg) * plane;
        for (int n = 0; n < s.n; ++n) {
          for (int g = 0; g < groups; ++g) {
            const size_t off = (static_cast<size_t>(n) * s.c + g * cpg) * plane;
            double sum_d = 0.0, sum_dx = 0.0;
            for (int c = 0; c < cpg; ++c) {
              const int ch = g * cpg + c;
              for (size_t i = 0; i < plane; ++i) {
                const size_t idx = off + c * plane + i;
                const double dy = self.grad[idx];
                if (gg) (*gg)[ch] += dy * xhat[idx];
                if (gb) (*gb)[ch] += dy;
                const double d = dy * gv[ch];
                sum_d += d;
                sum_dx += d * xhat[idx];
              }
            }
            if (!gx) continue;
            const double md = sum_d / gsize;
            const double mdx = sum_dx / gsize;
            const double is = inv_std[n * groups + g];
            for (int c = 0; c < cpg; ++c) {
              const int ch = g * cpg + c;
              for (size_t i = 0; i < plane; ++i) {
                const size_t idx = off + c * plane + i;
                const double d = self.grad[idx] * gv[ch];
                (*gx)[idx] += is * (d - md - xhat[idx] * mdx);
              }
            }
          }
        }
      });
}

Var SoftmaxChannels(const Var& x) {
  const Shape& s = x.shape();
  Tensor out(s);
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (size_t i = 0; i < plane; ++i) {
      double mx = -INFINITY;
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, x.value()[(n * s.c + c) * plane + i]);
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const size_t idx = (static_cast<size_t>(n) * s.c + c) * plane + i;
        out[idx] = std::exp(x.value()[idx] - mx);
        z += out[idx];
      }
      for (int c = 0; c < s.c; ++c) out[(n * s.c + c) * plane + i] /= z;
    }
  }
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& s = self.value.shape();
    const size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (size_t i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const size_t idx = (static_cast<size_t>(n) * s.c + c) * plane + i;
          dot += self.value[idx] * self.grad[idx];
        }
        for (int c = 0; c < s.c; ++c) {
          const size_t idx = (static_cast<size_t>(n) * s.c + c) * plane + i;
          (*g)[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Var GatherCodes(const Var& codebook, const std::vector<int>& index,
                Shape index_shape) {
  const Shape& cs = codebook.shape();
  const int m = cs.n;
  const int d = cs.c;
  CheckShape(index.size() == static_cast<size_t>(index_shape.n) *
                                 index_shape.h * index_shape.w,
             "GatherCodes index size");
  Shape os{index_shape.n, d, index_shape.h, index_shape.w};
  Tensor out(os);
  const size_t plane = os.plane();
  for (int n = 0; n < os.n; ++n) {
    for (size_t i = 0; i < plane; ++i) {
      const int e = index[n * plane + i];
      CheckShape(e >= 0 && e < m, "GatherCodes entry out of range");
      for (int c = 0; c < d; ++c) {
        out[(static_cast<size_t>(n) * d + c) * plane + i] =
            codebook.value()[static_cast<size_t>(e) * d + c];
      }
    }
  }
  return MakeResult(std::move(out), {codebook}, [index](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const Shape& os = self.value.shape();
    const size_t plane = os.plane();
    for (int n = 0; n < os.n; ++n) {
      for (size_t i = 0; i < plane; ++i) {
        const int e = index[n * plane + i];
        for (int c = 0; c < os.c; ++c) {
          (*g)[static_cast<size_t>(e) * os.c + c] +=
              self.grad[(static_cast<size_t>(n) * os.c + c) * plane + i];
        }
      }
    }
  });
}

Var Sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().vec()) acc += v;
  return MakeResult(Tensor({1, 1, 1, 1}, acc), {x}, [](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    const double gv = self.grad[0];
    for (size_t i = 0; i < g->size(); ++i) (*g)[i] += gv;
  });
}

Var SumPerSample(const Var& x) {
  const Shape& s = x.shape();
  const size_t per = s.numel() / s.n;
  Tensor out({s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (size_t i = 0; i < per; ++i) acc += x.value()[n * per + i];
    out[n] = acc;
  }
  return MakeResult(std::move(out), {x}, [per](Node& self) {
    Tensor* g = ParentGrad(self, 0);
    if (!g) return;
    for (size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i / per];
  });
}

Var Mean(const Var& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var MeanSquaredError(const Var& a, const Var& b) {
  return Mean(Square(Sub(a, b)));
}

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {
double NormalPdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}
}  // namespace

double BinMassGaussian(double residual, double sigma) {
  const double v = std::abs(residual);
  return NormalCdf((0.5 - v) / sigma) - NormalCdf((-0.5 - v) / sigma);
}

Var GaussianLikelihood(const Var& y_hat, const Var& mu, const Var& sigma,
                       double p_min) {
  CheckShape(y_hat.shape() == mu.shape() && mu.shape() == sigma.shape(),
             "GaussianLikelihood shapes");
  Tensor out(y_hat.shape());
  for (size_t i = 0; i < out.size(); ++i) {
    const double p =
        BinMassGaussian(y_hat.value()[i] - mu.value()[i], sigma.value()[i]);
    out[i] = std::max(p, p_min);
  }
  return MakeResult(std::move(out), {y_hat, mu, sigma}, [p_min](Node& self) {
    const Tensor& yv = self.parents[0]->value;
    const Tensor& mv = self.parents[1]->value;
    const Tensor& sv = self.parents[2]->value;
    Tensor* gy = ParentGrad(self, 0);
    Tensor* gm = ParentGrad(self, 1);
    Tensor* gs = ParentGrad(self, 2);
    for (size_t i = 0; i < yv.size(); ++i) {
      const double r = yv[i] - mv[i];
      const double sg = sv[i];
      const double p = BinMassGaussian(r, sg);
      if (p < p_min) continue;
      const double u = (r + 0.5) / sg;
      const double l = (r - 0.5) / sg;
      const double dr = (NormalPdf(u) - NormalPdf(l)) / sg;
      const double ds = (-u * NormalPdf(u) + l * NormalPdf(l)) / sg;
      const double g = self.grad[i];
      if (gy) (*gy)[i] += g * dr;
      if (gm) (*gm)[i] -= g * dr;
      if (gs) (*gs)[i] += g * ds;
    }
  });
}

double LogisticMixtureMass(const double* logits, const double* locs,
                           const double* log_scales, int J, double t) {
  double mx = -INFINITY;
  for (int j = 0; j < J; ++j) mx = std::max(mx, logits[j]);
  double z = 0.0;
  for (int j = 0; j < J; ++j) z += std::exp(logits[j] - mx);
  double mass = 0.0;
  for (int j = 0; j < J; ++j) {
    const double pi = std::exp(logits[j] - mx) / z;
    const double inv_s = std::exp(-log_scales[j]);
    const double c = t - locs[j];
    const double u = (c + 0.5) * inv_s;
    const double l = (c - 0.5) * inv_s;
    // Evaluate on the side where the sigmoids are far from 1.
    const double d = c > 0 ? SigmoidScalar(-l) - SigmoidScalar(-u)
                           : SigmoidScalar(u) - SigmoidScalar(l);
    mass += pi * d;
  }
  return mass;
}

Var LogisticMixtureLikelihood(const Var& t, const Var& params, double p_min) {
  const Shape& s = t.shape();
  const Shape& ps = params.shape();
  CheckShape(ps.n == 1 && ps.c == s.c && ps.h == 3,
             "LogisticMixtureLikelihood params " + ps.str() + " for " + s.str());
  const int J = ps.w;
  const size_t plane = s.plane();
  Tensor out(s);
  const double* pv = params.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* row = pv + static_cast<size_t>(c) * 3 * J;
      for (size_t i = 0; i < plane; ++i) {
        const size_t idx = (static_cast<size_t>(n) * s.c + c) * plane + i;
        out[idx] = std::max(
            LogisticMixtureMass(row, row + J, row + 2 * J, J, t.value()[idx]),
            p_min);
      }
    }
  }
  return MakeResult(std::move(out), {t, params}, [J, p_min](Node& self) {
    const Tensor& tv = self.parents[0]->value;
    const Tensor& pv = self.parents[1]->value;
    const Shape& s = tv.shape();
    const size_t plane = s.plane();
    Tensor* gt = ParentGrad(self, 0);
    Tensor* gp = ParentGrad(self, 1);
    std::vector<double> pi(J), d(J);
    for (int c = 0; c < s.c; ++c) {
      const double* logits = pv.data() + static_cast<size_t>(c) * 3 * J;
      const double* locs = logits + J;
      const double* lsc = logits + 2 * J;
      double mx = -INFINITY;
      for (int j = 0; j < J; ++j) mx = std::max(mx, logits[j]);
      double z = 0.0;
      for (int j = 0; j < J; ++j) z += std::exp(logits[j] - mx);
      for (int j = 0; j < J; ++j) pi[j] = std::exp(logits[j] - mx) / z;
      for (int n = 0; n < s.n; ++n) {
        for (size_t i = 0; i < plane; ++i) {
          const size_t idx = (static_cast<size_t>(n) * s.c + c) * plane + i;
          if (self.value[idx] <= p_min) continue;
          const double g = self.grad[idx];
          const double tt = tv[idx];
          double mass = 0.0;
          double dt = 0.0;
          for (int j = 0; j < J; ++j) {
            const double inv_s = std::exp(-lsc[j]);
            const double cc = tt - locs[j];
            const double u = (cc + 0.5) * inv_s;
            const double l = (cc - 0.5) * inv_s;
            const double su = SigmoidScalar(u), sl = SigmoidScalar(l);
            d[j] = cc > 0 ? SigmoidScalar(-l) - SigmoidScalar(-u) : su - sl;
            mass += pi[j] * d[j];
            const double du = su * (1 - su);
            const double dl = sl * (1 - sl);
            // d d_j / d t
            const double ddt = (du - dl) * inv_s;
            dt += pi[j] * ddt;
            if (gp) {
              double* gl = gp->data() + static_cast<size_t>(c) * 3 * J;
              gl[J + j] -= g * pi[j] * ddt;
              // d/d log_scale: du/dls = -u, dl/dls = -l
              gl[2 * J + j] += g * pi[j] * (-u * du + l * dl);
            }
          }
          if (gt) (*gt)[idx] += g * dt;
          if (gp) {
            double* gl = gp->data() + static_cast<size_t>(c) * 3 * J;
            for (int j = 0; j < J; ++j) gl[j] += g * pi[j] * (d[j] - mass);
          }
        }
      }
    }
  });
}

}  // namespace afpgic::ag
