// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace dic {
namespace {

thread_local bool g_no_grad = false;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> xs) {
  if (g_no_grad) return false;
  return std::any_of(xs.begin(), xs.end(),
                     [](const Var<T>* v) { return v != nullptr && v->requires_grad(); });
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> fn, bool track) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
Tensor<T>* grad_of(const NodePtr<T>& n) {
  return n->requires_grad ? &n->ensure_grad() : nullptr;
}

template <typename T>
Var<T> scalar_var(T v, std::vector<NodePtr<T>> parents, std::function<void(Node<T>&)> fn,
                  bool track) {
  return make_result(Tensor<T>({1, 1, 1, 1}, v), std::move(parents), std::move(fn), track);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::enabled() { return g_no_grad; }

template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward: loss must be a single element");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

namespace ag {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias, ConvGeometry g) {
  Tensor<T> y;
  kernels::conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, g, y);
  const bool track = any_requires_grad<T>({&x, &weight, bias});
  std::vector<NodePtr<T>> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  return make_result<T>(
      std::move(y), parents,
      [g](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Tensor<T>* gb = self.parents.size() > 2 ? grad_of(self.parents[2]) : nullptr;
        kernels::conv2d_backward(px->value, pw->value, self.grad, g, grad_of(px), grad_of(pw), gb);
      },
      track);
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias,
                        ConvGeometry g) {
  Tensor<T> y;
  kernels::conv_transpose2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr,
                                    g, y);
  const bool track = any_requires_grad<T>({&x, &weight, bias});
  std::vector<NodePtr<T>> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  return make_result<T>(
      std::move(y), parents,
      [g](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Tensor<T>* gb = self.parents.size() > 2 ? grad_of(self.parents[2]) : nullptr;
        kernels::conv_transpose2d_backward(px->value, pw->value, self.grad, g, grad_of(px),
                                           grad_of(pw), gb);
      },
      track);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  expect_shape(b.shape(), a.shape(), "add");
  Tensor<T> y = a.value();
  const T* bv = b.value().data();
  T* yv = y.data();
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) yv[i] += bv[i];
  return make_result<T>(
      std::move(y), {a.node(), b.node()},
      [](Node<T>& self) {
        for (auto& p : self.parents) {
          if (Tensor<T>* g = grad_of(p)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
          }
        }
      },
      any_requires_grad<T>({&a, &b}));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  expect_shape(b.shape(), a.shape(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result<T>(
      std::move(y), {a.node(), b.node()},
      [](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Tensor<T>* g = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
      },
      any_requires_grad<T>({&a, &b}));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  expect_shape(b.shape(), a.shape(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result<T>(
      std::move(y), {a.node(), b.node()},
      [](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (Tensor<T>* g = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (Tensor<T>* g = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
      },
      any_requires_grad<T>({&a, &b}));
}

template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift) {
  Tensor<T> y = x.value();
  for (auto& v : y.vec()) v = scale * v + shift;
  return make_result<T>(
      std::move(y), {x.node()},
      [scale](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * self.grad[i];
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> sum(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ShapeError("sum: no operands");
  Tensor<T> y = xs.front().value();
  std::vector<NodePtr<T>> parents{xs.front().node()};
  bool track = !g_no_grad && xs.front().requires_grad();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    expect_shape(xs[k].shape(), y.shape(), "sum");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += xs[k].value()[i];
    parents.push_back(xs[k].node());
    track = track || (!g_no_grad && xs[k].requires_grad());
  }
  return make_result<T>(
      std::move(y), std::move(parents),
      [](Node<T>& self) {
        for (auto& p : self.parents)
          if (Tensor<T>* g = grad_of(p))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      },
      track);
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> y = x.value();
  for (auto& v : y.vec()) v = v > T(0) ? v : v * slope;
  return make_result<T>(
      std::move(y), {x.node()},
      [slope](Node<T>& self) {
        const auto& xv = self.parents[0]->value;
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += xv[i] > T(0) ? self.grad[i] : slope * self.grad[i];
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y = x.value();
  for (auto& v : y.vec()) v = T(1) / (T(1) + std::exp(-v));
  return make_result<T>(
      std::move(y), {x.node()},
      [](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T s = self.value[i];
          g[i] += self.grad[i] * s * (T(1) - s);
        }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no operands");
  Shape s = xs.front().shape();
  int channels = 0;
  bool track = false;
  std::vector<NodePtr<T>> parents;
  for (const auto& v : xs) {
    const Shape& vs = v.shape();
    if (vs.n != s.n || vs.h != s.h || vs.w != s.w) {
      throw ShapeError("concat_channels: " + vs.str() + " vs " + s.str());
    }
    channels += vs.c;
    parents.push_back(v.node());
    track = track || (!g_no_grad && v.requires_grad());
  }
  s.c = channels;
  Tensor<T> y(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    int offset = 0;
    for (const auto& v : xs) {
      const int c = v.shape().c;
      std::copy_n(v.value().plane(n, 0), c * plane, y.plane(n, offset));
      offset += c;
    }
  }
  return make_result<T>(
      std::move(y), std::move(parents),
      [](Node<T>& self) {
        const Shape& s = self.value.shape();
        const std::size_t plane = s.plane();
        for (int n = 0; n < s.n; ++n) {
          int offset = 0;
          for (auto& p : self.parents) {
            const int c = p->value.c();
            if (Tensor<T>* g = grad_of(p)) {
              const T* src = self.grad.plane(n, offset);
              T* dst = g->plane(n, 0);
              for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
            }
            offset += c;
          }
        }
      },
      track);
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape& xs = x.shape();
  if (begin < 0 || count < 0 || begin + count > xs.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") of " + xs.str());
  }
  Tensor<T> y({xs.n, count, xs.h, xs.w});
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n) std::copy_n(x.value().plane(n, begin), count * plane, y.plane(n, 0));
  return make_result<T>(
      std::move(y), {x.node()},
      [begin, count](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const std::size_t plane = g.shape().plane();
        for (int n = 0; n < g.n(); ++n) {
          const T* src = self.grad.plane(n, 0);
          T* dst = g.plane(n, begin);
          for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
        }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  const Shape& xs = x.shape();
  if (r < 1 || xs.c % (r * r) != 0) throw ShapeError("pixel_shuffle: channels " + xs.str());
  const int oc = xs.c / (r * r);
  Tensor<T> y({xs.n, oc, xs.h * r, xs.w * r});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const T* src = x.value().plane(n, c * r * r + i * r + j);
          for (int yy = 0; yy < xs.h; ++yy)
            for (int xx = 0; xx < xs.w; ++xx) y.at(n, c, yy * r + i, xx * r + j) = src[yy * xs.w + xx];
        }
  return make_result<T>(
      std::move(y), {x.node()},
      [r, oc](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (int n = 0; n < g.n(); ++n)
          for (int c = 0; c < oc; ++c)
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < r; ++j) {
                T* dst = g.plane(n, c * r * r + i * r + j);
                for (int yy = 0; yy < g.h(); ++yy)
                  for (int xx = 0; xx < g.w(); ++xx)
                    dst[yy * g.w() + xx] += self.grad.at(n, c, yy * r + i, xx * r + j);
              }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> max_pool2(const Var<T>& x) {
  const Shape& xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) throw ShapeError("max_pool2: odd extent " + xs.str());
  Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<T> y(os);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(os.numel());
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int yy = 0; yy < os.h; ++yy)
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          std::size_t best = x.value().index(n, c, 2 * yy, 2 * xx);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = x.value().index(n, c, 2 * yy + dy, 2 * xx + dx);
              if (x.value()[idx] > x.value()[best]) best = idx;
            }
          y[o] = x.value()[best];
          (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
  return make_result<T>(
      std::move(y), {x.node()},
      [argmax](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += self.grad[i];
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
  const Shape& xs = x.shape();
  Tensor<T> y({xs.n, xs.c, xs.h * 2, xs.w * 2});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int yy = 0; yy < 2 * xs.h; ++yy)
        for (int xx = 0; xx < 2 * xs.w; ++xx) y.at(n, c, yy, xx) = x.value().at(n, c, yy / 2, xx / 2);
  return make_result<T>(
      std::move(y), {x.node()},
      [](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        for (int n = 0; n < self.grad.n(); ++n)
          for (int c = 0; c < self.grad.c(); ++c)
            for (int yy = 0; yy < self.grad.h(); ++yy)
              for (int xx = 0; xx < self.grad.w(); ++xx)
                g.at(n, c, yy / 2, xx / 2) += self.grad.at(n, c, yy, xx);
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape& xs = x.shape();
  Tensor<T> y({xs.n, xs.c, 1, 1});
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      T acc = T(0);
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      y.at(n, c, 0, 0) = acc / static_cast<T>(plane);
    }
  return make_result<T>(
      std::move(y), {x.node()},
      [](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const std::size_t plane = g.shape().plane();
        for (int n = 0; n < g.n(); ++n)
          for (int c = 0; c < g.c(); ++c) {
            const T d = self.grad.at(n, c, 0, 0) / static_cast<T>(plane);
            T* dst = g.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] += d;
          }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> channel_softmax(const Var<T>& x) {
  const Shape& xs = x.shape();
  Tensor<T> y(xs);
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      T peak = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < xs.c; ++c) {
        const T v = x.value().plane(n, c)[i];
        if (std::isnan(v)) throw std::domain_error("channel_softmax: NaN input");
        peak = std::max(peak, v);
      }
      T total = T(0);
      for (int c = 0; c < xs.c; ++c) {
        const T e = std::exp(x.value().plane(n, c)[i] - peak);
        y.plane(n, c)[i] = e;
        total += e;
      }
      for (int c = 0; c < xs.c; ++c) y.plane(n, c)[i] /= total;
    }
  return make_result<T>(
      std::move(y), {x.node()},
      [](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const Shape& s = self.value.shape();
        const std::size_t plane = s.plane();
        for (int n = 0; n < s.n; ++n)
          for (std::size_t i = 0; i < plane; ++i) {
            T dot = T(0);
            for (int c = 0; c < s.c; ++c) dot += self.grad.plane(n, c)[i] * self.value.plane(n, c)[i];
            for (int c = 0; c < s.c; ++c)
              g.plane(n, c)[i] += self.value.plane(n, c)[i] * (self.grad.plane(n, c)[i] - dot);
          }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> channel_group_sum(const Var<T>& x, const std::vector<std::vector<int>>& groups) {
  const Shape& xs = x.shape();
  for (const auto& grp : groups)
    for (int k : grp)
      if (k < 0 || k >= xs.c) throw ShapeError("channel_group_sum: channel index out of range");
  const int out_c = static_cast<int>(groups.size());
  Tensor<T> y({xs.n, out_c, xs.h, xs.w});
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int p = 0; p < out_c; ++p) {
      T* dst = y.plane(n, p);
      for (int k : groups[static_cast<std::size_t>(p)]) {
        const T* src = x.value().plane(n, k);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    }
  return make_result<T>(
      std::move(y), {x.node()},
      [groups](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const std::size_t plane = g.shape().plane();
        for (int n = 0; n < g.n(); ++n)
          for (std::size_t p = 0; p < groups.size(); ++p) {
            const T* src = self.grad.plane(n, static_cast<int>(p));
            for (int k : groups[p]) {
              T* dst = g.plane(n, k);
              for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
          }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> weighted_group_sum(const Var<T>& features, const Var<T>& weights) {
  const Shape& fs = features.shape();
  const Shape& ws = weights.shape();
  if (ws.n != fs.n || ws.h != fs.h || ws.w != fs.w || ws.c < 1 || fs.c % ws.c != 0) {
    throw ShapeError("weighted_group_sum: features " + fs.str() + " vs weights " + ws.str());
  }
  const int parts = ws.c;
  const int width = fs.c / parts;
  Tensor<T> y({fs.n, width, fs.h, fs.w});
  const std::size_t plane = fs.plane();
  for (int n = 0; n < fs.n; ++n)
    for (int p = 0; p < parts; ++p) {
      const T* wp = weights.value().plane(n, p);
      for (int c = 0; c < width; ++c) {
        const T* fp = features.value().plane(n, p * width + c);
        T* dst = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += wp[i] * fp[i];
      }
    }
  return make_result<T>(
      std::move(y), {features.node(), weights.node()},
      [parts, width](Node<T>& self) {
        const auto& fv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        Tensor<T>* gf = grad_of(self.parents[0]);
        Tensor<T>* gw = grad_of(self.parents[1]);
        const std::size_t plane = fv.shape().plane();
        for (int n = 0; n < fv.n(); ++n)
          for (int p = 0; p < parts; ++p) {
            const T* wp = wv.plane(n, p);
            for (int c = 0; c < width; ++c) {
              const T* go = self.grad.plane(n, c);
              const T* fp = fv.plane(n, p * width + c);
              if (gf) {
                T* dst = gf->plane(n, p * width + c);
                for (std::size_t i = 0; i < plane; ++i) dst[i] += go[i] * wp[i];
              }
              if (gw) {
                T* dst = gw->plane(n, p);
                for (std::size_t i = 0; i < plane; ++i) dst[i] += go[i] * fp[i];
              }
            }
          }
      },
      any_requires_grad<T>({&features, &weights}));
}

template <typename T>
Var<T> scale_channels(const Var<T>& x, const std::vector<T>& factors) {
  const Shape& xs = x.shape();
  if (static_cast<int>(factors.size()) != xs.c) throw ShapeError("scale_channels: factor count");
  Tensor<T> y = x.value();
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      T* dst = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] *= factors[static_cast<std::size_t>(c)];
    }
  return make_result<T>(
      std::move(y), {x.node()},
      [factors](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const std::size_t plane = g.shape().plane();
        for (int n = 0; n < g.n(); ++n)
          for (int c = 0; c < g.c(); ++c) {
            const T* src = self.grad.plane(n, c);
            T* dst = g.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i] * factors[static_cast<std::size_t>(c)];
          }
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  expect_shape(b.shape(), a.shape(), "mse");
  const std::size_t n = a.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]);
    acc += d * d;
  }
  return scalar_var<T>(
      static_cast<T>(acc / static_cast<double>(n)), {a.node(), b.node()},
      [n](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const T k = T(2) * self.grad[0] / static_cast<T>(n);
        if (Tensor<T>* g = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < n; ++i) (*g)[i] += k * (av[i] - bv[i]);
        if (Tensor<T>* g = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < n; ++i) (*g)[i] -= k * (av[i] - bv[i]);
      },
      any_requires_grad<T>({&a, &b}));
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  expect_shape(b.shape(), a.shape(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]));
  return scalar_var<T>(
      static_cast<T>(acc / static_cast<double>(n)), {a.node(), b.node()},
      [n](Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const T k = self.grad[0] / static_cast<T>(n);
        auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
        if (Tensor<T>* g = grad_of(self.parents[0]))
          for (std::size_t i = 0; i < n; ++i) (*g)[i] += k * sign(av[i] - bv[i]);
        if (Tensor<T>* g = grad_of(self.parents[1]))
          for (std::size_t i = 0; i < n; ++i) (*g)[i] -= k * sign(av[i] - bv[i]);
      },
      any_requires_grad<T>({&a, &b}));
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x.value()[i]);
  return scalar_var<T>(
      static_cast<T>(acc / static_cast<double>(n)), {x.node()},
      [n](Node<T>& self) {
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const T k = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) g[i] += k;
      },
      any_requires_grad<T>({&x}));
}

template <typename T>
Var<T> mean_neg_log(const Var<T>& p, T eps) {
  const std::size_t n = p.value().size();
  const T lo = eps;
  const T hi = T(1) - eps;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T v = std::clamp(p.value()[i], lo, hi);
    acc -= std::log(static_cast<double>(v));
  }
  return scalar_var<T>(
      static_cast<T>(acc / static_cast<double>(n)), {p.node()},
      [n, lo, hi](Node<T>& self) {
        const auto& pv = self.parents[0]->value;
        Tensor<T>& g = self.parents[0]->ensure_grad();
        const T k = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          if (pv[i] > lo && pv[i] < hi) g[i] -= k / pv[i];
        }
      },
      any_requires_grad<T>({&p}));
}

}  // namespace ag

#define DIC_INSTANTIATE_AUTOGRAD(T)                                                           \
  template void backward<T>(const Var<T>&);                                                  \
  template Var<T> ag::conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>*, ConvGeometry);   \
  template Var<T> ag::conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>*,        \
                                          ConvGeometry);                                      \
  template Var<T> ag::add<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> ag::sub<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> ag::mul<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> ag::affine<T>(const Var<T>&, T, T);                                         \
  template Var<T> ag::sum<T>(std::span<const Var<T>>);                                        \
  template Var<T> ag::leaky_relu<T>(const Var<T>&, T);                                        \
  template Var<T> ag::sigmoid<T>(const Var<T>&);                                              \
  template Var<T> ag::concat_channels<T>(std::span<const Var<T>>);                            \
  template Var<T> ag::slice_channels<T>(const Var<T>&, int, int);                             \
  template Var<T> ag::pixel_shuffle<T>(const Var<T>&, int);                                   \
  template Var<T> ag::max_pool2<T>(const Var<T>&);                                            \
  template Var<T> ag::upsample_nearest2<T>(const Var<T>&);                                    \
  template Var<T> ag::global_avg_pool<T>(const Var<T>&);                                      \
  template Var<T> ag::channel_softmax<T>(const Var<T>&);                                      \
  template Var<T> ag::channel_group_sum<T>(const Var<T>&, const std::vector<std::vector<int>>&); \
  template Var<T> ag::weighted_group_sum<T>(const Var<T>&, const Var<T>&);                    \
  template Var<T> ag::scale_channels<T>(const Var<T>&, const std::vector<T>&);                \
  template Var<T> ag::mse<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> ag::mean_abs_diff<T>(const Var<T>&, const Var<T>&);                         \
  template Var<T> ag::mean<T>(const Var<T>&);                                                 \
  template Var<T> ag::mean_neg_log<T>(const Var<T>&, T);

DIC_INSTANTIATE_AUTOGRAD(float)
DIC_INSTANTIATE_AUTOGRAD(double)

#undef DIC_INSTANTIATE_AUTOGRAD

}  // namespace dic
