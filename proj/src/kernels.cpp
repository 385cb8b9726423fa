// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dic {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

struct Window {
  int channels, in_h, in_w, kh, kw, stride, pad, out_h, out_w;
  [[nodiscard]] bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad == 0;
  }
  [[nodiscard]] int rows() const { return channels * kh * kw; }
  [[nodiscard]] int cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox·stride − pad + k lies inside [0, in).
inline void valid_range(int k, int stride, int pad, int in, int out, int& lo, int& hi) {
  const int first = pad - k;  // ox·stride >= first
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last = in - 1 + pad - k;  // ox·stride <= last
  hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* img, const Window& w, T* col) {
  for (int c = 0; c < w.channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * w.in_h * w.in_w;
    for (int ky = 0; ky < w.kh; ++ky) {
      for (int kx = 0; kx < w.kw; ++kx) {
        T* row = col + static_cast<std::size_t>((c * w.kh + ky) * w.kw + kx) * w.cols();
        int lo, hi;
        valid_range(kx, w.stride, w.pad, w.in_w, w.out_w, lo, hi);
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.stride - w.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * w.out_w;
          if (iy < 0 || iy >= w.in_h) {
            std::fill(dst, dst + w.out_w, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          std::fill(dst + hi, dst + w.out_w, T(0));
          const T* src = plane + static_cast<std::size_t>(iy) * w.in_w;
          const int offset = kx - w.pad;
          if (w.stride == 1) {
            if (hi > lo) std::copy(src + lo + offset, src + hi + offset, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * w.stride + offset];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Window& w, T* img) {
  for (int c = 0; c < w.channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * w.in_h * w.in_w;
    for (int ky = 0; ky < w.kh; ++ky) {
      for (int kx = 0; kx < w.kw; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * w.kh + ky) * w.kw + kx) * w.cols();
        int lo, hi;
        valid_range(kx, w.stride, w.pad, w.in_w, w.out_w, lo, hi);
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.stride - w.pad + ky;
          if (iy < 0 || iy >= w.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * w.out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * w.in_w;
          const int offset = kx - w.pad;
          if (w.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox + offset] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * w.stride + offset] += src[ox];
          }
        }
      }
    }
  }
}

// Per-thread scratch that is reused across calls; contents are never assumed zero.
template <typename T>
T* scratch(int slot, std::size_t len) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < len) b.resize(len);
  return b.data();
}

void check_conv_args(const Shape& x, const Shape& weight, const ConvGeometry& g) {
  if (g.groups < 1 || x.c % g.groups != 0 || weight.n % g.groups != 0 ||
      weight.c * g.groups != x.c) {
    throw ShapeError("conv2d: input " + x.str() + " incompatible with weight " + weight.str() +
                     " at groups=" + std::to_string(g.groups));
  }
}

void check_convt_args(const Shape& x, const Shape& weight, const ConvGeometry& g) {
  if (g.groups < 1 || x.c % g.groups != 0 || weight.n != x.c) {
    throw ShapeError("conv_transpose2d: input " + x.str() + " incompatible with weight " +
                     weight.str() + " at groups=" + std::to_string(g.groups));
  }
}

// Sums per-sample partial weight gradients in sample order so the result does
// not depend on the thread count.
template <typename T>
void reduce_partials(const std::vector<T>& partials, int samples, Tensor<T>& grad_w) {
  const std::size_t len = grad_w.size();
  for (int n = 0; n < samples; ++n) {
    const T* src = partials.data() + static_cast<std::size_t>(n) * len;
    T* dst = grad_w.data();
    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
  }
}

}  // namespace

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    const ConvGeometry& g, Tensor<T>& y) {
  check_conv_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout = weight.n();
  const int cout_g = cout / g.groups;
  const Window win{cin_g, x.h(), x.w(), weight.h(), weight.w(), g.stride, g.pad,
                   conv_out_size(x.h(), weight.h(), g), conv_out_size(x.w(), weight.w(), g)};
  if (win.out_h < 1 || win.out_w < 1) throw ShapeError("conv2d: empty output for " + x.shape().str());
  y = Tensor<T>({x.n(), cout, win.out_h, win.out_w});
  const int batch = x.n();
  const std::size_t k = static_cast<std::size_t>(win.rows());
  const std::size_t p = static_cast<std::size_t>(win.cols());

#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    T* col = win.pointwise() ? nullptr : scratch<T>(0, k * p);
    for (int gi = 0; gi < g.groups; ++gi) {
      const T* xin = x.plane(n, gi * cin_g);
      const T* colp = xin;
      if (!win.pointwise()) {
        im2col(xin, win, col);
        colp = col;
      }
      MapConstMat<T> wmat(weight.data() + static_cast<std::size_t>(gi) * cout_g * k, cout_g, k);
      MapConstMat<T> cmat(colp, k, p);
      MapMat<T> ymat(y.plane(n, gi * cout_g), cout_g, p);
      ymat.noalias() = wmat * cmat;
    }
    if (bias != nullptr) {
      for (int co = 0; co < cout; ++co) {
        T* dst = y.plane(n, co);
        const T b = (*bias)[co];
        for (std::size_t i = 0; i < p; ++i) dst[i] += b;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     const ConvGeometry& g, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_b) {
  check_conv_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout = weight.n();
  const int cout_g = cout / g.groups;
  const Window win{cin_g, x.h(), x.w(), weight.h(), weight.w(), g.stride, g.pad,
                   grad_y.h(), grad_y.w()};
  const int batch = x.n();
  const std::size_t k = static_cast<std::size_t>(win.rows());
  const std::size_t p = static_cast<std::size_t>(win.cols());
  const std::size_t wlen = weight.size();
  std::vector<T> partials;
  if (grad_w != nullptr) partials.assign(wlen * static_cast<std::size_t>(batch), T(0));

#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    T* col = win.pointwise() ? nullptr : scratch<T>(0, k * p);
    T* gcol = win.pointwise() || grad_x == nullptr ? nullptr : scratch<T>(1, k * p);
    for (int gi = 0; gi < g.groups; ++gi) {
      MapConstMat<T> wmat(weight.data() + static_cast<std::size_t>(gi) * cout_g * k, cout_g, k);
      MapConstMat<T> gymat(grad_y.plane(n, gi * cout_g), cout_g, p);
      if (grad_w != nullptr) {
        const T* xin = x.plane(n, gi * cin_g);
        const T* colp = xin;
        if (!win.pointwise()) {
          im2col(xin, win, col);
          colp = col;
        }
        MapConstMat<T> cmat(colp, k, p);
        MapMat<T> gw(partials.data() + n * wlen + static_cast<std::size_t>(gi) * cout_g * k,
                     cout_g, k);
        gw.noalias() = gymat * cmat.transpose();
      }
      if (grad_x != nullptr) {
        if (win.pointwise()) {
          MapMat<T> gx(grad_x->plane(n, gi * cin_g), k, p);
          gx.noalias() += wmat.transpose() * gymat;
        } else {
          MapMat<T> gc(gcol, k, p);
          gc.noalias() = wmat.transpose() * gymat;
          col2im(gcol, win, grad_x->plane(n, gi * cin_g));
        }
      }
    }
  }
  if (grad_w != nullptr) reduce_partials(partials, batch, *grad_w);
  if (grad_b != nullptr) {
    for (int n = 0; n < batch; ++n) {
      for (int co = 0; co < cout; ++co) {
        const T* src = grad_y.plane(n, co);
        T acc = T(0);
        for (std::size_t i = 0; i < p; ++i) acc += src[i];
        (*grad_b)[co] += acc;
      }
    }
  }
}

template <typename T>
void conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                              const ConvGeometry& g, Tensor<T>& y) {
  check_convt_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout_g = weight.c();
  const int cout = cout_g * g.groups;
  const int out_h = conv_transpose_out_size(x.h(), weight.h(), g);
  const int out_w = conv_transpose_out_size(x.w(), weight.w(), g);
  if (out_h < 1 || out_w < 1) throw ShapeError("conv_transpose2d: empty output");
  // The transposed convolution is the adjoint of a convolution from y-space to x-space.
  const Window win{cout_g, out_h, out_w, weight.h(), weight.w(), g.stride, g.pad, x.h(), x.w()};
  if (conv_out_size(out_h, weight.h(), g) != x.h()) {
    throw ShapeError("conv_transpose2d: geometry is not invertible for " + x.shape().str());
  }
  y = Tensor<T>({x.n(), cout, out_h, out_w});
  const int batch = x.n();
  const std::size_t k = static_cast<std::size_t>(win.rows());
  const std::size_t p = static_cast<std::size_t>(win.cols());

#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    T* col = win.pointwise() ? nullptr : scratch<T>(0, k * p);
    for (int gi = 0; gi < g.groups; ++gi) {
      MapConstMat<T> wmat(weight.data() + static_cast<std::size_t>(gi) * cin_g * k, cin_g, k);
      MapConstMat<T> xmat(x.plane(n, gi * cin_g), cin_g, p);
      if (win.pointwise()) {
        MapMat<T> ymat(y.plane(n, gi * cout_g), k, p);
        ymat.noalias() = wmat.transpose() * xmat;
      } else {
        MapMat<T> cmat(col, k, p);
        cmat.noalias() = wmat.transpose() * xmat;
        col2im(col, win, y.plane(n, gi * cout_g));
      }
    }
    if (bias != nullptr) {
      const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
      for (int co = 0; co < cout; ++co) {
        T* dst = y.plane(n, co);
        const T b = (*bias)[co];
        for (std::size_t i = 0; i < plane; ++i) dst[i] += b;
      }
    }
  }
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_y, const ConvGeometry& g,
                               Tensor<T>* grad_x, Tensor<T>* grad_w, Tensor<T>* grad_b) {
  check_convt_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout_g = weight.c();
  const int cout = cout_g * g.groups;
  const Window win{cout_g, grad_y.h(), grad_y.w(), weight.h(), weight.w(), g.stride, g.pad,
                   x.h(), x.w()};
  const int batch = x.n();
  const std::size_t k = static_cast<std::size_t>(win.rows());
  const std::size_t p = static_cast<std::size_t>(win.cols());
  const std::size_t wlen = weight.size();
  std::vector<T> partials;
  if (grad_w != nullptr) partials.assign(wlen * static_cast<std::size_t>(batch), T(0));

#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    T* col = win.pointwise() ? nullptr : scratch<T>(0, k * p);
    for (int gi = 0; gi < g.groups; ++gi) {
      const T* gyin = grad_y.plane(n, gi * cout_g);
      const T* colp = gyin;
      if (!win.pointwise()) {
        im2col(gyin, win, col);
        colp = col;
      }
      MapConstMat<T> cmat(colp, k, p);
      MapConstMat<T> wmat(weight.data() + static_cast<std::size_t>(gi) * cin_g * k, cin_g, k);
      if (grad_x != nullptr) {
        MapMat<T> gx(grad_x->plane(n, gi * cin_g), cin_g, p);
        gx.noalias() += wmat * cmat;
      }
      if (grad_w != nullptr) {
        MapConstMat<T> xmat(x.plane(n, gi * cin_g), cin_g, p);
        MapMat<T> gw(partials.data() + n * wlen + static_cast<std::size_t>(gi) * cin_g * k, cin_g,
                     k);
        gw.noalias() = xmat * cmat.transpose();
      }
    }
  }
  if (grad_w != nullptr) reduce_partials(partials, batch, *grad_w);
  if (grad_b != nullptr) {
    const std::size_t plane = static_cast<std::size_t>(grad_y.h()) * grad_y.w();
    for (int n = 0; n < batch; ++n) {
      for (int co = 0; co < cout; ++co) {
        const T* src = grad_y.plane(n, co);
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        (*grad_b)[co] += acc;
      }
    }
  }
}

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    const ConvGeometry& g, Tensor<T>& y) {
  check_conv_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout = weight.n();
  const int cout_g = cout / g.groups;
  const int kh = weight.h(), kw = weight.w();
  const int oh = conv_out_size(x.h(), kh, g), ow = conv_out_size(x.w(), kw, g);
  y = Tensor<T>({x.n(), cout, oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < cout; ++co) {
      const int gi = co / cout_g;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias != nullptr ? (*bias)[co] : T(0);
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += weight.at(co, ci, ky, kx) * x.at(n, gi * cin_g + ci, iy, ix);
              }
          y.at(n, co, oy, ox) = acc;
        }
    }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     const ConvGeometry& g, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_b) {
  check_conv_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout = weight.n();
  const int cout_g = cout / g.groups;
  const int kh = weight.h(), kw = weight.w();
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < cout; ++co) {
      const int gi = co / cout_g;
      for (int oy = 0; oy < grad_y.h(); ++oy)
        for (int ox = 0; ox < grad_y.w(); ++ox) {
          const T gy = grad_y.at(n, co, oy, ox);
          if (grad_b != nullptr) (*grad_b)[co] += gy;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                if (grad_w != nullptr)
                  grad_w->at(co, ci, ky, kx) += gy * x.at(n, gi * cin_g + ci, iy, ix);
                if (grad_x != nullptr)
                  grad_x->at(n, gi * cin_g + ci, iy, ix) += gy * weight.at(co, ci, ky, kx);
              }
        }
    }
}

template <typename T>
void conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                              const ConvGeometry& g, Tensor<T>& y) {
  check_convt_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout_g = weight.c();
  const int cout = cout_g * g.groups;
  const int kh = weight.h(), kw = weight.w();
  const int oh = conv_transpose_out_size(x.h(), kh, g);
  const int ow = conv_transpose_out_size(x.w(), kw, g);
  y = Tensor<T>({x.n(), cout, oh, ow});
  for (int n = 0; n < x.n(); ++n) {
    if (bias != nullptr)
      for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) y.at(n, co, oy, ox) = (*bias)[co];
    for (int ci = 0; ci < x.c(); ++ci) {
      const int gi = ci / cin_g;
      for (int iy = 0; iy < x.h(); ++iy)
        for (int ix = 0; ix < x.w(); ++ix) {
          const T v = x.at(n, ci, iy, ix);
          for (int co = 0; co < cout_g; ++co)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                y.at(n, gi * cout_g + co, oy, ox) += v * weight.at(ci, co, ky, kx);
              }
        }
    }
  }
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_y, const ConvGeometry& g,
                               Tensor<T>* grad_x, Tensor<T>* grad_w, Tensor<T>* grad_b) {
  check_convt_args(x.shape(), weight.shape(), g);
  const int cin_g = x.c() / g.groups;
  const int cout_g = weight.c();
  const int cout = cout_g * g.groups;
  const int kh = weight.h(), kw = weight.w();
  const int oh = grad_y.h(), ow = grad_y.w();
  for (int n = 0; n < x.n(); ++n) {
    if (grad_b != nullptr)
      for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) (*grad_b)[co] += grad_y.at(n, co, oy, ox);
    for (int ci = 0; ci < x.c(); ++ci) {
      const int gi = ci / cin_g;
      for (int iy = 0; iy < x.h(); ++iy)
        for (int ix = 0; ix < x.w(); ++ix)
          for (int co = 0; co < cout_g; ++co)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int oy = iy * g.stride - g.pad + ky;
                const int ox = ix * g.stride - g.pad + kx;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                const T gy = grad_y.at(n, gi * cout_g + co, oy, ox);
                if (grad_x != nullptr) grad_x->at(n, ci, iy, ix) += gy * weight.at(ci, co, ky, kx);
                if (grad_w != nullptr) grad_w->at(ci, co, ky, kx) += gy * x.at(n, ci, iy, ix);
              }
    }
  }
}

}  // namespace reference

#define DIC_INSTANTIATE_KERNELS(NS, T)                                                         \
  template void NS::conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,    \
                                      const ConvGeometry&, Tensor<T>&);                        \
  template void NS::conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                       const ConvGeometry&, Tensor<T>*, Tensor<T>*,            \
                                       Tensor<T>*);                                            \
  template void NS::conv_transpose2d_forward<T>(const Tensor<T>&, const Tensor<T>&,            \
                                                const Tensor<T>*, const ConvGeometry&,         \
                                                Tensor<T>&);                                   \
  template void NS::conv_transpose2d_backward<T>(const Tensor<T>&, const Tensor<T>&,           \
                                                 const Tensor<T>&, const ConvGeometry&,        \
                                                 Tensor<T>*, Tensor<T>*, Tensor<T>*);

DIC_INSTANTIATE_KERNELS(kernels, float)
DIC_INSTANTIATE_KERNELS(kernels, double)
DIC_INSTANTIATE_KERNELS(reference, float)
DIC_INSTANTIATE_KERNELS(reference, double)

#undef DIC_INSTANTIATE_KERNELS

}  // namespace dic
