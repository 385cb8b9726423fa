// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

// Convolution kernels. `dic::kernels` holds the OpenMP-parallel im2col/GEMM
// implementation used by the network; `dic::reference` holds direct serial
// loops that the tests and the benchmark compare against.

#pragma once

#include "dic/tensor.hpp"

namespace dic {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

/// Output extent of a convolution along one axis.
inline int conv_out_size(int in, int k, const ConvGeometry& g) {
  return (in + 2 * g.pad - k) / g.stride + 1;
}
/// Output extent of a transposed convolution along one axis.
inline int conv_transpose_out_size(int in, int k, const ConvGeometry& g) {
  return (in - 1) * g.stride - 2 * g.pad + k;
}

namespace kernels {

// Weight layouts follow the usual conventions:
//   conv2d:           (Cout, Cin/groups, kh, kw)
//   conv_transpose2d: (Cin, Cout/groups, kh, kw)
// Backward functions ACCUMULATE into any non-null gradient output.

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    const ConvGeometry& g, Tensor<T>& y);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     const ConvGeometry& g, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_b);

template <typename T>
void conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                              const ConvGeometry& g, Tensor<T>& y);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_y, const ConvGeometry& g,
                               Tensor<T>* grad_x, Tensor<T>* grad_w, Tensor<T>* grad_b);

/// Number of OpenMP threads the kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    const ConvGeometry& g, Tensor<T>& y);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_y,
                     const ConvGeometry& g, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_b);

template <typename T>
void conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                              const ConvGeometry& g, Tensor<T>& y);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_y, const ConvGeometry& g,
                               Tensor<T>* grad_x, Tensor<T>* grad_w, Tensor<T>* grad_b);

}  // namespace reference
}  // namespace dic
