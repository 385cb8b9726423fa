// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "dic/tensor.hpp"

namespace dic {

/// RGB image as a {1, 3, H, W} tensor with values nominally in [0, 1].
using Image = Tensor<float>;

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Separable bicubic resize of every (n, c) plane. Sample centres are aligned
/// ((j + 0.5) / scale - 0.5), borders are mirrored, and when shrinking the
/// kernel is widened by the inverse scale (antialiasing). Bit-deterministic.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& image, int out_h, int out_w);

/// Resamples the square window [x0, x0 + side) × [y0, y0 + side) to out × out.
/// Output pixel j samples source coordinate x0 + j · side / out, i.e. the same
/// affine map applied to landmark coordinates, so pixels and landmarks stay registered.
Image resample_window(const Image& image, double x0, double y0, double side, int out);

/// Clamp to [0, 1], scale to 255, round half away from zero.
std::uint8_t to_u8(float v);
float from_u8(std::uint8_t v);

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) as an RGB image.
Image read_png(const std::filesystem::path& path);
/// Writes an RGB (3-channel) or single-channel image as an 8-bit PNG.
void write_png(const std::filesystem::path& path, const Image& image);

/// Round trip through 8-bit quantisation.
Image quantize_u8(const Image& image);

}  // namespace dic
