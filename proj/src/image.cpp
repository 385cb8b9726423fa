// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "dic/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace dic {
namespace {

struct Taps {
  int count = 0;
  std::vector<int> index;      // out_size * count source indices (already mirrored)
  std::vector<double> weight;  // out_size * count normalised weights
};

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// `scale` is output/input extent; `centre(j)` is the source coordinate of output j.
template <typename Centre>
Taps make_taps(int in_size, int out_size, double scale, Centre centre) {
  const double kscale = std::min(scale, 1.0);
  const double support = 2.0 / kscale;
  Taps taps;
  taps.count = static_cast<int>(std::ceil(2.0 * support)) + 2;
  taps.index.resize(static_cast<std::size_t>(out_size) * taps.count);
  taps.weight.resize(static_cast<std::size_t>(out_size) * taps.count);
  for (int j = 0; j < out_size; ++j) {
    const double c = centre(j);
    const int left = static_cast<int>(std::floor(c - support)) + 1;
    double total = 0.0;
    for (int t = 0; t < taps.count; ++t) {
      const int i = left + t;
      const double w = kscale * cubic_kernel((c - i) * kscale);
      taps.index[static_cast<std::size_t>(j) * taps.count + t] = mirror(i, in_size);
      taps.weight[static_cast<std::size_t>(j) * taps.count + t] = w;
      total += w;
    }
    for (int t = 0; t < taps.count; ++t) taps.weight[static_cast<std::size_t>(j) * taps.count + t] /= total;
  }
  return taps;
}

// Applies horizontal then vertical taps to every plane.
template <typename T>
Tensor<T> apply_separable(const Tensor<T>& src, int out_h, int out_w, const Taps& tx,
                          const Taps& ty) {
  const Shape& s = src.shape();
  Tensor<T> out({s.n, s.c, out_h, out_w});
  std::vector<double> tmp(static_cast<std::size_t>(s.h) * out_w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* plane = src.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        const T* row = plane + static_cast<std::size_t>(y) * s.w;
        for (int j = 0; j < out_w; ++j) {
          double acc = 0.0;
          const std::size_t base = static_cast<std::size_t>(j) * tx.count;
          for (int t = 0; t < tx.count; ++t) acc += tx.weight[base + t] * static_cast<double>(row[tx.index[base + t]]);
          tmp[static_cast<std::size_t>(y) * out_w + j] = acc;
        }
      }
      T* dst = out.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * ty.count;
        for (int j = 0; j < out_w; ++j) {
          double acc = 0.0;
          for (int t = 0; t < ty.count; ++t)
            acc += ty.weight[base + t] * tmp[static_cast<std::size_t>(ty.index[base + t]) * out_w + j];
          dst[static_cast<std::size_t>(i) * out_w + j] = static_cast<T>(acc);
        }
      }
    }
  return out;
}

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("bicubic_resize: output extent must be >= 1");
  if (image.h() < 1 || image.w() < 1) throw ShapeError("bicubic_resize: empty input");
  const double sx = static_cast<double>(out_w) / image.w();
  const double sy = static_cast<double>(out_h) / image.h();
  const Taps tx = make_taps(image.w(), out_w, sx, [sx](int j) { return (j + 0.5) / sx - 0.5; });
  const Taps ty = make_taps(image.h(), out_h, sy, [sy](int j) { return (j + 0.5) / sy - 0.5; });
  return apply_separable(image, out_h, out_w, tx, ty);
}

template Tensor<float> bicubic_resize<float>(const Tensor<float>&, int, int);
template Tensor<double> bicubic_resize<double>(const Tensor<double>&, int, int);

Image resample_window(const Image& image, double x0, double y0, double side, int out) {
  if (out < 1 || side <= 0.0) throw ShapeError("resample_window: empty window");
  const double scale = out / side;
  const Taps tx = make_taps(image.w(), out, scale, [&](int j) { return x0 + j / scale; });
  const Taps ty = make_taps(image.h(), out, scale, [&](int j) { return y0 + j / scale; });
  return apply_separable(image, out, out, tx, ty);
}

std::uint8_t to_u8(float v) {
  const double scaled = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

Image quantize_u8(const Image& image) {
  Image out = image;
  for (auto& v : out.vec()) v = from_u8(to_u8(v));
  return out;
}

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot open " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw ImageIoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng failed while reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> pixels(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img({1, 3, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = from_u8(rows[y][3 * x + c]);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.n() != 1 || (image.c() != 3 && image.c() != 1)) {
    throw ImageIoError("write_png expects a single 1- or 3-channel image, got " + image.shape().str());
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot create " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng failed while writing " + path.string());
  }
  png_init_io(png, fp.get());
  const int channels = image.c();
  png_set_IHDR(png, info, image.w(), image.h(), 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.w()) * channels);
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < channels; ++c) row[static_cast<std::size_t>(x) * channels + c] = to_u8(image.at(0, c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace dic
